// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Oracles here are written against the raw definitions and
// stay independent of the library's implementation paths.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "vsl/baselines.h"
#include "vsl/checkpoint.h"
#include "vsl/encoders.h"
#include "vsl/errors.h"
#include "vsl/heatmap.h"
#include "vsl/localizers.h"
#include "vsl/losses.h"
#include "vsl/metrics.h"
#include "vsl/rng.h"
#include "vsl/stats.h"
#include "vsl/synth.h"
#include "testutil.h"

using namespace vsl;
using vsltest::TempDir;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, double seconds, const std::string& detail) {
    std::printf("%s %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", name.c_str(), seconds,
                detail.empty() ? "" : ": ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

void criterion(const std::string& name, double budget_s,
               const std::function<void()>& body) {
    const auto start = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    try {
        body();
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (ok && seconds > budget_s) {
        ok = false;
        detail = "exceeded the " + std::to_string(budget_s) + "s budget";
    }
    report(name, ok, seconds, detail);
}

void expect(bool cond, const std::string& what) {
    if (!cond) throw Error(what);
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(VSL_CLI_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

double rel_err(double got, double want) {
    const double denom = std::max({1e-8, std::abs(got), std::abs(want)});
    return std::abs(got - want) / denom;
}

// ------------------------------------------------------------- criterion 1

double oracle_iou(const BinaryMask& a, const BinaryMask& b) {
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        if (a.values[i] && b.values[i]) ++inter;
        if (a.values[i] || b.values[i]) ++uni;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

void metrics_oracle_equivalence() {
    Rng rng(20240801);
    int instances = 0;
    while (instances < 220) {
        const int w = 2 + static_cast<int>(rng.below(63));
        const int h = 2 + static_cast<int>(rng.below(63));

        FrameAnnotation ann{"frame", w, h, {}};
        const int n_boxes = 1 + static_cast<int>(rng.below(5));
        for (int b = 0; b < n_boxes; ++b) {
            BoundingBox box;
            box.w = 1 + static_cast<int>(rng.below(w));
            box.h = 1 + static_cast<int>(rng.below(h));
            box.x = static_cast<int>(rng.below(w - box.w + 1));
            box.y = static_cast<int>(rng.below(h - box.h + 1));
            if (rng.below(2)) box.annotator = static_cast<int>(rng.below(3));
            ann.boxes.push_back(box);
        }
        const int min_agree = 1 + static_cast<int>(rng.below(2));

        // gt_mask against per-pixel distinct-annotator counting
        const BinaryMask gt = gt_mask(ann, min_agree);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                int synthetic = 1 << 20;
                std::vector<int> seen;
                for (const BoundingBox& box : ann.boxes) {
                    if (!box.contains(x, y)) continue;
                    const int id = box.annotator ? *box.annotator : synthetic++;
                    bool dup = false;
                    for (int s : seen) {
                        if (s == id) dup = true;
                    }
                    if (!dup) seen.push_back(id);
                }
                expect(gt.at(x, y) == (static_cast<int>(seen.size()) >= min_agree),
                       "gt_mask disagrees with the pixel oracle");
            }
        }

        // binarize + iou + the composed per-frame score
        Heatmap hm = make_heatmap(w, h);
        for (float& v : hm.values) v = static_cast<float>(rng.uniform(-1.0, 2.0));
        EvalConfig cfg;
        cfg.min_agree = min_agree;

        float lo = hm.values[0], hi = hm.values[0];
        for (float v : hm.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        BinaryMask pred_oracle = make_mask(w, h);
        for (size_t i = 0; i < hm.values.size(); ++i) {
            const float norm = hi > lo ? (hm.values[i] - lo) / (hi - lo) : 0.0f;
            pred_oracle.values[i] = norm >= cfg.bin_threshold ? 1 : 0;
        }
        const BinaryMask pred = binarize(minmax_normalize(hm), cfg.bin_threshold);
        expect(pred.values == pred_oracle.values, "binarize disagrees with the oracle");
        expect(iou(pred, gt) == oracle_iou(pred_oracle, gt),
               "iou disagrees with the pixel-count oracle");
        expect(ciou_frame(hm, ann, cfg) == oracle_iou(pred_oracle, gt),
               "ciou_frame disagrees with the composed oracle");
        ++instances;
    }
}

// ------------------------------------------------------------- criterion 4

void gradient_checks() {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        // Grad-CAM objective: s = <audio, embedding(activations)>
        EncoderConfig cfg;
        cfg.image_size = 32;
        cfg.conv_channels = {8, 16};
        cfg.grid = 8;
        cfg.embed_dim = 16;
        cfg.audio_channels = {8, 16};
        cfg.seed = seed;
        const ToyModel model = ToyModel::init(cfg);
        Rng rng(seed * 977);
        Tensor img({3, 32, 32});
        for (double& v : img.v) v = rng.uniform();
        std::vector<double> audio(16);
        for (double& v : audio) v = rng.gaussian();

        const std::string layer = "block2.norm1";
        CaptureSession session = model.conv_image->capture(img, layer);
        CaptureObjective obj;
        obj.d_embedding = audio;
        backward_capture(session, obj);
        const std::vector<double>& acts = session.activations->values;
        const std::vector<double>& grads = session.gradients->values;

        const double h = 1e-5;
        const auto objective = [&](const std::vector<double>& a) {
            Tensor t({16, 8, 8});
            t.v = a;
            const Embedding emb = model.conv_image->embedding_from_capture(layer, t);
            double s = 0.0;
            for (int k = 0; k < 16; ++k) s += audio[k] * emb.values[k];
            return s;
        };
        for (size_t i = seed; i < acts.size(); i += 97) {
            auto hi = acts, lo = acts;
            hi[i] += h;
            lo[i] -= h;
            const double fd = (objective(hi) - objective(lo)) / (2 * h);
            expect(rel_err(grads[i], fd) < 1e-3, "gradcam capture gradient off at seed " +
                                                     std::to_string(seed));
        }

        // InfoNCE gradients
        std::vector<Embedding> ea(3), ev(3);
        for (int i = 0; i < 3; ++i) {
            std::vector<double> va(8), vv(8);
            double sa = 0.0, sv = 0.0;
            for (int k = 0; k < 8; ++k) {
                va[k] = rng.gaussian();
                vv[k] = rng.gaussian();
                sa += va[k] * va[k];
                sv += vv[k] * vv[k];
            }
            for (int k = 0; k < 8; ++k) {
                va[k] /= std::sqrt(sa);
                vv[k] /= std::sqrt(sv);
            }
            ea[i] = Embedding{8, va, true};
            ev[i] = Embedding{8, vv, true};
        }
        std::vector<std::vector<double>> da, dv;
        infonce(ea, ev, 0.2, &da, &dv);
        const double h2 = 1e-6;
        for (int i = 0; i < 3; ++i) {
            for (int k = 0; k < 8; k += 3) {
                auto hi = ea, lo = ea;
                hi[i].values[k] += h2;
                lo[i].values[k] -= h2;
                const double fd = (infonce(hi, ev, 0.2) - infonce(lo, ev, 0.2)) / (2 * h2);
                expect(rel_err(da[i][k], fd) < 1e-3,
                       "infonce gradient off at seed " + std::to_string(seed));
            }
        }

        // sub-patch gradients
        SpatialFeatureMap feats;
        feats.channels = 8;
        feats.grid_h = 5;
        feats.grid_w = 5;
        feats.values.resize(8 * 25);
        for (double& v : feats.values) v = rng.gaussian();
        SpatialFeatureMap neg = feats;
        for (double& v : neg.values) v = rng.gaussian();
        LossConfig lcfg;
        SpatialFeatureMap d_feats;
        subpatch_contrastive(ea[0], feats, {&neg}, lcfg, &d_feats, nullptr, nullptr);
        const double h3 = 1e-5;
        for (size_t i = seed; i < feats.values.size(); i += 29) {
            SpatialFeatureMap hi = feats, lo = feats;
            hi.values[i] += h3;
            lo.values[i] -= h3;
            const double fd = (subpatch_contrastive(ea[0], hi, {&neg}, lcfg) -
                               subpatch_contrastive(ea[0], lo, {&neg}, lcfg)) /
                              (2 * h3);
            expect(rel_err(d_feats.values[i], fd) < 1e-3,
                   "subpatch gradient off at seed " + std::to_string(seed));
        }
    }
}

// ------------------------------------------------------------- criterion 5

void tmm_rule_equivalence() {
    Rng rng(555);
    for (int iter = 0; iter < 3; ++iter) {
        const int tokens = 1 + 196;
        AttentionStack attn;
        attn.layers = 2;
        attn.heads = 2;
        attn.tokens = tokens;
        attn.maps.resize(static_cast<size_t>(2) * 2 * tokens * tokens);
        for (double& v : attn.maps) v = rng.uniform();
        for (int l = 0; l < 2; ++l) {
            for (int hd = 0; hd < 2; ++hd) {
                for (int i = 0; i < tokens; ++i) {
                    double sum = 0.0;
                    for (int j = 0; j < tokens; ++j) sum += attn.at(l, hd, i, j);
                    for (int j = 0; j < tokens; ++j) attn.at(l, hd, i, j) /= sum;
                }
            }
        }
        AttentionStack grads = attn;
        for (double& v : grads.maps) v = rng.gaussian();

        // independent step-by-step recursion
        std::vector<double> r(static_cast<size_t>(tokens) * tokens, 0.0);
        for (int i = 0; i < tokens; ++i) r[static_cast<size_t>(i) * tokens + i] = 1.0;
        for (int l = 0; l < 2; ++l) {
            std::vector<double> abar(static_cast<size_t>(tokens) * tokens);
            for (int i = 0; i < tokens; ++i) {
                for (int j = 0; j < tokens; ++j) {
                    double acc = 0.0;
                    for (int hd = 0; hd < 2; ++hd) {
                        const double v = grads.at(l, hd, i, j) * attn.at(l, hd, i, j);
                        if (v > 0.0) acc += v;
                    }
                    abar[static_cast<size_t>(i) * tokens + j] = acc / 2.0;
                }
            }
            std::vector<double> next = r;
            for (int i = 0; i < tokens; ++i) {
                for (int k = 0; k < tokens; ++k) {
                    const double a = abar[static_cast<size_t>(i) * tokens + k];
                    if (a == 0.0) continue;
                    for (int j = 0; j < tokens; ++j) {
                        next[static_cast<size_t>(i) * tokens + j] +=
                            a * r[static_cast<size_t>(k) * tokens + j];
                    }
                }
            }
            r = std::move(next);
        }

        const RelevancyMap rel = transformer_relevancy(attn, grads);
        for (size_t i = 0; i < r.size(); ++i) {
            expect(std::abs(rel.r[i] - r[i]) < 1e-6, "relevancy deviates from the oracle");
        }

        // the localizer output at grid resolution reproduces the oracle signal
        const Heatmap got = localize_transformer_mm(attn, grads, 14, 14);
        double lo = r[1], hi = r[1];
        for (int p = 0; p < 196; ++p) {
            lo = std::min(lo, r[1 + p]);
            hi = std::max(hi, r[1 + p]);
        }
        for (int p = 0; p < 196; ++p) {
            const double want = hi > lo ? (r[1 + p] - lo) / (hi - lo) : 0.0;
            expect(std::abs(got.values[p] - want) < 1e-6,
                   "tmm heatmap deviates from the oracle");
        }

        std::fill(grads.maps.begin(), grads.maps.end(), 0.0);
        const Heatmap zero = localize_transformer_mm(attn, grads, 224, 224);
        for (float v : zero.values) {
            expect(v == 0.0f, "zero gradients must produce the all-zero heatmap");
        }
    }
}

// ------------------------------------------------------------- criterion 6

void localizer_invariances() {
    Rng rng(66);
    EncoderConfig cfg;
    cfg.image_size = 32;
    cfg.conv_channels = {8, 16};
    cfg.grid = 8;
    cfg.embed_dim = 16;
    cfg.audio_channels = {8, 16};
    cfg.seed = 9;
    const ToyModel model = ToyModel::init(cfg);
    Tensor img({3, 32, 32});
    for (double& v : img.v) v = rng.uniform();
    const auto [feats, unused] = model.conv_image->encode(img);
    (void)unused;

    std::vector<double> audio(16);
    for (double& v : audio) v = rng.gaussian();

    for (const double scale : {0.125, 3.0, 41.5}) {
        std::vector<double> scaled = audio;
        for (double& v : scaled) v *= scale;
        Embedding base_emb{16, audio, false};
        Embedding scaled_emb{16, scaled, false};

        const Heatmap c1 = localize_cossim(feats, base_emb, 64, 64);
        const Heatmap c2 = localize_cossim(feats, scaled_emb, 64, 64);
        for (size_t i = 0; i < c1.values.size(); ++i) {
            expect(std::abs(c1.values[i] - c2.values[i]) <= 1e-6,
                   "cossim not invariant to embedding rescaling");
        }

        ConvEncoderGradCam b1(*model.conv_image);
        ConvEncoderGradCam b2(*model.conv_image);
        const Heatmap g1 = localize_gradcam(b1, img, base_emb, 48, 48);
        const Heatmap g2 = localize_gradcam(b2, img, scaled_emb, 48, 48);
        for (size_t i = 0; i < g1.values.size(); ++i) {
            expect(std::abs(g1.values[i] - g2.values[i]) <= 1e-6,
                   "gradcam not invariant to embedding rescaling");
        }
    }
}

}  // namespace

int main() {
    // 1. metrics match per-pixel brute force exactly on random instances
    criterion("metrics-oracle-equivalence", 10.0, metrics_oracle_equivalence);

    // 2. AUC hand cases on the default grid
    criterion("auc-hand-cases", 10.0, [] {
        const auto grid = default_auc_grid();
        expect(std::abs(auc_from_cious({0.52}, grid) - 0.525) < 1e-12,
               "single frame 0.52 must give 0.525");
        expect(auc_from_cious({0.0, 0.0}, grid) == 0.0, "all-zero must give 0");
        expect(std::abs(auc_from_cious({1.0, 1.0, 1.0}, grid) - 0.975) < 1e-12,
               "all-one must give 0.975 under strict success");
    });

    // 3. analytic synthetic-dataset scores
    criterion("synthetic-quadrant-acceptance", 30.0, [] {
        TempDir dir("acc_synth");
        SyntheticSceneSpec spec;
        spec.kind = SyntheticSceneSpec::Kind::quadrants;
        spec.n = 100;
        spec.seed = 31337;
        const auto records = synth_dataset(spec, dir.path / "quad");
        BaselineSpec quad;
        quad.kind = BaselineKind::quadrants;
        quad.area_frac = 0.125;
        const Heatmap pred = baseline_heatmap(quad, 224, 224);
        EvalConfig cfg;
        cfg.ciou_threshold = 0.3;
        const EvalResult result = evaluate(
            records, [&pred](const std::string&) { return &pred; }, cfg);
        for (const auto& [frame, ciou] : result.per_frame_ciou) {
            expect(std::abs(ciou - 1.0 / 3.0) <= 0.02,
                   frame + ": quadrant cIoU " + std::to_string(ciou) + " not within 1/3 +- 0.02");
        }
        expect(result.ciou_at_tau == 1.0, "quadrant cIoU@0.3 must be exactly 1.0");

        SyntheticSceneSpec centered;
        centered.kind = SyntheticSceneSpec::Kind::centered;
        centered.n = 100;
        centered.seed = 99;
        centered.area_min = 0.5;
        centered.area_max = 0.5;
        const auto crecords = synth_dataset(centered, dir.path / "center");
        BaselineSpec cb;
        cb.kind = BaselineKind::center;
        cb.area_frac = 0.5;
        const Heatmap cpred = baseline_heatmap(cb, 224, 224);
        EvalConfig ccfg;  // ciou threshold 0.5
        const EvalResult cresult = evaluate(
            crecords, [&cpred](const std::string&) { return &cpred; }, ccfg);
        expect(cresult.ciou_at_tau == 1.0, "center cIoU@0.5 must be exactly 1.0");
    });

    // 4. analytic gradients against central finite differences, 5 seeds
    criterion("gradient-checks", 60.0, gradient_checks);

    // 5. relevancy recursion against an independent re-implementation
    criterion("transformer-mm-rule-equivalence", 30.0, tmm_rule_equivalence);

    // 6. normalized heatmaps invariant to positive embedding rescaling
    criterion("localizer-invariances", 30.0, localizer_invariances);

    // 7. toy training: loss decreases, checkpoints reproduce byte-for-byte
    criterion("train-toy-smoke", 120.0, [] {
        TempDir dir("acc_train");
        const std::string data = (dir.path / "data").string();
        expect(run_cli("synth --kind quadrants --n 20 --seed 12 --out " + data) == 0,
               "synth failed");
        const std::string ckpt1 = (dir.path / "m1.ckpt").string();
        const std::string ckpt2 = (dir.path / "m2.ckpt").string();
        expect(run_cli("train-toy --manifest " + data +
                       "/manifest.jsonl --loss infonce --epochs 10 --seed 7 --out " +
                       ckpt1) == 0,
               "train-toy failed");
        expect(run_cli("train-toy --manifest " + data +
                       "/manifest.jsonl --loss infonce --epochs 10 --seed 7 --out " +
                       ckpt2) == 0,
               "train-toy re-run failed");
        expect(vsltest::read_file(ckpt1) == vsltest::read_file(ckpt2),
               "checkpoints differ across identical runs");

        // parse the training log: final-epoch loss below first-epoch loss
        const std::string log = vsltest::read_file(ckpt1 + ".train.csv");
        std::vector<double> losses;
        size_t pos = log.find('\n') + 1;
        while (pos < log.size()) {
            const size_t c1 = log.find(',', pos);
            const size_t c2 = log.find(',', c1 + 1);
            losses.push_back(std::stod(log.substr(c1 + 1, c2 - c1 - 1)));
            pos = log.find('\n', pos) + 1;
        }
        expect(losses.size() == 10, "expected 10 logged epochs");
        expect(losses.back() < losses.front(),
               "final-epoch loss " + std::to_string(losses.back()) +
                   " not below first-epoch loss " + std::to_string(losses.front()));
    });

    // 8. full pipeline through the CLI
    criterion("end-to-end-pipeline", 300.0, [] {
        TempDir dir("acc_e2e");
        const std::string data = (dir.path / "data").string();
        const std::string conv = (dir.path / "conv.ckpt").string();
        const std::string vit = (dir.path / "vit.ckpt").string();
        const std::string prov = " --provenance " + (dir.path / "prov.jsonl").string() + " ";

        expect(run_cli(prov + "synth --kind quadrants --n 12 --seed 5 --out " + data) == 0,
               "synth failed");
        expect(run_cli(prov + "train-toy --manifest " + data +
                       "/manifest.jsonl --loss subpatch --epochs 2 --seed 3 --out " + conv) == 0,
               "conv training failed");
        expect(run_cli(prov + "train-toy --manifest " + data +
                       "/manifest.jsonl --loss infonce --epochs 2 --seed 3 --out " + vit +
                       " --image-encoder vit") == 0,
               "vit training failed");

        const struct {
            const char* method;
            const std::string* ckpt;
        } methods[] = {{"cossim", &conv}, {"gradcam", &conv}, {"tmm", &vit}};
        for (const auto& m : methods) {
            const std::string out = (dir.path / m.method).string();
            expect(run_cli(prov + "localize --method " + m.method + " --checkpoint " +
                           *m.ckpt + " --manifest " + data + "/manifest.jsonl --out " +
                           out) == 0,
                   std::string(m.method) + " localization failed");
            expect(run_cli(prov + "eval --manifest " + data + "/manifest.jsonl --preds " +
                           out + " --ciou-threshold 0.3 --out " + out + ".csv --model " +
                           m.method) == 0,
                   std::string(m.method) + " evaluation failed");
            int n_maps = 0;
            for (const auto& entry :
                 std::filesystem::directory_iterator(dir.path / m.method)) {
                const Heatmap h = read_heatmap(entry.path());
                expect(h.normalized && heatmap_invariants_ok(h),
                       entry.path().string() + " violates heatmap invariants");
                expect(h.width == 224 && h.height == 224, "wrong heatmap dims");
                ++n_maps;
            }
            expect(n_maps == 12, "expected 12 heatmaps per method");
        }
        expect(run_cli(prov + "stats --manifest " + data + "/manifest.jsonl --preds " +
                       (dir.path / "gradcam").string() + " --out-dir " +
                       (dir.path / "stats").string()) == 0,
               "stats failed");
        expect(std::filesystem::exists(dir.path / "stats" /
                                       "synth-quadrants_heatmap_area.csv"),
               "stats output missing");
    });

    // 9. distribution statistics agree with their constructions
    criterion("stats-consistency", 60.0, [] {
        TempDir dir("acc_stats");
        SyntheticSceneSpec centered;
        centered.kind = SyntheticSceneSpec::Kind::centered;
        centered.n = 50;
        centered.seed = 4;
        centered.area_min = 0.5;
        centered.area_max = 0.5;
        const auto records = synth_dataset(centered, dir.path / "center");
        BaselineSpec cb;
        cb.kind = BaselineKind::center;
        cb.area_frac = 0.5;
        std::filesystem::create_directories(dir.path / "preds");
        std::vector<std::string> frames;
        for (const ManifestRecord& rec : records) {
            write_heatmap(baseline_heatmap(cb, 224, 224),
                          dir.path / "preds" / (rec.frame_id + ".hmp"));
            frames.push_back(rec.frame_id);
        }
        const AreaHistogram hist = heatmap_area_hist(dir.path / "preds", frames, 0.5f);
        expect(hist.percent[4] >= 99.0,
               "center-50% predictions must concentrate in (0.4, 0.5]");

        SyntheticSceneSpec quad;
        quad.kind = SyntheticSceneSpec::Kind::quadrants;
        quad.n = 40;
        quad.seed = 8;
        const auto qrecords = synth_dataset(quad, dir.path / "quad");
        const CountHistogram counts = boxes_per_frame(qrecords);
        expect(counts.percent.size() == 1 && counts.percent.count(2) == 1 &&
                   counts.percent.at(2) == 100.0,
               "quadrant scenes must all have exactly two boxes");
    });

    if (failures == 0) {
        std::printf("all acceptance criteria passed\n");
    } else {
        std::printf("%d acceptance criterion(s) failed\n", failures);
    }
    return failures == 0 ? 0 : 1;
}
