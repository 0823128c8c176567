#include <doctest.h>

#include <cmath>

#include "vsl/checkpoint.h"
#include "vsl/errors.h"
#include "vsl/losses.h"
#include "vsl/rng.h"
#include "vsl/synth.h"
#include "testutil.h"

using namespace vsl;
using vsltest::TempDir;

namespace {

Embedding unit_embedding(std::vector<double> v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double norm = std::sqrt(sq);
    for (double& x : v) x /= norm;
    Embedding e;
    e.dim = static_cast<int>(v.size());
    e.values = std::move(v);
    e.l2_normalized = true;
    return e;
}

Embedding basis(int dim, int axis) {
    std::vector<double> v(dim, 0.0);
    v[axis] = 1.0;
    return unit_embedding(std::move(v));
}

std::vector<Embedding> random_unit_set(Rng& rng, int n, int d) {
    std::vector<Embedding> out;
    for (int i = 0; i < n; ++i) {
        std::vector<double> v(d);
        for (double& x : v) x = rng.gaussian();
        out.push_back(unit_embedding(std::move(v)));
    }
    return out;
}

// random orthogonal matrix via Gram-Schmidt on gaussian columns
std::vector<std::vector<double>> random_rotation(Rng& rng, int d) {
    std::vector<std::vector<double>> q(d, std::vector<double>(d));
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) q[i][j] = rng.gaussian();
        for (int k = 0; k < i; ++k) {
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += q[i][j] * q[k][j];
            for (int j = 0; j < d; ++j) q[i][j] -= dot * q[k][j];
        }
        double sq = 0.0;
        for (int j = 0; j < d; ++j) sq += q[i][j] * q[i][j];
        const double norm = std::sqrt(sq);
        for (int j = 0; j < d; ++j) q[i][j] /= norm;
    }
    return q;
}

Embedding rotate(const std::vector<std::vector<double>>& q, const Embedding& e) {
    std::vector<double> out(e.dim, 0.0);
    for (int i = 0; i < e.dim; ++i) {
        for (int j = 0; j < e.dim; ++j) out[i] += q[i][j] * e.values[j];
    }
    Embedding r;
    r.dim = e.dim;
    r.values = std::move(out);
    r.l2_normalized = true;
    return r;
}

SpatialFeatureMap random_feats(Rng& rng, int d, int gh, int gw) {
    SpatialFeatureMap f;
    f.channels = d;
    f.grid_h = gh;
    f.grid_w = gw;
    f.values.resize(static_cast<size_t>(d) * gh * gw);
    for (double& v : f.values) v = rng.gaussian();
    return f;
}

double rel_err(double got, double want) {
    const double denom = std::max({1e-8, std::abs(got), std::abs(want)});
    return std::abs(got - want) / denom;
}

}  // namespace

TEST_SUITE_BEGIN("losses");

TEST_CASE("infonce single-pair loss is zero") {
    const std::vector<Embedding> a = {basis(4, 0)};
    const std::vector<Embedding> v = {basis(4, 1)};
    CHECK(infonce(a, v, 0.07) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("infonce two orthonormal pairs at temperature 1") {
    const std::vector<Embedding> a = {basis(4, 0), basis(4, 1)};
    const std::vector<Embedding> v = {basis(4, 0), basis(4, 1)};
    // per row: -log(e / (e + 1)) = log(1 + exp(-1))
    const double expect = std::log(1.0 + std::exp(-1.0));
    CHECK(infonce(a, v, 1.0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("infonce with identical embeddings equals log N") {
    const Embedding e = unit_embedding({1.0, 2.0, -1.0, 0.5});
    for (int n : {2, 4, 7}) {
        const std::vector<Embedding> a(n, e), v(n, e);
        CHECK(infonce(a, v, 0.07) == doctest::Approx(std::log(n)).epsilon(1e-9));
    }
}

TEST_CASE("infonce rejects non-normalized inputs") {
    Embedding bad;
    bad.dim = 3;
    bad.values = {1.0, 1.0, 1.0};
    const std::vector<Embedding> a = {bad}, v = {basis(3, 0)};
    CHECK_THROWS_AS(infonce(a, v, 0.07), ContractError);
}

TEST_CASE("infonce is non-negative and permutation-equivariant") {
    Rng rng(21);
    for (int iter = 0; iter < 20; ++iter) {
        const int n = 2 + static_cast<int>(rng.below(5));
        auto a = random_unit_set(rng, n, 8);
        auto v = random_unit_set(rng, n, 8);
        const double base = infonce(a, v, 0.2);
        REQUIRE(base >= -1e-12);

        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i;
        rng.shuffle(perm);
        std::vector<Embedding> pa(n), pv(n);
        for (int i = 0; i < n; ++i) {
            pa[i] = a[perm[i]];
            pv[i] = v[perm[i]];
        }
        REQUIRE(infonce(pa, pv, 0.2) == doctest::Approx(base).epsilon(1e-9));
    }
}

TEST_CASE("infonce is invariant to a joint orthogonal rotation") {
    Rng rng(22);
    const int n = 4, d = 8;
    const auto a = random_unit_set(rng, n, d);
    const auto v = random_unit_set(rng, n, d);
    const double base = infonce(a, v, 0.1);
    const auto q = random_rotation(rng, d);
    std::vector<Embedding> ra(n), rv(n);
    for (int i = 0; i < n; ++i) {
        ra[i] = rotate(q, a[i]);
        rv[i] = rotate(q, v[i]);
    }
    CHECK(infonce(ra, rv, 0.1) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("infonce gradients match central finite differences") {
    Rng rng(23);
    const int n = 3, d = 6;
    auto a = random_unit_set(rng, n, d);
    auto v = random_unit_set(rng, n, d);
    std::vector<std::vector<double>> da, dv;
    infonce(a, v, 0.15, &da, &dv);

    // note: the analytic gradient treats inputs as free vectors; probe without
    // re-normalizing and accept the normality check tolerance
    const double h = 1e-6;
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) {
            auto hi = a, lo = a;
            hi[i].values[k] += h;
            lo[i].values[k] -= h;
            const double fd = (infonce(hi, v, 0.15) - infonce(lo, v, 0.15)) / (2 * h);
            REQUIRE(rel_err(da[i][k], fd) < 1e-3);

            auto vhi = v, vlo = v;
            vhi[i].values[k] += h;
            vlo[i].values[k] -= h;
            const double vfd = (infonce(a, vhi, 0.15) - infonce(a, vlo, 0.15)) / (2 * h);
            REQUIRE(rel_err(dv[i][k], vfd) < 1e-3);
        }
    }
}

TEST_CASE("subpatch loss: fully matched map reduces to the cross-sample term") {
    Rng rng(24);
    const int d = 8, g = 6;
    const Embedding audio = unit_embedding({1, 0.5, -0.25, 2, 0, 0.75, -1, 0.1});
    SpatialFeatureMap feats;
    feats.channels = d;
    feats.grid_h = g;
    feats.grid_w = g;
    feats.values.resize(static_cast<size_t>(d) * g * g);
    for (int c = 0; c < d; ++c) {
        for (int p = 0; p < g * g; ++p) {
            feats.values[static_cast<size_t>(c) * g * g + p] = audio.values[c];
        }
    }
    const SpatialFeatureMap neg = random_feats(rng, d, g, g);

    LossConfig cfg;
    const double loss = subpatch_contrastive(audio, feats, {&neg}, cfg);

    // independent cross-only computation: P = 1, N = mean patch cosine
    double mean_cos = 0.0;
    for (int p = 0; p < g * g; ++p) {
        double dot = 0.0, nf = 0.0, na = 0.0;
        for (int c = 0; c < d; ++c) {
            const double f = neg.values[static_cast<size_t>(c) * g * g + p];
            dot += f * audio.values[c];
            nf += f * f;
            na += audio.values[c] * audio.values[c];
        }
        mean_cos += dot / std::sqrt(nf * na);
    }
    mean_cos /= g * g;
    const double cross_only = std::log(1.0 + std::exp((mean_cos - 1.0) / cfg.temperature));
    CHECK(std::abs(loss - cross_only) < 0.01);
}

TEST_CASE("subpatch loss: orthogonal audio scores worse than matched audio") {
    Rng rng(25);
    const int d = 8, g = 6;
    SpatialFeatureMap feats;
    feats.channels = d;
    feats.grid_h = g;
    feats.grid_w = g;
    feats.values.assign(static_cast<size_t>(d) * g * g, 0.0);
    // every patch equals e0
    for (int p = 0; p < g * g; ++p) feats.values[p] = 1.0;

    const SpatialFeatureMap neg = random_feats(rng, d, g, g);
    LossConfig cfg;
    const double matched = subpatch_contrastive(basis(d, 0), feats, {&neg}, cfg);
    const double orthogonal = subpatch_contrastive(basis(d, 1), feats, {&neg}, cfg);
    CHECK(orthogonal > matched);
}

TEST_CASE("subpatch loss gradients match central finite differences") {
    Rng rng(26);
    const int d = 8, g = 5;
    const Embedding audio = random_unit_set(rng, 1, d)[0];
    const SpatialFeatureMap feats = random_feats(rng, d, g, g);
    std::vector<SpatialFeatureMap> neg_store = {random_feats(rng, d, g, g),
                                                random_feats(rng, d, g, g)};
    const std::vector<const SpatialFeatureMap*> negs = {&neg_store[0], &neg_store[1]};

    for (const CrossNegatives mode :
         {CrossNegatives::patch_mean, CrossNegatives::pooled_embedding}) {
        LossConfig cfg;
        cfg.cross_negatives = mode;
        SpatialFeatureMap d_feats;
        std::vector<SpatialFeatureMap> d_negs;
        std::vector<double> d_audio;
        subpatch_contrastive(audio, feats, negs, cfg, &d_feats, &d_negs, &d_audio);

        const double h = 1e-5;
        // positive-map entries
        for (size_t i = 0; i < feats.values.size(); i += 17) {
            SpatialFeatureMap hi = feats, lo = feats;
            hi.values[i] += h;
            lo.values[i] -= h;
            const double fd = (subpatch_contrastive(audio, hi, negs, cfg) -
                               subpatch_contrastive(audio, lo, negs, cfg)) /
                              (2 * h);
            REQUIRE(rel_err(d_feats.values[i], fd) < 1e-3);
        }
        // negative-map entries
        for (size_t i = 0; i < neg_store[0].values.size(); i += 23) {
            SpatialFeatureMap hi = neg_store[0], lo = neg_store[0];
            hi.values[i] += h;
            lo.values[i] -= h;
            const double fd =
                (subpatch_contrastive(audio, feats, {&hi, &neg_store[1]}, cfg) -
                 subpatch_contrastive(audio, feats, {&lo, &neg_store[1]}, cfg)) /
                (2 * h);
            REQUIRE(rel_err(d_negs[0].values[i], fd) < 1e-3);
        }
        // audio entries
        for (int k = 0; k < d; ++k) {
            Embedding hi = audio, lo = audio;
            hi.values[k] += h;
            lo.values[k] -= h;
            const double fd = (subpatch_contrastive(hi, feats, negs, cfg) -
                               subpatch_contrastive(lo, feats, negs, cfg)) /
                              (2 * h);
            REQUIRE(rel_err(d_audio[k], fd) < 1e-3);
        }
    }
}

TEST_CASE("loss config validation") {
    LossConfig cfg;
    cfg.neg_threshold = 0.7;  // above pos_threshold
    CHECK_THROWS_AS(validate_loss_config(cfg), ConfigError);
    cfg = LossConfig{};
    cfg.temperature = 0.0;
    CHECK_THROWS_AS(validate_loss_config(cfg), ConfigError);

    Rng rng(1);
    const SpatialFeatureMap feats = random_feats(rng, 4, 3, 3);
    LossConfig bad;
    bad.neg_threshold = 0.9;
    CHECK_THROWS_AS(subpatch_contrastive(basis(4, 0), feats, {}, bad), ConfigError);
}

TEST_CASE("train_toy determinism and the zero-epoch identity") {
    TempDir dir("train");
    SyntheticSceneSpec spec;
    spec.kind = SyntheticSceneSpec::Kind::quadrants;
    spec.n = 4;
    spec.seed = 5;
    spec.image_size = 32;
    const auto records = synth_dataset(spec, dir.path);
    const auto manifest_path = dir.path / "manifest.jsonl";

    TrainConfig cfg;
    cfg.loss = LossKind::infonce;
    cfg.epochs = 0;
    cfg.seed = 9;
    cfg.encoder.image_size = 32;
    cfg.encoder.conv_channels = {8, 16};
    cfg.encoder.grid = 8;
    cfg.encoder.embed_dim = 16;
    cfg.encoder.audio_channels = {8, 16};

    // epochs = 0 leaves the checkpoint at its seeded initialization
    const ToyModel trained0 = train_toy(records, manifest_path, cfg, nullptr);
    EncoderConfig init_cfg = cfg.encoder;
    init_cfg.seed = cfg.seed;
    const ToyModel reference = ToyModel::init(init_cfg);
    save_model(trained0, dir.path / "zero.ckpt");
    save_model(reference, dir.path / "init.ckpt");
    CHECK(vsltest::read_file(dir.path / "zero.ckpt") ==
          vsltest::read_file(dir.path / "init.ckpt"));

    // same seed, same data -> byte-identical checkpoints
    cfg.epochs = 2;
    std::vector<EpochLog> log1, log2;
    save_model(train_toy(records, manifest_path, cfg, &log1), dir.path / "a.ckpt");
    save_model(train_toy(records, manifest_path, cfg, &log2), dir.path / "b.ckpt");
    CHECK(vsltest::read_file(dir.path / "a.ckpt") == vsltest::read_file(dir.path / "b.ckpt"));
    REQUIRE(log1.size() == 2);
    CHECK(log1[0].loss == log2[0].loss);
    for (const EpochLog& e : log1) REQUIRE(std::isfinite(e.loss));
}

TEST_CASE("train_toy configuration errors") {
    TempDir dir("train");
    SyntheticSceneSpec spec;
    spec.n = 2;
    spec.image_size = 32;
    const auto records = synth_dataset(spec, dir.path);

    TrainConfig cfg;
    cfg.loss = LossKind::subpatch;
    cfg.encoder.image_encoder = ImageEncoderKind::vit;
    CHECK_THROWS_AS(train_toy(records, dir.path / "manifest.jsonl", cfg, nullptr),
                    ConfigError);

    auto no_audio = records;
    for (auto& rec : no_audio) rec.audio_ref.reset();
    TrainConfig plain;
    CHECK_THROWS_AS(train_toy(no_audio, dir.path / "manifest.jsonl", plain, nullptr),
                    ConfigError);
}

namespace {

// Training-path objective over tiny real encoders: embeddings from full
// forward passes, combined by a loss, differentiated back into every
// parameter. The finite-difference probe below is the oracle for the whole
// backward stack (convs, norms, pooling, projection, l2, and for the ViT
// the attention blocks).
struct TrainProbe {
    EncoderConfig cfg;
    ToyModel model;
    std::vector<Tensor> images;
    std::vector<Tensor> mels;

    explicit TrainProbe(bool vit) : model(ToyModel{}) {
        cfg.image_size = 16;
        cfg.conv_channels = {4, 8};
        cfg.grid = 4;
        cfg.embed_dim = 8;
        cfg.audio_channels = {4, 8};
        cfg.seed = 77;
        if (vit) {
            cfg.image_encoder = ImageEncoderKind::vit;
            cfg.patch_size = 8;
            cfg.vit_dim = 8;
            cfg.vit_layers = 2;
            cfg.vit_heads = 2;
            cfg.vit_mlp_hidden = 16;
        }
        model = ToyModel::init(cfg);
        Rng rng(78);
        for (int i = 0; i < 2; ++i) {
            Tensor img({3, 16, 16});
            for (double& v : img.v) v = rng.uniform();
            images.push_back(std::move(img));
            Tensor mel({1, cfg.n_mels, 9});
            for (double& v : mel.v) v = rng.gaussian();
            mels.push_back(std::move(mel));
        }
    }

    double loss(bool subpatch) {
        std::vector<Embedding> ea(2), ev(2);
        std::vector<std::shared_ptr<AudioEncoder::Trace>> at(2);
        std::vector<std::shared_ptr<ConvImageEncoder::Trace>> ct(2);
        std::vector<std::shared_ptr<VitImageEncoder::Trace>> vt(2);
        for (int i = 0; i < 2; ++i) {
            at[i] = model.audio.forward(mels[i]);
            ea[i] = Embedding{8, at[i]->embedding, true};
            if (model.conv_image) {
                ct[i] = model.conv_image->forward(images[i]);
                ev[i] = Embedding{8, ct[i]->embedding, true};
            } else {
                vt[i] = model.vit_image->forward(images[i]);
                ev[i] = Embedding{8, vt[i]->embedding, true};
            }
        }
        if (!subpatch) return infonce(ea, ev, 0.2);
        LossConfig lc;
        double total = 0.0;
        for (int i = 0; i < 2; ++i) {
            SpatialFeatureMap f;
            const Tensor& m = ct[i]->final_map;
            f.channels = m.shape[0];
            f.grid_h = m.shape[1];
            f.grid_w = m.shape[2];
            f.values = m.v;
            SpatialFeatureMap g;
            const Tensor& o = ct[1 - i]->final_map;
            g.channels = o.shape[0];
            g.grid_h = o.shape[1];
            g.grid_w = o.shape[2];
            g.values = o.v;
            total += 0.5 * subpatch_contrastive(ea[i], f, {&g}, lc);
        }
        return total;
    }

    GradSink analytic_grads(bool subpatch) {
        GradSink sink;
        std::vector<Embedding> ea(2), ev(2);
        std::vector<std::shared_ptr<AudioEncoder::Trace>> at(2);
        std::vector<std::shared_ptr<ConvImageEncoder::Trace>> ct(2);
        std::vector<std::shared_ptr<VitImageEncoder::Trace>> vt(2);
        for (int i = 0; i < 2; ++i) {
            at[i] = model.audio.forward(mels[i]);
            ea[i] = Embedding{8, at[i]->embedding, true};
            if (model.conv_image) {
                ct[i] = model.conv_image->forward(images[i]);
                ev[i] = Embedding{8, ct[i]->embedding, true};
            } else {
                vt[i] = model.vit_image->forward(images[i]);
                ev[i] = Embedding{8, vt[i]->embedding, true};
            }
        }
        if (!subpatch) {
            std::vector<std::vector<double>> da, dv;
            infonce(ea, ev, 0.2, &da, &dv);
            for (int i = 0; i < 2; ++i) {
                model.audio.backward(*at[i], da[i], &sink, "aud");
                if (model.conv_image) {
                    model.conv_image->backward(*ct[i], &dv[i], nullptr, &sink, "img");
                } else {
                    model.vit_image->backward(*vt[i], &dv[i], &sink, "img", nullptr);
                }
            }
            return sink;
        }
        LossConfig lc;
        std::vector<Tensor> d_maps(2);
        for (int i = 0; i < 2; ++i) d_maps[i] = zeros_like(ct[i]->final_map);
        for (int i = 0; i < 2; ++i) {
            SpatialFeatureMap f;
            const Tensor& m = ct[i]->final_map;
            f.channels = m.shape[0];
            f.grid_h = m.shape[1];
            f.grid_w = m.shape[2];
            f.values = m.v;
            SpatialFeatureMap g;
            const Tensor& o = ct[1 - i]->final_map;
            g.channels = o.shape[0];
            g.grid_h = o.shape[1];
            g.grid_w = o.shape[2];
            g.values = o.v;
            SpatialFeatureMap df;
            std::vector<SpatialFeatureMap> dn;
            std::vector<double> daud;
            subpatch_contrastive(ea[i], f, {&g}, lc, &df, &dn, &daud);
            for (size_t t = 0; t < df.values.size(); ++t) d_maps[i].v[t] += 0.5 * df.values[t];
            for (size_t t = 0; t < dn[0].values.size(); ++t) {
                d_maps[1 - i].v[t] += 0.5 * dn[0].values[t];
            }
            for (double& v : daud) v *= 0.5;
            model.audio.backward(*at[i], daud, &sink, "aud");
        }
        for (int i = 0; i < 2; ++i) {
            model.conv_image->backward(*ct[i], nullptr, &d_maps[i], &sink, "img");
        }
        return sink;
    }
};

}  // namespace

TEST_CASE("training parameter gradients match finite differences") {
    for (const bool vit : {false, true}) {
        for (const bool subpatch : {false, true}) {
            if (vit && subpatch) continue;  // unsupported combination
            TrainProbe probe(vit);
            GradSink sink = probe.analytic_grads(subpatch);

            const double h = 1e-5;
            int checked = 0;
            probe.model.visit_params([&](const std::string& name, Tensor* param) {
                auto it = sink.grads.find(name);
                const size_t stride = std::max<size_t>(1, param->v.size() / 3);
                for (size_t i = 0; i < param->v.size(); i += stride) {
                    const double saved = param->v[i];
                    param->v[i] = saved + h;
                    const double hi = probe.loss(subpatch);
                    param->v[i] = saved - h;
                    const double lo = probe.loss(subpatch);
                    param->v[i] = saved;
                    const double fd = (hi - lo) / (2 * h);
                    const double analytic = it == sink.grads.end() ? 0.0 : it->second.v[i];
                    const double denom = std::max({1e-6, std::abs(fd), std::abs(analytic)});
                    REQUIRE(std::abs(analytic - fd) / denom < 2e-3);
                    ++checked;
                }
            });
            REQUIRE(checked > 40);
        }
    }
}

TEST_SUITE_END();
