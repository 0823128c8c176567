// vsl: command-line front end for the localization toolkit.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vsl/audio.h"
#include "vsl/baselines.h"
#include "vsl/checkpoint.h"
#include "vsl/errors.h"
#include "vsl/heatmap.h"
#include "vsl/localizers.h"
#include "vsl/losses.h"
#include "vsl/manifest.h"
#include "vsl/metrics.h"
#include "vsl/provenance.h"
#include "vsl/stats.h"
#include "vsl/synth.h"
#include "vsl/version.h"

namespace {

using namespace vsl;

void emit_error(const char* category, int exit_code, const std::string& message) {
    nlohmann::json j{{"error", category}, {"exit", exit_code}, {"message", message}};
    std::cerr << j.dump() << "\n";
}

void ensure_parent_dir(const std::string& file_path) {
    const auto parent = std::filesystem::path(file_path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

std::string join_command(int argc, char** argv) {
    std::string cmd;
    for (int i = 0; i < argc; ++i) {
        if (i) cmd += ' ';
        cmd += argv[i];
    }
    return cmd;
}

// Records grouped by dataset id, first-appearance order.
std::vector<std::pair<std::string, std::vector<ManifestRecord>>> group_by_dataset(
    const std::vector<ManifestRecord>& records) {
    std::vector<std::pair<std::string, std::vector<ManifestRecord>>> groups;
    for (const ManifestRecord& rec : records) {
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const auto& g) { return g.first == rec.dataset_id; });
        if (it == groups.end()) {
            groups.push_back({rec.dataset_id, {}});
            it = groups.end() - 1;
        }
        it->second.push_back(rec);
    }
    return groups;
}

int auto_min_agree(const std::vector<ManifestRecord>& records) {
    for (const ManifestRecord& rec : records) {
        std::set<int> annotators;
        for (const BoundingBox& b : rec.annotation.boxes) {
            if (b.annotator) annotators.insert(*b.annotator);
        }
        if (annotators.size() >= 2) return 2;
    }
    return 1;
}

struct SynthArgs {
    std::string kind = "quadrants";
    int n = 10;
    uint64_t seed = 0;
    std::string out;
    int image_size = 224;
    double area_min = 0.5;
    double area_max = 0.5;
};

struct BaselineArgs {
    std::string kind = "center";
    double area_frac = -1.0;  // default depends on kind
    std::string manifest;
    std::string out;
    bool square = false;
};

struct TrainArgs {
    std::string manifest;
    std::string loss = "infonce";
    int epochs = 10;
    uint64_t seed = 0;
    std::string out;
    std::string image_encoder = "conv";
    double lr = 0.05;
    int batch_size = 8;
    double temperature = 0.07;
    std::string log_path;
};

struct LocalizeArgs {
    std::string method = "cossim";
    std::string checkpoint;
    std::string manifest;
    std::string out;
    std::string target_layer;
};

struct EvalArgs {
    std::string manifest;
    std::string preds;
    float bin_threshold = 0.5f;
    double ciou_threshold = 0.5;
    int min_agree = 0;  // 0 = auto
    std::string out = "results.csv";
    std::string model = "preds";
    std::string auc_sweep = "success";
};

struct StatsArgs {
    std::string manifest;
    std::string preds;
    std::string out_dir;
    float bin_threshold = 0.5f;
    bool per_box = false;
};

void run_synth(const SynthArgs& args) {
    SyntheticSceneSpec spec;
    spec.kind = args.kind == "centered" ? SyntheticSceneSpec::Kind::centered
                                        : SyntheticSceneSpec::Kind::quadrants;
    spec.n = args.n;
    spec.seed = args.seed;
    spec.image_size = args.image_size;
    spec.area_min = args.area_min;
    spec.area_max = args.area_max;
    const auto records = synth_dataset(spec, args.out);
    std::cout << "wrote " << records.size() << " scenes under " << args.out << "\n";
}

void run_baseline(const BaselineArgs& args) {
    BaselineSpec spec;
    spec.kind = args.kind == "quadrants" ? BaselineKind::quadrants : BaselineKind::center;
    spec.area_frac = args.area_frac >= 0.0
                         ? args.area_frac
                         : (spec.kind == BaselineKind::center ? 0.5 : 0.125);
    spec.square = args.square;
    validate_spec(spec);
    const auto records = load_manifest(args.manifest);
    std::filesystem::create_directories(args.out);
    for (const ManifestRecord& rec : records) {
        const Heatmap h =
            baseline_heatmap(spec, rec.annotation.width, rec.annotation.height);
        write_heatmap(h, std::filesystem::path(args.out) / (rec.frame_id + ".hmp"));
    }
    std::cout << "wrote " << records.size() << " baseline heatmaps under " << args.out
              << "\n";
}

void run_train(const TrainArgs& args) {
    TrainConfig cfg;
    cfg.loss = args.loss == "subpatch" ? LossKind::subpatch : LossKind::infonce;
    cfg.epochs = args.epochs;
    cfg.seed = args.seed;
    cfg.lr = args.lr;
    cfg.loss_cfg.batch_size = args.batch_size;
    cfg.loss_cfg.temperature = args.temperature;
    cfg.encoder.image_encoder =
        args.image_encoder == "vit" ? ImageEncoderKind::vit : ImageEncoderKind::conv;

    const auto records = load_manifest(args.manifest);
    std::vector<EpochLog> log;
    const ToyModel model = train_toy(records, args.manifest, cfg, &log);
    ensure_parent_dir(args.out);
    save_model(model, args.out);

    const std::string log_path =
        args.log_path.empty() ? args.out + ".train.csv" : args.log_path;
    ensure_parent_dir(log_path);
    std::ofstream log_out(log_path, std::ios::trunc);
    if (!log_out) throw IoError("train-toy: cannot open " + log_path);
    log_out << "epoch,loss,seed\n";
    for (const EpochLog& entry : log) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%llu\n", entry.epoch, entry.loss,
                      static_cast<unsigned long long>(args.seed));
        log_out << buf;
    }
    std::cout << "wrote checkpoint " << args.out << " (" << log.size() << " epochs)\n";
}

void run_localize(const LocalizeArgs& args) {
    LocalizeRun run;
    run.kind = localizer_kind_from_string(args.method);
    run.checkpoint = args.checkpoint;
    run.manifest = args.manifest;
    run.out_dir = args.out;
    run.target_layer = args.target_layer;
    const int frames = run_localizer(run);
    std::cout << "wrote " << frames << " heatmaps under " << args.out << "\n";
}

void run_eval(const EvalArgs& args) {
    const auto records = load_manifest(args.manifest);
    const auto groups = group_by_dataset(records);

    ensure_parent_dir(args.out);
    std::ofstream out(args.out, std::ios::trunc);
    if (!out) throw IoError("eval: cannot open " + args.out);
    bool header = true;
    for (const auto& [dataset, group] : groups) {
        EvalConfig cfg;
        cfg.bin_threshold = args.bin_threshold;
        cfg.ciou_threshold = args.ciou_threshold;
        cfg.min_agree = args.min_agree > 0 ? args.min_agree : auto_min_agree(group);
        cfg.auc_sweep = args.auc_sweep == "binarization" ? AucSweep::binarization_threshold
                                                         : AucSweep::success_threshold;

        // load predictions up front; evaluate() reports every missing frame
        std::map<std::string, Heatmap> preds;
        std::vector<std::string> unreadable;
        for (const ManifestRecord& rec : group) {
            const std::filesystem::path p =
                std::filesystem::path(args.preds) / (rec.frame_id + ".hmp");
            if (std::filesystem::exists(p)) {
                preds.emplace(rec.frame_id, read_heatmap(p));
            }
        }
        const EvalResult result = evaluate(
            group,
            [&preds](const std::string& frame) -> const Heatmap* {
                auto it = preds.find(frame);
                return it == preds.end() ? nullptr : &it->second;
            },
            cfg);
        append_results_csv(out, dataset, args.model, result, cfg, header);
        header = false;
    }
    std::cout << "wrote " << args.out << "\n";
}

void run_stats(const StatsArgs& args) {
    const auto records = load_manifest(args.manifest);
    const auto groups = group_by_dataset(records);
    std::filesystem::create_directories(args.out_dir);
    const std::filesystem::path dir(args.out_dir);
    for (const auto& [dataset, group] : groups) {
        const AreaHistogram areas = bbox_area_hist(group, args.per_box);
        write_area_hist_csv(areas, dir / (dataset + "_bbox_area.csv"));
        render_area_hist_png(areas, dir / (dataset + "_bbox_area.png"));

        const CenterDensityGrid density = center_density(group);
        write_density_csv(density, dir / (dataset + "_center_density.csv"));
        render_density_png(density, dir / (dataset + "_center_density.png"));

        const CountHistogram counts = boxes_per_frame(group);
        write_count_hist_csv(counts, dir / (dataset + "_boxes_per_frame.csv"));
        render_count_hist_png(counts, dir / (dataset + "_boxes_per_frame.png"));

        if (!args.preds.empty()) {
            std::vector<std::string> frames;
            for (const ManifestRecord& rec : group) frames.push_back(rec.frame_id);
            const AreaHistogram pred_areas =
                heatmap_area_hist(args.preds, frames, args.bin_threshold);
            write_area_hist_csv(pred_areas, dir / (dataset + "_heatmap_area.csv"));
            render_area_hist_png(pred_areas, dir / (dataset + "_heatmap_area.png"));
        }
    }
    std::cout << "wrote statistics for " << groups.size() << " dataset(s) under "
              << args.out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"visual sound source localization toolkit"};
    app.set_version_flag("--version", vsl::kVersion);
    app.require_subcommand(1);

    std::string provenance_path = "provenance.jsonl";
    app.add_option("--provenance", provenance_path,
                   "provenance log path (JSON lines, appended)");

    SynthArgs synth_args;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--kind", synth_args.kind, "quadrants|centered")
        ->check(CLI::IsMember({"quadrants", "centered"}));
    synth->add_option("--n", synth_args.n, "number of scenes")->required();
    synth->add_option("--seed", synth_args.seed, "rng seed");
    synth->add_option("--out", synth_args.out, "output directory")->required();
    synth->add_option("--image-size", synth_args.image_size, "square image size");
    synth->add_option("--area-min", synth_args.area_min, "centered: min area fraction");
    synth->add_option("--area-max", synth_args.area_max, "centered: max area fraction");

    BaselineArgs baseline_args;
    CLI::App* baseline = app.add_subcommand("baseline", "naive geometric baselines");
    baseline->add_option("--kind", baseline_args.kind, "center|quadrants")
        ->check(CLI::IsMember({"center", "quadrants"}));
    baseline->add_option("--area-frac", baseline_args.area_frac,
                         "area fraction (default 0.5 center, 0.125 quadrants)");
    baseline->add_option("--manifest", baseline_args.manifest, "manifest path")->required();
    baseline->add_option("--out", baseline_args.out, "output directory")->required();
    baseline->add_flag("--square", baseline_args.square, "center: square box");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train-toy", "train toy encoders");
    train->add_option("--manifest", train_args.manifest, "manifest path")->required();
    train->add_option("--loss", train_args.loss, "infonce|subpatch")
        ->check(CLI::IsMember({"infonce", "subpatch"}));
    train->add_option("--epochs", train_args.epochs, "epochs")->required();
    train->add_option("--seed", train_args.seed, "rng seed");
    train->add_option("--out", train_args.out, "checkpoint path")->required();
    train->add_option("--image-encoder", train_args.image_encoder, "conv|vit")
        ->check(CLI::IsMember({"conv", "vit"}));
    train->add_option("--lr", train_args.lr, "learning rate");
    train->add_option("--batch-size", train_args.batch_size, "batch size");
    train->add_option("--temperature", train_args.temperature, "contrastive temperature");
    train->add_option("--log", train_args.log_path, "training log CSV path");

    LocalizeArgs localize_args;
    CLI::App* localize = app.add_subcommand("localize", "emit heatmaps for a manifest");
    localize->add_option("--method", localize_args.method, "cossim|gradcam|tmm")
        ->check(CLI::IsMember({"cossim", "gradcam", "tmm"}));
    localize->add_option("--checkpoint", localize_args.checkpoint, "checkpoint path")
        ->required();
    localize->add_option("--manifest", localize_args.manifest, "manifest path")->required();
    localize->add_option("--out", localize_args.out, "output directory")->required();
    localize->add_option("--target-layer", localize_args.target_layer,
                         "gradcam capture layer (default: last block norm)");

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "score predictions against a manifest");
    eval->add_option("--manifest", eval_args.manifest, "manifest path")->required();
    eval->add_option("--preds", eval_args.preds, "directory of <frame_id>.hmp files")
        ->required();
    eval->add_option("--bin-threshold", eval_args.bin_threshold, "binarization threshold");
    eval->add_option("--ciou-threshold", eval_args.ciou_threshold, "success threshold");
    eval->add_option("--min-agree", eval_args.min_agree,
                     "consensus annotators (default: 2 when multi-annotator, else 1)");
    eval->add_option("--out", eval_args.out, "results CSV path");
    eval->add_option("--model", eval_args.model, "model column in the results CSV");
    eval->add_option("--auc-sweep", eval_args.auc_sweep, "success|binarization")
        ->check(CLI::IsMember({"success", "binarization"}));

    StatsArgs stats_args;
    CLI::App* stats = app.add_subcommand("stats", "dataset and prediction distributions");
    stats->add_option("--manifest", stats_args.manifest, "manifest path")->required();
    stats->add_option("--preds", stats_args.preds, "optional predictions directory");
    stats->add_option("--out-dir", stats_args.out_dir, "output directory")->required();
    stats->add_option("--bin-threshold", stats_args.bin_threshold,
                      "binarization threshold for predicted areas");
    stats->add_flag("--per-box", stats_args.per_box,
                    "area histogram per box instead of per frame union");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit_error("usage", 2, e.what());
        return 2;
    }

    const std::string command = join_command(argc, argv);
    std::map<std::string, std::string> config;
    std::optional<uint64_t> seed;

    try {
        if (app.got_subcommand(synth)) {
            run_synth(synth_args);
            config = {{"kind", synth_args.kind},
                      {"n", std::to_string(synth_args.n)},
                      {"out", synth_args.out},
                      {"image_size", std::to_string(synth_args.image_size)},
                      {"area_min", std::to_string(synth_args.area_min)},
                      {"area_max", std::to_string(synth_args.area_max)}};
            seed = synth_args.seed;
        } else if (app.got_subcommand(baseline)) {
            run_baseline(baseline_args);
            config = {{"kind", baseline_args.kind},
                      {"area_frac", std::to_string(baseline_args.area_frac)},
                      {"manifest", baseline_args.manifest},
                      {"out", baseline_args.out},
                      {"square", baseline_args.square ? "1" : "0"}};
        } else if (app.got_subcommand(train)) {
            run_train(train_args);
            config = {{"manifest", train_args.manifest},
                      {"loss", train_args.loss},
                      {"epochs", std::to_string(train_args.epochs)},
                      {"out", train_args.out},
                      {"image_encoder", train_args.image_encoder},
                      {"lr", std::to_string(train_args.lr)},
                      {"batch_size", std::to_string(train_args.batch_size)},
                      {"temperature", std::to_string(train_args.temperature)}};
            seed = train_args.seed;
        } else if (app.got_subcommand(localize)) {
            run_localize(localize_args);
            config = {{"method", localize_args.method},
                      {"checkpoint", localize_args.checkpoint},
                      {"manifest", localize_args.manifest},
                      {"out", localize_args.out},
                      {"target_layer", localize_args.target_layer}};
        } else if (app.got_subcommand(eval)) {
            run_eval(eval_args);
            config = {{"manifest", eval_args.manifest},
                      {"preds", eval_args.preds},
                      {"bin_threshold", std::to_string(eval_args.bin_threshold)},
                      {"ciou_threshold", std::to_string(eval_args.ciou_threshold)},
                      {"min_agree", std::to_string(eval_args.min_agree)},
                      {"out", eval_args.out},
                      {"model", eval_args.model},
                      {"auc_sweep", eval_args.auc_sweep}};
        } else if (app.got_subcommand(stats)) {
            run_stats(stats_args);
            config = {{"manifest", stats_args.manifest},
                      {"preds", stats_args.preds},
                      {"out_dir", stats_args.out_dir},
                      {"bin_threshold", std::to_string(stats_args.bin_threshold)},
                      {"per_box", stats_args.per_box ? "1" : "0"}};
        }
        ensure_parent_dir(provenance_path);
        append_provenance(provenance_path, command, config, seed);
        return 0;
    } catch (const IoError& e) {
        emit_error("io", 3, e.what());
        return 3;
    } catch (const vsl::ParseError& e) {
        emit_error("parse", 3, e.what());
        return 3;
    } catch (const ValidationError& e) {
        emit_error("validation", 4, e.what());
        return 4;
    } catch (const ContractError& e) {
        emit_error("contract", 4, e.what());
        return 4;
    } catch (const ConfigError& e) {
        emit_error("config", 4, e.what());
        return 4;
    } catch (const std::exception& e) {
        emit_error("internal", 1, e.what());
        return 1;
    }
}
