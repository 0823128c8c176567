#include "vsl/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "vsl/errors.h"
#include "vsl/kernels.h"

namespace vsl {

std::vector<double> default_auc_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 20; ++i) grid.push_back(i * 0.05);
    grid.back() = 1.0;
    return grid;
}

EvalConfig::EvalConfig() : auc_grid(default_auc_grid()) {}

void validate_config(const EvalConfig& cfg) {
    if (!(cfg.bin_threshold > 0.0f && cfg.bin_threshold < 1.0f)) {
        throw ConfigError("bin_threshold must be in (0,1)");
    }
    if (!(cfg.ciou_threshold > 0.0 && cfg.ciou_threshold <= 1.0)) {
        throw ConfigError("ciou_threshold must be in (0,1]");
    }
    if (cfg.min_agree < 1) throw ConfigError("min_agree must be >= 1");
    if (cfg.auc_grid.size() < 2 || cfg.auc_grid.front() != 0.0 || cfg.auc_grid.back() != 1.0) {
        throw ConfigError("auc_grid must start at 0.0 and end at 1.0");
    }
    for (size_t i = 1; i < cfg.auc_grid.size(); ++i) {
        if (!(cfg.auc_grid[i] > cfg.auc_grid[i - 1])) {
            throw ConfigError("auc_grid must be strictly increasing");
        }
    }
}

Heatmap minmax_normalize(const Heatmap& h) {
    if (h.values.empty()) throw ContractError("minmax_normalize: empty heatmap");
    const auto [lo_it, hi_it] = std::minmax_element(h.values.begin(), h.values.end());
    const float lo = *lo_it, hi = *hi_it;
    Heatmap out = h;
    out.normalized = true;
    if (hi > lo) {
        // plain division keeps the result in [0,1] with exact endpoints;
        // a reciprocal-multiply can land a hair above 1
        const float range = hi - lo;
        for (float& v : out.values) v = (v - lo) / range;
    } else {
        std::fill(out.values.begin(), out.values.end(), 0.0f);
    }
    return out;
}

BinaryMask binarize(const Heatmap& h, float tau) {
    if (!h.normalized) throw ContractError("binarize: heatmap is not normalized");
    BinaryMask m = make_mask(h.width, h.height);
    for (size_t i = 0; i < h.values.size(); ++i) {
        m.values[i] = h.values[i] >= tau ? 1 : 0;
    }
    return m;
}

double iou(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.width != gt.width || pred.height != gt.height) {
        throw ContractError("iou: mask dimensions differ");
    }
    const auto [inter, uni] =
        kern::mask_overlap(pred.values.data(), gt.values.data(),
                           static_cast<int64_t>(pred.values.size()));
    if (uni == 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double ciou_frame(const Heatmap& h, const FrameAnnotation& ann, const EvalConfig& cfg) {
    if (h.width != ann.width || h.height != ann.height) {
        throw ContractError("ciou_frame: heatmap dims do not match annotation for frame '" +
                            ann.frame_id + "'");
    }
    return iou(binarize(minmax_normalize(h), cfg.bin_threshold), gt_mask(ann, cfg.min_agree));
}

double auc_from_cious(const std::vector<double>& per_frame_ciou,
                      const std::vector<double>& grid, bool strict) {
    if (per_frame_ciou.empty()) throw ContractError("auc: empty frame set");
    const double n = static_cast<double>(per_frame_ciou.size());
    std::vector<double> success(grid.size());
    for (size_t g = 0; g < grid.size(); ++g) {
        const double tau = grid[g];
        int64_t hits = 0;
        for (double c : per_frame_ciou) {
            if (strict ? c > tau : c >= tau) ++hits;
        }
        success[g] = hits / n;
    }
    double area = 0.0;
    for (size_t g = 1; g < grid.size(); ++g) {
        area += 0.5 * (success[g] + success[g - 1]) * (grid[g] - grid[g - 1]);
    }
    return area / (grid.back() - grid.front());
}

EvalResult evaluate(const std::vector<ManifestRecord>& manifest,
                    const PredictionLookup& preds, const EvalConfig& cfg) {
    validate_config(cfg);
    if (manifest.empty()) throw ContractError("evaluate: empty manifest");

    std::vector<const Heatmap*> maps(manifest.size(), nullptr);
    std::string missing;
    int n_missing = 0;
    for (size_t i = 0; i < manifest.size(); ++i) {
        maps[i] = preds(manifest[i].frame_id);
        if (!maps[i]) {
            if (!missing.empty()) missing += ", ";
            missing += manifest[i].frame_id;
            ++n_missing;
        }
    }
    if (n_missing > 0) {
        throw IoError("evaluate: missing predictions for " + std::to_string(n_missing) +
                      " frame(s): " + missing);
    }

    EvalResult result;
    result.per_frame_ciou.resize(manifest.size());
    std::vector<double> cious(manifest.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < manifest.size(); ++i) {
        try {
            cious[i] = ciou_frame(*maps[i], manifest[i].annotation, cfg);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    int64_t hits = 0;
    for (size_t i = 0; i < manifest.size(); ++i) {
        result.per_frame_ciou[i] = {manifest[i].frame_id, cious[i]};
        const bool hit = cfg.ciou_inclusive ? cious[i] >= cfg.ciou_threshold
                                            : cious[i] > cfg.ciou_threshold;
        if (hit) ++hits;
    }
    result.ciou_at_tau = static_cast<double>(hits) / static_cast<double>(manifest.size());

    if (cfg.auc_sweep == AucSweep::success_threshold) {
        result.auc = auc_from_cious(cious, cfg.auc_grid, cfg.auc_strict);
    } else {
        // Alternative sweep: re-binarize at every grid point, success when the
        // resulting IoU clears the configured cutoff.
        std::vector<double> success(cfg.auc_grid.size(), 0.0);
        for (size_t g = 0; g < cfg.auc_grid.size(); ++g) {
            const float bin_tau = static_cast<float>(cfg.auc_grid[g]);
            std::vector<int64_t> frame_ok(manifest.size(), 0);
#pragma omp parallel for schedule(dynamic)
            for (size_t i = 0; i < manifest.size(); ++i) {
                try {
                    const double c = iou(binarize(minmax_normalize(*maps[i]), bin_tau),
                                         gt_mask(manifest[i].annotation, cfg.min_agree));
                    const bool hit =
                        cfg.auc_strict ? c > cfg.ciou_threshold : c >= cfg.ciou_threshold;
                    frame_ok[i] = hit ? 1 : 0;
                } catch (...) {
#pragma omp critical
                    if (!failure) failure = std::current_exception();
                }
            }
            if (failure) std::rethrow_exception(failure);
            int64_t ok = 0;
            for (int64_t v : frame_ok) ok += v;
            success[g] = static_cast<double>(ok) / static_cast<double>(manifest.size());
        }
        double area = 0.0;
        for (size_t g = 1; g < cfg.auc_grid.size(); ++g) {
            area += 0.5 * (success[g] + success[g - 1]) *
                    (cfg.auc_grid[g] - cfg.auc_grid[g - 1]);
        }
        result.auc = area / (cfg.auc_grid.back() - cfg.auc_grid.front());
    }
    return result;
}

namespace {

std::string trim_float(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    std::string s(buf);
    while (s.size() > 1 && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

}  // namespace

void append_results_csv(std::ostream& out, const std::string& dataset,
                        const std::string& model, const EvalResult& result,
                        const EvalConfig& cfg, bool write_header) {
    char buf[32];
    if (write_header) out << "dataset,model,metric,value\n";
    std::snprintf(buf, sizeof(buf), "%.3f", result.ciou_at_tau);
    out << dataset << "," << model << ",ciou@" << trim_float(cfg.ciou_threshold) << ","
        << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.3f", result.auc);
    out << dataset << "," << model << ",auc," << buf << "\n";
}

}  // namespace vsl
