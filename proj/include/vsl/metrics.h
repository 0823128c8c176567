#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vsl/geometry.h"
#include "vsl/heatmap.h"
#include "vsl/manifest.h"

namespace vsl {

// The AUC threshold sweep is ambiguous in the literature: the standard
// reading sweeps the success cutoff over fixed per-frame cIoU values; the
// alternative re-binarizes every heatmap at each grid point and scores it
// against the configured cutoff. Both are implemented; success_threshold is
// the default.
enum class AucSweep { success_threshold, binarization_threshold };

struct EvalConfig {
    float bin_threshold = 0.5f;    // heatmap binarization
    double ciou_threshold = 0.5;   // success cutoff (0.5 FS/VS-style, 0.3 MS/US-style)
    std::vector<double> auc_grid;  // defaults to 0.00, 0.05, ..., 1.00
    int min_agree = 1;             // 2 for multi-annotator consensus
    bool ciou_inclusive = true;    // cIoU@tau counts ciou >= tau
    bool auc_strict = true;        // AUC success counts ciou > tau
    AucSweep auc_sweep = AucSweep::success_threshold;

    EvalConfig();
};

std::vector<double> default_auc_grid();

// Throws ConfigError if grid/threshold invariants are broken.
void validate_config(const EvalConfig& cfg);

struct EvalResult {
    std::vector<std::pair<std::string, double>> per_frame_ciou;  // manifest order
    double ciou_at_tau = 0.0;
    double auc = 0.0;
};

// (h - min) / (max - min); a constant map becomes all-zero.
Heatmap minmax_normalize(const Heatmap& h);

// Mask of values >= tau. The heatmap must be normalized.
BinaryMask binarize(const Heatmap& h, float tau);

// |pred AND gt| / |pred OR gt|; 0 when the union is empty.
double iou(const BinaryMask& pred, const BinaryMask& gt);

// iou(binarize(minmax_normalize(h), cfg.bin_threshold), gt_mask(ann, cfg.min_agree))
double ciou_frame(const Heatmap& h, const FrameAnnotation& ann, const EvalConfig& cfg);

// Trapezoidal area of the success curve over the grid, scaled by the grid
// span. success(tau) = fraction of frames with ciou > tau (or >= when
// strict=false).
double auc_from_cious(const std::vector<double>& per_frame_ciou,
                      const std::vector<double>& grid, bool strict = true);

// preds returns the heatmap for a frame id, or nullptr when missing; all
// missing frames are collected into one IoError before any work is done.
using PredictionLookup = std::function<const Heatmap*(const std::string& frame_id)>;

EvalResult evaluate(const std::vector<ManifestRecord>& manifest,
                    const PredictionLookup& preds, const EvalConfig& cfg);

// Table-style CSV: header `dataset,model,metric,value`, one `ciou@<tau>` row
// and one `auc` row per call, values with 3 decimals.
void append_results_csv(std::ostream& out, const std::string& dataset,
                        const std::string& model, const EvalResult& result,
                        const EvalConfig& cfg, bool write_header);

}  // namespace vsl
