#pragma once

#include <filesystem>
#include <vector>

#include "vsl/encoders.h"
#include "vsl/manifest.h"

namespace vsl {

// Where the cross-sample negatives of the sub-patch loss come from: the mean
// per-patch similarity of the other image, or its pooled feature vector.
enum class CrossNegatives { patch_mean, pooled_embedding };

struct LossConfig {
    double temperature = 0.07;
    double pos_threshold = 0.65;   // similarity above -> positive region
    double neg_threshold = 0.40;   // similarity below -> within-image hard negative
    double mask_sharpness = 10.0;  // sigmoid slope of the soft tri-map
    int batch_size = 8;
    CrossNegatives cross_negatives = CrossNegatives::patch_mean;
};

void validate_loss_config(const LossConfig& cfg);

// Symmetric InfoNCE over the NxN cosine similarity matrix (both directions
// averaged). Inputs must be L2-normalized. Optional gradient outputs are
// resized and filled when non-null.
double infonce(const std::vector<Embedding>& audio, const std::vector<Embedding>& image,
               double temperature,
               std::vector<std::vector<double>>* d_audio = nullptr,
               std::vector<std::vector<double>>* d_image = nullptr);

// Region-contrastive loss against one audio embedding: the soft tri-map over
// the similarity map separates a positive region (weighted-mean response P)
// from within-image hard negatives (response weighted by the negative mass,
// so a fully matched map contributes no within-image negative term) and
// cross-sample negatives. Cosines are computed internally, so the feature
// map does not need to be pre-normalized.
double subpatch_contrastive(const Embedding& audio, const SpatialFeatureMap& feats,
                            const std::vector<const SpatialFeatureMap*>& negatives,
                            const LossConfig& cfg,
                            SpatialFeatureMap* d_feats = nullptr,
                            std::vector<SpatialFeatureMap>* d_negatives = nullptr,
                            std::vector<double>* d_audio = nullptr);

enum class LossKind { infonce, subpatch };

struct TrainConfig {
    LossKind loss = LossKind::infonce;
    int epochs = 10;
    uint64_t seed = 0;
    double lr = 0.05;
    LossConfig loss_cfg;
    EncoderConfig encoder;
};

struct EpochLog {
    int epoch = 0;
    double loss = 0.0;
};

// Full-pipeline toy training: loads the manifest's media, runs seeded SGD,
// and returns the trained model plus the per-epoch loss trace. Deterministic
// given the config.
ToyModel train_toy(const std::vector<ManifestRecord>& manifest,
                   const std::filesystem::path& manifest_path, const TrainConfig& cfg,
                   std::vector<EpochLog>* log = nullptr);

}  // namespace vsl
