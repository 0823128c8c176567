#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vsl/encoders.h"
#include "vsl/heatmap.h"
#include "vsl/tensor.h"

namespace vsl {

enum class LocalizerKind { cossim_subpatch, gradcam_embedding, transformer_mm };

LocalizerKind localizer_kind_from_string(const std::string& name);

// Raw per-patch cosine similarity against the audio embedding, [gh, gw].
Tensor cosine_similarity_map(const SpatialFeatureMap& feats, const Embedding& audio);

// Bilinear upsample of a raw [h, w] score grid followed by min-max
// normalization; the shared tail of every localizer.
Heatmap upsample_normalize(const Tensor& raw, int out_w, int out_h);

// similarity map -> upsample -> normalize
Heatmap localize_cossim(const SpatialFeatureMap& feats, const Embedding& audio,
                        int out_w, int out_h);

// Anything that can capture a conv activation grid during a forward pass and
// backpropagate an embedding-space seed to it can drive the gradient-weighted
// localizer below.
class GradCamBackend {
public:
    virtual ~GradCamBackend() = default;
    virtual std::pair<Tensor, Embedding> forward_capture(const Tensor& image) = 0;
    virtual Tensor backward_to_capture(const std::vector<double>& d_embedding) = 0;
};

class ConvEncoderGradCam : public GradCamBackend {
public:
    explicit ConvEncoderGradCam(const ConvImageEncoder& enc, std::string target_layer = "");
    std::pair<Tensor, Embedding> forward_capture(const Tensor& image) override;
    Tensor backward_to_capture(const std::vector<double>& d_embedding) override;

private:
    const ConvImageEncoder* enc_;
    std::string layer_;
    CaptureSession session_;
};

// channel weights = spatial mean of the gradients; raw map = relu-ed
// weighted sum of the activation channels.
std::pair<std::vector<double>, Tensor> gradcam_combine(const Tensor& acts,
                                                       const Tensor& grads);

// The objective backpropagated is <audio, image_embedding>; its embedding
// adjoint is the audio embedding itself.
Heatmap localize_gradcam(GradCamBackend& backend, const Tensor& image,
                         const Embedding& audio, int out_w, int out_h);

// Token-level relevancy accumulated across layers.
struct RelevancyMap {
    int tokens = 0;
    std::vector<double> r;  // row-major tokens x tokens, starts as identity

    double at(int i, int j) const { return r[static_cast<size_t>(i) * tokens + j]; }
};

// R <- I; per layer: R += mean_heads(max(0, grad (*) attn)) * R
RelevancyMap transformer_relevancy(const AttentionStack& attn, const AttentionStack& grads);

// Class-token relevancy row over the patch tokens, reshaped to the patch
// grid, normalized and upsampled.
Heatmap localize_transformer_mm(const AttentionStack& attn, const AttentionStack& grads,
                                int out_w, int out_h);

struct LocalizeRun {
    LocalizerKind kind = LocalizerKind::cossim_subpatch;
    std::filesystem::path checkpoint;
    std::filesystem::path manifest;
    std::filesystem::path out_dir;
    std::string target_layer;  // gradcam only; empty = encoder default
};

// Writes one `<frame_id>.hmp` per manifest record. Validates checkpoint/kind
// compatibility before any file is written. Returns the frame count.
int run_localizer(const LocalizeRun& run);

}  // namespace vsl
