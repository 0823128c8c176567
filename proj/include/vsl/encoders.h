#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vsl/nn.h"
#include "vsl/tensor.h"

namespace vsl {

// ------------------------------------------------------------ data types

// channels x grid_h x grid_w activation grid; the localization source.
struct SpatialFeatureMap {
    int channels = 0;
    int grid_h = 0;
    int grid_w = 0;
    std::vector<double> values;

    double at(int c, int y, int x) const {
        return values[(static_cast<size_t>(c) * grid_h + y) * grid_w + x];
    }
};

struct Embedding {
    int dim = 0;
    std::vector<double> values;
    bool l2_normalized = false;
};

// layer x head x tokens x tokens row-stochastic attention maps.
struct AttentionStack {
    int layers = 0;
    int heads = 0;
    int tokens = 0;
    std::vector<double> maps;

    double at(int l, int h, int i, int j) const {
        return maps[((static_cast<size_t>(l) * heads + h) * tokens + i) * tokens + j];
    }
    double& at(int l, int h, int i, int j) {
        return maps[((static_cast<size_t>(l) * heads + h) * tokens + i) * tokens + j];
    }
};

double cosine(const Embedding& a, const Embedding& b);

// ---------------------------------------------------------------- config

enum class ImageEncoderKind { conv, vit };

struct EncoderConfig {
    ImageEncoderKind image_encoder = ImageEncoderKind::conv;
    int embed_dim = 64;
    int image_size = 224;

    // conv image encoder: one stride-2 block per entry; the last entry is the
    // localization feature dimension and must halve image_size down to grid.
    std::vector<int> conv_channels = {12, 24, 48, 64};
    int grid = 14;

    // vit image encoder
    int patch_size = 16;
    int vit_dim = 64;
    int vit_layers = 2;
    int vit_heads = 2;
    int vit_mlp_hidden = 128;

    // audio front-end: 16 kHz mono, 25 ms window, 10 ms hop
    int sample_rate = 16000;
    int n_mels = 64;
    int win_length = 400;
    int hop_length = 160;
    double log_floor = 1e-10;
    std::vector<int> audio_channels = {16, 32, 64};

    uint64_t seed = 0;
};

// Throws ConfigError on inconsistent settings (grid/stride mismatch, ...).
void validate_encoder_config(const EncoderConfig& cfg);

// -------------------------------------------------------- capture session

// Single-use record of one forward pass at a target layer. Conv encoders
// capture a spatial activation grid; ViT encoders capture the full attention
// stack. backward_capture fills in the gradients; a session must not be
// shared across concurrent passes, but distinct sessions over the same
// encoder weights may run concurrently.
struct CaptureSession {
    std::string target_layer_id;

    std::optional<SpatialFeatureMap> activations;
    std::optional<SpatialFeatureMap> gradients;

    std::optional<AttentionStack> attention;
    std::optional<AttentionStack> attention_gradients;

    Embedding embedding;

    bool gradients_ready = false;

    struct Impl;
    std::shared_ptr<Impl> impl;
};

// A scalar objective expressed through its gradients at the forward outputs:
// d_embedding seeds the chain through the network; d_activations adds a
// direct dependence of the objective on the captured values themselves.
struct CaptureObjective {
    std::vector<double> d_embedding;    // empty = zero
    std::vector<double> d_activations;  // empty = zero; sized like the capture
};

void backward_capture(CaptureSession& session, const CaptureObjective& objective);

// --------------------------------------------------------------- encoders

class ConvImageEncoder {
public:
    ConvImageEncoder() = default;
    ConvImageEncoder(const EncoderConfig& cfg, Rng& rng);

    // image: [3, image_size, image_size], values in [0,1]
    std::pair<SpatialFeatureMap, Embedding> encode(const Tensor& image) const;

    // Forward pass that records activations at target_layer ("block4.norm1"
    // style ids; empty string selects the default target).
    CaptureSession capture(const Tensor& image, const std::string& target_layer = "") const;

    // Re-runs the tail of the network with the captured layer's activations
    // replaced; the finite-difference probe of capture gradients.
    Embedding embedding_from_capture(const std::string& target_layer,
                                     const Tensor& activations) const;

    std::string default_target_layer() const;
    int n_blocks() const { return static_cast<int>(convs_.size()); }

    // Training-path forward/backward over internal traces. capture_block >= 0
    // additionally records that block's normalization output.
    struct Trace;
    std::shared_ptr<Trace> forward(const Tensor& image, int capture_block = -1) const;
    // Seeds may be null; accumulates parameter gradients into sink under
    // "<prefix>." names when sink is non-null.
    void backward(Trace& trace, const std::vector<double>* d_embedding,
                  const Tensor* d_final_map, GradSink* sink, const std::string& prefix) const;

    void visit_params(const std::function<void(const std::string&, Tensor*)>& fn);
    void visit_params(const std::function<void(const std::string&, const Tensor*)>& fn) const;

    const EncoderConfig& config() const { return cfg_; }

private:
    friend void backward_capture(CaptureSession&, const CaptureObjective&);

    EncoderConfig cfg_;
    std::vector<Conv2d> convs_;
    std::vector<InstanceNorm> norms_;
    Relu relu_;
    GlobalAvgPool gap_;
    Linear proj_;
    L2Normalize l2_;
};

class VitImageEncoder {
public:
    VitImageEncoder() = default;
    VitImageEncoder(const EncoderConfig& cfg, Rng& rng);

    std::pair<Embedding, AttentionStack> encode(const Tensor& image) const;

    CaptureSession capture(const Tensor& image) const;

    // Forward with the attention probabilities of selected layers replaced;
    // the finite-difference probe of attention gradients.
    Embedding embedding_with_attention(
        const Tensor& image, const std::vector<std::pair<int, Tensor>>& overrides) const;

    int tokens() const;

    struct Trace;
    std::shared_ptr<Trace> forward(const Tensor& image) const;
    // Returns d(objective)/d(attention) when d_attention is non-null.
    void backward(Trace& trace, const std::vector<double>* d_embedding, GradSink* sink,
                  const std::string& prefix, AttentionStack* d_attention) const;

    void visit_params(const std::function<void(const std::string&, Tensor*)>& fn);
    void visit_params(const std::function<void(const std::string&, const Tensor*)>& fn) const;

    const EncoderConfig& config() const { return cfg_; }

private:
    friend void backward_capture(CaptureSession&, const CaptureObjective&);

    struct Block {
        LayerNorm ln1;
        MultiHeadSelfAttention attn;
        LayerNorm ln2;
        TokenLinear fc1;
        Gelu gelu;
        TokenLinear fc2;
    };

    Tensor to_tokens(const Tensor& image) const;  // patch embed + cls + pos

    EncoderConfig cfg_;
    TokenLinear patch_embed_;
    Tensor cls_token_;  // [1, dim]
    Tensor pos_embed_;  // [tokens, dim]
    std::vector<Block> blocks_;
    LayerNorm ln_final_;
    Linear proj_;
    L2Normalize l2_;
};

class AudioEncoder {
public:
    AudioEncoder() = default;
    AudioEncoder(const EncoderConfig& cfg, Rng& rng);

    // mel: [1, n_mels, frames] log-mel spectrogram (see audio.h)
    Embedding encode(const Tensor& mel) const;

    struct Trace;
    std::shared_ptr<Trace> forward(const Tensor& mel) const;
    void backward(Trace& trace, const std::vector<double>& d_embedding, GradSink* sink,
                  const std::string& prefix) const;

    void visit_params(const std::function<void(const std::string&, Tensor*)>& fn);
    void visit_params(const std::function<void(const std::string&, const Tensor*)>& fn) const;

private:
    EncoderConfig cfg_;
    std::vector<Conv2d> convs_;
    std::vector<InstanceNorm> norms_;
    Relu relu_;
    GlobalAvgPool gap_;
    Linear proj_;
    L2Normalize l2_;
};

// Forward-pass state: per-layer caches consumed by the matching backward.
struct ConvImageEncoder::Trace {
    std::vector<Conv2d::Cache> conv;
    std::vector<InstanceNorm::Cache> norm;
    std::vector<Relu::Cache> relu;
    GlobalAvgPool::Cache gap;
    Linear::Cache proj;
    L2Normalize::Cache l2;
    Tensor final_map;  // post-relu [C, grid, grid]
    std::vector<double> embedding;
    int capture_block = -1;  // block whose norm output is captured
    Tensor captured;
};

struct VitImageEncoder::Trace {
    TokenLinear::Cache patch;
    std::vector<LayerNorm::Cache> ln1, ln2;
    std::vector<MultiHeadSelfAttention::Cache> attn;
    std::vector<TokenLinear::Cache> fc1, fc2;
    std::vector<Gelu::Cache> gelu;
    LayerNorm::Cache ln_final;
    Linear::Cache proj;
    L2Normalize::Cache l2;
    AttentionStack stack;
    std::vector<double> embedding;
    int t = 0;
};

struct AudioEncoder::Trace {
    std::vector<Conv2d::Cache> conv;
    std::vector<InstanceNorm::Cache> norm;
    std::vector<Relu::Cache> relu;
    GlobalAvgPool::Cache gap;
    Linear::Cache proj;
    L2Normalize::Cache l2;
    std::vector<double> embedding;
};

// Audio encoder plus one image encoder sharing the embedding space.
struct ToyModel {
    EncoderConfig cfg;
    std::optional<ConvImageEncoder> conv_image;
    std::optional<VitImageEncoder> vit_image;
    AudioEncoder audio;

    static ToyModel init(const EncoderConfig& cfg);

    void visit_params(const std::function<void(const std::string&, Tensor*)>& fn);
    void visit_params(const std::function<void(const std::string&, const Tensor*)>& fn) const;
};

// Bilinear per-channel resize of a [3,H,W] image to [3,size,size].
Tensor resize_image(const Tensor& image, int size);

}  // namespace vsl
