#include "vsl/encoders.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "vsl/errors.h"
#include "vsl/kernels.h"

namespace vsl {

double cosine(const Embedding& a, const Embedding& b) {
    if (a.dim != b.dim) throw ContractError("cosine: embedding dims differ");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < a.dim; ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    const double denom = std::sqrt(na) * std::sqrt(nb);
    return denom < 1e-12 ? 0.0 : dot / denom;
}

void validate_encoder_config(const EncoderConfig& cfg) {
    if (cfg.embed_dim < 1) throw ConfigError("embed_dim must be positive");
    if (cfg.image_size < 2) throw ConfigError("image_size too small");
    if (cfg.image_encoder == ImageEncoderKind::conv) {
        if (cfg.conv_channels.empty()) throw ConfigError("conv_channels must not be empty");
        int s = cfg.image_size;
        for (size_t i = 0; i < cfg.conv_channels.size(); ++i) s = (s + 2 - 3) / 2 + 1;
        if (s != cfg.grid) {
            throw ConfigError("image_size does not reduce to the localization grid (" +
                              std::to_string(s) + " != " + std::to_string(cfg.grid) + ")");
        }
        if (cfg.conv_channels.back() != cfg.embed_dim) {
            throw ConfigError("last conv channel count must equal embed_dim");
        }
    } else {
        if (cfg.image_size % cfg.patch_size != 0) {
            throw ConfigError("image_size must be divisible by patch_size");
        }
        if (cfg.vit_dim % cfg.vit_heads != 0) {
            throw ConfigError("vit_dim must be divisible by vit_heads");
        }
    }
    if (cfg.audio_channels.empty()) throw ConfigError("audio_channels must not be empty");
    if (cfg.n_mels < 8) throw ConfigError("n_mels too small");
    if (cfg.win_length <= 0 || cfg.hop_length <= 0) throw ConfigError("bad mel framing");
}

Tensor resize_image(const Tensor& image, int size) {
    const int h = image.shape[1], w = image.shape[2];
    if (h == size && w == size) return image;
    Tensor out({image.shape[0], size, size});
    for (int c = 0; c < image.shape[0]; ++c) {
        kern::bilinear_resize(image.data() + static_cast<int64_t>(c) * h * w, h, w,
                              out.data() + static_cast<int64_t>(c) * size * size, size, size);
    }
    return out;
}

namespace {

SpatialFeatureMap to_feature_map(const Tensor& t) {
    SpatialFeatureMap m;
    m.channels = t.shape[0];
    m.grid_h = t.shape[1];
    m.grid_w = t.shape[2];
    m.values = t.v;
    return m;
}

Embedding to_embedding(const std::vector<double>& v) {
    Embedding e;
    e.dim = static_cast<int>(v.size());
    e.values = v;
    double sq = 0.0;
    for (double x : v) sq += x * x;
    e.l2_normalized = std::abs(std::sqrt(sq) - 1.0) <= 1e-5;
    return e;
}

}  // namespace

struct CaptureSession::Impl {
    const ConvImageEncoder* conv_owner = nullptr;
    std::shared_ptr<ConvImageEncoder::Trace> conv_trace;
    const VitImageEncoder* vit_owner = nullptr;
    std::shared_ptr<VitImageEncoder::Trace> vit_trace;
    bool consumed = false;
};

// ------------------------------------------------------- ConvImageEncoder

ConvImageEncoder::ConvImageEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    int in_ch = 3;
    for (int out_ch : cfg.conv_channels) {
        Conv2d conv;
        conv.init(in_ch, out_ch, 3, 2, 1, rng);
        convs_.push_back(std::move(conv));
        InstanceNorm norm;
        norm.init(out_ch);
        norms_.push_back(std::move(norm));
        in_ch = out_ch;
    }
    proj_.init(cfg.conv_channels.back(), cfg.embed_dim, rng);
}

std::string ConvImageEncoder::default_target_layer() const {
    return "block" + std::to_string(convs_.size()) + ".norm1";
}

namespace {

int parse_norm_layer_id(const std::string& id, int n_blocks) {
    // "block<N>.norm1"
    if (id.rfind("block", 0) == 0) {
        const size_t dot = id.find('.');
        if (dot != std::string::npos && id.substr(dot) == ".norm1") {
            const int n = std::atoi(id.substr(5, dot - 5).c_str());
            if (n >= 1 && n <= n_blocks) return n - 1;
        }
    }
    throw ConfigError("unknown capture layer '" + id + "'");
}

}  // namespace

std::shared_ptr<ConvImageEncoder::Trace> ConvImageEncoder::forward(const Tensor& image,
                                                                   int capture_block) const {
    if (image.shape.size() != 3 || image.shape[0] != 3 || image.shape[1] != cfg_.image_size ||
        image.shape[2] != cfg_.image_size) {
        throw ContractError("conv encoder expects a 3x" + std::to_string(cfg_.image_size) + "x" +
                            std::to_string(cfg_.image_size) + " image");
    }
    auto trace = std::make_shared<Trace>();
    trace->capture_block = capture_block;
    const size_t n = convs_.size();
    trace->conv.resize(n);
    trace->norm.resize(n);
    trace->relu.resize(n);
    Tensor x = image;
    for (size_t i = 0; i < n; ++i) {
        x = convs_[i].forward(x, &trace->conv[i]);
        x = norms_[i].forward(x, &trace->norm[i]);
        if (trace->capture_block == static_cast<int>(i)) trace->captured = x;
        x = relu_.forward(x, &trace->relu[i]);
    }
    trace->final_map = x;
    Tensor pooled = gap_.forward(x, &trace->gap);
    Tensor proj = proj_.forward(pooled, &trace->proj);
    Tensor emb = l2_.forward(proj, &trace->l2);
    trace->embedding = emb.v;
    return trace;
}

std::pair<SpatialFeatureMap, Embedding> ConvImageEncoder::encode(const Tensor& image) const {
    auto trace = forward(image);
    return {to_feature_map(trace->final_map), to_embedding(trace->embedding)};
}

void ConvImageEncoder::backward(Trace& trace, const std::vector<double>* d_embedding,
                                const Tensor* d_final_map, GradSink* sink,
                                const std::string& prefix) const {
    Tensor d({cfg_.conv_channels.back(), trace.final_map.shape[1], trace.final_map.shape[2]});
    if (d_embedding) {
        Tensor de({cfg_.embed_dim});
        de.v = *d_embedding;
        Tensor dp = l2_.backward(de, trace.l2);
        Tensor dpool = proj_.backward(dp, trace.proj, sink, prefix + ".proj");
        d = gap_.backward(dpool, trace.gap);
    }
    if (d_final_map) {
        for (size_t i = 0; i < d.v.size(); ++i) d.v[i] += d_final_map->v[i];
    }
    for (int i = static_cast<int>(convs_.size()) - 1; i >= 0; --i) {
        const std::string block = prefix + ".block" + std::to_string(i + 1);
        d = relu_.backward(d, trace.relu[i]);
        if (i == trace.capture_block) trace.captured = d;  // reuse: gradient at norm output
        d = norms_[i].backward(d, trace.norm[i], sink, block + ".norm");
        d = convs_[i].backward(d, trace.conv[i], sink, block + ".conv");
    }
}

CaptureSession ConvImageEncoder::capture(const Tensor& image,
                                         const std::string& target_layer) const {
    const std::string layer = target_layer.empty() ? default_target_layer() : target_layer;
    const int block = parse_norm_layer_id(layer, n_blocks());
    auto trace = forward(image, block);
    CaptureSession session;
    session.target_layer_id = layer;
    session.activations = to_feature_map(trace->captured);
    session.embedding = to_embedding(trace->embedding);
    session.impl = std::make_shared<CaptureSession::Impl>();
    session.impl->conv_owner = this;
    session.impl->conv_trace = trace;
    return session;
}

Embedding ConvImageEncoder::embedding_from_capture(const std::string& target_layer,
                                                   const Tensor& activations) const {
    const int block = parse_norm_layer_id(
        target_layer.empty() ? default_target_layer() : target_layer, n_blocks());
    Tensor x = relu_.forward(activations, nullptr);
    for (size_t i = block + 1; i < convs_.size(); ++i) {
        x = convs_[i].forward(x, nullptr);
        x = norms_[i].forward(x, nullptr);
        x = relu_.forward(x, nullptr);
    }
    Tensor pooled = gap_.forward(x, nullptr);
    Tensor proj = proj_.forward(pooled, nullptr);
    Tensor emb = l2_.forward(proj, nullptr);
    return to_embedding(emb.v);
}

void ConvImageEncoder::visit_params(
    const std::function<void(const std::string&, Tensor*)>& fn) {
    for (size_t i = 0; i < convs_.size(); ++i) {
        const std::string block = "block" + std::to_string(i + 1);
        fn(block + ".conv.w", &convs_[i].w);
        fn(block + ".conv.b", &convs_[i].b);
        fn(block + ".norm.gamma", &norms_[i].gamma);
        fn(block + ".norm.beta", &norms_[i].beta);
    }
    fn("proj.w", &proj_.w);
    fn("proj.b", &proj_.b);
}

void ConvImageEncoder::visit_params(
    const std::function<void(const std::string&, const Tensor*)>& fn) const {
    const_cast<ConvImageEncoder*>(this)->visit_params(
        [&fn](const std::string& name, Tensor* t) { fn(name, t); });
}

// -------------------------------------------------------- VitImageEncoder

VitImageEncoder::VitImageEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int patch_dim = 3 * cfg.patch_size * cfg.patch_size;
    patch_embed_.init(patch_dim, cfg.vit_dim, rng);
    cls_token_ = Tensor({1, cfg.vit_dim});
    for (double& v : cls_token_.v) v = 0.02 * rng.gaussian();
    pos_embed_ = Tensor({tokens(), cfg.vit_dim});
    for (double& v : pos_embed_.v) v = 0.02 * rng.gaussian();
    blocks_.resize(cfg.vit_layers);
    for (Block& b : blocks_) {
        b.ln1.init(cfg.vit_dim);
        b.attn.init(cfg.vit_dim, cfg.vit_heads, rng);
        b.ln2.init(cfg.vit_dim);
        b.fc1.init(cfg.vit_dim, cfg.vit_mlp_hidden, rng);
        b.fc2.init(cfg.vit_mlp_hidden, cfg.vit_dim, rng);
    }
    ln_final_.init(cfg.vit_dim);
    proj_.init(cfg.vit_dim, cfg.embed_dim, rng);
}

int VitImageEncoder::tokens() const {
    const int g = cfg_.image_size / cfg_.patch_size;
    return 1 + g * g;
}

Tensor VitImageEncoder::to_tokens(const Tensor& image) const {
    if (image.shape.size() != 3 || image.shape[0] != 3 || image.shape[1] != cfg_.image_size ||
        image.shape[2] != cfg_.image_size) {
        throw ContractError("vit encoder expects a 3x" + std::to_string(cfg_.image_size) + "x" +
                            std::to_string(cfg_.image_size) + " image");
    }
    const int p = cfg_.patch_size;
    const int g = cfg_.image_size / p;
    const int patch_dim = 3 * p * p;
    Tensor patches({g * g, patch_dim});
    for (int py = 0; py < g; ++py) {
        for (int px = 0; px < g; ++px) {
            double* row = patches.data() + (static_cast<int64_t>(py) * g + px) * patch_dim;
            int idx = 0;
            for (int c = 0; c < 3; ++c) {
                for (int y = 0; y < p; ++y) {
                    for (int x = 0; x < p; ++x) {
                        row[idx++] = image.at3(c, py * p + y, px * p + x);
                    }
                }
            }
        }
    }
    return patches;
}

std::shared_ptr<VitImageEncoder::Trace> VitImageEncoder::forward(const Tensor& image) const {
    auto trace = std::make_shared<Trace>();
    const int t = tokens();
    trace->t = t;
    Tensor patches = to_tokens(image);
    Tensor embedded = patch_embed_.forward(patches, &trace->patch);

    Tensor x({t, cfg_.vit_dim});
    for (int j = 0; j < cfg_.vit_dim; ++j) x.at2(0, j) = cls_token_.at2(0, j);
    for (int r = 1; r < t; ++r) {
        for (int j = 0; j < cfg_.vit_dim; ++j) x.at2(r, j) = embedded.at2(r - 1, j);
    }
    for (int r = 0; r < t; ++r) {
        for (int j = 0; j < cfg_.vit_dim; ++j) x.at2(r, j) += pos_embed_.at2(r, j);
    }

    const int n = static_cast<int>(blocks_.size());
    trace->ln1.resize(n);
    trace->ln2.resize(n);
    trace->attn.resize(n);
    trace->fc1.resize(n);
    trace->fc2.resize(n);
    trace->gelu.resize(n);
    trace->stack.layers = n;
    trace->stack.heads = cfg_.vit_heads;
    trace->stack.tokens = t;
    trace->stack.maps.assign(static_cast<size_t>(n) * cfg_.vit_heads * t * t, 0.0);

    for (int l = 0; l < n; ++l) {
        const Block& b = blocks_[l];
        Tensor h = b.ln1.forward(x, &trace->ln1[l]);
        Tensor a = b.attn.forward(h, &trace->attn[l]);
        for (size_t i = 0; i < x.v.size(); ++i) x.v[i] += a.v[i];
        Tensor h2 = b.ln2.forward(x, &trace->ln2[l]);
        Tensor m = b.fc1.forward(h2, &trace->fc1[l]);
        m = b.gelu.forward(m, &trace->gelu[l]);
        m = b.fc2.forward(m, &trace->fc2[l]);
        for (size_t i = 0; i < x.v.size(); ++i) x.v[i] += m.v[i];

        const size_t span = static_cast<size_t>(cfg_.vit_heads) * t * t;
        std::copy(trace->attn[l].attn.v.begin(), trace->attn[l].attn.v.end(),
                  trace->stack.maps.begin() + static_cast<size_t>(l) * span);
    }

    Tensor y = ln_final_.forward(x, &trace->ln_final);
    Tensor cls({cfg_.vit_dim});
    for (int j = 0; j < cfg_.vit_dim; ++j) cls.v[j] = y.at2(0, j);
    Tensor proj = proj_.forward(cls, &trace->proj);
    Tensor emb = l2_.forward(proj, &trace->l2);
    trace->embedding = emb.v;
    return trace;
}

std::pair<Embedding, AttentionStack> VitImageEncoder::encode(const Tensor& image) const {
    auto trace = forward(image);
    return {to_embedding(trace->embedding), trace->stack};
}

void VitImageEncoder::backward(Trace& trace, const std::vector<double>* d_embedding,
                               GradSink* sink, const std::string& prefix,
                               AttentionStack* d_attention) const {
    const int t = trace.t;
    if (d_attention) {
        d_attention->layers = static_cast<int>(blocks_.size());
        d_attention->heads = cfg_.vit_heads;
        d_attention->tokens = t;
        d_attention->maps.assign(trace.stack.maps.size(), 0.0);
    }
    Tensor dy({t, cfg_.vit_dim});
    if (d_embedding) {
        Tensor de({cfg_.embed_dim});
        de.v = *d_embedding;
        Tensor dp = l2_.backward(de, trace.l2);
        Tensor dcls = proj_.backward(dp, trace.proj, sink, prefix + ".proj");
        for (int j = 0; j < cfg_.vit_dim; ++j) dy.at2(0, j) = dcls.v[j];
    }
    Tensor dx = ln_final_.backward(dy, trace.ln_final, sink, prefix + ".ln_f");

    for (int l = static_cast<int>(blocks_.size()) - 1; l >= 0; --l) {
        const Block& b = blocks_[l];
        const std::string lp = prefix + ".l" + std::to_string(l);
        // mlp branch
        Tensor td = b.fc2.backward(dx, trace.fc2[l], sink, lp + ".fc2");
        td = b.gelu.backward(td, trace.gelu[l]);
        td = b.fc1.backward(td, trace.fc1[l], sink, lp + ".fc1");
        td = b.ln2.backward(td, trace.ln2[l], sink, lp + ".ln2");
        for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += td.v[i];
        // attention branch
        Tensor d_attn_l;
        Tensor ta = b.attn.backward(dx, trace.attn[l], sink, lp + ".attn",
                                    d_attention ? &d_attn_l : nullptr);
        if (d_attention) {
            const size_t span = static_cast<size_t>(cfg_.vit_heads) * t * t;
            std::copy(d_attn_l.v.begin(), d_attn_l.v.end(),
                      d_attention->maps.begin() + static_cast<size_t>(l) * span);
        }
        ta = b.ln1.backward(ta, trace.ln1[l], sink, lp + ".ln1");
        for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += ta.v[i];
    }

    if (sink) {
        Tensor* g_pos = sink->slot(prefix + ".pos", pos_embed_.shape);
        for (size_t i = 0; i < g_pos->v.size(); ++i) g_pos->v[i] += dx.v[i];
        Tensor* g_cls = sink->slot(prefix + ".cls", cls_token_.shape);
        for (int j = 0; j < cfg_.vit_dim; ++j) g_cls->v[j] += dx.at2(0, j);
        Tensor d_patches({t - 1, cfg_.vit_dim});
        for (int r = 1; r < t; ++r) {
            for (int j = 0; j < cfg_.vit_dim; ++j) d_patches.at2(r - 1, j) = dx.at2(r, j);
        }
        patch_embed_.backward(d_patches, trace.patch, sink, prefix + ".patch");
    }
}

CaptureSession VitImageEncoder::capture(const Tensor& image) const {
    auto trace = forward(image);
    CaptureSession session;
    session.target_layer_id = "attention";
    session.attention = trace->stack;
    session.embedding = to_embedding(trace->embedding);
    session.impl = std::make_shared<CaptureSession::Impl>();
    session.impl->vit_owner = this;
    session.impl->vit_trace = trace;
    return session;
}

Embedding VitImageEncoder::embedding_with_attention(
    const Tensor& image, const std::vector<std::pair<int, Tensor>>& overrides) const {
    const int t = tokens();
    Tensor patches = to_tokens(image);
    Tensor embedded = patch_embed_.forward(patches, nullptr);
    Tensor x({t, cfg_.vit_dim});
    for (int j = 0; j < cfg_.vit_dim; ++j) x.at2(0, j) = cls_token_.at2(0, j);
    for (int r = 1; r < t; ++r) {
        for (int j = 0; j < cfg_.vit_dim; ++j) x.at2(r, j) = embedded.at2(r - 1, j);
    }
    for (size_t i = 0; i < x.v.size(); ++i) x.v[i] += pos_embed_.v[i];

    for (int l = 0; l < static_cast<int>(blocks_.size()); ++l) {
        const Block& b = blocks_[l];
        const Tensor* override_l = nullptr;
        for (const auto& [layer, attn] : overrides) {
            if (layer == l) override_l = &attn;
        }
        Tensor h = b.ln1.forward(x, nullptr);
        Tensor a = b.attn.forward(h, nullptr, override_l);
        for (size_t i = 0; i < x.v.size(); ++i) x.v[i] += a.v[i];
        Tensor h2 = b.ln2.forward(x, nullptr);
        Tensor m = b.fc1.forward(h2, nullptr);
        m = b.gelu.forward(m, nullptr);
        m = b.fc2.forward(m, nullptr);
        for (size_t i = 0; i < x.v.size(); ++i) x.v[i] += m.v[i];
    }
    Tensor y = ln_final_.forward(x, nullptr);
    Tensor cls({cfg_.vit_dim});
    for (int j = 0; j < cfg_.vit_dim; ++j) cls.v[j] = y.at2(0, j);
    Tensor proj = proj_.forward(cls, nullptr);
    Tensor emb = l2_.forward(proj, nullptr);
    return to_embedding(emb.v);
}

void VitImageEncoder::visit_params(
    const std::function<void(const std::string&, Tensor*)>& fn) {
    fn("patch.w", &patch_embed_.w);
    fn("patch.b", &patch_embed_.b);
    fn("cls", &cls_token_);
    fn("pos", &pos_embed_);
    for (size_t l = 0; l < blocks_.size(); ++l) {
        const std::string lp = "l" + std::to_string(l);
        Block& b = blocks_[l];
        fn(lp + ".ln1.gamma", &b.ln1.gamma);
        fn(lp + ".ln1.beta", &b.ln1.beta);
        fn(lp + ".attn.w_qkv", &b.attn.w_qkv);
        fn(lp + ".attn.b_qkv", &b.attn.b_qkv);
        fn(lp + ".attn.w_out", &b.attn.w_out);
        fn(lp + ".attn.b_out", &b.attn.b_out);
        fn(lp + ".ln2.gamma", &b.ln2.gamma);
        fn(lp + ".ln2.beta", &b.ln2.beta);
        fn(lp + ".fc1.w", &b.fc1.w);
        fn(lp + ".fc1.b", &b.fc1.b);
        fn(lp + ".fc2.w", &b.fc2.w);
        fn(lp + ".fc2.b", &b.fc2.b);
    }
    fn("ln_f.gamma", &ln_final_.gamma);
    fn("ln_f.beta", &ln_final_.beta);
    fn("proj.w", &proj_.w);
    fn("proj.b", &proj_.b);
}

void VitImageEncoder::visit_params(
    const std::function<void(const std::string&, const Tensor*)>& fn) const {
    const_cast<VitImageEncoder*>(this)->visit_params(
        [&fn](const std::string& name, Tensor* t) { fn(name, t); });
}

// ------------------------------------------------------------ AudioEncoder

AudioEncoder::AudioEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    int in_ch = 1;
    for (size_t i = 0; i < cfg.audio_channels.size(); ++i) {
        const int out_ch = cfg.audio_channels[i];
        Conv2d conv;
        conv.init(in_ch, out_ch, 3, 2, 1, rng);
        convs_.push_back(std::move(conv));
        // no norm on the final block: the pooled embedding keeps first-moment
        // information instead of collapsing to the relu'd standard-normal mean
        if (i + 1 < cfg.audio_channels.size()) {
            InstanceNorm norm;
            norm.init(out_ch);
            norms_.push_back(std::move(norm));
        }
        in_ch = out_ch;
    }
    proj_.init(cfg.audio_channels.back(), cfg.embed_dim, rng);
}

std::shared_ptr<AudioEncoder::Trace> AudioEncoder::forward(const Tensor& mel) const {
    if (mel.shape.size() != 3 || mel.shape[0] != 1 || mel.shape[1] != cfg_.n_mels ||
        mel.shape[2] < 1) {
        throw ContractError("audio encoder expects a 1x" + std::to_string(cfg_.n_mels) +
                            "xT log-mel input");
    }
    auto trace = std::make_shared<Trace>();
    const size_t n = convs_.size();
    trace->conv.resize(n);
    trace->norm.resize(norms_.size());
    trace->relu.resize(n);
    Tensor x = mel;
    for (size_t i = 0; i < n; ++i) {
        x = convs_[i].forward(x, &trace->conv[i]);
        if (i < norms_.size()) x = norms_[i].forward(x, &trace->norm[i]);
        x = relu_.forward(x, &trace->relu[i]);
    }
    Tensor pooled = gap_.forward(x, &trace->gap);
    Tensor proj = proj_.forward(pooled, &trace->proj);
    Tensor emb = l2_.forward(proj, &trace->l2);
    trace->embedding = emb.v;
    return trace;
}

Embedding AudioEncoder::encode(const Tensor& mel) const {
    return to_embedding(forward(mel)->embedding);
}

void AudioEncoder::backward(Trace& trace, const std::vector<double>& d_embedding,
                            GradSink* sink, const std::string& prefix) const {
    Tensor de({cfg_.embed_dim});
    de.v = d_embedding;
    Tensor dp = l2_.backward(de, trace.l2);
    Tensor dpool = proj_.backward(dp, trace.proj, sink, prefix + ".proj");
    Tensor d = gap_.backward(dpool, trace.gap);
    for (int i = static_cast<int>(convs_.size()) - 1; i >= 0; --i) {
        const std::string block = prefix + ".block" + std::to_string(i + 1);
        d = relu_.backward(d, trace.relu[i]);
        if (i < static_cast<int>(norms_.size())) {
            d = norms_[i].backward(d, trace.norm[i], sink, block + ".norm");
        }
        d = convs_[i].backward(d, trace.conv[i], sink, block + ".conv");
    }
}

void AudioEncoder::visit_params(const std::function<void(const std::string&, Tensor*)>& fn) {
    for (size_t i = 0; i < convs_.size(); ++i) {
        const std::string block = "block" + std::to_string(i + 1);
        fn(block + ".conv.w", &convs_[i].w);
        fn(block + ".conv.b", &convs_[i].b);
        if (i < norms_.size()) {
            fn(block + ".norm.gamma", &norms_[i].gamma);
            fn(block + ".norm.beta", &norms_[i].beta);
        }
    }
    fn("proj.w", &proj_.w);
    fn("proj.b", &proj_.b);
}

void AudioEncoder::visit_params(
    const std::function<void(const std::string&, const Tensor*)>& fn) const {
    const_cast<AudioEncoder*>(this)->visit_params(
        [&fn](const std::string& name, Tensor* t) { fn(name, t); });
}

// ------------------------------------------------------- capture plumbing

void backward_capture(CaptureSession& session, const CaptureObjective& objective) {
    if (!session.impl) {
        throw ContractError("backward_capture: no forward pass recorded in this session");
    }
    if (session.impl->consumed) {
        throw ContractError("backward_capture: session already consumed");
    }
    session.impl->consumed = true;

    const std::vector<double>* d_emb =
        objective.d_embedding.empty() ? nullptr : &objective.d_embedding;
    if (d_emb && static_cast<int>(d_emb->size()) != session.embedding.dim) {
        throw ContractError("backward_capture: d_embedding has wrong dimension");
    }

    if (session.impl->conv_owner) {
        auto& trace = *session.impl->conv_trace;
        const Tensor acts = trace.captured;  // backward() overwrites with the gradient
        if (d_emb) {
            session.impl->conv_owner->backward(trace, d_emb, nullptr, nullptr, "img");
        } else {
            trace.captured = zeros_like(acts);
        }
        Tensor grad = trace.captured;
        if (!objective.d_activations.empty()) {
            if (objective.d_activations.size() != grad.v.size()) {
                throw ContractError("backward_capture: d_activations has wrong size");
            }
            for (size_t i = 0; i < grad.v.size(); ++i) grad.v[i] += objective.d_activations[i];
        }
        SpatialFeatureMap g = *session.activations;
        g.values = grad.v;
        session.gradients = std::move(g);
    } else if (session.impl->vit_owner) {
        auto& trace = *session.impl->vit_trace;
        AttentionStack grads;
        if (d_emb) {
            session.impl->vit_owner->backward(trace, d_emb, nullptr, "img", &grads);
        } else {
            grads = *session.attention;
            std::fill(grads.maps.begin(), grads.maps.end(), 0.0);
        }
        if (!objective.d_activations.empty()) {
            if (objective.d_activations.size() != grads.maps.size()) {
                throw ContractError("backward_capture: d_activations has wrong size");
            }
            for (size_t i = 0; i < grads.maps.size(); ++i) {
                grads.maps[i] += objective.d_activations[i];
            }
        }
        session.attention_gradients = std::move(grads);
    } else {
        throw ContractError("backward_capture: session has no owner encoder");
    }
    session.gradients_ready = true;
}

// ---------------------------------------------------------------- ToyModel

ToyModel ToyModel::init(const EncoderConfig& cfg) {
    validate_encoder_config(cfg);
    ToyModel model;
    model.cfg = cfg;
    Rng rng(cfg.seed);
    if (cfg.image_encoder == ImageEncoderKind::conv) {
        model.conv_image.emplace(cfg, rng);
    } else {
        model.vit_image.emplace(cfg, rng);
    }
    model.audio = AudioEncoder(cfg, rng);
    return model;
}

void ToyModel::visit_params(const std::function<void(const std::string&, Tensor*)>& fn) {
    const auto prefixed = [&fn](const std::string& prefix) {
        return [&fn, prefix](const std::string& name, Tensor* t) { fn(prefix + name, t); };
    };
    if (conv_image) conv_image->visit_params(prefixed("img."));
    if (vit_image) vit_image->visit_params(prefixed("img."));
    audio.visit_params(prefixed("aud."));
}

void ToyModel::visit_params(
    const std::function<void(const std::string&, const Tensor*)>& fn) const {
    const_cast<ToyModel*>(this)->visit_params(
        [&fn](const std::string& name, Tensor* t) { fn(name, t); });
}

}  // namespace vsl
