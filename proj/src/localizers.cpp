#include "vsl/localizers.h"

#include <cmath>

#include "vsl/audio.h"
#include "vsl/checkpoint.h"
#include "vsl/errors.h"
#include "vsl/image_io.h"
#include "vsl/kernels.h"
#include "vsl/manifest.h"
#include "vsl/metrics.h"

namespace vsl {

LocalizerKind localizer_kind_from_string(const std::string& name) {
    if (name == "cossim") return LocalizerKind::cossim_subpatch;
    if (name == "gradcam") return LocalizerKind::gradcam_embedding;
    if (name == "tmm") return LocalizerKind::transformer_mm;
    throw ConfigError("unknown localizer '" + name + "' (expected cossim|gradcam|tmm)");
}

Tensor cosine_similarity_map(const SpatialFeatureMap& feats, const Embedding& audio) {
    if (feats.channels != audio.dim) {
        throw ContractError("cosine_similarity_map: feature and embedding dims differ");
    }
    Tensor raw({feats.grid_h, feats.grid_w});
    kern::cosine_map(feats.values.data(), feats.channels, feats.grid_h, feats.grid_w,
                     audio.values.data(), raw.data());
    return raw;
}

Heatmap upsample_normalize(const Tensor& raw, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw ContractError("upsample_normalize: bad output dims");
    Tensor up({out_h, out_w});
    kern::bilinear_resize(raw.data(), raw.shape[0], raw.shape[1], up.data(), out_h, out_w);
    Heatmap h = make_heatmap(out_w, out_h);
    for (size_t i = 0; i < up.v.size(); ++i) h.values[i] = static_cast<float>(up.v[i]);
    return minmax_normalize(h);
}

Heatmap localize_cossim(const SpatialFeatureMap& feats, const Embedding& audio,
                        int out_w, int out_h) {
    if (out_w < feats.grid_w || out_h < feats.grid_h) {
        throw ContractError("localize_cossim: output dims below the feature grid");
    }
    return upsample_normalize(cosine_similarity_map(feats, audio), out_w, out_h);
}

// ----------------------------------------------------------------- gradcam

ConvEncoderGradCam::ConvEncoderGradCam(const ConvImageEncoder& enc, std::string target_layer)
    : enc_(&enc), layer_(std::move(target_layer)) {}

std::pair<Tensor, Embedding> ConvEncoderGradCam::forward_capture(const Tensor& image) {
    session_ = enc_->capture(image, layer_);
    const SpatialFeatureMap& acts = *session_.activations;
    Tensor t({acts.channels, acts.grid_h, acts.grid_w});
    t.v = acts.values;
    return {std::move(t), session_.embedding};
}

Tensor ConvEncoderGradCam::backward_to_capture(const std::vector<double>& d_embedding) {
    CaptureObjective objective;
    objective.d_embedding = d_embedding;
    backward_capture(session_, objective);
    const SpatialFeatureMap& g = *session_.gradients;
    Tensor t({g.channels, g.grid_h, g.grid_w});
    t.v = g.values;
    return t;
}

std::pair<std::vector<double>, Tensor> gradcam_combine(const Tensor& acts,
                                                       const Tensor& grads) {
    if (acts.shape != grads.shape) {
        throw ContractError("gradcam_combine: activation/gradient shape mismatch");
    }
    const int ch = acts.shape[0], h = acts.shape[1], w = acts.shape[2];
    const int64_t hw = static_cast<int64_t>(h) * w;
    std::vector<double> alpha(ch, 0.0);
    for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        const double* gp = grads.data() + c * hw;
        for (int64_t i = 0; i < hw; ++i) acc += gp[i];
        alpha[c] = acc / static_cast<double>(hw);
    }
    Tensor raw({h, w});
    for (int64_t i = 0; i < hw; ++i) {
        double acc = 0.0;
        for (int c = 0; c < ch; ++c) acc += alpha[c] * acts.v[c * hw + i];
        raw.v[i] = acc > 0.0 ? acc : 0.0;
    }
    return {std::move(alpha), std::move(raw)};
}

Heatmap localize_gradcam(GradCamBackend& backend, const Tensor& image,
                         const Embedding& audio, int out_w, int out_h) {
    auto [acts, emb] = backend.forward_capture(image);
    if (emb.dim != audio.dim) {
        throw ContractError("localize_gradcam: audio/image embedding dims differ");
    }
    Tensor grads = backend.backward_to_capture(audio.values);
    auto [alpha, raw] = gradcam_combine(acts, grads);
    (void)alpha;
    return upsample_normalize(raw, out_w, out_h);
}

// ------------------------------------------------------------------- tmm

RelevancyMap transformer_relevancy(const AttentionStack& attn, const AttentionStack& grads) {
    if (attn.layers != grads.layers || attn.heads != grads.heads ||
        attn.tokens != grads.tokens || attn.maps.size() != grads.maps.size()) {
        throw ContractError("transformer_relevancy: attention/gradient shape mismatch");
    }
    const int t = attn.tokens;
    RelevancyMap rel;
    rel.tokens = t;
    rel.r.assign(static_cast<size_t>(t) * t, 0.0);
    for (int i = 0; i < t; ++i) rel.r[static_cast<size_t>(i) * t + i] = 1.0;

    Tensor abar({t, t});
    Tensor update({t, t});
    for (int l = 0; l < attn.layers; ++l) {
        for (int i = 0; i < t; ++i) {
            for (int j = 0; j < t; ++j) {
                double acc = 0.0;
                for (int h = 0; h < attn.heads; ++h) {
                    const double v = grads.at(l, h, i, j) * attn.at(l, h, i, j);
                    if (v > 0.0) acc += v;
                }
                abar.at2(i, j) = acc / attn.heads;
            }
        }
        kern::matmul(abar.data(), rel.r.data(), update.data(), t, t, t);
        for (size_t i = 0; i < rel.r.size(); ++i) rel.r[i] += update.v[i];
    }
    return rel;
}

Heatmap localize_transformer_mm(const AttentionStack& attn, const AttentionStack& grads,
                                int out_w, int out_h) {
    const RelevancyMap rel = transformer_relevancy(attn, grads);
    const int patches = rel.tokens - 1;
    const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(patches))));
    if (g * g != patches) {
        throw ContractError("localize_transformer_mm: patch count is not a square grid");
    }
    // class-token row over the patch tokens, normalized on the patch grid
    Heatmap grid = make_heatmap(g, g);
    for (int p = 0; p < patches; ++p) {
        grid.values[p] = static_cast<float>(rel.at(0, 1 + p));
    }
    grid = minmax_normalize(grid);
    Tensor raw({g, g});
    for (int p = 0; p < patches; ++p) raw.v[p] = grid.values[p];
    return upsample_normalize(raw, out_w, out_h);
}

// ------------------------------------------------------------ batch runner

int run_localizer(const LocalizeRun& run) {
    const ToyModel model = load_model(run.checkpoint);
    switch (run.kind) {
        case LocalizerKind::cossim_subpatch:
        case LocalizerKind::gradcam_embedding:
            if (!model.conv_image) {
                throw ConfigError("this localizer needs a conv image encoder checkpoint");
            }
            break;
        case LocalizerKind::transformer_mm:
            if (!model.vit_image) {
                throw ConfigError("the transformer localizer needs a vit checkpoint");
            }
            break;
    }
    const std::vector<ManifestRecord> manifest = load_manifest(run.manifest);
    for (const ManifestRecord& rec : manifest) {
        if (!rec.audio_ref) {
            throw ConfigError("localize: frame '" + rec.frame_id + "' has no audio reference");
        }
        if (rec.frame_id.find('/') != std::string::npos ||
            rec.frame_id.find('\\') != std::string::npos) {
            throw ValidationError("localize: frame id '" + rec.frame_id +
                                  "' is not a valid file stem");
        }
    }
    std::filesystem::create_directories(run.out_dir);

    const EncoderConfig& enc = model.cfg;
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < manifest.size(); ++i) {
        try {
            const ManifestRecord& rec = manifest[i];
            const Tensor image = resize_image(
                image_to_tensor(read_png(resolve_ref(run.manifest, rec.image_ref))),
                enc.image_size);
            const Waveform wave = read_wav(resolve_ref(run.manifest, *rec.audio_ref));
            const Embedding audio_emb = audio_encode(
                model.audio, enc, slice(wave, rec.audio_offset_s, rec.audio_len_s),
                rec.audio_len_s);

            Heatmap heatmap;
            switch (run.kind) {
                case LocalizerKind::cossim_subpatch: {
                    auto [feats, emb] = model.conv_image->encode(image);
                    (void)emb;
                    heatmap = localize_cossim(feats, audio_emb, rec.annotation.width,
                                              rec.annotation.height);
                    break;
                }
                case LocalizerKind::gradcam_embedding: {
                    ConvEncoderGradCam backend(*model.conv_image, run.target_layer);
                    heatmap = localize_gradcam(backend, image, audio_emb,
                                               rec.annotation.width, rec.annotation.height);
                    break;
                }
                case LocalizerKind::transformer_mm: {
                    CaptureSession session = model.vit_image->capture(image);
                    CaptureObjective objective;
                    objective.d_embedding = audio_emb.values;
                    backward_capture(session, objective);
                    heatmap = localize_transformer_mm(
                        *session.attention, *session.attention_gradients,
                        rec.annotation.width, rec.annotation.height);
                    break;
                }
            }
            write_heatmap(heatmap, run.out_dir / (rec.frame_id + ".hmp"));
        } catch (...) {
            // exceptions must not unwind out of the parallel region
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return static_cast<int>(manifest.size());
}

}  // namespace vsl
