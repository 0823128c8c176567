#include "vsl/losses.h"

#include <cmath>

#include "vsl/audio.h"
#include "vsl/errors.h"
#include "vsl/image_io.h"

namespace vsl {

namespace {

constexpr double kNormEps = 1e-12;

void check_normalized(const std::vector<Embedding>& embs, const char* what) {
    for (const Embedding& e : embs) {
        double sq = 0.0;
        for (double v : e.values) sq += v * v;
        if (std::abs(std::sqrt(sq) - 1.0) > 1e-5) {
            throw ContractError(std::string("infonce: ") + what +
                                " embeddings must be L2-normalized");
        }
    }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void validate_loss_config(const LossConfig& cfg) {
    if (!(cfg.temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (!(cfg.neg_threshold < cfg.pos_threshold)) {
        throw ConfigError("neg_threshold must be below pos_threshold");
    }
    if (!(cfg.mask_sharpness > 0.0)) throw ConfigError("mask_sharpness must be positive");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

double infonce(const std::vector<Embedding>& audio, const std::vector<Embedding>& image,
               double temperature,
               std::vector<std::vector<double>>* d_audio,
               std::vector<std::vector<double>>* d_image) {
    if (audio.empty() || audio.size() != image.size()) {
        throw ContractError("infonce: need matched, non-empty embedding sets");
    }
    if (!(temperature > 0.0)) throw ConfigError("infonce: temperature must be positive");
    const int n = static_cast<int>(audio.size());
    const int d = audio[0].dim;
    for (const Embedding& e : audio) {
        if (e.dim != d) throw ContractError("infonce: inconsistent audio dims");
    }
    for (const Embedding& e : image) {
        if (e.dim != d) throw ContractError("infonce: inconsistent image dims");
    }
    check_normalized(audio, "audio");
    check_normalized(image, "image");

    std::vector<double> logits(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double dot = 0.0;
            for (int k = 0; k < d; ++k) dot += audio[i].values[k] * image[j].values[k];
            logits[static_cast<size_t>(i) * n + j] = dot / temperature;
        }
    }

    // row softmax (audio -> image) and column softmax (image -> audio)
    std::vector<double> p(logits.size()), q(logits.size());
    double loss_rows = 0.0, loss_cols = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = logits[static_cast<size_t>(i) * n];
        for (int j = 0; j < n; ++j) mx = std::max(mx, logits[static_cast<size_t>(i) * n + j]);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            p[static_cast<size_t>(i) * n + j] = std::exp(logits[static_cast<size_t>(i) * n + j] - mx);
            sum += p[static_cast<size_t>(i) * n + j];
        }
        for (int j = 0; j < n; ++j) p[static_cast<size_t>(i) * n + j] /= sum;
        loss_rows -= std::log(p[static_cast<size_t>(i) * n + i]);
    }
    for (int j = 0; j < n; ++j) {
        double mx = logits[j];
        for (int i = 0; i < n; ++i) mx = std::max(mx, logits[static_cast<size_t>(i) * n + j]);
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            q[static_cast<size_t>(i) * n + j] = std::exp(logits[static_cast<size_t>(i) * n + j] - mx);
            sum += q[static_cast<size_t>(i) * n + j];
        }
        for (int i = 0; i < n; ++i) q[static_cast<size_t>(i) * n + j] /= sum;
        loss_cols -= std::log(q[static_cast<size_t>(j) * n + j]);
    }
    const double loss = 0.5 * (loss_rows + loss_cols) / n;

    if (d_audio || d_image) {
        if (d_audio) d_audio->assign(n, std::vector<double>(d, 0.0));
        if (d_image) d_image->assign(n, std::vector<double>(d, 0.0));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const double delta = i == j ? 1.0 : 0.0;
                const double dl = (p[static_cast<size_t>(i) * n + j] - delta +
                                   q[static_cast<size_t>(i) * n + j] - delta) /
                                  (2.0 * n * temperature);
                if (d_audio) {
                    for (int k = 0; k < d; ++k) (*d_audio)[i][k] += dl * image[j].values[k];
                }
                if (d_image) {
                    for (int k = 0; k < d; ++k) (*d_image)[j][k] += dl * audio[i].values[k];
                }
            }
        }
    }
    return loss;
}

namespace {

// cosine between a unit vector u and a raw vector f, with the gradient
// d cos / d f = (u - cos * f_hat) / ||f||
double cosine_and_grad(const std::vector<double>& u, const double* f, int d,
                       std::vector<double>* grad) {
    double sq = 0.0, dot = 0.0;
    for (int k = 0; k < d; ++k) {
        sq += f[k] * f[k];
        dot += f[k] * u[k];
    }
    const double norm = std::sqrt(sq);
    if (norm < kNormEps) {
        if (grad) grad->assign(d, 0.0);
        return 0.0;
    }
    const double c = dot / norm;
    if (grad) {
        grad->resize(d);
        for (int k = 0; k < d; ++k) {
            (*grad)[k] = (u[k] - c * f[k] / norm) / norm;
        }
    }
    return c;
}

}  // namespace

double subpatch_contrastive(const Embedding& audio, const SpatialFeatureMap& feats,
                            const std::vector<const SpatialFeatureMap*>& negatives,
                            const LossConfig& cfg,
                            SpatialFeatureMap* d_feats,
                            std::vector<SpatialFeatureMap>* d_negatives,
                            std::vector<double>* d_audio) {
    validate_loss_config(cfg);
    const int d = audio.dim;
    if (feats.channels != d) {
        throw ContractError("subpatch_contrastive: feature and embedding dims differ");
    }
    for (const SpatialFeatureMap* neg : negatives) {
        if (neg->channels != d || neg->grid_h != feats.grid_h || neg->grid_w != feats.grid_w) {
            throw ContractError("subpatch_contrastive: negative map shape mismatch");
        }
    }
    const int hw = feats.grid_h * feats.grid_w;
    const double tau = cfg.temperature;
    const double kappa = cfg.mask_sharpness;

    double a_sq = 0.0;
    for (double v : audio.values) a_sq += v * v;
    const double a_norm = std::sqrt(a_sq);
    if (a_norm < kNormEps) throw ContractError("subpatch_contrastive: zero audio embedding");
    std::vector<double> u(d);
    for (int k = 0; k < d; ++k) u[k] = audio.values[k] / a_norm;

    // similarity map and tri-map masses over the positive image
    std::vector<double> s(hw), mp(hw), mn(hw);
    double sum_mp = 0.0, sum_mp_s = 0.0, sum_mn = 0.0, sum_mn_s = 0.0;
    for (int p = 0; p < hw; ++p) {
        std::vector<double> fp(d);
        for (int k = 0; k < d; ++k) fp[k] = feats.values[static_cast<size_t>(k) * hw + p];
        s[p] = cosine_and_grad(u, fp.data(), d, nullptr);
        mp[p] = sigmoid(kappa * (s[p] - cfg.pos_threshold));
        mn[p] = sigmoid(kappa * (cfg.neg_threshold - s[p]));
        sum_mp += mp[p];
        sum_mp_s += mp[p] * s[p];
        sum_mn += mn[p];
        sum_mn_s += mn[p] * s[p];
    }
    const double bp = sum_mp + kNormEps;
    const double bn = sum_mn + kNormEps;
    const double pos_response = sum_mp_s / bp;
    const double neg_response = sum_mn_s / bn;
    const double neg_mass = sum_mn / hw;

    // cross-sample negative responses
    std::vector<double> cross(negatives.size(), 0.0);
    std::vector<std::vector<double>> cross_s;  // per-negative per-patch similarity
    cross_s.resize(negatives.size());
    for (size_t k = 0; k < negatives.size(); ++k) {
        const SpatialFeatureMap& neg = *negatives[k];
        if (cfg.cross_negatives == CrossNegatives::patch_mean) {
            cross_s[k].resize(hw);
            double acc = 0.0;
            for (int p = 0; p < hw; ++p) {
                std::vector<double> fp(d);
                for (int j = 0; j < d; ++j) fp[j] = neg.values[static_cast<size_t>(j) * hw + p];
                cross_s[k][p] = cosine_and_grad(u, fp.data(), d, nullptr);
                acc += cross_s[k][p];
            }
            cross[k] = acc / hw;
        } else {
            std::vector<double> pooled(d, 0.0);
            for (int j = 0; j < d; ++j) {
                double acc = 0.0;
                for (int p = 0; p < hw; ++p) acc += neg.values[static_cast<size_t>(j) * hw + p];
                pooled[j] = acc / hw;
            }
            cross[k] = cosine_and_grad(u, pooled.data(), d, nullptr);
        }
    }

    // L = log(1 + neg_mass * e^{(Nh-P)/tau} + sum_k e^{(Nk-P)/tau})
    const double e_within = std::exp((neg_response - pos_response) / tau);
    const double ew = neg_mass * e_within;
    double sum_ek = 0.0;
    std::vector<double> ek(negatives.size());
    for (size_t k = 0; k < negatives.size(); ++k) {
        ek[k] = std::exp((cross[k] - pos_response) / tau);
        sum_ek += ek[k];
    }
    const double denom = 1.0 + ew + sum_ek;
    const double loss = std::log(denom);

    if (!d_feats && !d_negatives && !d_audio) return loss;

    const double dl_dp = -(ew + sum_ek) / (tau * denom);
    const double dl_dnh = ew / (tau * denom);
    const double dl_dwn = e_within / denom;

    if (d_audio) d_audio->assign(d, 0.0);
    if (d_feats) {
        d_feats->channels = d;
        d_feats->grid_h = feats.grid_h;
        d_feats->grid_w = feats.grid_w;
        d_feats->values.assign(feats.values.size(), 0.0);
    }

    // positive image patches
    std::vector<double> grad_f(d);
    for (int p = 0; p < hw; ++p) {
        const double dmp = kappa * mp[p] * (1.0 - mp[p]);
        const double dmn = -kappa * mn[p] * (1.0 - mn[p]);
        const double dp_ds = (mp[p] + dmp * s[p]) / bp - sum_mp_s * dmp / (bp * bp);
        const double dnh_ds = (mn[p] + dmn * s[p]) / bn - sum_mn_s * dmn / (bn * bn);
        const double dwn_ds = dmn / hw;
        const double dl_ds = dl_dp * dp_ds + dl_dnh * dnh_ds + dl_dwn * dwn_ds;
        if (dl_ds == 0.0) continue;

        std::vector<double> fp(d);
        for (int k = 0; k < d; ++k) fp[k] = feats.values[static_cast<size_t>(k) * hw + p];
        const double c = cosine_and_grad(u, fp.data(), d, &grad_f);
        if (d_feats) {
            for (int k = 0; k < d; ++k) {
                d_feats->values[static_cast<size_t>(k) * hw + p] += dl_ds * grad_f[k];
            }
        }
        if (d_audio) {
            // d cos / d a = (f_hat - c * u) / ||a||
            double f_sq = 0.0;
            for (int k = 0; k < d; ++k) f_sq += fp[k] * fp[k];
            const double f_norm = std::sqrt(f_sq);
            if (f_norm >= kNormEps) {
                for (int k = 0; k < d; ++k) {
                    (*d_audio)[k] += dl_ds * (fp[k] / f_norm - c * u[k]) / a_norm;
                }
            }
        }
    }

    // cross-sample negatives
    if (d_negatives) {
        d_negatives->assign(negatives.size(), SpatialFeatureMap{});
    }
    for (size_t k = 0; k < negatives.size(); ++k) {
        const double dl_dnk = ek[k] / (tau * denom);
        const SpatialFeatureMap& neg = *negatives[k];
        SpatialFeatureMap* dneg = d_negatives ? &(*d_negatives)[k] : nullptr;
        if (dneg) {
            dneg->channels = d;
            dneg->grid_h = neg.grid_h;
            dneg->grid_w = neg.grid_w;
            dneg->values.assign(neg.values.size(), 0.0);
        }
        if (cfg.cross_negatives == CrossNegatives::patch_mean) {
            for (int p = 0; p < hw; ++p) {
                std::vector<double> fp(d);
                for (int j = 0; j < d; ++j) fp[j] = neg.values[static_cast<size_t>(j) * hw + p];
                const double c = cosine_and_grad(u, fp.data(), d, &grad_f);
                const double scale = dl_dnk / hw;
                if (dneg) {
                    for (int j = 0; j < d; ++j) {
                        dneg->values[static_cast<size_t>(j) * hw + p] += scale * grad_f[j];
                    }
                }
                if (d_audio) {
                    double f_sq = 0.0;
                    for (int j = 0; j < d; ++j) f_sq += fp[j] * fp[j];
                    const double f_norm = std::sqrt(f_sq);
                    if (f_norm >= kNormEps) {
                        for (int j = 0; j < d; ++j) {
                            (*d_audio)[j] += scale * (fp[j] / f_norm - c * u[j]) / a_norm;
                        }
                    }
                }
            }
        } else {
            std::vector<double> pooled(d, 0.0);
            for (int j = 0; j < d; ++j) {
                double acc = 0.0;
                for (int p = 0; p < hw; ++p) acc += neg.values[static_cast<size_t>(j) * hw + p];
                pooled[j] = acc / hw;
            }
            const double c = cosine_and_grad(u, pooled.data(), d, &grad_f);
            if (dneg) {
                for (int j = 0; j < d; ++j) {
                    const double g = dl_dnk * grad_f[j] / hw;
                    for (int p = 0; p < hw; ++p) {
                        dneg->values[static_cast<size_t>(j) * hw + p] += g;
                    }
                }
            }
            if (d_audio) {
                double f_sq = 0.0;
                for (int j = 0; j < d; ++j) f_sq += pooled[j] * pooled[j];
                const double f_norm = std::sqrt(f_sq);
                if (f_norm >= kNormEps) {
                    for (int j = 0; j < d; ++j) {
                        (*d_audio)[j] += dl_dnk * (pooled[j] / f_norm - c * u[j]) / a_norm;
                    }
                }
            }
        }
    }
    return loss;
}

// ------------------------------------------------------------- train_toy

namespace {

struct Sample {
    Tensor image;
    Tensor mel;
};

std::vector<Sample> load_samples(const std::vector<ManifestRecord>& manifest,
                                 const std::filesystem::path& manifest_path,
                                 const EncoderConfig& enc) {
    std::vector<Sample> samples;
    samples.reserve(manifest.size());
    for (const ManifestRecord& rec : manifest) {
        if (!rec.audio_ref) {
            throw ConfigError("train_toy: frame '" + rec.frame_id + "' has no audio reference");
        }
        Sample s;
        const ImageRgb8 png = read_png(resolve_ref(manifest_path, rec.image_ref));
        s.image = resize_image(image_to_tensor(png), enc.image_size);
        const Waveform wave = read_wav(resolve_ref(manifest_path, *rec.audio_ref));
        s.mel = log_mel(slice(wave, rec.audio_offset_s, rec.audio_len_s), enc);
        samples.push_back(std::move(s));
    }
    return samples;
}

Embedding embedding_from(const std::vector<double>& values) {
    Embedding e;
    e.dim = static_cast<int>(values.size());
    e.values = values;
    e.l2_normalized = true;
    return e;
}

}  // namespace

ToyModel train_toy(const std::vector<ManifestRecord>& manifest,
                   const std::filesystem::path& manifest_path, const TrainConfig& cfg,
                   std::vector<EpochLog>* log) {
    validate_loss_config(cfg.loss_cfg);
    if (manifest.empty()) throw ContractError("train_toy: empty manifest");
    if (cfg.epochs < 0) throw ConfigError("train_toy: epochs must be >= 0");
    if (cfg.loss == LossKind::subpatch &&
        cfg.encoder.image_encoder != ImageEncoderKind::conv) {
        throw ConfigError("train_toy: the subpatch loss needs the conv image encoder");
    }

    EncoderConfig enc = cfg.encoder;
    enc.seed = cfg.seed;
    ToyModel model = ToyModel::init(enc);
    const std::vector<Sample> samples = load_samples(manifest, manifest_path, enc);
    const int n = static_cast<int>(samples.size());

    Rng shuffle_rng(cfg.seed ^ 0x5DEECE66Dull);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        int batches = 0;
        for (int start = 0; start < n; start += cfg.loss_cfg.batch_size) {
            const int end = std::min(n, start + cfg.loss_cfg.batch_size);
            const int b = end - start;

            std::vector<std::shared_ptr<AudioEncoder::Trace>> audio_traces(b);
            std::vector<std::shared_ptr<ConvImageEncoder::Trace>> conv_traces(b);
            std::vector<std::shared_ptr<VitImageEncoder::Trace>> vit_traces(b);
            std::vector<Embedding> audio_embs(b), image_embs(b);
            for (int i = 0; i < b; ++i) {
                const Sample& s = samples[order[start + i]];
                audio_traces[i] = model.audio.forward(s.mel);
                audio_embs[i] = embedding_from(audio_traces[i]->embedding);
                if (model.conv_image) {
                    conv_traces[i] = model.conv_image->forward(s.image);
                    image_embs[i] = embedding_from(conv_traces[i]->embedding);
                } else {
                    vit_traces[i] = model.vit_image->forward(s.image);
                    image_embs[i] = embedding_from(vit_traces[i]->embedding);
                }
            }

            GradSink sink;
            double batch_loss = 0.0;
            if (cfg.loss == LossKind::infonce) {
                std::vector<std::vector<double>> d_audio, d_image;
                batch_loss = infonce(audio_embs, image_embs, cfg.loss_cfg.temperature,
                                     &d_audio, &d_image);
                for (int i = 0; i < b; ++i) {
                    model.audio.backward(*audio_traces[i], d_audio[i], &sink, "aud");
                    if (model.conv_image) {
                        model.conv_image->backward(*conv_traces[i], &d_image[i], nullptr,
                                                   &sink, "img");
                    } else {
                        model.vit_image->backward(*vit_traces[i], &d_image[i], &sink, "img",
                                                  nullptr);
                    }
                }
            } else {
                // each sample is the positive once; the others are negatives
                std::vector<SpatialFeatureMap> feat_maps(b);
                for (int i = 0; i < b; ++i) {
                    const Tensor& m = conv_traces[i]->final_map;
                    feat_maps[i].channels = m.shape[0];
                    feat_maps[i].grid_h = m.shape[1];
                    feat_maps[i].grid_w = m.shape[2];
                    feat_maps[i].values = m.v;
                }
                std::vector<Tensor> d_maps(b);
                for (int i = 0; i < b; ++i) {
                    d_maps[i] = Tensor({feat_maps[i].channels, feat_maps[i].grid_h,
                                        feat_maps[i].grid_w});
                }
                for (int i = 0; i < b; ++i) {
                    std::vector<const SpatialFeatureMap*> negs;
                    std::vector<int> neg_idx;
                    for (int j = 0; j < b; ++j) {
                        if (j != i) {
                            negs.push_back(&feat_maps[j]);
                            neg_idx.push_back(j);
                        }
                    }
                    SpatialFeatureMap d_pos;
                    std::vector<SpatialFeatureMap> d_negs;
                    std::vector<double> d_aud;
                    const double li = subpatch_contrastive(audio_embs[i], feat_maps[i], negs,
                                                           cfg.loss_cfg, &d_pos, &d_negs,
                                                           &d_aud);
                    batch_loss += li / b;
                    const double inv_b = 1.0 / b;
                    for (size_t t = 0; t < d_pos.values.size(); ++t) {
                        d_maps[i].v[t] += d_pos.values[t] * inv_b;
                    }
                    for (size_t kk = 0; kk < neg_idx.size(); ++kk) {
                        for (size_t t = 0; t < d_negs[kk].values.size(); ++t) {
                            d_maps[neg_idx[kk]].v[t] += d_negs[kk].values[t] * inv_b;
                        }
                    }
                    for (double& g : d_aud) g *= inv_b;
                    model.audio.backward(*audio_traces[i], d_aud, &sink, "aud");
                }
                for (int i = 0; i < b; ++i) {
                    model.conv_image->backward(*conv_traces[i], nullptr, &d_maps[i], &sink,
                                               "img");
                }
            }

            // SGD step
            model.visit_params([&](const std::string& name, Tensor* param) {
                auto it = sink.grads.find(name);
                if (it == sink.grads.end()) return;
                for (size_t t = 0; t < param->v.size(); ++t) {
                    param->v[t] -= cfg.lr * it->second.v[t];
                }
            });
            epoch_loss += batch_loss;
            ++batches;
        }
        if (log) log->push_back({epoch, epoch_loss / batches});
    }
    return model;
}

}  // namespace vsl
