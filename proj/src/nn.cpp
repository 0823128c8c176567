#include "vsl/nn.h"

#include <cmath>

#include "vsl/errors.h"
#include "vsl/kernels.h"

namespace vsl {

namespace {

Tensor transposed(const Tensor& m) {
    Tensor t({m.shape[1], m.shape[0]});
    for (int i = 0; i < m.shape[0]; ++i) {
        for (int j = 0; j < m.shape[1]; ++j) {
            t.at2(j, i) = m.at2(i, j);
        }
    }
    return t;
}

}  // namespace

Tensor* GradSink::slot(const std::string& name, const std::vector<int>& shape) {
    auto it = grads.find(name);
    if (it == grads.end()) {
        it = grads.emplace(name, Tensor(shape)).first;
    }
    return &it->second;
}

// ---------------------------------------------------------------- Conv2d

void Conv2d::init(int in_channels, int out_channels, int ksize, int stride_, int pad_, Rng& rng) {
    in_ch = in_channels;
    out_ch = out_channels;
    k = ksize;
    stride = stride_;
    pad = pad_;
    w = Tensor({out_ch, in_ch, k, k});
    b = Tensor({out_ch});
    const double scale = std::sqrt(2.0 / (in_ch * k * k));
    for (double& x : w.v) x = scale * rng.gaussian();
}

Tensor Conv2d::forward(const Tensor& x, Cache* c) const {
    const int ih = x.shape[1], iw = x.shape[2];
    const int oh = (ih + 2 * pad - k) / stride + 1;
    const int ow = (iw + 2 * pad - k) / stride + 1;
    Tensor y({out_ch, oh, ow});
    kern::conv2d_forward(x.data(), in_ch, ih, iw, w.data(), b.data(), out_ch, k, stride, pad,
                         y.data(), oh, ow);
    if (c) {
        c->x = x;
        c->oh = oh;
        c->ow = ow;
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& dy, const Cache& c, GradSink* sink,
                        const std::string& prefix) const {
    const int ih = c.x.shape[1], iw = c.x.shape[2];
    if (sink) {
        Tensor* gw = sink->slot(prefix + ".w", w.shape);
        Tensor* gb = sink->slot(prefix + ".b", b.shape);
        kern::conv2d_backward_params(dy.data(), out_ch, c.oh, c.ow, c.x.data(), in_ch, ih, iw, k,
                                     stride, pad, gw->data(), gb->data());
    }
    Tensor dx({in_ch, ih, iw});
    kern::conv2d_backward_input(dy.data(), out_ch, c.oh, c.ow, w.data(), in_ch, k, stride, pad,
                                dx.data(), ih, iw);
    return dx;
}

// ---------------------------------------------------------- InstanceNorm

void InstanceNorm::init(int ch) {
    channels = ch;
    gamma = Tensor({ch});
    beta = Tensor({ch});
    for (double& g : gamma.v) g = 1.0;
}

Tensor InstanceNorm::forward(const Tensor& x, Cache* c) const {
    const int h = x.shape[1], w_ = x.shape[2];
    const int64_t n = static_cast<int64_t>(h) * w_;
    Tensor y = zeros_like(x);
    Tensor xhat = zeros_like(x);
    std::vector<double> inv_std(channels);
    for (int ch = 0; ch < channels; ++ch) {
        const double* xp = x.data() + ch * n;
        double mean = 0.0;
        for (int64_t i = 0; i < n; ++i) mean += xp[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double d = xp[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std[ch] = istd;
        double* hp = xhat.data() + ch * n;
        double* yp = y.data() + ch * n;
        for (int64_t i = 0; i < n; ++i) {
            hp[i] = (xp[i] - mean) * istd;
            yp[i] = gamma.v[ch] * hp[i] + beta.v[ch];
        }
    }
    if (c) {
        c->xhat = std::move(xhat);
        c->inv_std = std::move(inv_std);
    }
    return y;
}

Tensor InstanceNorm::backward(const Tensor& dy, const Cache& c, GradSink* sink,
                              const std::string& prefix) const {
    const int h = dy.shape[1], w_ = dy.shape[2];
    const int64_t n = static_cast<int64_t>(h) * w_;
    Tensor dx = zeros_like(dy);
    Tensor* gg = sink ? sink->slot(prefix + ".gamma", gamma.shape) : nullptr;
    Tensor* gb = sink ? sink->slot(prefix + ".beta", beta.shape) : nullptr;
    for (int ch = 0; ch < channels; ++ch) {
        const double* dyp = dy.data() + ch * n;
        const double* hp = c.xhat.data() + ch * n;
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0, sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double dxhat = dyp[i] * gamma.v[ch];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * hp[i];
            sum_dy += dyp[i];
            sum_dy_xhat += dyp[i] * hp[i];
        }
        if (gg) gg->v[ch] += sum_dy_xhat;
        if (gb) gb->v[ch] += sum_dy;
        const double mean_dxhat = sum_dxhat / static_cast<double>(n);
        const double mean_dxhat_xhat = sum_dxhat_xhat / static_cast<double>(n);
        double* dxp = dx.data() + ch * n;
        for (int64_t i = 0; i < n; ++i) {
            const double dxhat = dyp[i] * gamma.v[ch];
            dxp[i] = c.inv_std[ch] * (dxhat - mean_dxhat - hp[i] * mean_dxhat_xhat);
        }
    }
    return dx;
}

// ------------------------------------------------------------------ Relu

Tensor Relu::forward(const Tensor& x, Cache* c) const {
    Tensor y = x;
    for (double& v : y.v) {
        if (v < 0.0) v = 0.0;
    }
    if (c) c->x = x;
    return y;
}

Tensor Relu::backward(const Tensor& dy, const Cache& c) const {
    Tensor dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i) {
        if (c.x.v[i] <= 0.0) dx.v[i] = 0.0;
    }
    return dx;
}

// ---------------------------------------------------------------- Linear

void Linear::init(int in, int out, Rng& rng) {
    in_dim = in;
    out_dim = out;
    w = Tensor({out, in});
    b = Tensor({out});
    const double scale = std::sqrt(1.0 / in);
    for (double& x : w.v) x = scale * rng.gaussian();
}

Tensor Linear::forward(const Tensor& x, Cache* c) const {
    Tensor y({out_dim});
    for (int o = 0; o < out_dim; ++o) {
        double acc = b.v[o];
        const double* wr = w.data() + static_cast<int64_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) acc += wr[i] * x.v[i];
        y.v[o] = acc;
    }
    if (c) c->x = x;
    return y;
}

Tensor Linear::backward(const Tensor& dy, const Cache& c, GradSink* sink,
                        const std::string& prefix) const {
    if (sink) {
        Tensor* gw = sink->slot(prefix + ".w", w.shape);
        Tensor* gb = sink->slot(prefix + ".b", b.shape);
        for (int o = 0; o < out_dim; ++o) {
            gb->v[o] += dy.v[o];
            double* gr = gw->data() + static_cast<int64_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) gr[i] += dy.v[o] * c.x.v[i];
        }
    }
    Tensor dx({in_dim});
    for (int i = 0; i < in_dim; ++i) {
        double acc = 0.0;
        for (int o = 0; o < out_dim; ++o) acc += w.at2(o, i) * dy.v[o];
        dx.v[i] = acc;
    }
    return dx;
}

// ----------------------------------------------------------- TokenLinear

void TokenLinear::init(int in, int out, Rng& rng) {
    in_dim = in;
    out_dim = out;
    w = Tensor({out, in});
    b = Tensor({out});
    const double scale = std::sqrt(1.0 / in);
    for (double& x : w.v) x = scale * rng.gaussian();
}

Tensor TokenLinear::forward(const Tensor& x, Cache* c) const {
    const int t = x.shape[0];
    Tensor wt = transposed(w);  // [in,out]
    Tensor y({t, out_dim});
    kern::matmul(x.data(), wt.data(), y.data(), t, in_dim, out_dim);
    for (int r = 0; r < t; ++r) {
        for (int o = 0; o < out_dim; ++o) y.at2(r, o) += b.v[o];
    }
    if (c) c->x = x;
    return y;
}

Tensor TokenLinear::backward(const Tensor& dy, const Cache& c, GradSink* sink,
                             const std::string& prefix) const {
    const int t = dy.shape[0];
    if (sink) {
        Tensor* gw = sink->slot(prefix + ".w", w.shape);
        Tensor* gb = sink->slot(prefix + ".b", b.shape);
        Tensor dyt = transposed(dy);  // [out,T]
        Tensor gw_add({out_dim, in_dim});
        kern::matmul(dyt.data(), c.x.data(), gw_add.data(), out_dim, t, in_dim);
        for (size_t i = 0; i < gw->v.size(); ++i) gw->v[i] += gw_add.v[i];
        for (int r = 0; r < t; ++r) {
            for (int o = 0; o < out_dim; ++o) gb->v[o] += dy.at2(r, o);
        }
    }
    Tensor dx({t, in_dim});
    kern::matmul(dy.data(), w.data(), dx.data(), t, out_dim, in_dim);
    return dx;
}

// ------------------------------------------------------------- LayerNorm

void LayerNorm::init(int d) {
    dim = d;
    gamma = Tensor({d});
    beta = Tensor({d});
    for (double& g : gamma.v) g = 1.0;
}

Tensor LayerNorm::forward(const Tensor& x, Cache* c) const {
    const int t = x.shape[0];
    Tensor y = zeros_like(x);
    Tensor xhat = zeros_like(x);
    std::vector<double> inv_std(t);
    for (int r = 0; r < t; ++r) {
        const double* xp = x.data() + static_cast<int64_t>(r) * dim;
        double mean = 0.0;
        for (int i = 0; i < dim; ++i) mean += xp[i];
        mean /= dim;
        double var = 0.0;
        for (int i = 0; i < dim; ++i) {
            const double d = xp[i] - mean;
            var += d * d;
        }
        var /= dim;
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std[r] = istd;
        double* hp = xhat.data() + static_cast<int64_t>(r) * dim;
        double* yp = y.data() + static_cast<int64_t>(r) * dim;
        for (int i = 0; i < dim; ++i) {
            hp[i] = (xp[i] - mean) * istd;
            yp[i] = gamma.v[i] * hp[i] + beta.v[i];
        }
    }
    if (c) {
        c->xhat = std::move(xhat);
        c->inv_std = std::move(inv_std);
    }
    return y;
}

Tensor LayerNorm::backward(const Tensor& dy, const Cache& c, GradSink* sink,
                           const std::string& prefix) const {
    const int t = dy.shape[0];
    Tensor dx = zeros_like(dy);
    Tensor* gg = sink ? sink->slot(prefix + ".gamma", gamma.shape) : nullptr;
    Tensor* gb = sink ? sink->slot(prefix + ".beta", beta.shape) : nullptr;
    for (int r = 0; r < t; ++r) {
        const double* dyp = dy.data() + static_cast<int64_t>(r) * dim;
        const double* hp = c.xhat.data() + static_cast<int64_t>(r) * dim;
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int i = 0; i < dim; ++i) {
            const double dxhat = dyp[i] * gamma.v[i];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * hp[i];
            if (gg) gg->v[i] += dyp[i] * hp[i];
            if (gb) gb->v[i] += dyp[i];
        }
        mean_dxhat /= dim;
        mean_dxhat_xhat /= dim;
        double* dxp = dx.data() + static_cast<int64_t>(r) * dim;
        for (int i = 0; i < dim; ++i) {
            const double dxhat = dyp[i] * gamma.v[i];
            dxp[i] = c.inv_std[r] * (dxhat - mean_dxhat - hp[i] * mean_dxhat_xhat);
        }
    }
    return dx;
}

// ------------------------------------------------------------------ Gelu

Tensor Gelu::forward(const Tensor& x, Cache* c) const {
    Tensor y = x;
    for (double& v : y.v) {
        v = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
    }
    if (c) c->x = x;
    return y;
}

Tensor Gelu::backward(const Tensor& dy, const Cache& c) const {
    Tensor dx = dy;
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (size_t i = 0; i < dx.v.size(); ++i) {
        const double x = c.x.v[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
        dx.v[i] = dy.v[i] * (cdf + x * pdf);
    }
    return dx;
}

// --------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x, Cache* c) const {
    const int ch = x.shape[0], h = x.shape[1], w = x.shape[2];
    const int64_t n = static_cast<int64_t>(h) * w;
    Tensor y({ch});
    for (int k = 0; k < ch; ++k) {
        double acc = 0.0;
        const double* xp = x.data() + k * n;
        for (int64_t i = 0; i < n; ++i) acc += xp[i];
        y.v[k] = acc / static_cast<double>(n);
    }
    if (c) {
        c->h = h;
        c->w = w;
    }
    return y;
}

Tensor GlobalAvgPool::backward(const Tensor& dy, const Cache& c) const {
    const int ch = dy.shape[0];
    const int64_t n = static_cast<int64_t>(c.h) * c.w;
    Tensor dx({ch, c.h, c.w});
    for (int k = 0; k < ch; ++k) {
        const double g = dy.v[k] / static_cast<double>(n);
        double* dxp = dx.data() + k * n;
        for (int64_t i = 0; i < n; ++i) dxp[i] = g;
    }
    return dx;
}

// ----------------------------------------------------------- L2Normalize

Tensor L2Normalize::forward(const Tensor& x, Cache* c) const {
    double sq = 0.0;
    for (double v : x.v) sq += v * v;
    const double norm = std::sqrt(sq);
    Tensor y = x;
    if (norm > eps) {
        for (double& v : y.v) v /= norm;
    } else {
        for (double& v : y.v) v = 0.0;
    }
    if (c) {
        c->y = y;
        c->norm = norm;
    }
    return y;
}

Tensor L2Normalize::backward(const Tensor& dy, const Cache& c) const {
    Tensor dx = dy;
    if (c.norm <= eps) {
        for (double& v : dx.v) v = 0.0;
        return dx;
    }
    double dot = 0.0;
    for (size_t i = 0; i < dy.v.size(); ++i) dot += dy.v[i] * c.y.v[i];
    for (size_t i = 0; i < dx.v.size(); ++i) {
        dx.v[i] = (dy.v[i] - dot * c.y.v[i]) / c.norm;
    }
    return dx;
}

// --------------------------------------------- MultiHeadSelfAttention

void MultiHeadSelfAttention::init(int d, int n_heads, Rng& rng) {
    if (d % n_heads != 0) throw ConfigError("attention dim must be divisible by heads");
    dim = d;
    heads = n_heads;
    w_qkv = Tensor({3 * d, d});
    b_qkv = Tensor({3 * d});
    w_out = Tensor({d, d});
    b_out = Tensor({d});
    const double scale = std::sqrt(1.0 / d);
    for (double& x : w_qkv.v) x = scale * rng.gaussian();
    for (double& x : w_out.v) x = scale * rng.gaussian();
}

Tensor MultiHeadSelfAttention::forward(const Tensor& x, Cache* c,
                                       const Tensor* attn_override) const {
    const int t = x.shape[0];
    const int dh = dim / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    // qkv projection: [T, 3*dim]
    Tensor wt = transposed(w_qkv);
    Tensor qkv({t, 3 * dim});
    kern::matmul(x.data(), wt.data(), qkv.data(), t, dim, 3 * dim);
    for (int r = 0; r < t; ++r) {
        for (int j = 0; j < 3 * dim; ++j) qkv.at2(r, j) += b_qkv.v[j];
    }

    Tensor q({heads, t, dh}), kk({heads, t, dh}), vv({heads, t, dh});
    for (int hd = 0; hd < heads; ++hd) {
        for (int r = 0; r < t; ++r) {
            for (int j = 0; j < dh; ++j) {
                q.at3(hd, r, j) = qkv.at2(r, hd * dh + j);
                kk.at3(hd, r, j) = qkv.at2(r, dim + hd * dh + j);
                vv.at3(hd, r, j) = qkv.at2(r, 2 * dim + hd * dh + j);
            }
        }
    }

    Tensor attn({heads, t, t});
    if (attn_override) {
        attn = *attn_override;
    } else {
        for (int hd = 0; hd < heads; ++hd) {
            const double* qp = q.data() + static_cast<int64_t>(hd) * t * dh;
            const double* kp = kk.data() + static_cast<int64_t>(hd) * t * dh;
            Tensor kt({dh, t});
            for (int r = 0; r < t; ++r) {
                for (int j = 0; j < dh; ++j) kt.at2(j, r) = kp[static_cast<int64_t>(r) * dh + j];
            }
            double* ap = attn.data() + static_cast<int64_t>(hd) * t * t;
            kern::matmul(qp, kt.data(), ap, t, dh, t);
            for (int r = 0; r < t; ++r) {
                double* row = ap + static_cast<int64_t>(r) * t;
                double mx = row[0] * inv_sqrt_dh;
                for (int j = 0; j < t; ++j) {
                    row[j] *= inv_sqrt_dh;
                    if (row[j] > mx) mx = row[j];
                }
                double sum = 0.0;
                for (int j = 0; j < t; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    sum += row[j];
                }
                for (int j = 0; j < t; ++j) row[j] /= sum;
            }
        }
    }

    // per-head output, concatenated back to [T, dim]
    Tensor heads_out({t, dim});
    for (int hd = 0; hd < heads; ++hd) {
        const double* ap = attn.data() + static_cast<int64_t>(hd) * t * t;
        const double* vp = vv.data() + static_cast<int64_t>(hd) * t * dh;
        Tensor o({t, dh});
        kern::matmul(ap, vp, o.data(), t, t, dh);
        for (int r = 0; r < t; ++r) {
            for (int j = 0; j < dh; ++j) heads_out.at2(r, hd * dh + j) = o.at2(r, j);
        }
    }

    Tensor wot = transposed(w_out);
    Tensor y({t, dim});
    kern::matmul(heads_out.data(), wot.data(), y.data(), t, dim, dim);
    for (int r = 0; r < t; ++r) {
        for (int j = 0; j < dim; ++j) y.at2(r, j) += b_out.v[j];
    }

    if (c) {
        c->x = x;
        c->q = std::move(q);
        c->k = std::move(kk);
        c->v = std::move(vv);
        c->attn = attn;
        c->heads_out = std::move(heads_out);
        c->overridden = attn_override != nullptr;
    }
    return y;
}

Tensor MultiHeadSelfAttention::backward(const Tensor& dy, const Cache& c, GradSink* sink,
                                        const std::string& prefix, Tensor* d_attn) const {
    if (c.overridden) {
        throw ContractError("attention backward is not defined for overridden probabilities");
    }
    const int t = dy.shape[0];
    const int dh = dim / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    // through the output projection
    if (sink) {
        Tensor* gw = sink->slot(prefix + ".w_out", w_out.shape);
        Tensor* gb = sink->slot(prefix + ".b_out", b_out.shape);
        Tensor dyt = transposed(dy);
        Tensor gw_add({dim, dim});
        kern::matmul(dyt.data(), c.heads_out.data(), gw_add.data(), dim, t, dim);
        for (size_t i = 0; i < gw->v.size(); ++i) gw->v[i] += gw_add.v[i];
        for (int r = 0; r < t; ++r) {
            for (int j = 0; j < dim; ++j) gb->v[j] += dy.at2(r, j);
        }
    }
    Tensor d_heads({t, dim});
    kern::matmul(dy.data(), w_out.data(), d_heads.data(), t, dim, dim);

    Tensor d_qkv({t, 3 * dim});
    if (d_attn) *d_attn = Tensor({heads, t, t});
    for (int hd = 0; hd < heads; ++hd) {
        const double* ap = c.attn.data() + static_cast<int64_t>(hd) * t * t;
        const double* vp = c.v.data() + static_cast<int64_t>(hd) * t * dh;
        const double* qp = c.q.data() + static_cast<int64_t>(hd) * t * dh;
        const double* kp = c.k.data() + static_cast<int64_t>(hd) * t * dh;

        Tensor do_h({t, dh});
        for (int r = 0; r < t; ++r) {
            for (int j = 0; j < dh; ++j) do_h.at2(r, j) = d_heads.at2(r, hd * dh + j);
        }

        // dA = dO V^T
        Tensor vt({dh, t});
        for (int r = 0; r < t; ++r) {
            for (int j = 0; j < dh; ++j) vt.at2(j, r) = vp[static_cast<int64_t>(r) * dh + j];
        }
        Tensor da({t, t});
        kern::matmul(do_h.data(), vt.data(), da.data(), t, dh, t);
        if (d_attn) {
            double* out = d_attn->data() + static_cast<int64_t>(hd) * t * t;
            for (int64_t i = 0; i < static_cast<int64_t>(t) * t; ++i) out[i] = da.v[i];
        }

        // dV = A^T dO
        Tensor at({t, t});
        for (int r = 0; r < t; ++r) {
            for (int j = 0; j < t; ++j) at.at2(j, r) = ap[static_cast<int64_t>(r) * t + j];
        }
        Tensor dv({t, dh});
        kern::matmul(at.data(), do_h.data(), dv.data(), t, t, dh);

        // softmax backward: dS_rj = A_rj (dA_rj - sum_j dA_rj A_rj)
        Tensor ds({t, t});
        for (int r = 0; r < t; ++r) {
            double dot = 0.0;
            for (int j = 0; j < t; ++j) dot += da.at2(r, j) * ap[static_cast<int64_t>(r) * t + j];
            for (int j = 0; j < t; ++j) {
                ds.at2(r, j) =
                    ap[static_cast<int64_t>(r) * t + j] * (da.at2(r, j) - dot) * inv_sqrt_dh;
            }
        }

        // dQ = dS K, dK = dS^T Q
        Tensor dq({t, dh});
        kern::matmul(ds.data(), kp, dq.data(), t, t, dh);
        Tensor dst = transposed(ds);
        Tensor dk({t, dh});
        kern::matmul(dst.data(), qp, dk.data(), t, t, dh);

        for (int r = 0; r < t; ++r) {
            for (int j = 0; j < dh; ++j) {
                d_qkv.at2(r, hd * dh + j) = dq.at2(r, j);
                d_qkv.at2(r, dim + hd * dh + j) = dk.at2(r, j);
                d_qkv.at2(r, 2 * dim + hd * dh + j) = dv.at2(r, j);
            }
        }
    }

    // through the qkv projection
    if (sink) {
        Tensor* gw = sink->slot(prefix + ".w_qkv", w_qkv.shape);
        Tensor* gb = sink->slot(prefix + ".b_qkv", b_qkv.shape);
        Tensor dt = transposed(d_qkv);
        Tensor gw_add({3 * dim, dim});
        kern::matmul(dt.data(), c.x.data(), gw_add.data(), 3 * dim, t, dim);
        for (size_t i = 0; i < gw->v.size(); ++i) gw->v[i] += gw_add.v[i];
        for (int r = 0; r < t; ++r) {
            for (int j = 0; j < 3 * dim; ++j) gb->v[j] += d_qkv.at2(r, j);
        }
    }
    Tensor dx({t, dim});
    kern::matmul(d_qkv.data(), w_qkv.data(), dx.data(), t, 3 * dim, dim);
    return dx;
}

}  // namespace vsl
