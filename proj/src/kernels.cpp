#include "vsl/kernels.h"

#include <cmath>

namespace vsl::kern {

void matmul(const double* a, const double* b, double* c, int rows, int inner, int cols) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        const double* ai = a + static_cast<int64_t>(i) * inner;
        double* ci = c + static_cast<int64_t>(i) * cols;
        for (int j = 0; j < cols; ++j) {
            double acc = 0.0;
            for (int t = 0; t < inner; ++t) {
                acc += ai[t] * b[static_cast<int64_t>(t) * cols + j];
            }
            ci[j] = acc;
        }
    }
}

void conv2d_forward(const double* in, int ic, int ih, int iw,
                    const double* w, const double* bias,
                    int oc, int k, int stride, int pad,
                    double* out, int oh, int ow) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int o = 0; o < oc; ++o) {
        for (int oy = 0; oy < oh; ++oy) {
            const int base_y = oy * stride - pad;
            int ky_lo = base_y < 0 ? -base_y : 0;
            int ky_hi = k;
            if (base_y + ky_hi > ih) ky_hi = ih - base_y;
            for (int ox = 0; ox < ow; ++ox) {
                const int base_x = ox * stride - pad;
                int kx_lo = base_x < 0 ? -base_x : 0;
                int kx_hi = k;
                if (base_x + kx_hi > iw) kx_hi = iw - base_x;
                double acc = bias ? bias[o] : 0.0;
                for (int c = 0; c < ic; ++c) {
                    const double* inp = in + (static_cast<int64_t>(c) * ih + base_y) * iw + base_x;
                    const double* wp = w + ((static_cast<int64_t>(o) * ic + c) * k) * k;
                    for (int ky = ky_lo; ky < ky_hi; ++ky) {
                        const double* row = inp + static_cast<int64_t>(ky) * iw;
                        const double* wr = wp + static_cast<int64_t>(ky) * k;
                        for (int kx = kx_lo; kx < kx_hi; ++kx) {
                            acc += wr[kx] * row[kx];
                        }
                    }
                }
                out[(static_cast<int64_t>(o) * oh + oy) * ow + ox] = acc;
            }
        }
    }
}

void conv2d_backward_input(const double* d_out, int oc, int oh, int ow,
                           const double* w, int ic, int k, int stride, int pad,
                           double* d_in, int ih, int iw) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int c = 0; c < ic; ++c) {
        for (int iy = 0; iy < ih; ++iy) {
            // taps (ky, oy) contributing to this input row
            int kys[32], oys[32];
            int n_ky = 0;
            for (int ky = 0; ky < k; ++ky) {
                const int ty = iy + pad - ky;
                if (ty < 0 || ty % stride != 0) continue;
                const int oy = ty / stride;
                if (oy >= oh) continue;
                kys[n_ky] = ky;
                oys[n_ky] = oy;
                ++n_ky;
            }
            for (int ix = 0; ix < iw; ++ix) {
                int kxs[32], oxs[32];
                int n_kx = 0;
                for (int kx = 0; kx < k; ++kx) {
                    const int tx = ix + pad - kx;
                    if (tx < 0 || tx % stride != 0) continue;
                    const int ox = tx / stride;
                    if (ox >= ow) continue;
                    kxs[n_kx] = kx;
                    oxs[n_kx] = ox;
                    ++n_kx;
                }
                double acc = 0.0;
                for (int o = 0; o < oc; ++o) {
                    const double* wp = w + ((static_cast<int64_t>(o) * ic + c) * k) * k;
                    const double* dp = d_out + static_cast<int64_t>(o) * oh * ow;
                    for (int a = 0; a < n_ky; ++a) {
                        const double* wr = wp + static_cast<int64_t>(kys[a]) * k;
                        const double* dr = dp + static_cast<int64_t>(oys[a]) * ow;
                        for (int b = 0; b < n_kx; ++b) {
                            acc += wr[kxs[b]] * dr[oxs[b]];
                        }
                    }
                }
                d_in[(static_cast<int64_t>(c) * ih + iy) * iw + ix] = acc;
            }
        }
    }
}

void conv2d_backward_params(const double* d_out, int oc, int oh, int ow,
                            const double* in, int ic, int ih, int iw,
                            int k, int stride, int pad,
                            double* d_w, double* d_bias) {
    if (d_w) {
#pragma omp parallel for collapse(2) schedule(static)
        for (int o = 0; o < oc; ++o) {
            for (int c = 0; c < ic; ++c) {
                for (int ky = 0; ky < k; ++ky) {
                    int oy_lo = 0;
                    while (oy_lo < oh && oy_lo * stride - pad + ky < 0) ++oy_lo;
                    int oy_hi = oh;
                    while (oy_hi > oy_lo && (oy_hi - 1) * stride - pad + ky >= ih) --oy_hi;
                    for (int kx = 0; kx < k; ++kx) {
                        int ox_lo = 0;
                        while (ox_lo < ow && ox_lo * stride - pad + kx < 0) ++ox_lo;
                        int ox_hi = ow;
                        while (ox_hi > ox_lo && (ox_hi - 1) * stride - pad + kx >= iw) --ox_hi;
                        double acc = 0.0;
                        for (int oy = oy_lo; oy < oy_hi; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            const double* dr = d_out + (static_cast<int64_t>(o) * oh + oy) * ow;
                            const double* ir = in + (static_cast<int64_t>(c) * ih + iy) * iw - pad + kx;
                            for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                acc += dr[ox] * ir[static_cast<int64_t>(ox) * stride];
                            }
                        }
                        d_w[((static_cast<int64_t>(o) * ic + c) * k + ky) * k + kx] += acc;
                    }
                }
            }
        }
    }
    if (d_bias) {
#pragma omp parallel for schedule(static)
        for (int o = 0; o < oc; ++o) {
            double acc = 0.0;
            const double* plane = d_out + static_cast<int64_t>(o) * oh * ow;
            for (int64_t i = 0; i < static_cast<int64_t>(oh) * ow; ++i) acc += plane[i];
            d_bias[o] += acc;
        }
    }
}

void bilinear_resize(const double* in, int ih, int iw, double* out, int oh, int ow) {
    const double sy = oh > 1 ? static_cast<double>(ih - 1) / (oh - 1) : 0.0;
    const double sx = ow > 1 ? static_cast<double>(iw - 1) / (ow - 1) : 0.0;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < oh; ++y) {
        const double fy = y * sy;
        int y0 = static_cast<int>(fy);
        if (y0 > ih - 2) y0 = ih - 2;
        if (y0 < 0) y0 = 0;
        const double wy = ih > 1 ? fy - y0 : 0.0;
        for (int x = 0; x < ow; ++x) {
            const double fx = x * sx;
            int x0 = static_cast<int>(fx);
            if (x0 > iw - 2) x0 = iw - 2;
            if (x0 < 0) x0 = 0;
            const double wx = iw > 1 ? fx - x0 : 0.0;
            const int x1 = iw > 1 ? x0 + 1 : x0;
            const int y1 = ih > 1 ? y0 + 1 : y0;
            const double v00 = in[static_cast<int64_t>(y0) * iw + x0];
            const double v01 = in[static_cast<int64_t>(y0) * iw + x1];
            const double v10 = in[static_cast<int64_t>(y1) * iw + x0];
            const double v11 = in[static_cast<int64_t>(y1) * iw + x1];
            out[static_cast<int64_t>(y) * ow + x] =
                (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                wy * ((1.0 - wx) * v10 + wx * v11);
        }
    }
}

void cosine_map(const double* feats, int ch, int gh, int gw,
                const double* emb, double* out) {
    constexpr double kEps = 1e-12;
    double emb_sq = 0.0;
    for (int c = 0; c < ch; ++c) emb_sq += emb[c] * emb[c];
    const double emb_norm = std::sqrt(emb_sq);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < gh; ++y) {
        for (int x = 0; x < gw; ++x) {
            double dot = 0.0, sq = 0.0;
            for (int c = 0; c < ch; ++c) {
                const double f = feats[(static_cast<int64_t>(c) * gh + y) * gw + x];
                dot += f * emb[c];
                sq += f * f;
            }
            const double norm = std::sqrt(sq);
            out[static_cast<int64_t>(y) * gw + x] =
                (norm < kEps || emb_norm < kEps) ? 0.0 : dot / (norm * emb_norm);
        }
    }
}

void box_coverage(const int32_t* boxes, int n_boxes, int width, int height, int32_t* out) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            int32_t groups = 0;
            for (int i = 0; i < n_boxes; ++i) {
                const int32_t* b = boxes + 5 * i;
                if (x < b[0] || x >= b[0] + b[2] || y < b[1] || y >= b[1] + b[3]) continue;
                // count the group once, attributed to its first covering box
                bool first = true;
                for (int j = 0; j < i; ++j) {
                    const int32_t* p = boxes + 5 * j;
                    if (p[4] == b[4] && x >= p[0] && x < p[0] + p[2] && y >= p[1] && y < p[1] + p[3]) {
                        first = false;
                        break;
                    }
                }
                if (first) ++groups;
            }
            out[static_cast<int64_t>(y) * width + x] = groups;
        }
    }
}

std::pair<int64_t, int64_t> mask_overlap(const uint8_t* a, const uint8_t* b, int64_t n) {
    int64_t inter = 0, uni = 0;
#pragma omp parallel for schedule(static) reduction(+ : inter, uni)
    for (int64_t i = 0; i < n; ++i) {
        const bool pa = a[i] != 0, pb = b[i] != 0;
        inter += (pa && pb) ? 1 : 0;
        uni += (pa || pb) ? 1 : 0;
    }
    return {inter, uni};
}

}  // namespace vsl::kern
