#pragma once

#include <cstdint>
#include <utility>

// Hot inner loops, parallelized with OpenMP. Every kernel assigns each output
// element to exactly one thread and keeps the per-element accumulation order
// fixed, so results are bit-identical for any thread count and match the
// serial reference in kernels_ref.h exactly.
//
// All 2D buffers are row-major. Convolutions use single-sample CHW layout.

namespace vsl::kern {

// c[rows x cols] = a[rows x inner] * b[inner x cols]
void matmul(const double* a, const double* b, double* c, int rows, int inner, int cols);

// out[oc][oh][ow]; weights w[oc][ic][k][k]; zero padding `pad`, square kernel.
void conv2d_forward(const double* in, int ic, int ih, int iw,
                    const double* w, const double* bias,
                    int oc, int k, int stride, int pad,
                    double* out, int oh, int ow);

// d_in[ic][ih][iw] from d_out[oc][oh][ow] (gather form). Kernel size <= 32.
void conv2d_backward_input(const double* d_out, int oc, int oh, int ow,
                           const double* w, int ic, int k, int stride, int pad,
                           double* d_in, int ih, int iw);

// Accumulates into d_w[oc][ic][k][k] and d_bias[oc] (either may be null).
void conv2d_backward_params(const double* d_out, int oc, int oh, int ow,
                            const double* in, int ic, int ih, int iw,
                            int k, int stride, int pad,
                            double* d_w, double* d_bias);

// Corner-aligned bilinear interpolation; identity when dims are unchanged.
void bilinear_resize(const double* in, int ih, int iw, double* out, int oh, int ow);

// out[gy][gx] = cosine(feats[:, gy, gx], emb); 0 when either norm is ~0.
void cosine_map(const double* feats, int ch, int gh, int gw,
                const double* emb, double* out);

// boxes: n entries of 5 ints {x, y, w, h, group}. out[y*width+x] = number of
// distinct groups with at least one box covering the pixel (half-open boxes).
void box_coverage(const int32_t* boxes, int n_boxes, int width, int height, int32_t* out);

// Pixel counts {intersection, union} of two equal-size 0/1 masks.
std::pair<int64_t, int64_t> mask_overlap(const uint8_t* a, const uint8_t* b, int64_t n);

}  // namespace vsl::kern
