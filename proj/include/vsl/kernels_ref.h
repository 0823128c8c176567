#pragma once

#include <cstdint>
#include <utility>

// Serial reference implementations of the kernels in kernels.h, kept for
// testing and benchmarking against the OpenMP versions. Same contracts.

namespace vsl::kernref {

void matmul(const double* a, const double* b, double* c, int rows, int inner, int cols);

void conv2d_forward(const double* in, int ic, int ih, int iw,
                    const double* w, const double* bias,
                    int oc, int k, int stride, int pad,
                    double* out, int oh, int ow);

void conv2d_backward_input(const double* d_out, int oc, int oh, int ow,
                           const double* w, int ic, int k, int stride, int pad,
                           double* d_in, int ih, int iw);

void conv2d_backward_params(const double* d_out, int oc, int oh, int ow,
                            const double* in, int ic, int ih, int iw,
                            int k, int stride, int pad,
                            double* d_w, double* d_bias);

void bilinear_resize(const double* in, int ih, int iw, double* out, int oh, int ow);

void cosine_map(const double* feats, int ch, int gh, int gw,
                const double* emb, double* out);

void box_coverage(const int32_t* boxes, int n_boxes, int width, int height, int32_t* out);

std::pair<int64_t, int64_t> mask_overlap(const uint8_t* a, const uint8_t* b, int64_t n);

}  // namespace vsl::kernref
