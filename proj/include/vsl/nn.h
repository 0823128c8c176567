#pragma once

#include <map>
#include <string>
#include <vector>

#include "vsl/rng.h"
#include "vsl/tensor.h"

// Small layer zoo with explicit forward/backward. Weights live in the layer,
// per-call state lives in Cache objects owned by the caller, and parameter
// gradients go to a GradSink keyed by parameter name. Passing a null sink
// skips parameter gradients, which keeps concurrent inference passes over
// shared weights free of write traffic.

namespace vsl {

class GradSink {
public:
    // Accumulator for a named parameter, zero-initialized on first use.
    Tensor* slot(const std::string& name, const std::vector<int>& shape);

    std::map<std::string, Tensor> grads;
};

struct Conv2d {
    int in_ch = 0, out_ch = 0, k = 3, stride = 1, pad = 1;
    Tensor w, b;  // [oc,ic,k,k], [oc]

    struct Cache {
        Tensor x;
        int oh = 0, ow = 0;
    };

    void init(int in_channels, int out_channels, int ksize, int stride_, int pad_, Rng& rng);
    Tensor forward(const Tensor& x, Cache* c) const;
    Tensor backward(const Tensor& dy, const Cache& c, GradSink* sink,
                    const std::string& prefix) const;
};

// Per-channel normalization over the spatial extent of a single sample.
struct InstanceNorm {
    int channels = 0;
    double eps = 1e-5;
    Tensor gamma, beta;

    struct Cache {
        Tensor xhat;
        std::vector<double> inv_std;
    };

    void init(int ch);
    Tensor forward(const Tensor& x, Cache* c) const;
    Tensor backward(const Tensor& dy, const Cache& c, GradSink* sink,
                    const std::string& prefix) const;
};

struct Relu {
    struct Cache {
        Tensor x;
    };
    Tensor forward(const Tensor& x, Cache* c) const;
    Tensor backward(const Tensor& dy, const Cache& c) const;
};

// y = W x + b on a flat vector.
struct Linear {
    int in_dim = 0, out_dim = 0;
    Tensor w, b;  // [out,in], [out]

    struct Cache {
        Tensor x;
    };

    void init(int in, int out, Rng& rng);
    Tensor forward(const Tensor& x, Cache* c) const;
    Tensor backward(const Tensor& dy, const Cache& c, GradSink* sink,
                    const std::string& prefix) const;
};

// Y[T,out] = X[T,in] W^T + b, applied per token row.
struct TokenLinear {
    int in_dim = 0, out_dim = 0;
    Tensor w, b;  // [out,in], [out]

    struct Cache {
        Tensor x;
    };

    void init(int in, int out, Rng& rng);
    Tensor forward(const Tensor& x, Cache* c) const;
    Tensor backward(const Tensor& dy, const Cache& c, GradSink* sink,
                    const std::string& prefix) const;
};

// Per-row normalization over the feature dimension.
struct LayerNorm {
    int dim = 0;
    double eps = 1e-5;
    Tensor gamma, beta;

    struct Cache {
        Tensor xhat;
        std::vector<double> inv_std;
    };

    void init(int d);
    Tensor forward(const Tensor& x, Cache* c) const;
    Tensor backward(const Tensor& dy, const Cache& c, GradSink* sink,
                    const std::string& prefix) const;
};

struct Gelu {
    struct Cache {
        Tensor x;
    };
    Tensor forward(const Tensor& x, Cache* c) const;
    Tensor backward(const Tensor& dy, const Cache& c) const;
};

// CHW -> C mean pool.
struct GlobalAvgPool {
    struct Cache {
        int h = 0, w = 0;
    };
    Tensor forward(const Tensor& x, Cache* c) const;
    Tensor backward(const Tensor& dy, const Cache& c) const;
};

// x / ||x||2; the zero vector maps to itself.
struct L2Normalize {
    double eps = 1e-12;
    struct Cache {
        Tensor y;
        double norm = 0.0;
    };
    Tensor forward(const Tensor& x, Cache* c) const;
    Tensor backward(const Tensor& dy, const Cache& c) const;
};

struct MultiHeadSelfAttention {
    int dim = 0, heads = 0;
    Tensor w_qkv, b_qkv;  // [3*dim, dim], [3*dim]
    Tensor w_out, b_out;  // [dim, dim], [dim]

    struct Cache {
        Tensor x;          // [T, dim]
        Tensor q, k, v;    // [heads, T, dh]
        Tensor attn;       // [heads, T, T] row-stochastic probabilities
        Tensor heads_out;  // [T, dim], concatenated head outputs pre-projection
        bool overridden = false;
    };

    void init(int d, int n_heads, Rng& rng);
    // attn_override, when given, replaces the softmax probabilities (shape
    // [heads, T, T]); used by finite-difference probes of the attention maps.
    Tensor forward(const Tensor& x, Cache* c, const Tensor* attn_override = nullptr) const;
    // d_attn, when non-null, receives d(objective)/d(attention probabilities).
    Tensor backward(const Tensor& dy, const Cache& c, GradSink* sink,
                    const std::string& prefix, Tensor* d_attn = nullptr) const;
};

}  // namespace vsl
