#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace vsl {

// Dense row-major double tensor. Kernels work on the raw buffer; the shape is
// bookkeeping for the layers that wire them together.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(numel_of(shape)), 0.0);
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }
    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    bool empty() const { return v.empty(); }
    double* data() { return v.data(); }
    const double* data() const { return v.data(); }

    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    // 2D/3D element access for the non-kernel paths
    double& at2(int i, int j) { return v[static_cast<size_t>(i) * shape[1] + j]; }
    double at2(int i, int j) const { return v[static_cast<size_t>(i) * shape[1] + j]; }
    double& at3(int c, int y, int x) {
        return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    double at3(int c, int y, int x) const {
        return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

}  // namespace vsl
