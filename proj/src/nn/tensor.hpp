#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace coseq::nn {

/// Dense float32 tensor, row-major. Rank 1 and 2 cover everything here.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);
    Tensor(std::vector<int> s, std::vector<float> d);

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, float v);
    static Tensor row(std::vector<float> d);  // shape [1, n]
    static Tensor vec(std::vector<float> d);  // shape [n]

    int numel() const;
    int rank() const { return static_cast<int>(shape.size()); }

    // 2-D accessors; a rank-1 tensor behaves as a single row.
    int rows() const;
    int cols() const;
    float& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    float at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
    std::string shape_str() const;
};

Tensor transpose(const Tensor& a);

/// C = A x B with float accumulation, deterministic ikj order.
Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace coseq::nn
