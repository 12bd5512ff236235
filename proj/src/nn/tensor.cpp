#include "nn/tensor.hpp"

#include <cmath>
#include <sstream>

#include "util/errors.hpp"

namespace coseq::nn {

static size_t product(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw DimensionError("Tensor: non-positive dimension");
        n *= static_cast<size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)), data(product(shape), 0.0f) {}

Tensor::Tensor(std::vector<int> s, std::vector<float> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != product(shape)) {
        throw DimensionError("Tensor: data length does not match shape " + shape_str());
    }
}

Tensor Tensor::full(std::vector<int> s, float v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
}

Tensor Tensor::row(std::vector<float> d) {
    int n = static_cast<int>(d.size());
    return Tensor({1, n}, std::move(d));
}

Tensor Tensor::vec(std::vector<float> d) {
    int n = static_cast<int>(d.size());
    return Tensor({n}, std::move(d));
}

int Tensor::numel() const { return static_cast<int>(data.size()); }

int Tensor::rows() const {
    if (shape.size() == 1) return 1;
    if (shape.size() == 2) return shape[0];
    throw DimensionError("Tensor: rows() on rank-" + std::to_string(shape.size()));
}

int Tensor::cols() const {
    if (shape.size() == 1) return shape[0];
    if (shape.size() == 2) return shape[1];
    throw DimensionError("Tensor: cols() on rank-" + std::to_string(shape.size()));
}

bool Tensor::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor transpose(const Tensor& a) {
    int m = a.rows(), n = a.cols();
    Tensor out({n, m});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out.data[static_cast<size_t>(j) * m + i] = a.data[static_cast<size_t>(i) * n + j];
        }
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    int m = a.rows(), k = a.cols();
    int k2 = b.rows(), n = b.cols();
    if (k != k2) {
        throw DimensionError("matmul: inner dims differ " + a.shape_str() + " x " +
                             b.shape_str());
    }
    Tensor out({m, n});
    const float* A = a.data.data();
    const float* B = b.data.data();
    float* C = out.data.data();
    for (int i = 0; i < m; ++i) {
        const float* arow = A + static_cast<size_t>(i) * k;
        float* crow = C + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            float av = arow[p];
            if (av == 0.0f) continue;
            const float* brow = B + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return out;
}

}  // namespace coseq::nn
