#include "nn/functional.hpp"

#include <algorithm>
#include <cmath>

#include "util/errors.hpp"

namespace coseq::nn {

Tensor softmax(const Tensor& v) {
    if (v.numel() == 0) throw DomainError("softmax: empty input");
    Tensor out = v;
    float mx = v.data[0];
    for (float x : v.data) mx = std::max(mx, x);
    double denom = 0.0;
    for (float x : v.data) denom += std::exp(static_cast<double>(x) - mx);
    for (size_t i = 0; i < v.data.size(); ++i) {
        out.data[i] = static_cast<float>(std::exp(static_cast<double>(v.data[i]) - mx) / denom);
    }
    return out;
}

float cross_entropy(const Tensor& probs, const Tensor& onehot) {
    if (!probs.same_shape(onehot)) throw DimensionError("cross_entropy: shape mismatch");
    int label = -1;
    for (int i = 0; i < onehot.numel(); ++i) {
        float v = onehot.data[static_cast<size_t>(i)];
        if (v == 1.0f) {
            if (label >= 0) throw DomainError("cross_entropy: more than one 1 in onehot");
            label = i;
        } else if (v != 0.0f) {
            throw DomainError("cross_entropy: onehot entries must be 0 or 1");
        }
    }
    if (label < 0) throw DomainError("cross_entropy: onehot has no 1");
    float p = std::max(probs.data[static_cast<size_t>(label)], 1e-12f);
    return -std::log(p);
}

float grad_check(const LossFn& f, const Tensor& x, float h) {
    Tensor analytic = Tensor::zeros(x.shape);
    f(x, &analytic);

    Tensor xt = x;
    float max_abs = 0.0f;
    float max_diff = 0.0f;
    for (int i = 0; i < x.numel(); ++i) {
        float orig = xt.data[static_cast<size_t>(i)];
        xt.data[static_cast<size_t>(i)] = orig + h;
        float fp = f(xt, nullptr);
        xt.data[static_cast<size_t>(i)] = orig - h;
        float fm = f(xt, nullptr);
        xt.data[static_cast<size_t>(i)] = orig;
        float numeric = (fp - fm) / (2.0f * h);
        float a = analytic.data[static_cast<size_t>(i)];
        max_abs = std::max({max_abs, std::fabs(a), std::fabs(numeric)});
        max_diff = std::max(max_diff, std::fabs(a - numeric));
    }
    return max_diff / std::max(max_abs, 1e-8f);
}

}  // namespace coseq::nn
