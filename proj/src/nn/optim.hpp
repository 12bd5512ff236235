#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nn/tensor.hpp"

namespace coseq::util {
class Rng;
}

namespace coseq::nn {

/// Trainable tensor with its gradient and Adam moment buffers.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
    int64_t step_count = 0;

    Param() = default;
    Param(std::string n, Tensor v)
        : name(std::move(n)),
          value(std::move(v)),
          grad(Tensor::zeros(value.shape)),
          adam_m(Tensor::zeros(value.shape)),
          adam_v(Tensor::zeros(value.shape)) {}

    void zero_grad() {
        for (auto& g : grad.data) g = 0.0f;
    }
};

struct OptimConfig {
    float learning_rate = 0.01f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    int batch_size = 500;
    int epochs = 10;
    uint64_t seed = 1;

    void validate() const;
};

/// Bias-corrected Adam update over all params; zeroes grads afterwards.
/// A non-finite gradient aborts with a diagnostic naming the param.
void adam_step(std::vector<Param*>& params, const OptimConfig& cfg);

// init helpers
Tensor xavier_uniform(std::vector<int> shape, util::Rng& rng, float gain = 1.0f);

}  // namespace coseq::nn
