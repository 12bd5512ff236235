#include "nn/optim.hpp"

#include <cmath>

#include "util/errors.hpp"
#include "util/rng.hpp"

namespace coseq::nn {

void OptimConfig::validate() const {
    if (!(learning_rate > 0.0f)) throw ConfigError("OptimConfig: learning_rate must be > 0");
    if (!(beta1 > 0.0f && beta1 < 1.0f)) throw ConfigError("OptimConfig: beta1 outside (0,1)");
    if (!(beta2 > 0.0f && beta2 < 1.0f)) throw ConfigError("OptimConfig: beta2 outside (0,1)");
    if (!(eps > 0.0f)) throw ConfigError("OptimConfig: eps must be > 0");
    if (batch_size < 1) throw ConfigError("OptimConfig: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("OptimConfig: epochs must be >= 1");
}

void adam_step(std::vector<Param*>& params, const OptimConfig& cfg) {
    cfg.validate();
    for (Param* p : params) {
        if (!p->grad.all_finite()) {
            throw NumericError("adam_step: non-finite gradient in param '" + p->name + "'");
        }
        p->step_count += 1;
        double t = static_cast<double>(p->step_count);
        float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta1), t));
        float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta2), t));
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            float g = p->grad.data[i];
            float m = cfg.beta1 * p->adam_m.data[i] + (1.0f - cfg.beta1) * g;
            float v = cfg.beta2 * p->adam_v.data[i] + (1.0f - cfg.beta2) * g * g;
            p->adam_m.data[i] = m;
            p->adam_v.data[i] = v;
            float m_hat = m / bc1;
            float v_hat = v / bc2;
            p->value.data[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
        p->zero_grad();
    }
}

Tensor xavier_uniform(std::vector<int> shape, util::Rng& rng, float gain) {
    Tensor t(shape);
    int fan_in = shape.size() == 2 ? shape[0] : t.numel();
    int fan_out = shape.size() == 2 ? shape[1] : t.numel();
    float lim = gain * std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    for (auto& v : t.data) v = rng.uniform(-lim, lim);
    return t;
}

}  // namespace coseq::nn
