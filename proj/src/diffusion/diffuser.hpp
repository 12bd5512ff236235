#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "caption/captioner.hpp"
#include "embed/embedder.hpp"
#include "nn/autograd.hpp"
#include "nn/optim.hpp"
#include "nn/tensor.hpp"
#include "synth/corpus.hpp"
#include "util/image.hpp"
#include "util/rng.hpp"

namespace coseq::diffusion {

struct NoiseSchedule {
    int T = 50;
    std::vector<float> betas;       // beta_1..beta_T at [0..T-1]
    std::vector<float> alphas;      // 1 - beta
    std::vector<float> alpha_bars;  // cumulative products

    static NoiseSchedule linear(int T = 50, float beta_start = 1e-4f,
                                float beta_end = 0.02f);
    void validate() const;

    float beta(int t) const { return betas[static_cast<size_t>(t - 1)]; }
    float alpha(int t) const { return alphas[static_cast<size_t>(t - 1)]; }
    float alpha_bar(int t) const { return alpha_bars[static_cast<size_t>(t - 1)]; }

    /// z_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, flattened.
    nn::Tensor forward_noise(const nn::Tensor& x0, int t, const nn::Tensor& eps) const;
};

/// A partially denoised tensor tagged with where it came from.
struct Latent {
    int source_step = 0;  // 1-based step that produced it; 0 = fresh
    int iter = 0;         // denoising iteration at which it was recorded
    nn::Tensor x;         // [1, D]
};

struct DiffuserConfig {
    int T = 50;
    float beta_start = 1e-4f;
    float beta_end = 0.02f;
    int hidden = 128;
    int t_emb_dim = 32;
    int cond_dim = 64;  // must match the embedder output dim
    int image_width = 16;
    int image_height = 16;
    float guidance = 1.5f;     // classifier-free guidance scale
    float cond_dropout = 0.1f; // fraction of unconditional training rows
    nn::OptimConfig optim{.learning_rate = 1e-3f, .batch_size = 64, .epochs = 25};

    void validate() const;
    int data_dim() const { return image_width * image_height * 3; }
};

/// Conditioned noise predictor: MLP over [latent | t-embedding | condition]
/// with a FiLM scale/shift from the condition at each hidden layer, plus a
/// per-iteration gated skip of the latent itself (the optimal predictor has
/// a full-rank linear term in z that a narrow hidden layer cannot carry).
class Diffuser {
public:
    Diffuser() = default;
    void init(const DiffuserConfig& cfg, uint64_t seed);

    bool trained() const { return trained_; }
    const DiffuserConfig& config() const { return cfg_; }
    const NoiseSchedule& schedule() const { return schedule_; }

    /// eps_theta for a batch: z [m,D], t per row, cond [m,cond_dim]
    /// (zero rows mean unconditional).
    nn::Tensor predict_noise(const nn::Tensor& z, const std::vector<int>& ts,
                             const nn::Tensor& cond) const;

    struct TrainReport {
        float first_batch_loss = 0.0f;
        std::vector<float> epoch_losses;
    };
    TrainReport train(const synth::Corpus& corpus, const embed::Embedder& embedder,
                      std::ostream* log = nullptr);

    struct GenResult {
        util::Image image;            // clipped to [0,1]
        std::vector<Latent> recorded; // iterations start, start-1, ..., start-record_w
    };

    /// Full ancestral reverse process. `init` (when present) is installed as
    /// the latent at `start_iter` (default T); gaussian otherwise. `cond`
    /// null means unconditional sampling.
    GenResult generate(const nn::Tensor* cond, const nn::Tensor* init, int record_w,
                       util::Rng& rng, int source_step_tag = 0,
                       int start_iter = -1) const;

    void save(const std::string& path) const;
    void load(const std::string& path);
    std::vector<nn::Param*> parameters();

private:
    nn::Var forward(const nn::Var& z, const nn::Var& temb, const nn::Var& cond,
                    const std::vector<int>& ts, bool for_training) const;
    nn::Tensor t_embedding_rows(const std::vector<int>& ts) const;

    DiffuserConfig cfg_;
    NoiseSchedule schedule_;
    nn::Tensor t_table_;  // [T+1, t_emb_dim], row t = embedding of iteration t
    bool trained_ = false;

    nn::Param w1_, b1_, w2_, b2_, w3_, b3_;
    nn::Param g1_w_, g1_b_, s1_w_, s1_b_;  // FiLM layer 1
    nn::Param g2_w_, g2_b_, s2_w_, s2_b_;  // FiLM layer 2
    nn::Param t_gate_;      // per-iteration scalar gate on the latent skip path
    nn::Param t_out_gate_;  // per-iteration scale of the MLP correction
};

/// Eq.-6 candidate set: the first w+1 recorded latents of every prior step,
/// ordered by (source step ascending, iteration descending).
std::vector<Latent> candidate_latents(
    const std::vector<std::vector<Latent>>& recordings_per_step, int w);

}  // namespace coseq::diffusion
