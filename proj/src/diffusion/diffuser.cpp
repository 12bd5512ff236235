#include "diffusion/diffuser.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "nn/autograd.hpp"
#include "nn/checkpoint.hpp"
#include "util/errors.hpp"

namespace coseq::diffusion {

NoiseSchedule NoiseSchedule::linear(int T, float beta_start, float beta_end) {
    if (T < 2) throw ConfigError("NoiseSchedule: T must be >= 2");
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<size_t>(T));
    s.alphas.resize(static_cast<size_t>(T));
    s.alpha_bars.resize(static_cast<size_t>(T));
    double bar = 1.0;
    for (int t = 0; t < T; ++t) {
        float beta = beta_start + (beta_end - beta_start) *
                                      (static_cast<float>(t) / static_cast<float>(T - 1));
        s.betas[static_cast<size_t>(t)] = beta;
        s.alphas[static_cast<size_t>(t)] = 1.0f - beta;
        bar *= static_cast<double>(1.0f - beta);
        s.alpha_bars[static_cast<size_t>(t)] = static_cast<float>(bar);
    }
    s.validate();
    return s;
}

void NoiseSchedule::validate() const {
    if (static_cast<int>(betas.size()) != T) throw ConfigError("NoiseSchedule: bad length");
    float prev_beta = 0.0f;
    float prev_bar = 1.0f;
    for (int t = 1; t <= T; ++t) {
        float b = beta(t);
        if (!(b > 0.0f && b < 1.0f)) throw ConfigError("NoiseSchedule: beta out of (0,1)");
        if (b < prev_beta) throw ConfigError("NoiseSchedule: betas must be non-decreasing");
        if (!(alpha_bar(t) < prev_bar)) {
            throw ConfigError("NoiseSchedule: alpha_bar must strictly decrease");
        }
        prev_beta = b;
        prev_bar = alpha_bar(t);
    }
}

nn::Tensor NoiseSchedule::forward_noise(const nn::Tensor& x0, int t,
                                        const nn::Tensor& eps) const {
    if (t < 1 || t > T) {
        throw DomainError("forward_noise: t=" + std::to_string(t) + " outside [1," +
                          std::to_string(T) + "]");
    }
    if (!x0.same_shape(eps)) throw DimensionError("forward_noise: eps shape mismatch");
    float a = std::sqrt(alpha_bar(t));
    float b = std::sqrt(1.0f - alpha_bar(t));
    nn::Tensor z = x0;
    for (size_t i = 0; i < z.data.size(); ++i) {
        z.data[i] = a * x0.data[i] + b * eps.data[i];
    }
    return z;
}

void DiffuserConfig::validate() const {
    if (T < 2) throw ConfigError("DiffuserConfig: T must be >= 2");
    if (!(beta_start > 0.0f && beta_end > beta_start && beta_end < 1.0f)) {
        throw ConfigError("DiffuserConfig: bad beta range");
    }
    if (hidden < 1 || t_emb_dim < 2 || cond_dim < 1) {
        throw ConfigError("DiffuserConfig: bad layer sizes");
    }
    if (t_emb_dim % 2 != 0) throw ConfigError("DiffuserConfig: t_emb_dim must be even");
    if (image_width < 4 || image_height < 4) throw ConfigError("DiffuserConfig: bad image size");
    if (!(guidance > 0.0f)) throw ConfigError("DiffuserConfig: guidance must be > 0");
    if (cond_dropout < 0.0f || cond_dropout > 1.0f) {
        throw ConfigError("DiffuserConfig: cond_dropout outside [0,1]");
    }
    optim.validate();
}

void Diffuser::init(const DiffuserConfig& cfg, uint64_t seed) {
    cfg.validate();
    cfg_ = cfg;
    schedule_ = NoiseSchedule::linear(cfg.T, cfg.beta_start, cfg.beta_end);
    trained_ = false;

    // sinusoidal iteration embedding, rows 0..T (row 0 unused)
    int ed = cfg.t_emb_dim;
    t_table_ = nn::Tensor({cfg.T + 1, ed});
    for (int t = 0; t <= cfg.T; ++t) {
        for (int i = 0; i < ed / 2; ++i) {
            double freq = std::pow(10000.0, -2.0 * i / ed);
            double a = t * freq;
            t_table_.data[static_cast<size_t>(t) * ed + static_cast<size_t>(2 * i)] =
                static_cast<float>(std::sin(a));
            t_table_.data[static_cast<size_t>(t) * ed + static_cast<size_t>(2 * i + 1)] =
                static_cast<float>(std::cos(a));
        }
    }

    int d = cfg.data_dim(), h = cfg.hidden, c = cfg.cond_dim;
    int in_dim = d + ed + c;
    util::Rng rng(util::derive_seed(seed, 0xD1FFull));
    w1_ = nn::Param("w1", nn::xavier_uniform({in_dim, h}, rng));
    b1_ = nn::Param("b1", nn::Tensor::zeros({1, h}));
    w2_ = nn::Param("w2", nn::xavier_uniform({h, h}, rng));
    b2_ = nn::Param("b2", nn::Tensor::zeros({1, h}));
    w3_ = nn::Param("w3", nn::xavier_uniform({h, d}, rng));
    b3_ = nn::Param("b3", nn::Tensor::zeros({1, d}));
    g1_w_ = nn::Param("g1_w", nn::xavier_uniform({c, h}, rng, 0.1f));
    g1_b_ = nn::Param("g1_b", nn::Tensor::zeros({1, h}));
    s1_w_ = nn::Param("s1_w", nn::xavier_uniform({c, h}, rng, 0.1f));
    s1_b_ = nn::Param("s1_b", nn::Tensor::zeros({1, h}));
    g2_w_ = nn::Param("g2_w", nn::xavier_uniform({c, h}, rng, 0.1f));
    g2_b_ = nn::Param("g2_b", nn::Tensor::zeros({1, h}));
    s2_w_ = nn::Param("s2_w", nn::xavier_uniform({c, h}, rng, 0.1f));
    s2_b_ = nn::Param("s2_b", nn::Tensor::zeros({1, h}));
    t_gate_ = nn::Param("t_gate", nn::Tensor::zeros({cfg.T + 1}));
    t_out_gate_ = nn::Param("t_out_gate", nn::Tensor::full({cfg.T + 1}, 1.0f));
}

std::vector<nn::Param*> Diffuser::parameters() {
    return {&w1_,   &b1_,   &w2_,   &b2_,   &w3_,   &b3_,   &g1_w_,
            &g1_b_, &s1_w_, &s1_b_, &g2_w_, &g2_b_, &s2_w_, &s2_b_, &t_gate_,
            &t_out_gate_};
}

nn::Tensor Diffuser::t_embedding_rows(const std::vector<int>& ts) const {
    int ed = cfg_.t_emb_dim;
    nn::Tensor out({static_cast<int>(ts.size()), ed});
    for (size_t i = 0; i < ts.size(); ++i) {
        int t = ts[i];
        if (t < 1 || t > cfg_.T) throw DomainError("t_embedding: iteration out of range");
        for (int j = 0; j < ed; ++j) {
            out.data[i * static_cast<size_t>(ed) + static_cast<size_t>(j)] =
                t_table_.data[static_cast<size_t>(t) * ed + static_cast<size_t>(j)];
        }
    }
    return out;
}

nn::Var Diffuser::forward(const nn::Var& z, const nn::Var& temb, const nn::Var& cond,
                          const std::vector<int>& ts, bool for_training) const {
    using namespace nn;
    auto* self = const_cast<Diffuser*>(this);
    auto p = [for_training](Param& prm) {
        return for_training ? from_param(prm) : constant(prm.value);
    };
    Var in = concat_cols({z, temb, cond});
    Var a1 = add_rowvec(matmul(in, p(self->w1_)), p(self->b1_));
    Var g1 = add_rowvec(matmul(cond, p(self->g1_w_)), p(self->g1_b_));
    Var s1 = add_rowvec(matmul(cond, p(self->s1_w_)), p(self->s1_b_));
    Var h1 = tanh_op(add(add(a1, mul(a1, g1)), s1));
    Var a2 = add_rowvec(matmul(h1, p(self->w2_)), p(self->b2_));
    Var g2 = add_rowvec(matmul(cond, p(self->g2_w_)), p(self->g2_b_));
    Var s2 = add_rowvec(matmul(cond, p(self->s2_w_)), p(self->s2_b_));
    Var h2 = tanh_op(add(add(a2, mul(a2, g2)), s2));
    Var mlp_out = add_rowvec(matmul(h2, p(self->w3_)), p(self->b3_));
    Var scaled = scale_rows_by_index(mlp_out, p(self->t_out_gate_), ts);
    Var skip = scale_rows_by_index(z, p(self->t_gate_), ts);
    return add(scaled, skip);
}

nn::Tensor Diffuser::predict_noise(const nn::Tensor& z, const std::vector<int>& ts,
                                   const nn::Tensor& cond) const {
    if (z.rows() != static_cast<int>(ts.size()) || z.rows() != cond.rows()) {
        throw DimensionError("predict_noise: batch size mismatch");
    }
    if (z.cols() != cfg_.data_dim() || cond.cols() != cfg_.cond_dim) {
        throw DimensionError("predict_noise: feature dims mismatch");
    }
    return forward(nn::constant(z), nn::constant(t_embedding_rows(ts)),
                   nn::constant(cond), ts, false)
        .value();
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

Diffuser::TrainReport Diffuser::train(const synth::Corpus& corpus,
                                      const embed::Embedder& embedder,
                                      std::ostream* log) {
    if (parameters()[0]->value.data.empty()) {
        throw DependencyError("diffuser: not initialized");
    }
    if (!embedder.trained()) {
        throw DependencyError("diffuser training requires a trained embedder");
    }
    if (embedder.dim() != cfg_.cond_dim) {
        throw DimensionError("diffuser: cond_dim != embedder dim");
    }
    int d = cfg_.data_dim();

    // conditioning vectors from contextualized captions, precomputed per step
    caption::Contextualizer ctx(corpus.config.palette);
    std::vector<nn::Tensor> conds;
    std::vector<const util::Image*> images;
    for (const auto& task : corpus.tasks) {
        std::vector<std::string> history;
        for (const auto& s : task.steps) {
            std::string cap = ctx.contextualize(s.raw_text, history);
            conds.push_back(embed::l2_normalize(embedder.encode_text(cap)));
            images.push_back(&s.gt_scene);
            history.push_back(s.raw_text);
        }
    }
    if (images.empty()) throw ConfigError("train_diffuser: empty corpus");

    util::Rng rng(util::derive_seed(cfg_.optim.seed, 0xD143ull));
    std::vector<int> order(images.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    auto params = parameters();
    TrainReport report;
    bool first = true;
    int batch = cfg_.optim.batch_size;

    for (int epoch = 0; epoch < cfg_.optim.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        int n_batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(batch));
            int m = static_cast<int>(end - start);
            nn::Tensor zt({m, d}), eps({m, d}), cond({m, cfg_.cond_dim});
            std::vector<int> ts(static_cast<size_t>(m));
            for (int i = 0; i < m; ++i) {
                int idx = order[start + static_cast<size_t>(i)];
                const util::Image& img = *images[static_cast<size_t>(idx)];
                if (img.width != cfg_.image_width || img.height != cfg_.image_height) {
                    throw DimensionError("train_diffuser: image size mismatch");
                }
                int t = 1 + rng.uniform_int(cfg_.T);
                ts[static_cast<size_t>(i)] = t;
                float a = std::sqrt(schedule_.alpha_bar(t));
                float b = std::sqrt(1.0f - schedule_.alpha_bar(t));
                for (int j = 0; j < d; ++j) {
                    float e = rng.normal();
                    eps.data[static_cast<size_t>(i) * d + static_cast<size_t>(j)] = e;
                    zt.data[static_cast<size_t>(i) * d + static_cast<size_t>(j)] =
                        a * img.px[static_cast<size_t>(j)] + b * e;
                }
                bool drop = rng.bernoulli(cfg_.cond_dropout);
                if (!drop) {
                    const nn::Tensor& cv = conds[static_cast<size_t>(idx)];
                    for (int j = 0; j < cfg_.cond_dim; ++j) {
                        cond.data[static_cast<size_t>(i) * cfg_.cond_dim +
                                  static_cast<size_t>(j)] = cv.data[static_cast<size_t>(j)];
                    }
                }
            }
            nn::Var pred = forward(nn::constant(std::move(zt)),
                                   nn::constant(t_embedding_rows(ts)),
                                   nn::constant(std::move(cond)), ts, true);
            nn::Var loss = nn::mse_loss(pred, eps);
            float loss_v = loss.value().data[0];
            if (!std::isfinite(loss_v)) throw NumericError("train_diffuser: non-finite loss");
            if (first) {
                report.first_batch_loss = loss_v;
                first = false;
            }
            nn::backward(loss);
            nn::adam_step(params, cfg_.optim);
            epoch_loss += loss_v;
            ++n_batches;
        }
        float avg = static_cast<float>(epoch_loss / std::max(1, n_batches));
        report.epoch_losses.push_back(avg);
        if (log != nullptr) {
            (*log) << "diffuser epoch " << (epoch + 1) << "/" << cfg_.optim.epochs
                   << " loss " << avg << "\n";
        }
    }
    trained_ = true;
    return report;
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

Diffuser::GenResult Diffuser::generate(const nn::Tensor* cond, const nn::Tensor* init,
                                       int record_w, util::Rng& rng, int source_step_tag,
                                       int start_iter) const {
    int d = cfg_.data_dim();
    int start = start_iter < 0 ? cfg_.T : start_iter;
    if (start < 1 || start > cfg_.T) {
        throw DomainError("generate: start iteration outside schedule");
    }
    if (record_w < 0 || record_w >= start) {
        throw DomainError("generate: record_w must lie in [0, start_iter)");
    }
    nn::Tensor z({1, d});
    if (init != nullptr) {
        if (init->numel() != d) throw DimensionError("generate: init shape mismatch");
        z.data = init->data;
        z.shape = {1, d};
    } else {
        for (auto& v : z.data) v = rng.normal();
    }
    if (cond != nullptr && cond->numel() != cfg_.cond_dim) {
        throw DimensionError("generate: condition dim mismatch");
    }

    GenResult out;
    out.recorded.push_back(Latent{source_step_tag, start, z});

    bool use_cfg = cond != nullptr && cfg_.guidance != 1.0f;
    for (int t = start; t >= 1; --t) {
        nn::Tensor eps_hat;
        if (cond == nullptr) {
            nn::Tensor c({1, cfg_.cond_dim});
            eps_hat = predict_noise(z, {t}, c);
        } else if (!use_cfg) {
            nn::Tensor c({1, cfg_.cond_dim}, cond->data);
            eps_hat = predict_noise(z, {t}, c);
        } else {
            nn::Tensor zz({2, d});
            for (int j = 0; j < d; ++j) {
                zz.data[static_cast<size_t>(j)] = z.data[static_cast<size_t>(j)];
                zz.data[static_cast<size_t>(d + j)] = z.data[static_cast<size_t>(j)];
            }
            nn::Tensor cc({2, cfg_.cond_dim});
            for (int j = 0; j < cfg_.cond_dim; ++j) {
                cc.data[static_cast<size_t>(j)] = cond->data[static_cast<size_t>(j)];
            }
            nn::Tensor both = predict_noise(zz, {t, t}, cc);
            eps_hat = nn::Tensor({1, d});
            for (int j = 0; j < d; ++j) {
                float ec = both.data[static_cast<size_t>(j)];
                float eu = both.data[static_cast<size_t>(d + j)];
                eps_hat.data[static_cast<size_t>(j)] = eu + cfg_.guidance * (ec - eu);
            }
        }
        float beta = schedule_.beta(t);
        float alpha = schedule_.alpha(t);
        float ab = schedule_.alpha_bar(t);
        float coef = beta / std::sqrt(1.0f - ab);
        float inv_sqrt_alpha = 1.0f / std::sqrt(alpha);
        if (t > 1) {
            float ab_prev = schedule_.alpha_bar(t - 1);
            float sigma = std::sqrt(beta * (1.0f - ab_prev) / (1.0f - ab));
            for (int j = 0; j < d; ++j) {
                float mean = inv_sqrt_alpha *
                             (z.data[static_cast<size_t>(j)] -
                              coef * eps_hat.data[static_cast<size_t>(j)]);
                z.data[static_cast<size_t>(j)] = mean + sigma * rng.normal();
            }
        } else {
            for (int j = 0; j < d; ++j) {
                z.data[static_cast<size_t>(j)] =
                    inv_sqrt_alpha * (z.data[static_cast<size_t>(j)] -
                                      coef * eps_hat.data[static_cast<size_t>(j)]);
            }
        }
        if (start - (t - 1) <= record_w && t - 1 >= 1) {
            out.recorded.push_back(Latent{source_step_tag, t - 1, z});
        }
    }

    out.image = util::Image(cfg_.image_width, cfg_.image_height);
    for (int j = 0; j < d; ++j) {
        out.image.px[static_cast<size_t>(j)] =
            std::clamp(z.data[static_cast<size_t>(j)], 0.0f, 1.0f);
    }
    return out;
}

std::vector<Latent> candidate_latents(
    const std::vector<std::vector<Latent>>& recordings_per_step, int w) {
    std::vector<Latent> out;
    for (size_t i = 0; i < recordings_per_step.size(); ++i) {
        const auto& rec = recordings_per_step[i];
        if (static_cast<int>(rec.size()) < w + 1) {
            throw StateError("candidate_latents: step " + std::to_string(i + 1) +
                             " recorded " + std::to_string(rec.size()) +
                             " latents, need " + std::to_string(w + 1));
        }
        std::vector<const Latent*> sorted;
        for (const auto& l : rec) sorted.push_back(&l);
        std::sort(sorted.begin(), sorted.end(),
                  [](const Latent* a, const Latent* b) { return a->iter > b->iter; });
        for (int k = 0; k <= w; ++k) out.push_back(*sorted[static_cast<size_t>(k)]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// checkpoint
// ---------------------------------------------------------------------------

void Diffuser::save(const std::string& path) const {
    std::vector<nn::NamedTensor> out;
    auto scalar = [&out](const std::string& name, float v) {
        out.push_back({name, nn::Tensor({1}, {v})});
    };
    scalar("meta/kind", 2.0f);  // 2 = diffuser
    scalar("meta/T", static_cast<float>(cfg_.T));
    scalar("meta/beta_start", cfg_.beta_start);
    scalar("meta/beta_end", cfg_.beta_end);
    scalar("meta/hidden", static_cast<float>(cfg_.hidden));
    scalar("meta/t_emb_dim", static_cast<float>(cfg_.t_emb_dim));
    scalar("meta/cond_dim", static_cast<float>(cfg_.cond_dim));
    scalar("meta/image_width", static_cast<float>(cfg_.image_width));
    scalar("meta/image_height", static_cast<float>(cfg_.image_height));
    scalar("meta/guidance", cfg_.guidance);
    scalar("meta/cond_dropout", cfg_.cond_dropout);
    scalar("meta/trained", trained_ ? 1.0f : 0.0f);
    auto* self = const_cast<Diffuser*>(this);
    for (nn::Param* p : self->parameters()) {
        out.push_back({"param/" + p->name, p->value});
    }
    nn::save_checkpoint(path, out);
}

void Diffuser::load(const std::string& path) {
    auto ckpt = nn::load_checkpoint(path);
    if (nn::require_scalar(ckpt, "meta/kind") != 2.0f) {
        throw FormatError("diffuser: checkpoint is not a diffuser");
    }
    DiffuserConfig cfg;
    cfg.T = static_cast<int>(nn::require_scalar(ckpt, "meta/T"));
    cfg.beta_start = nn::require_scalar(ckpt, "meta/beta_start");
    cfg.beta_end = nn::require_scalar(ckpt, "meta/beta_end");
    cfg.hidden = static_cast<int>(nn::require_scalar(ckpt, "meta/hidden"));
    cfg.t_emb_dim = static_cast<int>(nn::require_scalar(ckpt, "meta/t_emb_dim"));
    cfg.cond_dim = static_cast<int>(nn::require_scalar(ckpt, "meta/cond_dim"));
    cfg.image_width = static_cast<int>(nn::require_scalar(ckpt, "meta/image_width"));
    cfg.image_height = static_cast<int>(nn::require_scalar(ckpt, "meta/image_height"));
    cfg.guidance = nn::require_scalar(ckpt, "meta/guidance");
    cfg.cond_dropout = nn::require_scalar(ckpt, "meta/cond_dropout");
    bool was_trained = nn::require_scalar(ckpt, "meta/trained") != 0.0f;
    init(cfg, 0);
    for (nn::Param* p : parameters()) {
        p->value = nn::require_tensor(ckpt, "param/" + p->name);
    }
    trained_ = was_trained;
}

}  // namespace coseq::diffusion
