#include "selector/selector.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "nn/autograd.hpp"
#include "nn/checkpoint.hpp"
#include "nn/functional.hpp"
#include "util/errors.hpp"
#include "util/rng.hpp"

namespace coseq::selector {

void SelectorConfig::validate() const {
    if (d < 2 || d % 2 != 0) throw ConfigError("SelectorConfig: d must be even and >= 2");
    if (!(temperature > 0.0f)) throw ConfigError("SelectorConfig: temperature must be > 0");
    if (m_tasks < 2) throw ConfigError("SelectorConfig: m_tasks must be >= 2");
    optim.validate();
}

const char* input_variant_name(InputVariant v) {
    switch (v) {
        case InputVariant::standard: return "standard";
        case InputVariant::text_shuffled: return "text_shuffled";
        case InputVariant::both_shuffled: return "both_shuffled";
    }
    return "?";
}

void SelectionHead::init(const SelectorConfig& cfg, uint64_t seed) {
    cfg.validate();
    cfg_ = cfg;
    trained_ = false;
    int d = cfg.d, half = cfg.d / 2;
    util::Rng rng(util::derive_seed(seed, 0x5E1Eull));
    // Small init keeps initial scores near zero: softmax starts uniform and
    // the untrained head selects at chance.
    w_it_ = nn::Param("w_it", nn::xavier_uniform({d, half}, rng, 0.1f));
    w_iv_ = nn::Param("w_iv", nn::xavier_uniform({d, half}, rng, 0.1f));
    w_ot_ = nn::Param("w_ot", nn::xavier_uniform({d, half}, rng, 0.1f));
    w_ov_ = nn::Param("w_ov", nn::xavier_uniform({d, half}, rng, 0.1f));
    b_it_ = nn::Param("b_it", nn::Tensor::zeros({1, half}));
    b_iv_ = nn::Param("b_iv", nn::Tensor::zeros({1, half}));
    b_ot_ = nn::Param("b_ot", nn::Tensor::zeros({1, half}));
    b_ov_ = nn::Param("b_ov", nn::Tensor::zeros({1, half}));
}

std::vector<nn::Param*> SelectionHead::parameters() {
    std::vector<nn::Param*> out = {&w_it_, &w_iv_, &w_ot_, &w_ov_};
    if (cfg_.use_bias) {
        out.push_back(&b_it_);
        out.push_back(&b_iv_);
        out.push_back(&b_ot_);
        out.push_back(&b_ov_);
    }
    return out;
}

int SelectionHead::parameter_count() const {
    int count = 4 * cfg_.d * (cfg_.d / 2);
    if (cfg_.use_bias) count += 4 * (cfg_.d / 2);
    return count;
}

static nn::Tensor project_half(const nn::Tensor& vec, const nn::Tensor& w,
                               const nn::Tensor* bias) {
    nn::Tensor row = vec;
    row.shape = {1, vec.numel()};
    nn::Tensor out = nn::matmul(row, w);
    if (bias != nullptr) {
        for (int j = 0; j < out.cols(); ++j) {
            out.data[static_cast<size_t>(j)] += bias->data[static_cast<size_t>(j)];
        }
    }
    return out;
}

ProjectedScene SelectionHead::project(const embed::SceneEmbedding& emb, Role role) const {
    if (w_it_.value.data.empty()) throw DependencyError("selector: not initialized");
    if (emb.text_vec.numel() != cfg_.d || emb.image_vec.numel() != cfg_.d) {
        throw DimensionError("project: embedding dim != " + std::to_string(cfg_.d));
    }
    nn::Tensor tv = emb.text_vec, iv = emb.image_vec;
    if (cfg_.normalize_before_projection) {
        tv = embed::l2_normalize(tv);
        iv = embed::l2_normalize(iv);
    }
    const nn::Tensor& wt = role == Role::past ? w_it_.value : w_ot_.value;
    const nn::Tensor& wv = role == Role::past ? w_iv_.value : w_ov_.value;
    const nn::Tensor* bt = nullptr;
    const nn::Tensor* bv = nullptr;
    if (cfg_.use_bias) {
        bt = role == Role::past ? &b_it_.value : &b_ot_.value;
        bv = role == Role::past ? &b_iv_.value : &b_ov_.value;
    }
    nn::Tensor th = project_half(tv, wt, bt);
    nn::Tensor vh = project_half(iv, wv, bv);
    ProjectedScene out;
    out.role = role;
    out.vec = nn::Tensor({1, cfg_.d});
    int half = cfg_.d / 2;
    for (int j = 0; j < half; ++j) {
        out.vec.data[static_cast<size_t>(j)] = th.data[static_cast<size_t>(j)];
        out.vec.data[static_cast<size_t>(half + j)] = vh.data[static_cast<size_t>(j)];
    }
    return out;
}

float SelectionHead::score(const ProjectedScene& candidate,
                           const std::vector<ProjectedScene>& past) {
    if (past.empty()) throw DomainError("score: past scene list is empty");
    if (candidate.role != Role::current) {
        throw DomainError("score: candidate must be projected with the current-role matrices");
    }
    double acc = 0.0;
    for (const auto& p : past) {
        if (p.role != Role::past) {
            throw DomainError("score: history entries must be projected with the past-role matrices");
        }
        if (p.vec.numel() != candidate.vec.numel()) {
            throw DimensionError("score: projected dims differ");
        }
        for (int j = 0; j < candidate.vec.numel(); ++j) {
            acc += static_cast<double>(candidate.vec.data[static_cast<size_t>(j)]) *
                   p.vec.data[static_cast<size_t>(j)];
        }
    }
    return static_cast<float>(acc);
}

SelectResult SelectionHead::select(const std::vector<CandidateScene>& candidates,
                                   const std::vector<embed::SceneEmbedding>& past_scenes) const {
    if (candidates.empty()) throw DomainError("select: no candidates");
    std::vector<ProjectedScene> past;
    past.reserve(past_scenes.size());
    for (const auto& e : past_scenes) past.push_back(project(e, Role::past));

    SelectResult out;
    out.scores.reserve(candidates.size());
    for (const auto& c : candidates) {
        ProjectedScene pc = project(c.embedding, Role::current);
        out.scores.push_back(score(pc, past));
    }
    nn::Tensor logits = nn::Tensor::vec(out.scores);
    for (auto& v : logits.data) v /= cfg_.temperature;
    nn::Tensor probs = nn::softmax(logits);
    out.probs.assign(probs.data.begin(), probs.data.end());
    int best = 0;
    for (size_t i = 1; i < out.scores.size(); ++i) {
        if (out.scores[i] > out.scores[static_cast<size_t>(best)]) {
            best = static_cast<int>(i);
        }
    }
    out.chosen_index = best;
    return out;
}

// ---------------------------------------------------------------------------
// training / evaluation over ground-truth scenes
// ---------------------------------------------------------------------------

namespace {

struct StepKey {
    int task = 0;
    int step = 0;  // 0-based into task.steps
};

// Normalized embeddings for every corpus step, with variant-driven
// substitution applied at lookup time.
struct SceneBank {
    std::vector<std::vector<nn::Tensor>> text;   // [task][step] -> [1,d]
    std::vector<std::vector<nn::Tensor>> image;
    std::vector<StepKey> all_steps;

    const nn::Tensor& text_of(const StepKey& k, InputVariant v, util::Rng& rng) const {
        if (v == InputVariant::text_shuffled || v == InputVariant::both_shuffled) {
            const StepKey& r = all_steps[static_cast<size_t>(
                rng.uniform_int(static_cast<int>(all_steps.size())))];
            return text[static_cast<size_t>(r.task)][static_cast<size_t>(r.step)];
        }
        return text[static_cast<size_t>(k.task)][static_cast<size_t>(k.step)];
    }
    const nn::Tensor& image_of(const StepKey& k, InputVariant v, util::Rng& rng) const {
        if (v == InputVariant::both_shuffled) {
            const StepKey& r = all_steps[static_cast<size_t>(
                rng.uniform_int(static_cast<int>(all_steps.size())))];
            return image[static_cast<size_t>(r.task)][static_cast<size_t>(r.step)];
        }
        return image[static_cast<size_t>(k.task)][static_cast<size_t>(k.step)];
    }
};

SceneBank build_bank(const synth::Corpus& corpus, const embed::Embedder& embedder,
                     bool normalize) {
    SceneBank bank;
    bank.text.resize(corpus.tasks.size());
    bank.image.resize(corpus.tasks.size());
    for (size_t ti = 0; ti < corpus.tasks.size(); ++ti) {
        const auto& task = corpus.tasks[ti];
        std::vector<std::string> captions;
        std::vector<const util::Image*> imgs;
        for (const auto& s : task.steps) {
            captions.push_back(s.resolved_text);
            imgs.push_back(&s.gt_scene);
        }
        nn::Tensor t = embedder.encode_text_batch(captions);
        nn::Tensor v = embedder.encode_image_batch(imgs);
        int d = t.cols();
        for (size_t si = 0; si < task.steps.size(); ++si) {
            nn::Tensor tr({1, d}), vr({1, d});
            for (int j = 0; j < d; ++j) {
                tr.data[static_cast<size_t>(j)] = t.at(static_cast<int>(si), j);
                vr.data[static_cast<size_t>(j)] = v.at(static_cast<int>(si), j);
            }
            if (normalize) {
                tr = embed::l2_normalize(tr);
                vr = embed::l2_normalize(vr);
            }
            bank.text[ti].push_back(std::move(tr));
            bank.image[ti].push_back(std::move(vr));
            bank.all_steps.push_back(StepKey{static_cast<int>(ti), static_cast<int>(si)});
        }
    }
    return bank;
}

struct Instance {
    int task = 0;
    int k = 0;  // 1-based step to predict; context is steps 1..k-1
};

std::vector<Instance> all_instances(const synth::Corpus& corpus) {
    std::vector<Instance> out;
    for (size_t ti = 0; ti < corpus.tasks.size(); ++ti) {
        int len = static_cast<int>(corpus.tasks[ti].steps.size());
        for (int k = 2; k <= len; ++k) out.push_back({static_cast<int>(ti), k});
    }
    return out;
}

// One M-way problem: candidate rows (true scene + M-1 next scenes of other
// tasks, shuffled), plus the context sums.
struct BuiltBatch {
    nn::Tensor cand_text;  // [B*M, d]
    nn::Tensor cand_img;
    nn::Tensor past_text_sum;  // [B, d]
    nn::Tensor past_img_sum;
    std::vector<int> labels;
};

BuiltBatch build_batch(const synth::Corpus& corpus, const SceneBank& bank,
                       const std::vector<Instance>& instances, size_t start, size_t end,
                       int m_tasks, InputVariant variant, util::Rng& rng, int d) {
    int b = static_cast<int>(end - start);
    int m = m_tasks;
    BuiltBatch out;
    out.cand_text = nn::Tensor({b * m, d});
    out.cand_img = nn::Tensor({b * m, d});
    out.past_text_sum = nn::Tensor({b, d});
    out.past_img_sum = nn::Tensor({b, d});
    out.labels.resize(static_cast<size_t>(b));

    int n_tasks = static_cast<int>(corpus.tasks.size());
    auto copy_row = [d](nn::Tensor& dst, int row, const nn::Tensor& src) {
        for (int j = 0; j < d; ++j) {
            dst.data[static_cast<size_t>(row) * d + static_cast<size_t>(j)] =
                src.data[static_cast<size_t>(j)];
        }
    };
    auto add_row = [d](nn::Tensor& dst, int row, const nn::Tensor& src) {
        for (int j = 0; j < d; ++j) {
            dst.data[static_cast<size_t>(row) * d + static_cast<size_t>(j)] +=
                src.data[static_cast<size_t>(j)];
        }
    };

    for (int i = 0; i < b; ++i) {
        const Instance& inst = instances[start + static_cast<size_t>(i)];
        // context: steps 1..k-1 of the instance task
        for (int s = 0; s < inst.k - 1; ++s) {
            StepKey key{inst.task, s};
            add_row(out.past_text_sum, i, bank.text_of(key, variant, rng));
            add_row(out.past_img_sum, i, bank.image_of(key, variant, rng));
        }
        // candidate pool: the true next scene plus next scenes of M-1 others
        std::vector<StepKey> pool;
        pool.push_back(StepKey{inst.task, inst.k - 1});
        for (int j = 1; j < m; ++j) {
            int other = rng.uniform_int(n_tasks - 1);
            if (other >= inst.task) ++other;
            int len = static_cast<int>(corpus.tasks[static_cast<size_t>(other)].steps.size());
            pool.push_back(StepKey{other, rng.uniform_int(len)});
        }
        int true_pos = rng.uniform_int(m);
        std::swap(pool[0], pool[static_cast<size_t>(true_pos)]);
        out.labels[static_cast<size_t>(i)] = true_pos;
        for (int j = 0; j < m; ++j) {
            copy_row(out.cand_text, i * m + j, bank.text_of(pool[static_cast<size_t>(j)], variant, rng));
            copy_row(out.cand_img, i * m + j, bank.image_of(pool[static_cast<size_t>(j)], variant, rng));
        }
    }
    return out;
}

}  // namespace

SelectionHead::TrainReport SelectionHead::train(const synth::Corpus& corpus,
                                                const embed::Embedder& embedder,
                                                InputVariant variant, std::ostream* log) {
    if (w_it_.value.data.empty()) throw DependencyError("selector: not initialized");
    if (!embedder.trained()) {
        throw DependencyError("selector training requires a trained embedder");
    }
    if (static_cast<int>(corpus.tasks.size()) < cfg_.m_tasks) {
        throw ConfigError("train_selector: corpus has fewer tasks than m_tasks");
    }
    SceneBank bank = build_bank(corpus, embedder, cfg_.normalize_before_projection);
    std::vector<Instance> instances = all_instances(corpus);
    if (instances.empty()) throw ConfigError("train_selector: no usable instances");

    util::Rng rng(util::derive_seed(cfg_.optim.seed, 0x5E7Bull));
    auto params = parameters();
    TrainReport report;
    bool first = true;
    int batch = cfg_.optim.batch_size;
    int d = cfg_.d, m = cfg_.m_tasks;
    float inv_temp = 1.0f / cfg_.temperature;

    for (int epoch = 0; epoch < cfg_.optim.epochs; ++epoch) {
        rng.shuffle(instances);
        double epoch_loss = 0.0;
        int n_batches = 0;
        for (size_t s = 0; s < instances.size(); s += static_cast<size_t>(batch)) {
            size_t e = std::min(instances.size(), s + static_cast<size_t>(batch));
            BuiltBatch bb = build_batch(corpus, bank, instances, s, e, m, variant, rng, d);
            using namespace nn;
            Var wot = from_param(w_ot_), wov = from_param(w_ov_);
            Var wit = from_param(w_it_), wiv = from_param(w_iv_);
            Var cur_t = matmul(constant(std::move(bb.cand_text)), wot);
            Var cur_v = matmul(constant(std::move(bb.cand_img)), wov);
            Var hist_t = matmul(constant(std::move(bb.past_text_sum)), wit);
            Var hist_v = matmul(constant(std::move(bb.past_img_sum)), wiv);
            if (cfg_.use_bias) {
                cur_t = add_rowvec(cur_t, from_param(b_ot_));
                cur_v = add_rowvec(cur_v, from_param(b_ov_));
                hist_t = add_rowvec(hist_t, from_param(b_it_));
                hist_v = add_rowvec(hist_v, from_param(b_iv_));
            }
            Var cur = concat_cols({cur_t, cur_v});
            Var hist = concat_cols({hist_t, hist_v});
            Var scores = scale(block_scores(cur, hist, m), inv_temp);
            Var loss = softmax_ce_rows(scores, bb.labels);
            float loss_v = loss.value().data[0];
            if (!std::isfinite(loss_v)) throw NumericError("train_selector: non-finite loss");
            if (first) {
                report.first_batch_loss = loss_v;
                first = false;
            }
            backward(loss);
            adam_step(params, cfg_.optim);
            epoch_loss += loss_v;
            ++n_batches;
        }
        float avg = static_cast<float>(epoch_loss / std::max(1, n_batches));
        report.epoch_losses.push_back(avg);
        if (log != nullptr) {
            (*log) << "selector[" << input_variant_name(variant) << "] epoch " << (epoch + 1)
                   << "/" << cfg_.optim.epochs << " loss " << avg << "\n";
        }
    }
    trained_ = true;
    return report;
}

double eval_selection_accuracy(const SelectionHead& head, const synth::Corpus& corpus,
                               const embed::Embedder& embedder, InputVariant variant,
                               uint64_t seed) {
    const SelectorConfig& cfg = head.cfg_;
    if (static_cast<int>(corpus.tasks.size()) < cfg.m_tasks) {
        throw ConfigError("eval_selection_accuracy: corpus has fewer tasks than m_tasks");
    }
    SceneBank bank = build_bank(corpus, embedder, cfg.normalize_before_projection);
    std::vector<Instance> instances = all_instances(corpus);
    if (instances.empty()) return 0.0;
    util::Rng rng(util::derive_seed(seed, 0xEE41ull));

    BuiltBatch bb = build_batch(corpus, bank, instances, 0, instances.size(), cfg.m_tasks,
                                variant, rng, cfg.d);
    nn::Tensor cur_t = nn::matmul(bb.cand_text, head.w_ot_.value);
    nn::Tensor cur_v = nn::matmul(bb.cand_img, head.w_ov_.value);
    nn::Tensor hist_t = nn::matmul(bb.past_text_sum, head.w_it_.value);
    nn::Tensor hist_v = nn::matmul(bb.past_img_sum, head.w_iv_.value);
    int half = cfg.d / 2, m = cfg.m_tasks;
    if (cfg.use_bias) {
        auto add_bias = [half](nn::Tensor& t, const nn::Tensor& b) {
            for (int i = 0; i < t.rows(); ++i) {
                for (int j = 0; j < half; ++j) {
                    t.data[static_cast<size_t>(i) * half + static_cast<size_t>(j)] +=
                        b.data[static_cast<size_t>(j)];
                }
            }
        };
        add_bias(cur_t, head.b_ot_.value);
        add_bias(cur_v, head.b_ov_.value);
        add_bias(hist_t, head.b_it_.value);
        add_bias(hist_v, head.b_iv_.value);
    }
    int hits = 0;
    int n = static_cast<int>(instances.size());
    for (int i = 0; i < n; ++i) {
        int best = 0;
        double best_score = -1e300;
        for (int j = 0; j < m; ++j) {
            int row = i * m + j;
            double acc = 0.0;
            for (int c = 0; c < half; ++c) {
                acc += static_cast<double>(cur_t.at(row, c)) * hist_t.at(i, c);
                acc += static_cast<double>(cur_v.at(row, c)) * hist_v.at(i, c);
            }
            if (acc > best_score) {
                best_score = acc;
                best = j;
            }
        }
        hits += (best == bb.labels[static_cast<size_t>(i)]);
    }
    return static_cast<double>(hits) / n;
}

// ---------------------------------------------------------------------------
// checkpoint
// ---------------------------------------------------------------------------

void SelectionHead::save(const std::string& path) const {
    std::vector<nn::NamedTensor> out;
    auto scalar = [&out](const std::string& name, float v) {
        out.push_back({name, nn::Tensor({1}, {v})});
    };
    scalar("meta/kind", 3.0f);  // 3 = selector
    scalar("meta/d", static_cast<float>(cfg_.d));
    scalar("meta/use_bias", cfg_.use_bias ? 1.0f : 0.0f);
    scalar("meta/normalize_before_projection", cfg_.normalize_before_projection ? 1.0f : 0.0f);
    scalar("meta/temperature", cfg_.temperature);
    scalar("meta/m_tasks", static_cast<float>(cfg_.m_tasks));
    scalar("meta/trained", trained_ ? 1.0f : 0.0f);
    out.push_back({"param/w_it", w_it_.value});
    out.push_back({"param/w_iv", w_iv_.value});
    out.push_back({"param/w_ot", w_ot_.value});
    out.push_back({"param/w_ov", w_ov_.value});
    if (cfg_.use_bias) {
        out.push_back({"param/b_it", b_it_.value});
        out.push_back({"param/b_iv", b_iv_.value});
        out.push_back({"param/b_ot", b_ot_.value});
        out.push_back({"param/b_ov", b_ov_.value});
    }
    nn::save_checkpoint(path, out);
}

void SelectionHead::load(const std::string& path) {
    auto ckpt = nn::load_checkpoint(path);
    if (nn::require_scalar(ckpt, "meta/kind") != 3.0f) {
        throw FormatError("selector: checkpoint is not a selection head");
    }
    SelectorConfig cfg;
    cfg.d = static_cast<int>(nn::require_scalar(ckpt, "meta/d"));
    cfg.use_bias = nn::require_scalar(ckpt, "meta/use_bias") != 0.0f;
    cfg.normalize_before_projection =
        nn::require_scalar(ckpt, "meta/normalize_before_projection") != 0.0f;
    cfg.temperature = nn::require_scalar(ckpt, "meta/temperature");
    cfg.m_tasks = static_cast<int>(nn::require_scalar(ckpt, "meta/m_tasks"));
    bool was_trained = nn::require_scalar(ckpt, "meta/trained") != 0.0f;
    init(cfg, 0);
    w_it_.value = nn::require_tensor(ckpt, "param/w_it");
    w_iv_.value = nn::require_tensor(ckpt, "param/w_iv");
    w_ot_.value = nn::require_tensor(ckpt, "param/w_ot");
    w_ov_.value = nn::require_tensor(ckpt, "param/w_ov");
    if (cfg.use_bias) {
        b_it_.value = nn::require_tensor(ckpt, "param/b_it");
        b_iv_.value = nn::require_tensor(ckpt, "param/b_iv");
        b_ot_.value = nn::require_tensor(ckpt, "param/b_ot");
        b_ov_.value = nn::require_tensor(ckpt, "param/b_ov");
    }
    trained_ = was_trained;
}

}  // namespace coseq::selector
