#include "embed/embedder.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "nn/autograd.hpp"
#include "nn/checkpoint.hpp"
#include "util/errors.hpp"
#include "util/rng.hpp"

namespace coseq::embed {

void EmbedderConfig::validate() const {
    if (d < 2 || d % 2 != 0) throw ConfigError("EmbedderConfig: d must be even and >= 2");
    if (hidden < 1) throw ConfigError("EmbedderConfig: hidden must be >= 1");
    if (!(tau > 0.0f)) throw ConfigError("EmbedderConfig: tau must be > 0");
    optim.validate();
}

float similarity(const nn::Tensor& a, const nn::Tensor& b) {
    if (a.numel() != b.numel()) throw DimensionError("similarity: dim mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < a.numel(); ++i) {
        double x = a.data[static_cast<size_t>(i)];
        double y = b.data[static_cast<size_t>(i)];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) {
        static bool warned = false;
        if (!warned) {
            std::fprintf(stderr, "coseq: similarity of a zero vector, returning 0\n");
            warned = true;
        }
        return 0.0f;
    }
    return static_cast<float>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

nn::Tensor l2_normalize(const nn::Tensor& v) {
    double s = 0.0;
    for (float x : v.data) s += static_cast<double>(x) * x;
    nn::Tensor out = v;
    float norm = static_cast<float>(std::sqrt(s + 1e-12));
    for (auto& x : out.data) x /= norm;
    return out;
}

void Embedder::init(const EmbedderConfig& cfg, const std::vector<std::string>& vocab,
                    int image_width, int image_height, uint64_t seed) {
    cfg.validate();
    cfg_ = cfg;
    vocab_ = vocab;
    token_to_id_.clear();
    for (size_t i = 0; i < vocab_.size(); ++i) {
        token_to_id_[vocab_[i]] = static_cast<int>(i);
    }
    image_width_ = image_width;
    image_height_ = image_height;
    trained_ = false;

    int v = static_cast<int>(vocab_.size());
    int d = cfg_.d, h = cfg_.hidden;
    int in_dim = image_width * image_height * 3;
    util::Rng rng(util::derive_seed(seed, 0xE0BEDull));

    tok_table_ = nn::Param("tok_table", nn::xavier_uniform({v, d}, rng));
    t_w1_ = nn::Param("t_w1", nn::xavier_uniform({d, h}, rng));
    t_b1_ = nn::Param("t_b1", nn::Tensor::zeros({1, h}));
    t_w2_ = nn::Param("t_w2", nn::xavier_uniform({h, d}, rng, 0.1f));
    i_w1_ = nn::Param("i_w1", nn::xavier_uniform({in_dim, h}, rng));
    i_b1_ = nn::Param("i_b1", nn::Tensor::zeros({1, h}));
    i_w2_ = nn::Param("i_w2", nn::xavier_uniform({h, d}, rng, 0.1f));

    // Final biases start on a shared unit direction so the initial pairwise
    // similarities are nearly constant and the first-batch contrastive loss
    // sits at ln(batch).
    float u = 1.0f / std::sqrt(static_cast<float>(d));
    t_b2_ = nn::Param("t_b2", nn::Tensor::full({1, d}, u));
    i_b2_ = nn::Param("i_b2", nn::Tensor::full({1, d}, u));
}

std::vector<nn::Param*> Embedder::parameters() {
    return {&tok_table_, &t_w1_, &t_b1_, &t_w2_, &t_b2_,
            &i_w1_,      &i_b1_, &i_w2_, &i_b2_};
}

std::vector<int> Embedder::token_ids(const std::string& text) const {
    auto toks = synth::tokenize(text);
    if (static_cast<int>(toks.size()) > cfg_.max_tokens) {
        throw DomainError("encode_text: input longer than " +
                          std::to_string(cfg_.max_tokens) + " tokens");
    }
    std::vector<int> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) {
        auto it = token_to_id_.find(t);
        if (it == token_to_id_.end()) {
            throw VocabularyError("encode_text: token '" + t + "' not in vocabulary");
        }
        ids.push_back(it->second);
    }
    return ids;
}

namespace {

struct EncoderRefs {
    nn::Param* w1;
    nn::Param* b1;
    nn::Param* w2;
    nn::Param* b2;
};

nn::Var mlp2(const nn::Var& x, const EncoderRefs& e, bool for_training) {
    using namespace nn;
    auto p = [for_training](Param& prm) {
        return for_training ? from_param(prm) : constant(prm.value);
    };
    Var w1 = p(*e.w1), b1 = p(*e.b1), w2 = p(*e.w2), b2 = p(*e.b2);
    Var h = tanh_op(add_rowvec(matmul(x, w1), b1));
    return add_rowvec(matmul(h, w2), b2);
}

}  // namespace

nn::Tensor Embedder::encode_text_batch(const std::vector<std::string>& texts) const {
    if (vocab_.empty()) throw DependencyError("embedder: not initialized");
    std::vector<std::vector<int>> ids;
    ids.reserve(texts.size());
    for (const auto& t : texts) ids.push_back(token_ids(t));
    auto* self = const_cast<Embedder*>(this);
    nn::Var pooled = nn::embedding_mean(nn::constant(tok_table_.value), ids);
    EncoderRefs refs{&self->t_w1_, &self->t_b1_, &self->t_w2_, &self->t_b2_};
    return mlp2(pooled, refs, false).value();
}

nn::Tensor Embedder::encode_text(const std::string& text) const {
    return encode_text_batch({text});
}

nn::Tensor Embedder::encode_image_batch(const std::vector<const util::Image*>& imgs) const {
    if (vocab_.empty()) throw DependencyError("embedder: not initialized");
    int in_dim = image_width_ * image_height_ * 3;
    nn::Tensor flat({static_cast<int>(imgs.size()), in_dim});
    for (size_t i = 0; i < imgs.size(); ++i) {
        const util::Image& img = *imgs[i];
        if (img.width != image_width_ || img.height != image_height_) {
            throw DimensionError("encode_image: expected " + std::to_string(image_width_) +
                                 "x" + std::to_string(image_height_) + ", got " +
                                 std::to_string(img.width) + "x" + std::to_string(img.height));
        }
        for (int j = 0; j < in_dim; ++j) {
            flat.data[i * static_cast<size_t>(in_dim) + static_cast<size_t>(j)] =
                img.px[static_cast<size_t>(j)];
        }
    }
    auto* self = const_cast<Embedder*>(this);
    EncoderRefs refs{&self->i_w1_, &self->i_b1_, &self->i_w2_, &self->i_b2_};
    return mlp2(nn::constant(std::move(flat)), refs, false).value();
}

nn::Tensor Embedder::encode_image(const util::Image& img) const {
    return encode_image_batch({&img});
}

SceneEmbedding Embedder::encode_scene(const std::string& caption,
                                      const util::Image& img) const {
    return SceneEmbedding{encode_text(caption), encode_image(img)};
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

Embedder::TrainReport Embedder::train(const synth::Corpus& corpus, std::ostream* log) {
    if (vocab_.empty()) throw DependencyError("embedder: not initialized");
    struct Pair {
        std::vector<int> ids;
        const util::Image* img;
    };
    std::vector<Pair> pairs;
    for (const auto& task : corpus.tasks) {
        for (const auto& s : task.steps) {
            pairs.push_back({token_ids(s.resolved_text), &s.gt_scene});
        }
    }
    if (static_cast<int>(pairs.size()) < 2) {
        throw ConfigError("train_embedder: need at least 2 text/image pairs");
    }
    int batch = std::min<int>(cfg_.optim.batch_size, static_cast<int>(pairs.size()));
    if (batch < 2) throw ConfigError("train_embedder: batch must be >= 2");

    int in_dim = image_width_ * image_height_ * 3;
    util::Rng rng(util::derive_seed(cfg_.optim.seed, 0x7241ull));
    std::vector<int> order(pairs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    auto params = parameters();
    TrainReport report;
    bool first = true;
    float inv_tau = 1.0f / cfg_.tau;
    EncoderRefs t_refs{&t_w1_, &t_b1_, &t_w2_, &t_b2_};
    EncoderRefs i_refs{&i_w1_, &i_b1_, &i_w2_, &i_b2_};

    for (int epoch = 0; epoch < cfg_.optim.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        int n_batches = 0;
        for (size_t start = 0; start + 2 <= order.size(); start += static_cast<size_t>(batch)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(batch));
            int m = static_cast<int>(end - start);
            if (m < 2) break;
            std::vector<std::vector<int>> ids(static_cast<size_t>(m));
            nn::Tensor imgs({m, in_dim});
            std::vector<int> labels(static_cast<size_t>(m));
            for (int i = 0; i < m; ++i) {
                const Pair& p = pairs[static_cast<size_t>(order[start + static_cast<size_t>(i)])];
                ids[static_cast<size_t>(i)] = p.ids;
                for (int j = 0; j < in_dim; ++j) {
                    imgs.data[static_cast<size_t>(i) * in_dim + static_cast<size_t>(j)] =
                        p.img->px[static_cast<size_t>(j)];
                }
                labels[static_cast<size_t>(i)] = i;
            }
            using namespace nn;
            Var pooled = embedding_mean(from_param(tok_table_), ids);
            Var t_out = row_l2norm(mlp2(pooled, t_refs, true));
            Var i_out = row_l2norm(mlp2(constant(std::move(imgs)), i_refs, true));
            Var logits = scale(matmul(t_out, transpose(i_out)), inv_tau);
            Var loss = scale(add(softmax_ce_rows(logits, labels),
                                 softmax_ce_rows(transpose(logits), labels)),
                             0.5f);
            float loss_v = loss.value().data[0];
            if (!std::isfinite(loss_v)) {
                throw NumericError("train_embedder: non-finite loss");
            }
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
            (*log) << "embedder epoch " << (epoch + 1) << "/" << cfg_.optim.epochs
                   << " loss " << avg << "\n";
        }
    }
    trained_ = true;
    return report;
}

double eval_retrieval_top1(const Embedder& e, const synth::Corpus& corpus,
                           int batch_size, uint64_t seed) {
    std::vector<std::pair<const std::string*, const util::Image*>> pairs;
    for (const auto& task : corpus.tasks) {
        for (const auto& s : task.steps) {
            pairs.emplace_back(&s.resolved_text, &s.gt_scene);
        }
    }
    if (static_cast<int>(pairs.size()) < batch_size) {
        throw ConfigError("eval_retrieval_top1: fewer pairs than batch size");
    }
    util::Rng rng(util::derive_seed(seed, 0x3E7Aull));
    std::vector<int> order(pairs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);

    int hits = 0, total = 0;
    for (size_t start = 0; start + static_cast<size_t>(batch_size) <= order.size();
         start += static_cast<size_t>(batch_size)) {
        std::vector<std::string> texts;
        std::vector<const util::Image*> imgs;
        for (int i = 0; i < batch_size; ++i) {
            const auto& p = pairs[static_cast<size_t>(order[start + static_cast<size_t>(i)])];
            texts.push_back(*p.first);
            imgs.push_back(p.second);
        }
        nn::Tensor t = e.encode_text_batch(texts);
        nn::Tensor v = e.encode_image_batch(imgs);
        int d = t.cols();
        for (int i = 0; i < batch_size; ++i) {
            nn::Tensor ti({1, d});
            for (int j = 0; j < d; ++j) ti.data[static_cast<size_t>(j)] = t.at(i, j);
            int best = -1;
            float best_sim = -2.0f;
            for (int k = 0; k < batch_size; ++k) {
                nn::Tensor vk({1, d});
                for (int j = 0; j < d; ++j) vk.data[static_cast<size_t>(j)] = v.at(k, j);
                float s = similarity(ti, vk);
                if (s > best_sim) {
                    best_sim = s;
                    best = k;
                }
            }
            hits += (best == i);
            ++total;
        }
    }
    return total > 0 ? static_cast<double>(hits) / total : 0.0;
}

// ---------------------------------------------------------------------------
// checkpoint
// ---------------------------------------------------------------------------

void Embedder::save(const std::string& path) const {
    std::vector<nn::NamedTensor> out;
    auto scalar = [&out](const std::string& name, float v) {
        out.push_back({name, nn::Tensor({1}, {v})});
    };
    scalar("meta/kind", 1.0f);  // 1 = embedder
    scalar("meta/d", static_cast<float>(cfg_.d));
    scalar("meta/hidden", static_cast<float>(cfg_.hidden));
    scalar("meta/tau", cfg_.tau);
    scalar("meta/max_tokens", static_cast<float>(cfg_.max_tokens));
    scalar("meta/image_width", static_cast<float>(image_width_));
    scalar("meta/image_height", static_cast<float>(image_height_));
    scalar("meta/trained", trained_ ? 1.0f : 0.0f);
    for (size_t i = 0; i < vocab_.size(); ++i) {
        scalar("vocab/" + vocab_[i], static_cast<float>(i));
    }
    auto* self = const_cast<Embedder*>(this);
    for (nn::Param* p : self->parameters()) {
        out.push_back({"param/" + p->name, p->value});
    }
    nn::save_checkpoint(path, out);
}

void Embedder::load(const std::string& path) {
    auto ckpt = nn::load_checkpoint(path);
    if (nn::require_scalar(ckpt, "meta/kind") != 1.0f) {
        throw FormatError("embedder: checkpoint is not an embedder");
    }
    EmbedderConfig cfg;
    cfg.d = static_cast<int>(nn::require_scalar(ckpt, "meta/d"));
    cfg.hidden = static_cast<int>(nn::require_scalar(ckpt, "meta/hidden"));
    cfg.tau = nn::require_scalar(ckpt, "meta/tau");
    cfg.max_tokens = static_cast<int>(nn::require_scalar(ckpt, "meta/max_tokens"));
    int w = static_cast<int>(nn::require_scalar(ckpt, "meta/image_width"));
    int h = static_cast<int>(nn::require_scalar(ckpt, "meta/image_height"));
    bool was_trained = nn::require_scalar(ckpt, "meta/trained") != 0.0f;

    std::vector<std::string> vocab;
    for (const auto& [name, tensor] : ckpt) {
        if (name.rfind("vocab/", 0) == 0) {
            size_t id = static_cast<size_t>(tensor.data[0]);
            if (vocab.size() <= id) vocab.resize(id + 1);
            vocab[id] = name.substr(6);
        }
    }
    init(cfg, vocab, w, h, 0);
    for (nn::Param* p : parameters()) {
        p->value = nn::require_tensor(ckpt, "param/" + p->name);
    }
    trained_ = was_trained;
}

}  // namespace coseq::embed
