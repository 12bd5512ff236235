#pragma once

#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "nn/optim.hpp"
#include "nn/tensor.hpp"
#include "synth/corpus.hpp"
#include "util/image.hpp"

namespace coseq::embed {

/// Encoder outputs for the two modalities of one scene.
struct SceneEmbedding {
    nn::Tensor text_vec;   // [1, d]
    nn::Tensor image_vec;  // [1, d]
};

struct EmbedderConfig {
    int d = 64;        // output dim; must be even (the selection head halves it)
    int hidden = 192;
    float tau = 0.07f;  // contrastive temperature
    int max_tokens = 400;
    nn::OptimConfig optim{.learning_rate = 2e-3f, .batch_size = 64, .epochs = 50};

    void validate() const;
};

/// Cosine similarity; zero vectors map to 0 (with a one-time warning).
float similarity(const nn::Tensor& a, const nn::Tensor& b);

nn::Tensor l2_normalize(const nn::Tensor& v);

/// Trainable dual text/image encoder over the corpus grammar. Text side is
/// a mean-pooled bag of token embeddings through a 2-layer MLP; image side
/// is a flattened-pixel 2-layer MLP. Inference is pure after training.
class Embedder {
public:
    Embedder() = default;  // untrained shell; load() or init() before use
    void init(const EmbedderConfig& cfg, const std::vector<std::string>& vocab,
              int image_width, int image_height, uint64_t seed);

    bool trained() const { return trained_; }
    int dim() const { return cfg_.d; }
    const EmbedderConfig& config() const { return cfg_; }

    std::vector<int> token_ids(const std::string& text) const;

    nn::Tensor encode_text(const std::string& text) const;          // [1, d]
    nn::Tensor encode_text_batch(const std::vector<std::string>& texts) const;
    nn::Tensor encode_image(const util::Image& img) const;          // [1, d]
    nn::Tensor encode_image_batch(const std::vector<const util::Image*>& imgs) const;

    SceneEmbedding encode_scene(const std::string& caption, const util::Image& img) const;

    void save(const std::string& path) const;
    void load(const std::string& path);

    /// Symmetric InfoNCE training on (resolved_text, gt_scene) pairs.
    struct TrainReport {
        float first_batch_loss = 0.0f;
        std::vector<float> epoch_losses;
    };
    TrainReport train(const synth::Corpus& corpus, std::ostream* log = nullptr);

    std::vector<nn::Param*> parameters();

private:
    friend struct EmbedderTrainer;

    EmbedderConfig cfg_;
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, int> token_to_id_;
    int image_width_ = 0, image_height_ = 0;
    bool trained_ = false;

    nn::Param tok_table_;                      // [V, d]
    nn::Param t_w1_, t_b1_, t_w2_, t_b2_;      // text MLP
    nn::Param i_w1_, i_b1_, i_w2_, i_b2_;      // image MLP
};

/// Held-out text->image top-1 retrieval over batches of `batch_size`.
double eval_retrieval_top1(const Embedder& e, const synth::Corpus& corpus,
                           int batch_size, uint64_t seed);

}  // namespace coseq::embed
