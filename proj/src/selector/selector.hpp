#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "embed/embedder.hpp"
#include "nn/optim.hpp"
#include "nn/tensor.hpp"
#include "synth/corpus.hpp"
#include "util/image.hpp"

namespace coseq::selector {

enum class Role { past = 0, current };

/// Projection of one scene into the shared selection space: the projected
/// text half concatenated with the projected image half.
struct ProjectedScene {
    nn::Tensor vec;  // [1, d]
    Role role = Role::past;
};

/// One generated candidate for step n, carrying the latent it was seeded
/// from. All candidates of a step share the caption.
struct CandidateScene {
    std::string caption;
    util::Image image;
    int source_step = 0;
    int source_latent_iter = 0;
    embed::SceneEmbedding embedding;
};

struct SelectorConfig {
    int d = 64;  // embedding dim; halved by each projection
    bool use_bias = false;
    bool normalize_before_projection = true;
    float temperature = 1.0f;  // softmax temperature over candidate scores
    int m_tasks = 10;          // candidate-set size per training instance
    nn::OptimConfig optim;     // Adam, lr 0.01, batch 500, 10 epochs

    void validate() const;
};

/// Which selector inputs are replaced by randomly drawn ones; the single-
/// modality ablation trains one head per variant.
enum class InputVariant { standard = 0, text_shuffled, both_shuffled };
const char* input_variant_name(InputVariant v);

struct SelectResult {
    int chosen_index = 0;
    std::vector<float> probs;
    std::vector<float> scores;
};

/// The four-matrix contrastive head: W_IT/W_IV project past scenes,
/// W_OT/W_OV project the current candidate; score is the summed dot product
/// against all projected past scenes, selection the softmax-argmax.
class SelectionHead {
public:
    SelectionHead() = default;
    void init(const SelectorConfig& cfg, uint64_t seed);

    bool trained() const { return trained_; }
    const SelectorConfig& config() const { return cfg_; }
    int parameter_count() const;

    ProjectedScene project(const embed::SceneEmbedding& emb, Role role) const;

    /// Sum of dot products between the candidate and every past scene.
    static float score(const ProjectedScene& candidate,
                       const std::vector<ProjectedScene>& past);

    SelectResult select(const std::vector<CandidateScene>& candidates,
                        const std::vector<embed::SceneEmbedding>& past_scenes) const;

    struct TrainReport {
        float first_batch_loss = 0.0f;
        std::vector<float> epoch_losses;
    };
    TrainReport train(const synth::Corpus& corpus, const embed::Embedder& embedder,
                      InputVariant variant = InputVariant::standard,
                      std::ostream* log = nullptr);

    void save(const std::string& path) const;
    void load(const std::string& path);
    std::vector<nn::Param*> parameters();

private:
    friend double eval_selection_accuracy(const SelectionHead&, const synth::Corpus&,
                                          const embed::Embedder&, InputVariant, uint64_t);

    SelectorConfig cfg_;
    bool trained_ = false;
    nn::Param w_it_, w_iv_, w_ot_, w_ov_;
    nn::Param b_it_, b_iv_, b_ot_, b_ov_;  // used when cfg_.use_bias
};

/// Held-out next-scene selection accuracy with m_tasks-way candidate sets
/// built from ground-truth scenes (chance = 1/m_tasks).
double eval_selection_accuracy(const SelectionHead& head, const synth::Corpus& corpus,
                               const embed::Embedder& embedder,
                               InputVariant variant = InputVariant::standard,
                               uint64_t seed = 99);

}  // namespace coseq::selector
