#pragma once

#include <map>
#include <string>
#include <vector>

#include "pipeline/pipeline.hpp"

namespace coseq::evalkit {

/// Mean over steps of 100 * cosine(text embedding, image embedding).
double eval_tv(const std::vector<util::Image>& images,
               const std::vector<std::string>& captions, const embed::Embedder& e);

/// Mean over consecutive image pairs of 100 * cosine; all-pairs mean behind
/// the flag (aggregation choice surfaced for sensitivity reporting).
double eval_vv(const std::vector<util::Image>& images, const embed::Embedder& e,
               bool all_pairs = false);

// ---------------------------------------------------------------------------

struct UsageHistograms {
    // index 0 unused; offset k = selections whose source is k steps back
    std::vector<long> step_offset_totals;
    std::vector<double> step_offset_mean;  // totals / n_traces
    std::map<int, long> latent_iter_totals;
    std::map<int, double> latent_iter_mean;
    long total_selections = 0;
    int n_traces = 0;
};

UsageHistograms usage_histograms(const std::vector<pipeline::GenerationTrace>& traces);

struct NonlinearityReport {
    int decisions = 0;
    int cosed_hits = 0;
    int baseline_hits = 0;
    double cosed_hit_rate = 0.0;
    double baseline_hit_rate = 0.0;
    double p_value = 1.0;  // binomial tail of cosed_hits under the baseline rate
};

/// Hit = chosen source step equals the planted antecedent; the baseline
/// always predicts n-1. Counted at steps n >= min_step.
NonlinearityReport nonlinearity_score(const std::vector<pipeline::GenerationTrace>& traces,
                                      const synth::Corpus& corpus, int min_step = 3);

/// P(X >= k) for X ~ Binomial(n, p), exact in log space.
double binomial_tail_p(int k, int n, double p);

// ---------------------------------------------------------------------------

struct LatentAblationRow {
    std::string config;  // "cosed" or "fixed_<t>"
    int position = -1;   // -1 for the full method
    double tv = 0.0;
    double vv = 0.0;
};

/// Fixed-position sweep: for each position t, always seed step n from
/// z_t of step n-1 (no selection), plus one full-method row.
std::vector<LatentAblationRow> ablate_latents(const synth::Corpus& corpus,
                                              const std::vector<int>& task_indices,
                                              const pipeline::Models& models,
                                              const std::vector<int>& positions,
                                              const pipeline::SynthParams& params);

struct ModalityRow {
    std::string variant;
    double heldout_accuracy = 0.0;
};

/// Trains one selector per input variant and reports held-out accuracy.
std::vector<ModalityRow> modality_ablation(const synth::Corpus& train_corpus,
                                           const synth::Corpus& heldout_corpus,
                                           const embed::Embedder& embedder,
                                           const selector::SelectorConfig& cfg,
                                           std::ostream* log = nullptr);

}  // namespace coseq::evalkit
