#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "synth/grammar.hpp"
#include "synth/scene.hpp"
#include "util/rng.hpp"

namespace coseq::synth {

struct CorpusConfig {
    int n_tasks = 1400;
    double mean_steps = 4.9;
    double nonlinear_fraction = 0.5;  // ablation knob; not a paper constant
    int image_width = 16;
    int image_height = 16;
    uint64_t rng_seed = 7151;
    Palette palette = Palette::standard();

    void validate() const;
};

struct Step {
    int index = 0;       // 1-based
    Action action;
    int antecedent = 0;  // 0 = fresh workspace
    std::string raw_text;
    std::string resolved_text;
    util::Image gt_scene;
};

struct Task {
    std::string id;
    std::string title;
    std::vector<Step> steps;

    std::vector<int> dependency_graph() const;  // antecedent per step, 1-based order
};

struct Corpus {
    CorpusConfig config;
    std::vector<Task> tasks;

    int total_steps() const;
};

/// Raw and resolved sentences for one action applied on top of the given
/// antecedent state. The raw form may use "it" / "the mixture" / a step
/// prefix, chosen by rng; the resolved form is always explicit.
std::pair<std::string, std::string> describe_step(const Action& action,
                                                  const Workspace& antecedent_state,
                                                  int antecedent, int step_index,
                                                  util::Rng& rng, const Palette& palette);

Corpus generate_corpus(const CorpusConfig& cfg);

/// Deterministic disjoint split by task id. train_frac must lie in (0,1).
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double train_frac);

// On-disk layout: <dir>/manifest.json + <dir>/scenes/*.ppm ("coseq-corpus-v1").
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

/// Ground-truth workspace states along a task (index 0 = fresh), recomputed
/// by re-applying the action chain.
std::vector<Workspace> replay_workspaces(const Task& task);

}  // namespace coseq::synth
