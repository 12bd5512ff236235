#pragma once

#include <string>
#include <vector>

#include "diffusion/diffuser.hpp"
#include "embed/embedder.hpp"
#include "selector/selector.hpp"
#include "synth/corpus.hpp"

namespace coseq::pipeline {

struct Models {
    embed::Embedder embedder;
    diffusion::Diffuser diffuser;
    selector::SelectionHead head;
};

/// Throws DependencyError naming the first untrained module.
void check_models_trained(const Models& models, bool need_selector = true);

struct SynthParams {
    int w = 3;  // extra recorded denoising latents per step
    int B = 4;  // first-step candidate count
    uint64_t seed = 1;
    bool resume_at_source_iter = false;  // resume at the latent's iteration
    int fade_frames = 0;                 // cross-fade frames written by emit
    int threads = 0;                     // candidate generation workers; 0 = auto
    bool dump_latents = false;
};

struct CandidateRecord {
    int source_step = 0;
    int iter = 0;
    float score = 0.0f;
    float prob = 0.0f;
};

struct StepTrace {
    int index = 0;
    std::string caption;
    std::vector<CandidateRecord> candidates;
    int chosen_index = 0;

    const CandidateRecord& chosen() const {
        return candidates[static_cast<size_t>(chosen_index)];
    }
};

struct GenerationTrace {
    std::string task_id;
    uint64_t seed = 0;
    int w = 0, B = 0;
    bool resume_at_source_iter = false;
    float guidance = 0.0f;
    int T = 0;
    std::vector<StepTrace> steps;
};

struct SynthesisResult {
    std::vector<util::Image> images;  // quantized, one per step
    GenerationTrace trace;
    std::vector<std::vector<diffusion::Latent>> recordings;  // per step
};

struct FirstStepResult {
    util::Image image;
    StepTrace trace;
    std::vector<diffusion::Latent> recorded;
};

/// First scene: B gaussian-seeded generations; pick the candidate whose
/// image embedding is most similar to the caption embedding.
FirstStepResult synthesize_first(const synth::Task& task, const synth::Palette& palette,
                                 const Models& models, int B, uint64_t seed,
                                 int record_w, int threads = 0);

/// Full multi-scene synthesis: captions from the contextualizer, candidate
/// latents from all prior steps, contrastive selection against the chosen
/// history.
SynthesisResult synthesize_task(const synth::Task& task, const synth::Palette& palette,
                                const Models& models, const SynthParams& params);

/// Writes step PPMs, optional cross-fade frames, trace.json and
/// sequence.json into out_dir. Read-back of a step frame equals the
/// in-memory image exactly.
void emit_sequence(const SynthesisResult& result, const std::string& out_dir,
                   int fade_frames = 0, bool dump_latents = false);

GenerationTrace load_trace(const std::string& path);

}  // namespace coseq::pipeline
