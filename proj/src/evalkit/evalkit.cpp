#include "evalkit/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "caption/captioner.hpp"
#include "util/errors.hpp"

namespace coseq::evalkit {

double eval_tv(const std::vector<util::Image>& images,
               const std::vector<std::string>& captions, const embed::Embedder& e) {
    if (images.size() != captions.size()) {
        throw DimensionError("eval_tv: images and captions differ in length");
    }
    if (images.empty()) throw DomainError("eval_tv: empty sequence");
    double acc = 0.0;
    for (size_t i = 0; i < images.size(); ++i) {
        nn::Tensor t = e.encode_text(captions[i]);
        nn::Tensor v = e.encode_image(images[i]);
        acc += 100.0 * embed::similarity(t, v);
    }
    return acc / static_cast<double>(images.size());
}

double eval_vv(const std::vector<util::Image>& images, const embed::Embedder& e,
               bool all_pairs) {
    if (images.size() < 2) throw DomainError("eval_vv: need at least 2 images");
    std::vector<nn::Tensor> embs;
    embs.reserve(images.size());
    for (const auto& img : images) embs.push_back(e.encode_image(img));
    double acc = 0.0;
    int count = 0;
    if (all_pairs) {
        for (size_t i = 0; i < embs.size(); ++i) {
            for (size_t j = i + 1; j < embs.size(); ++j) {
                acc += 100.0 * embed::similarity(embs[i], embs[j]);
                ++count;
            }
        }
    } else {
        for (size_t i = 0; i + 1 < embs.size(); ++i) {
            acc += 100.0 * embed::similarity(embs[i], embs[i + 1]);
            ++count;
        }
    }
    return acc / count;
}

// ---------------------------------------------------------------------------

UsageHistograms usage_histograms(const std::vector<pipeline::GenerationTrace>& traces) {
    if (traces.empty()) throw DomainError("usage_histograms: no traces");
    UsageHistograms h;
    h.n_traces = static_cast<int>(traces.size());
    for (const auto& trace : traces) {
        for (const auto& st : trace.steps) {
            if (st.index < 2) continue;  // first step has no prior source
            const auto& chosen = st.chosen();
            int offset = st.index - chosen.source_step;
            if (offset < 1) throw FormatError("usage_histograms: bad source step in trace");
            if (static_cast<int>(h.step_offset_totals.size()) <= offset) {
                h.step_offset_totals.resize(static_cast<size_t>(offset) + 1, 0);
            }
            h.step_offset_totals[static_cast<size_t>(offset)] += 1;
            h.latent_iter_totals[chosen.iter] += 1;
            h.total_selections += 1;
        }
    }
    h.step_offset_mean.resize(h.step_offset_totals.size(), 0.0);
    for (size_t i = 0; i < h.step_offset_totals.size(); ++i) {
        h.step_offset_mean[i] =
            static_cast<double>(h.step_offset_totals[i]) / h.n_traces;
    }
    for (const auto& [iter, total] : h.latent_iter_totals) {
        h.latent_iter_mean[iter] = static_cast<double>(total) / h.n_traces;
    }
    return h;
}

double binomial_tail_p(int k, int n, double p) {
    if (k <= 0) return 1.0;
    if (k > n) return 0.0;
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return 1.0;
    double log_p = std::log(p), log_q = std::log1p(-p);
    double acc = 0.0;
    for (int i = k; i <= n; ++i) {
        double log_term = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                          std::lgamma(n - i + 1.0) + i * log_p + (n - i) * log_q;
        acc += std::exp(log_term);
    }
    return std::min(1.0, acc);
}

NonlinearityReport nonlinearity_score(const std::vector<pipeline::GenerationTrace>& traces,
                                      const synth::Corpus& corpus, int min_step) {
    NonlinearityReport r;
    for (const auto& trace : traces) {
        const synth::Task* task = nullptr;
        for (const auto& t : corpus.tasks) {
            if (t.id == trace.task_id) {
                task = &t;
                break;
            }
        }
        if (task == nullptr) {
            throw DomainError("nonlinearity_score: trace task '" + trace.task_id +
                              "' not in corpus");
        }
        for (const auto& st : trace.steps) {
            if (st.index < 2 || st.index < min_step) continue;
            int planted = task->steps[static_cast<size_t>(st.index - 1)].antecedent;
            int chosen_src = st.chosen().source_step;
            r.decisions += 1;
            r.cosed_hits += (chosen_src == planted);
            r.baseline_hits += (planted == st.index - 1);
        }
    }
    if (r.decisions > 0) {
        r.cosed_hit_rate = static_cast<double>(r.cosed_hits) / r.decisions;
        r.baseline_hit_rate = static_cast<double>(r.baseline_hits) / r.decisions;
        r.p_value = binomial_tail_p(r.cosed_hits, r.decisions, r.baseline_hit_rate);
    }
    return r;
}

// ---------------------------------------------------------------------------

namespace {

struct SequenceMetrics {
    double tv = 0.0;
    double vv = 0.0;
};

SequenceMetrics sequence_metrics(const std::vector<util::Image>& images,
                                 const std::vector<std::string>& captions,
                                 const embed::Embedder& e) {
    SequenceMetrics m;
    m.tv = eval_tv(images, captions, e);
    m.vv = images.size() >= 2 ? eval_vv(images, e) : 100.0;
    return m;
}

// One fixed-position sequence: step n is always seeded from z_t of step n-1.
SequenceMetrics run_fixed_position(const synth::Task& task, const synth::Palette& palette,
                                   const pipeline::Models& models, int position,
                                   const pipeline::SynthParams& params) {
    caption::Contextualizer ctx(palette);
    std::vector<std::string> raws;
    for (const auto& s : task.steps) raws.push_back(s.raw_text);
    auto resolved = ctx.resolve_task(raws);

    int T = models.diffuser.config().T;
    bool resume = params.resume_at_source_iter;
    std::vector<util::Image> images;
    std::vector<std::string> captions;

    // record through position t so the next step can seed from it
    int first_record_w = T - position;
    pipeline::FirstStepResult first = pipeline::synthesize_first(
        task, palette, models, params.B, params.seed, first_record_w, params.threads);
    images.push_back(first.image);
    captions.push_back(first.trace.caption);
    std::vector<diffusion::Latent> prev_recorded = std::move(first.recorded);

    for (int n = 2; n <= static_cast<int>(task.steps.size()); ++n) {
        const diffusion::Latent* seed_latent = nullptr;
        for (const auto& l : prev_recorded) {
            if (l.iter == position) {
                seed_latent = &l;
                break;
            }
        }
        if (seed_latent == nullptr) {
            throw StateError("ablate_latents: position " + std::to_string(position) +
                             " was not recorded");
        }
        const std::string& cap = resolved[static_cast<size_t>(n - 1)].caption;
        nn::Tensor cond = embed::l2_normalize(models.embedder.encode_text(cap));
        util::Rng rng(util::derive_seed(params.seed, static_cast<uint64_t>(n), 0x0F17ull));
        int start = resume ? position : -1;
        int record_w = resume ? 0 : T - position;
        auto gen = models.diffuser.generate(&cond, &seed_latent->x, record_w, rng, n, start);
        images.push_back(util::quantize(gen.image));
        captions.push_back(cap);
        prev_recorded = std::move(gen.recorded);
    }
    return sequence_metrics(images, captions, models.embedder);
}

}  // namespace

std::vector<LatentAblationRow> ablate_latents(const synth::Corpus& corpus,
                                              const std::vector<int>& task_indices,
                                              const pipeline::Models& models,
                                              const std::vector<int>& positions,
                                              const pipeline::SynthParams& params) {
    int T = models.diffuser.config().T;
    for (int p : positions) {
        if (p >= T) {
            throw DomainError("ablate_latents: position " + std::to_string(p) +
                              " >= T=" + std::to_string(T));
        }
        if (p < 1) throw DomainError("ablate_latents: position must be >= 1");
    }
    if (task_indices.empty()) throw DomainError("ablate_latents: no tasks selected");
    pipeline::check_models_trained(models);

    std::vector<LatentAblationRow> rows;
    for (int pos : positions) {
        double tv = 0.0, vv = 0.0;
        for (int ti : task_indices) {
            SequenceMetrics m = run_fixed_position(corpus.tasks[static_cast<size_t>(ti)],
                                                   corpus.config.palette, models, pos,
                                                   params);
            tv += m.tv;
            vv += m.vv;
        }
        LatentAblationRow row;
        row.config = "fixed_" + std::to_string(pos);
        row.position = pos;
        row.tv = tv / static_cast<double>(task_indices.size());
        row.vv = vv / static_cast<double>(task_indices.size());
        rows.push_back(row);
    }
    {
        double tv = 0.0, vv = 0.0;
        for (int ti : task_indices) {
            const synth::Task& task = corpus.tasks[static_cast<size_t>(ti)];
            auto result = pipeline::synthesize_task(task, corpus.config.palette, models,
                                                    params);
            std::vector<std::string> captions;
            for (const auto& st : result.trace.steps) captions.push_back(st.caption);
            SequenceMetrics m =
                sequence_metrics(result.images, captions, models.embedder);
            tv += m.tv;
            vv += m.vv;
        }
        LatentAblationRow row;
        row.config = "cosed";
        row.tv = tv / static_cast<double>(task_indices.size());
        row.vv = vv / static_cast<double>(task_indices.size());
        rows.push_back(row);
    }
    return rows;
}

std::vector<ModalityRow> modality_ablation(const synth::Corpus& train_corpus,
                                           const synth::Corpus& heldout_corpus,
                                           const embed::Embedder& embedder,
                                           const selector::SelectorConfig& cfg,
                                           std::ostream* log) {
    using selector::InputVariant;
    std::vector<ModalityRow> rows;
    for (InputVariant v : {InputVariant::standard, InputVariant::text_shuffled,
                           InputVariant::both_shuffled}) {
        selector::SelectionHead head;
        head.init(cfg, cfg.optim.seed);
        head.train(train_corpus, embedder, v, log);
        double acc = eval_selection_accuracy(head, heldout_corpus, embedder, v,
                                             cfg.optim.seed + 17);
        rows.push_back(ModalityRow{selector::input_variant_name(v), acc});
        if (log != nullptr) {
            (*log) << "modality " << selector::input_variant_name(v) << " heldout acc "
                   << acc << "\n";
        }
    }
    return rows;
}

}  // namespace coseq::evalkit
