#include "coseq/coseq.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "caption/captioner.hpp"
#include "diffusion/diffuser.hpp"
#include "embed/embedder.hpp"
#include "evalkit/evalkit.hpp"
#include "evalkit/report.hpp"
#include "json.hpp"
#include "pipeline/pipeline.hpp"
#include "selector/selector.hpp"
#include "synth/corpus.hpp"
#include "util/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

struct coseq_corpus {
    coseq::synth::Corpus corpus;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

template <typename Fn>
coseq_status wrap(Fn&& fn) {
    using namespace coseq;
    try {
        fn();
        return COSEQ_OK;
    } catch (const ConfigError& e) {
        set_error(e.what());
        return COSEQ_ERR_CONFIG;
    } catch (const DimensionError& e) {
        set_error(e.what());
        return COSEQ_ERR_DIMENSION;
    } catch (const VocabularyError& e) {
        set_error(e.what());
        return COSEQ_ERR_VOCABULARY;
    } catch (const caption::UnresolvedReference& e) {
        set_error(e.what());
        return COSEQ_ERR_UNRESOLVED_REFERENCE;
    } catch (const StateError& e) {
        set_error(e.what());
        return COSEQ_ERR_STATE;
    } catch (const DependencyError& e) {
        set_error(e.what());
        return COSEQ_ERR_DEPENDENCY;
    } catch (const FormatError& e) {
        set_error(e.what());
        return COSEQ_ERR_FORMAT;
    } catch (const IoError& e) {
        set_error(e.what());
        return COSEQ_ERR_IO;
    } catch (const NumericError& e) {
        set_error(e.what());
        return COSEQ_ERR_NUMERIC;
    } catch (const DomainError& e) {
        set_error(e.what());
        return COSEQ_ERR_DOMAIN;
    } catch (const std::exception& e) {
        set_error(e.what());
        return COSEQ_ERR_INTERNAL;
    } catch (...) {
        set_error("unknown error");
        return COSEQ_ERR_INTERNAL;
    }
}

coseq_status invalid_arg(const std::string& msg) {
    set_error(msg);
    return COSEQ_ERR_INVALID_ARG;
}

coseq::nn::OptimConfig to_optim(const coseq_optim_params* p) {
    coseq::nn::OptimConfig cfg;
    if (p != nullptr) {
        cfg.learning_rate = static_cast<float>(p->learning_rate);
        cfg.beta1 = static_cast<float>(p->beta1);
        cfg.beta2 = static_cast<float>(p->beta2);
        cfg.eps = static_cast<float>(p->eps);
        cfg.batch_size = p->batch_size;
        cfg.epochs = p->epochs;
        cfg.seed = p->seed;
    }
    return cfg;
}

coseq::pipeline::SynthParams to_synth(const coseq_synth_params* p) {
    coseq::pipeline::SynthParams sp;
    if (p != nullptr) {
        sp.w = p->w;
        sp.B = p->B;
        sp.seed = p->seed;
        sp.resume_at_source_iter = p->resume_at_source_iter != 0;
        sp.fade_frames = p->fade_frames;
        sp.threads = p->threads;
        sp.dump_latents = p->dump_latents != 0;
    }
    return sp;
}

coseq::pipeline::Models load_models(const char* embedder_ckpt, const char* diffuser_ckpt,
                                    const char* selector_ckpt) {
    coseq::pipeline::Models m;
    if (embedder_ckpt != nullptr) m.embedder.load(embedder_ckpt);
    if (diffuser_ckpt != nullptr) m.diffuser.load(diffuser_ckpt);
    if (selector_ckpt != nullptr) m.head.load(selector_ckpt);
    return m;
}

const coseq::synth::Task* find_task(const coseq::synth::Corpus& corpus,
                                    const std::string& id) {
    for (const auto& t : corpus.tasks) {
        if (t.id == id) return &t;
    }
    return nullptr;
}

void write_run_json(const std::string& out_dir, const std::string& command,
                    const json& config) {
    json run;
    run["command"] = command;
    run["config"] = config;
    std::ofstream f(fs::path(out_dir) / "run.json");
    if (!f) throw coseq::IoError("cannot write run.json in " + out_dir);
    f << run.dump(2) << "\n";
}

}  // namespace

extern "C" {

const char* coseq_status_name(coseq_status s) {
    switch (s) {
        case COSEQ_OK: return "ok";
        case COSEQ_ERR_INVALID_ARG: return "invalid_arg";
        case COSEQ_ERR_CONFIG: return "config";
        case COSEQ_ERR_DIMENSION: return "dimension";
        case COSEQ_ERR_DOMAIN: return "domain";
        case COSEQ_ERR_VOCABULARY: return "vocabulary";
        case COSEQ_ERR_STATE: return "state";
        case COSEQ_ERR_DEPENDENCY: return "dependency";
        case COSEQ_ERR_UNRESOLVED_REFERENCE: return "unresolved_reference";
        case COSEQ_ERR_FORMAT: return "format";
        case COSEQ_ERR_IO: return "io";
        case COSEQ_ERR_NUMERIC: return "numeric";
        case COSEQ_ERR_INTERNAL: return "internal";
    }
    return "?";
}

const char* coseq_last_error(void) { return g_last_error.c_str(); }

const char* coseq_version(void) { return "coseq 0.1.0"; }

void coseq_corpus_params_init(coseq_corpus_params* p) {
    if (p == nullptr) return;
    coseq::synth::CorpusConfig def;
    p->n_tasks = def.n_tasks;
    p->mean_steps = def.mean_steps;
    p->nonlinear_fraction = def.nonlinear_fraction;
    p->image_size = def.image_width;
    p->rng_seed = def.rng_seed;
}

coseq_status coseq_corpus_generate(const coseq_corpus_params* p, coseq_corpus** out) {
    if (p == nullptr || out == nullptr) return invalid_arg("corpus_generate: null arg");
    return wrap([&] {
        coseq::synth::CorpusConfig cfg;
        cfg.n_tasks = p->n_tasks;
        cfg.mean_steps = p->mean_steps;
        cfg.nonlinear_fraction = p->nonlinear_fraction;
        cfg.image_width = p->image_size;
        cfg.image_height = p->image_size;
        cfg.rng_seed = p->rng_seed;
        auto* handle = new coseq_corpus{coseq::synth::generate_corpus(cfg)};
        *out = handle;
    });
}

coseq_status coseq_corpus_open(const char* dir, coseq_corpus** out) {
    if (dir == nullptr || out == nullptr) return invalid_arg("corpus_open: null arg");
    return wrap([&] { *out = new coseq_corpus{coseq::synth::load_corpus(dir)}; });
}

coseq_status coseq_corpus_save(const coseq_corpus* c, const char* dir) {
    if (c == nullptr || dir == nullptr) return invalid_arg("corpus_save: null arg");
    return wrap([&] { coseq::synth::save_corpus(c->corpus, dir); });
}

void coseq_corpus_free(coseq_corpus* c) { delete c; }

int coseq_corpus_task_count(const coseq_corpus* c) {
    return c == nullptr ? 0 : static_cast<int>(c->corpus.tasks.size());
}

int coseq_corpus_step_count(const coseq_corpus* c) {
    return c == nullptr ? 0 : c->corpus.total_steps();
}

void coseq_optim_params_init(coseq_optim_params* p) {
    if (p == nullptr) return;
    coseq::nn::OptimConfig def;
    p->learning_rate = def.learning_rate;
    p->beta1 = def.beta1;
    p->beta2 = def.beta2;
    p->eps = def.eps;
    p->batch_size = def.batch_size;
    p->epochs = def.epochs;
    p->seed = def.seed;
}

coseq_status coseq_train_embedder(const coseq_corpus* corpus, double train_frac,
                                  const coseq_optim_params* optim, int verbose,
                                  const char* out_ckpt, double* heldout_top1) {
    if (corpus == nullptr || out_ckpt == nullptr) {
        return invalid_arg("train_embedder: null arg");
    }
    return wrap([&] {
        auto [train, heldout] = coseq::synth::split_corpus(corpus->corpus, train_frac);
        coseq::embed::EmbedderConfig cfg;
        if (optim != nullptr) cfg.optim = to_optim(optim);
        coseq::embed::Embedder e;
        e.init(cfg, coseq::synth::grammar_vocab(corpus->corpus.config.palette),
               corpus->corpus.config.image_width, corpus->corpus.config.image_height,
               cfg.optim.seed);
        e.train(train, verbose ? &std::cout : nullptr);
        e.save(out_ckpt);
        if (heldout_top1 != nullptr) {
            *heldout_top1 = coseq::embed::eval_retrieval_top1(e, heldout, 32, 42);
        }
    });
}

coseq_status coseq_train_diffuser(const coseq_corpus* corpus, const char* embedder_ckpt,
                                  double train_frac, const coseq_optim_params* optim,
                                  int epochs_override, int verbose, const char* out_ckpt,
                                  double* final_loss) {
    if (corpus == nullptr || embedder_ckpt == nullptr || out_ckpt == nullptr) {
        return invalid_arg("train_diffuser: null arg");
    }
    return wrap([&] {
        auto [train, heldout] = coseq::synth::split_corpus(corpus->corpus, train_frac);
        coseq::embed::Embedder e;
        e.load(embedder_ckpt);
        coseq::diffusion::DiffuserConfig cfg;
        cfg.cond_dim = e.dim();
        cfg.image_width = corpus->corpus.config.image_width;
        cfg.image_height = corpus->corpus.config.image_height;
        if (optim != nullptr) cfg.optim = to_optim(optim);
        if (epochs_override > 0) cfg.optim.epochs = epochs_override;
        coseq::diffusion::Diffuser d;
        d.init(cfg, cfg.optim.seed);
        auto report = d.train(train, e, verbose ? &std::cout : nullptr);
        d.save(out_ckpt);
        if (final_loss != nullptr && !report.epoch_losses.empty()) {
            *final_loss = report.epoch_losses.back();
        }
    });
}

coseq_status coseq_train_selector(const coseq_corpus* corpus, const char* embedder_ckpt,
                                  double train_frac, int m_tasks,
                                  const coseq_optim_params* optim, int verbose,
                                  const char* out_ckpt, double* heldout_acc) {
    if (corpus == nullptr || embedder_ckpt == nullptr || out_ckpt == nullptr) {
        return invalid_arg("train_selector: null arg");
    }
    return wrap([&] {
        auto [train, heldout] = coseq::synth::split_corpus(corpus->corpus, train_frac);
        coseq::embed::Embedder e;
        e.load(embedder_ckpt);
        coseq::selector::SelectorConfig cfg;
        cfg.d = e.dim();
        cfg.m_tasks = m_tasks;
        if (optim != nullptr) cfg.optim = to_optim(optim);
        coseq::selector::SelectionHead head;
        head.init(cfg, cfg.optim.seed);
        head.train(train, e, coseq::selector::InputVariant::standard,
                   verbose ? &std::cout : nullptr);
        head.save(out_ckpt);
        if (heldout_acc != nullptr) {
            *heldout_acc = coseq::selector::eval_selection_accuracy(head, heldout, e);
        }
    });
}

coseq_status coseq_caption_task(const coseq_corpus* corpus, const char* task_id,
                                char** json_out) {
    if (corpus == nullptr || task_id == nullptr || json_out == nullptr) {
        return invalid_arg("caption_task: null arg");
    }
    return wrap([&] {
        const auto* task = find_task(corpus->corpus, task_id);
        if (task == nullptr) {
            throw coseq::DomainError("caption_task: no task '" + std::string(task_id) + "'");
        }
        coseq::caption::Contextualizer ctx(corpus->corpus.config.palette);
        std::vector<std::string> raws;
        for (const auto& s : task->steps) raws.push_back(s.raw_text);
        auto resolved = ctx.resolve_task(raws);
        json arr = json::array();
        for (size_t i = 0; i < raws.size(); ++i) {
            arr.push_back({{"index", static_cast<int>(i) + 1},
                           {"raw", raws[i]},
                           {"caption", resolved[i].caption}});
        }
        std::string s = arr.dump(2);
        char* buf = new char[s.size() + 1];
        std::memcpy(buf, s.c_str(), s.size() + 1);
        *json_out = buf;
    });
}

void coseq_string_free(char* s) { delete[] s; }

void coseq_synth_params_init(coseq_synth_params* p) {
    if (p == nullptr) return;
    coseq::pipeline::SynthParams def;
    p->w = def.w;
    p->B = def.B;
    p->seed = def.seed;
    p->resume_at_source_iter = def.resume_at_source_iter ? 1 : 0;
    p->fade_frames = def.fade_frames;
    p->threads = def.threads;
    p->dump_latents = def.dump_latents ? 1 : 0;
}

coseq_status coseq_synthesize(const coseq_corpus* corpus, const char* embedder_ckpt,
                              const char* diffuser_ckpt, const char* selector_ckpt,
                              const char* task_id, const coseq_synth_params* params,
                              const char* out_dir) {
    if (corpus == nullptr || embedder_ckpt == nullptr || diffuser_ckpt == nullptr ||
        selector_ckpt == nullptr || task_id == nullptr || out_dir == nullptr) {
        return invalid_arg("synthesize: null arg");
    }
    return wrap([&] {
        const auto* task = find_task(corpus->corpus, task_id);
        if (task == nullptr) {
            throw coseq::DomainError("synthesize: no task '" + std::string(task_id) + "'");
        }
        auto models = load_models(embedder_ckpt, diffuser_ckpt, selector_ckpt);
        auto sp = to_synth(params);
        auto result = coseq::pipeline::synthesize_task(*task, corpus->corpus.config.palette,
                                                       models, sp);
        coseq::pipeline::emit_sequence(result, out_dir, sp.fade_frames, sp.dump_latents);
    });
}

coseq_status coseq_evaluate(const coseq_corpus* corpus, const char* embedder_ckpt,
                            const char* diffuser_ckpt, const char* selector_ckpt,
                            double train_frac, int limit,
                            const coseq_synth_params* params, const char* out_dir) {
    if (corpus == nullptr || embedder_ckpt == nullptr || diffuser_ckpt == nullptr ||
        selector_ckpt == nullptr || out_dir == nullptr) {
        return invalid_arg("evaluate: null arg");
    }
    return wrap([&] {
        using namespace coseq;
        auto [train, heldout] = synth::split_corpus(corpus->corpus, train_frac);
        auto models = load_models(embedder_ckpt, diffuser_ckpt, selector_ckpt);
        auto sp = to_synth(params);
        int n = std::min<int>(limit > 0 ? limit : static_cast<int>(heldout.tasks.size()),
                              static_cast<int>(heldout.tasks.size()));
        fs::create_directories(fs::path(out_dir) / "traces");

        std::vector<pipeline::GenerationTrace> traces;
        std::vector<std::vector<std::string>> rows;
        double sum_tv = 0.0, sum_vv = 0.0;
        for (int i = 0; i < n; ++i) {
            const synth::Task& task = heldout.tasks[static_cast<size_t>(i)];
            auto result = pipeline::synthesize_task(task, heldout.config.palette, models, sp);
            std::vector<std::string> captions;
            for (const auto& st : result.trace.steps) captions.push_back(st.caption);
            double tv = evalkit::eval_tv(result.images, captions, models.embedder);
            double vv = result.images.size() >= 2
                            ? evalkit::eval_vv(result.images, models.embedder)
                            : 100.0;
            sum_tv += tv;
            sum_vv += vv;
            pipeline::emit_sequence(result,
                                    (fs::path(out_dir) / "traces" / task.id).string(),
                                    sp.fade_frames, sp.dump_latents);
            traces.push_back(result.trace);
            rows.push_back({task.id, evalkit::format_cell(tv), evalkit::format_cell(vv)});
        }
        rows.push_back({"mean", evalkit::format_cell(sum_tv / std::max(1, n)),
                        evalkit::format_cell(sum_vv / std::max(1, n))});
        evalkit::write_csv((fs::path(out_dir) / "metrics.csv").string(),
                           {"task_id", "tv", "vv"}, rows);

        auto hist = evalkit::usage_histograms(traces);
        std::vector<std::vector<std::string>> offset_rows;
        std::vector<evalkit::Bar> offset_bars;
        for (size_t k = 1; k < hist.step_offset_totals.size(); ++k) {
            offset_rows.push_back({std::to_string(k),
                                   evalkit::format_cell(hist.step_offset_mean[k]),
                                   std::to_string(hist.step_offset_totals[k])});
            offset_bars.push_back(
                {"-" + std::to_string(k), hist.step_offset_mean[k]});
        }
        evalkit::write_csv((fs::path(out_dir) / "step_usage.csv").string(),
                           {"offset", "mean_count", "total"}, offset_rows);
        evalkit::write_bars_svg((fs::path(out_dir) / "step_usage.svg").string(),
                                "source step offset usage", offset_bars);
        std::vector<std::vector<std::string>> iter_rows;
        std::vector<evalkit::Bar> iter_bars;
        for (const auto& [iter, total] : hist.latent_iter_totals) {
            iter_rows.push_back({std::to_string(iter),
                                 evalkit::format_cell(hist.latent_iter_mean.at(iter)),
                                 std::to_string(total)});
            iter_bars.push_back({std::to_string(iter), hist.latent_iter_mean.at(iter)});
        }
        evalkit::write_csv((fs::path(out_dir) / "latent_usage.csv").string(),
                           {"iter", "mean_count", "total"}, iter_rows);
        evalkit::write_bars_svg((fs::path(out_dir) / "latent_usage.svg").string(),
                                "latent iteration usage", iter_bars);

        auto nl = evalkit::nonlinearity_score(traces, heldout, 3);
        evalkit::write_csv(
            (fs::path(out_dir) / "nonlinearity.csv").string(),
            {"decisions", "cosed_hit_rate", "baseline_hit_rate", "p_value"},
            {{std::to_string(nl.decisions), evalkit::format_cell(nl.cosed_hit_rate),
              evalkit::format_cell(nl.baseline_hit_rate),
              evalkit::format_cell(nl.p_value)}});

        write_run_json(out_dir, "evaluate",
                       {{"train_frac", train_frac},
                        {"limit", n},
                        {"w", sp.w},
                        {"B", sp.B},
                        {"seed", sp.seed},
                        {"resume_at_source_iter", sp.resume_at_source_iter}});
    });
}

coseq_status coseq_ablate_latents(const coseq_corpus* corpus, const char* embedder_ckpt,
                                  const char* diffuser_ckpt, const char* selector_ckpt,
                                  const int* positions, int n_positions, int limit,
                                  const coseq_synth_params* params, const char* out_dir) {
    if (corpus == nullptr || embedder_ckpt == nullptr || diffuser_ckpt == nullptr ||
        selector_ckpt == nullptr || positions == nullptr || out_dir == nullptr) {
        return invalid_arg("ablate_latents: null arg");
    }
    if (n_positions < 1) return invalid_arg("ablate_latents: need at least one position");
    return wrap([&] {
        using namespace coseq;
        auto models = load_models(embedder_ckpt, diffuser_ckpt, selector_ckpt);
        auto sp = to_synth(params);
        int n = std::min<int>(limit > 0 ? limit : 8,
                              static_cast<int>(corpus->corpus.tasks.size()));
        std::vector<int> task_indices;
        for (int i = 0; i < n; ++i) task_indices.push_back(i);
        std::vector<int> pos(positions, positions + n_positions);
        auto rows = evalkit::ablate_latents(corpus->corpus, task_indices, models, pos, sp);
        fs::create_directories(out_dir);
        std::vector<std::vector<std::string>> csv_rows;
        std::vector<evalkit::ScatterPoint> points;
        for (const auto& r : rows) {
            csv_rows.push_back(
                {r.config, evalkit::format_cell(r.tv), evalkit::format_cell(r.vv)});
            points.push_back({r.vv, r.tv, r.config});
        }
        evalkit::write_csv((fs::path(out_dir) / "ablate_latents.csv").string(),
                           {"config", "tv", "vv"}, csv_rows);
        evalkit::write_scatter_svg((fs::path(out_dir) / "ablate_latents.svg").string(),
                                   "latent position sweep", "visual similarity (VV)",
                                   "semantic similarity (TV)", points);
        write_run_json(out_dir, "ablate-latents",
                       {{"positions", pos}, {"limit", n}, {"seed", sp.seed},
                        {"resume_at_source_iter", sp.resume_at_source_iter}});
    });
}

coseq_status coseq_ablate_modality(const coseq_corpus* corpus, const char* embedder_ckpt,
                                   double train_frac, int m_tasks,
                                   const coseq_optim_params* optim, int verbose,
                                   const char* out_dir) {
    if (corpus == nullptr || embedder_ckpt == nullptr || out_dir == nullptr) {
        return invalid_arg("ablate_modality: null arg");
    }
    return wrap([&] {
        using namespace coseq;
        auto [train, heldout] = synth::split_corpus(corpus->corpus, train_frac);
        embed::Embedder e;
        e.load(embedder_ckpt);
        selector::SelectorConfig cfg;
        cfg.d = e.dim();
        cfg.m_tasks = m_tasks;
        if (optim != nullptr) cfg.optim = to_optim(optim);
        auto rows = evalkit::modality_ablation(train, heldout, e, cfg,
                                               verbose ? &std::cout : nullptr);
        fs::create_directories(out_dir);
        std::vector<std::vector<std::string>> csv_rows;
        for (const auto& r : rows) {
            csv_rows.push_back({r.variant, evalkit::format_cell(r.heldout_accuracy)});
        }
        evalkit::write_csv((fs::path(out_dir) / "modality_ablation.csv").string(),
                           {"variant", "heldout_accuracy"}, csv_rows);
        write_run_json(out_dir, "ablate-modality",
                       {{"train_frac", train_frac}, {"m_tasks", m_tasks}});
    });
}

coseq_status coseq_histograms(const char* const* trace_paths, int n_traces,
                              const char* out_dir) {
    if (trace_paths == nullptr || out_dir == nullptr) {
        return invalid_arg("histograms: null arg");
    }
    if (n_traces < 1) return invalid_arg("histograms: need at least one trace");
    return wrap([&] {
        using namespace coseq;
        std::vector<pipeline::GenerationTrace> traces;
        for (int i = 0; i < n_traces; ++i) {
            traces.push_back(pipeline::load_trace(trace_paths[i]));
        }
        auto hist = evalkit::usage_histograms(traces);
        fs::create_directories(out_dir);
        std::vector<std::vector<std::string>> offset_rows;
        std::vector<evalkit::Bar> offset_bars;
        for (size_t k = 1; k < hist.step_offset_totals.size(); ++k) {
            offset_rows.push_back({std::to_string(k),
                                   evalkit::format_cell(hist.step_offset_mean[k]),
                                   std::to_string(hist.step_offset_totals[k])});
            offset_bars.push_back({"-" + std::to_string(k), hist.step_offset_mean[k]});
        }
        evalkit::write_csv((fs::path(out_dir) / "step_usage.csv").string(),
                           {"offset", "mean_count", "total"}, offset_rows);
        evalkit::write_bars_svg((fs::path(out_dir) / "step_usage.svg").string(),
                                "source step offset usage", offset_bars);
        std::vector<std::vector<std::string>> iter_rows;
        std::vector<evalkit::Bar> iter_bars;
        for (const auto& [iter, total] : hist.latent_iter_totals) {
            iter_rows.push_back({std::to_string(iter),
                                 evalkit::format_cell(hist.latent_iter_mean.at(iter)),
                                 std::to_string(total)});
            iter_bars.push_back({std::to_string(iter), hist.latent_iter_mean.at(iter)});
        }
        evalkit::write_csv((fs::path(out_dir) / "latent_usage.csv").string(),
                           {"iter", "mean_count", "total"}, iter_rows);
        evalkit::write_bars_svg((fs::path(out_dir) / "latent_usage.svg").string(),
                                "latent iteration usage", iter_bars);
    });
}

}  // extern "C"
