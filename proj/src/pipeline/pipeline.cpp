#include "pipeline/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "caption/captioner.hpp"
#include "json.hpp"
#include "nn/functional.hpp"
#include "util/binio.hpp"
#include "util/errors.hpp"
#include "util/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace coseq::pipeline {

void check_models_trained(const Models& models, bool need_selector) {
    if (!models.embedder.trained()) throw DependencyError("untrained model: embedder");
    if (!models.diffuser.trained()) throw DependencyError("untrained model: diffuser");
    if (need_selector && !models.head.trained()) {
        throw DependencyError("untrained model: selector");
    }
}

FirstStepResult synthesize_first(const synth::Task& task, const synth::Palette& palette,
                                 const Models& models, int B, uint64_t seed,
                                 int record_w, int threads) {
    if (B < 1) throw ConfigError("synthesize_first: B must be >= 1");
    if (task.steps.empty()) throw DomainError("synthesize_first: empty task");
    check_models_trained(models, /*need_selector=*/false);

    caption::Contextualizer ctx(palette);
    std::string cap = ctx.contextualize(task.steps[0].raw_text, {});
    nn::Tensor text_emb = models.embedder.encode_text(cap);
    nn::Tensor cond = embed::l2_normalize(text_emb);

    struct Cand {
        util::Image image;
        std::vector<diffusion::Latent> recorded;
        float sim = 0.0f;
    };
    std::vector<Cand> cands(static_cast<size_t>(B));
    util::parallel_for(B, threads, [&](int j) {
        util::Rng rng(util::derive_seed(seed, 1, static_cast<uint64_t>(j)));
        auto gen = models.diffuser.generate(&cond, nullptr, record_w, rng,
                                            /*source_step_tag=*/1);
        Cand c;
        c.image = util::quantize(gen.image);
        c.recorded = std::move(gen.recorded);
        c.sim = embed::similarity(text_emb, models.embedder.encode_image(c.image));
        cands[static_cast<size_t>(j)] = std::move(c);
    });

    std::vector<float> sims;
    for (const auto& c : cands) sims.push_back(c.sim);
    nn::Tensor probs = nn::softmax(nn::Tensor::vec(sims));
    int best = 0;
    for (int j = 1; j < B; ++j) {
        if (sims[static_cast<size_t>(j)] > sims[static_cast<size_t>(best)]) best = j;
    }

    FirstStepResult out;
    out.image = cands[static_cast<size_t>(best)].image;
    out.recorded = std::move(cands[static_cast<size_t>(best)].recorded);
    out.trace.index = 1;
    out.trace.caption = cap;
    out.trace.chosen_index = best;
    int T = models.diffuser.config().T;
    for (int j = 0; j < B; ++j) {
        out.trace.candidates.push_back(CandidateRecord{
            0, T, sims[static_cast<size_t>(j)], probs.data[static_cast<size_t>(j)]});
    }
    return out;
}

SynthesisResult synthesize_task(const synth::Task& task, const synth::Palette& palette,
                                const Models& models, const SynthParams& params) {
    if (params.w < 0) throw ConfigError("synthesize_task: w must be >= 0");
    if (params.w >= models.diffuser.config().T) {
        throw ConfigError("synthesize_task: w must be < T");
    }
    check_models_trained(models, task.steps.size() > 1);

    caption::Contextualizer ctx(palette);
    std::vector<std::string> raws;
    for (const auto& s : task.steps) raws.push_back(s.raw_text);
    std::vector<caption::ResolvedStep> resolved = ctx.resolve_task(raws);

    SynthesisResult result;
    result.trace.task_id = task.id;
    result.trace.seed = params.seed;
    result.trace.w = params.w;
    result.trace.B = params.B;
    result.trace.resume_at_source_iter = params.resume_at_source_iter;
    result.trace.guidance = models.diffuser.config().guidance;
    result.trace.T = models.diffuser.config().T;

    int n_steps = static_cast<int>(task.steps.size());
    std::vector<embed::SceneEmbedding> history;

    FirstStepResult first = synthesize_first(task, palette, models, params.B, params.seed,
                                             params.w, params.threads);
    result.images.push_back(first.image);
    result.recordings.push_back(std::move(first.recorded));
    result.trace.steps.push_back(std::move(first.trace));
    history.push_back(models.embedder.encode_scene(resolved[0].caption, result.images[0]));

    for (int n = 2; n <= n_steps; ++n) {
        const std::string& cap = resolved[static_cast<size_t>(n - 1)].caption;
        nn::Tensor cond = embed::l2_normalize(models.embedder.encode_text(cap));
        std::vector<diffusion::Latent> seeds =
            diffusion::candidate_latents(result.recordings, params.w);

        int n_cand = static_cast<int>(seeds.size());
        std::vector<selector::CandidateScene> cands(static_cast<size_t>(n_cand));
        std::vector<std::vector<diffusion::Latent>> cand_recordings(
            static_cast<size_t>(n_cand));
        util::parallel_for(n_cand, params.threads, [&](int j) {
            const diffusion::Latent& seed_latent = seeds[static_cast<size_t>(j)];
            util::Rng rng(util::derive_seed(params.seed, static_cast<uint64_t>(n),
                                            static_cast<uint64_t>(j)));
            int start_iter = params.resume_at_source_iter ? seed_latent.iter : -1;
            auto gen = models.diffuser.generate(&cond, &seed_latent.x, params.w, rng, n,
                                                start_iter);
            selector::CandidateScene c;
            c.caption = cap;
            c.image = util::quantize(gen.image);
            c.source_step = seed_latent.source_step;
            c.source_latent_iter = seed_latent.iter;
            c.embedding = models.embedder.encode_scene(cap, c.image);
            cands[static_cast<size_t>(j)] = std::move(c);
            cand_recordings[static_cast<size_t>(j)] = std::move(gen.recorded);
        });

        selector::SelectResult sel = models.head.select(cands, history);

        StepTrace st;
        st.index = n;
        st.caption = cap;
        st.chosen_index = sel.chosen_index;
        for (int j = 0; j < n_cand; ++j) {
            st.candidates.push_back(CandidateRecord{
                cands[static_cast<size_t>(j)].source_step,
                cands[static_cast<size_t>(j)].source_latent_iter,
                sel.scores[static_cast<size_t>(j)], sel.probs[static_cast<size_t>(j)]});
        }
        const auto& chosen = cands[static_cast<size_t>(sel.chosen_index)];
        result.images.push_back(chosen.image);
        result.recordings.push_back(
            std::move(cand_recordings[static_cast<size_t>(sel.chosen_index)]));
        history.push_back(chosen.embedding);
        result.trace.steps.push_back(std::move(st));
    }
    return result;
}

// ---------------------------------------------------------------------------
// emission
// ---------------------------------------------------------------------------

static std::string step_file(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "step_%02d.ppm", index);
    return buf;
}

static json trace_to_json(const GenerationTrace& t) {
    json out;
    out["format"] = "coseq-trace-v1";
    out["task_id"] = t.task_id;
    out["seed"] = t.seed;
    out["config"] = {{"w", t.w},
                     {"B", t.B},
                     {"resume_at_source_iter", t.resume_at_source_iter},
                     {"guidance", t.guidance},
                     {"T", t.T}};
    json steps = json::array();
    for (const auto& s : t.steps) {
        json js;
        js["index"] = s.index;
        js["caption"] = s.caption;
        js["chosen_index"] = s.chosen_index;
        js["image"] = step_file(s.index);
        json cands = json::array();
        for (const auto& c : s.candidates) {
            cands.push_back({{"source_step", c.source_step},
                             {"iter", c.iter},
                             {"score", c.score},
                             {"prob", c.prob}});
        }
        js["candidates"] = std::move(cands);
        steps.push_back(std::move(js));
    }
    out["steps"] = std::move(steps);
    return out;
}

void emit_sequence(const SynthesisResult& result, const std::string& out_dir,
                   int fade_frames, bool dump_latents) {
    fs::create_directories(out_dir);
    json manifest;
    manifest["format"] = "coseq-sequence-v1";
    manifest["task_id"] = result.trace.task_id;
    json steps = json::array();
    for (size_t i = 0; i < result.images.size(); ++i) {
        int index = static_cast<int>(i) + 1;
        util::write_ppm((fs::path(out_dir) / step_file(index)).string(), result.images[i]);
        steps.push_back({{"index", index},
                         {"image", step_file(index)},
                         {"caption", result.trace.steps[i].caption}});
    }
    manifest["steps"] = std::move(steps);

    json fades = json::array();
    for (size_t i = 0; i + 1 < result.images.size() && fade_frames > 0; ++i) {
        const util::Image& a = result.images[i];
        const util::Image& b = result.images[i + 1];
        for (int k = 1; k <= fade_frames; ++k) {
            float alpha = static_cast<float>(k) / static_cast<float>(fade_frames + 1);
            util::Image f(a.width, a.height);
            for (size_t p = 0; p < f.px.size(); ++p) {
                f.px[p] = (1.0f - alpha) * a.px[p] + alpha * b.px[p];
            }
            char buf[48];
            std::snprintf(buf, sizeof(buf), "fade_%02d_%02d_%d.ppm",
                          static_cast<int>(i) + 1, static_cast<int>(i) + 2, k);
            util::write_ppm((fs::path(out_dir) / buf).string(), f);
            fades.push_back(buf);
        }
    }
    manifest["fades"] = std::move(fades);

    if (dump_latents) {
        fs::create_directories(fs::path(out_dir) / "latents");
        for (size_t i = 0; i < result.recordings.size(); ++i) {
            for (const auto& latent : result.recordings[i]) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "latents/step_%02d_iter_%02d.bin",
                              static_cast<int>(i) + 1, latent.iter);
                util::save_raw_tensor((fs::path(out_dir) / buf).string(), latent.x.shape,
                                      latent.x.data);
            }
        }
    }

    {
        std::ofstream f(fs::path(out_dir) / "sequence.json");
        if (!f) throw IoError("emit_sequence: cannot write sequence.json");
        f << manifest.dump(2) << "\n";
    }
    {
        std::ofstream f(fs::path(out_dir) / "trace.json");
        if (!f) throw IoError("emit_sequence: cannot write trace.json");
        f << trace_to_json(result.trace).dump(2) << "\n";
    }
}

GenerationTrace load_trace(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("load_trace: cannot open " + path);
    json j = json::parse(f);
    if (j.value("format", "") != "coseq-trace-v1") {
        throw FormatError("load_trace: unsupported trace format");
    }
    GenerationTrace t;
    t.task_id = j.at("task_id").get<std::string>();
    t.seed = j.at("seed").get<uint64_t>();
    t.w = j.at("config").at("w").get<int>();
    t.B = j.at("config").at("B").get<int>();
    t.resume_at_source_iter = j.at("config").at("resume_at_source_iter").get<bool>();
    t.guidance = j.at("config").at("guidance").get<float>();
    t.T = j.at("config").at("T").get<int>();
    for (const auto& js : j.at("steps")) {
        StepTrace st;
        st.index = js.at("index").get<int>();
        st.caption = js.at("caption").get<std::string>();
        st.chosen_index = js.at("chosen_index").get<int>();
        for (const auto& jc : js.at("candidates")) {
            st.candidates.push_back(CandidateRecord{
                jc.at("source_step").get<int>(), jc.at("iter").get<int>(),
                jc.at("score").get<float>(), jc.at("prob").get<float>()});
        }
        t.steps.push_back(std::move(st));
    }
    return t;
}

}  // namespace coseq::pipeline
