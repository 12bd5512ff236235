// coseq command-line tool. Talks to the library exclusively through the
// public C API in coseq/coseq.h.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coseq/coseq.h"

namespace {

int fail(coseq_status s) {
    std::fprintf(stderr, "error (%s): %s\n", coseq_status_name(s), coseq_last_error());
    return 1;
}

struct CorpusHandle {
    coseq_corpus* c = nullptr;
    ~CorpusHandle() { coseq_corpus_free(c); }
};

int open_corpus(const std::string& dir, CorpusHandle& h) {
    coseq_status s = coseq_corpus_open(dir.c_str(), &h.c);
    if (s != COSEQ_OK) return fail(s);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coseq: contrastive sequential diffusion over synthetic scene tasks"};
    app.require_subcommand(1);

    // ---- generate-corpus ----
    auto* gen = app.add_subcommand("generate-corpus", "procedurally generate a task corpus");
    coseq_corpus_params cp;
    coseq_corpus_params_init(&cp);
    std::string gen_out;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--tasks", cp.n_tasks, "number of tasks");
    gen->add_option("--mean-steps", cp.mean_steps, "mean steps per task");
    gen->add_option("--nonlinear-fraction", cp.nonlinear_fraction,
                    "fraction of eligible steps with a non-adjacent antecedent");
    gen->add_option("--image-size", cp.image_size, "square image size");
    gen->add_option("--seed", cp.rng_seed, "rng seed");

    // ---- shared training options ----
    coseq_optim_params op;
    coseq_optim_params_init(&op);
    std::string corpus_dir, out_ckpt, embedder_ckpt, diffuser_ckpt, selector_ckpt;
    double train_frac = 0.8;
    bool quiet = false;

    auto add_optim = [&op, &train_frac, &quiet](CLI::App* cmd) {
        cmd->add_option("--lr", op.learning_rate, "Adam learning rate");
        cmd->add_option("--batch", op.batch_size, "batch size");
        cmd->add_option("--epochs", op.epochs, "training epochs");
        cmd->add_option("--train-seed", op.seed, "training rng seed");
        cmd->add_option("--train-frac", train_frac, "train split fraction");
        cmd->add_flag("--quiet", quiet, "suppress progress output");
    };

    auto* te = app.add_subcommand("train-embedder", "train the dual text/image encoder");
    te->add_option("--corpus", corpus_dir, "corpus directory")->required();
    te->add_option("--out", out_ckpt, "output checkpoint")->required();
    add_optim(te);

    auto* td = app.add_subcommand("train-diffuser", "train the conditioned denoiser");
    td->add_option("--corpus", corpus_dir, "corpus directory")->required();
    td->add_option("--embedder", embedder_ckpt, "embedder checkpoint")->required();
    td->add_option("--out", out_ckpt, "output checkpoint")->required();
    add_optim(td);

    int m_tasks = 10;
    auto* ts = app.add_subcommand("train-selector", "train the contrastive selection head");
    ts->add_option("--corpus", corpus_dir, "corpus directory")->required();
    ts->add_option("--embedder", embedder_ckpt, "embedder checkpoint")->required();
    ts->add_option("-M,--m-tasks", m_tasks, "candidate-set size per instance");
    ts->add_option("--out", out_ckpt, "output checkpoint")->required();
    add_optim(ts);

    // ---- caption ----
    std::string task_id;
    auto* cap = app.add_subcommand("caption", "print raw -> self-contained caption pairs");
    cap->add_option("--corpus", corpus_dir, "corpus directory")->required();
    cap->add_option("--task", task_id, "task id (e.g. t0012)")->required();

    // ---- synthesize ----
    coseq_synth_params sp;
    coseq_synth_params_init(&sp);
    std::string out_dir;
    auto add_synth = [&sp](CLI::App* cmd) {
        cmd->add_option("--w", sp.w, "latent window size");
        cmd->add_option("--B", sp.B, "first-step candidate count");
        cmd->add_option("--seed", sp.seed, "synthesis seed");
        cmd->add_flag("--resume-at-source-iter", sp.resume_at_source_iter,
                      "resume denoising at the seed latent's iteration");
        cmd->add_option("--threads", sp.threads, "candidate generation workers (0=auto)");
    };

    auto* sy = app.add_subcommand("synthesize", "generate the scene sequence for one task");
    sy->add_option("--corpus", corpus_dir, "corpus directory")->required();
    sy->add_option("--embedder", embedder_ckpt, "embedder checkpoint")->required();
    sy->add_option("--diffuser", diffuser_ckpt, "diffuser checkpoint")->required();
    sy->add_option("--selector", selector_ckpt, "selector checkpoint")->required();
    sy->add_option("--task", task_id, "task id")->required();
    sy->add_option("--out", out_dir, "output directory")->required();
    sy->add_option("--fade-frames", sp.fade_frames, "cross-fade frames between steps");
    sy->add_flag("--dump-latents", sp.dump_latents, "dump recorded latents");
    add_synth(sy);

    // ---- evaluate ----
    int limit = 20;
    auto* ev = app.add_subcommand("evaluate", "synthesize held-out tasks and report metrics");
    ev->add_option("--corpus", corpus_dir, "corpus directory")->required();
    ev->add_option("--embedder", embedder_ckpt, "embedder checkpoint")->required();
    ev->add_option("--diffuser", diffuser_ckpt, "diffuser checkpoint")->required();
    ev->add_option("--selector", selector_ckpt, "selector checkpoint")->required();
    ev->add_option("--out", out_dir, "output run directory")->required();
    ev->add_option("--limit", limit, "number of held-out tasks");
    ev->add_option("--train-frac", train_frac, "train split fraction");
    add_synth(ev);

    // ---- ablate-latents ----
    std::vector<int> positions = {5, 10, 20, 40};
    auto* al = app.add_subcommand("ablate-latents", "fixed latent-position sweep");
    al->add_option("--corpus", corpus_dir, "corpus directory")->required();
    al->add_option("--embedder", embedder_ckpt, "embedder checkpoint")->required();
    al->add_option("--diffuser", diffuser_ckpt, "diffuser checkpoint")->required();
    al->add_option("--selector", selector_ckpt, "selector checkpoint")->required();
    al->add_option("--out", out_dir, "output run directory")->required();
    al->add_option("--positions", positions, "latent iterations to sweep");
    al->add_option("--limit", limit, "number of tasks");
    add_synth(al);

    // ---- ablate-modality ----
    auto* am = app.add_subcommand("ablate-modality",
                                  "train standard/text-shuffled/both-shuffled selectors");
    am->add_option("--corpus", corpus_dir, "corpus directory")->required();
    am->add_option("--embedder", embedder_ckpt, "embedder checkpoint")->required();
    am->add_option("--out", out_dir, "output run directory")->required();
    am->add_option("-M,--m-tasks", m_tasks, "candidate-set size per instance");
    add_optim(am);

    // ---- histograms ----
    std::vector<std::string> trace_paths;
    auto* hi = app.add_subcommand("histograms", "usage histograms from trace.json files");
    hi->add_option("--traces", trace_paths, "trace.json paths")->required();
    hi->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);
    int verbose = quiet ? 0 : 1;

    if (gen->parsed()) {
        coseq_corpus* c = nullptr;
        coseq_status s = coseq_corpus_generate(&cp, &c);
        if (s != COSEQ_OK) return fail(s);
        s = coseq_corpus_save(c, gen_out.c_str());
        int tasks = coseq_corpus_task_count(c);
        int steps = coseq_corpus_step_count(c);
        coseq_corpus_free(c);
        if (s != COSEQ_OK) return fail(s);
        std::printf("wrote %d tasks (%d steps) to %s\n", tasks, steps, gen_out.c_str());
        return 0;
    }

    if (hi->parsed()) {
        std::vector<const char*> paths;
        for (const auto& p : trace_paths) paths.push_back(p.c_str());
        coseq_status s = coseq_histograms(paths.data(), static_cast<int>(paths.size()),
                                          out_dir.c_str());
        if (s != COSEQ_OK) return fail(s);
        std::printf("histograms written to %s\n", out_dir.c_str());
        return 0;
    }

    CorpusHandle corpus;
    if (int rc = open_corpus(corpus_dir, corpus); rc != 0) return rc;

    if (te->parsed()) {
        double top1 = 0.0;
        coseq_status s = coseq_train_embedder(corpus.c, train_frac,
                                              te->count("--lr") || te->count("--batch") ||
                                                      te->count("--epochs")
                                                  ? &op
                                                  : nullptr,
                                              verbose, out_ckpt.c_str(), &top1);
        if (s != COSEQ_OK) return fail(s);
        std::printf("embedder saved to %s; held-out top-1 retrieval %.3f\n",
                    out_ckpt.c_str(), top1);
        return 0;
    }
    if (td->parsed()) {
        double loss = 0.0;
        coseq_status s = coseq_train_diffuser(
            corpus.c, embedder_ckpt.c_str(), train_frac,
            td->count("--lr") || td->count("--batch") ? &op : nullptr,
            td->count("--epochs") ? op.epochs : 0, verbose, out_ckpt.c_str(), &loss);
        if (s != COSEQ_OK) return fail(s);
        std::printf("diffuser saved to %s; final loss %.4f\n", out_ckpt.c_str(), loss);
        return 0;
    }
    if (ts->parsed()) {
        double acc = 0.0;
        coseq_status s = coseq_train_selector(
            corpus.c, embedder_ckpt.c_str(), train_frac, m_tasks,
            ts->count("--lr") || ts->count("--batch") || ts->count("--epochs") ? &op
                                                                               : nullptr,
            verbose, out_ckpt.c_str(), &acc);
        if (s != COSEQ_OK) return fail(s);
        std::printf("selector saved to %s; held-out accuracy %.3f (chance %.3f)\n",
                    out_ckpt.c_str(), acc, 1.0 / m_tasks);
        return 0;
    }
    if (cap->parsed()) {
        char* out = nullptr;
        coseq_status s = coseq_caption_task(corpus.c, task_id.c_str(), &out);
        if (s != COSEQ_OK) return fail(s);
        std::printf("%s\n", out);
        coseq_string_free(out);
        return 0;
    }
    if (sy->parsed()) {
        coseq_status s =
            coseq_synthesize(corpus.c, embedder_ckpt.c_str(), diffuser_ckpt.c_str(),
                             selector_ckpt.c_str(), task_id.c_str(), &sp, out_dir.c_str());
        if (s != COSEQ_OK) return fail(s);
        std::printf("sequence written to %s\n", out_dir.c_str());
        return 0;
    }
    if (ev->parsed()) {
        coseq_status s = coseq_evaluate(corpus.c, embedder_ckpt.c_str(),
                                        diffuser_ckpt.c_str(), selector_ckpt.c_str(),
                                        train_frac, limit, &sp, out_dir.c_str());
        if (s != COSEQ_OK) return fail(s);
        std::printf("evaluation written to %s\n", out_dir.c_str());
        return 0;
    }
    if (al->parsed()) {
        coseq_status s = coseq_ablate_latents(
            corpus.c, embedder_ckpt.c_str(), diffuser_ckpt.c_str(), selector_ckpt.c_str(),
            positions.data(), static_cast<int>(positions.size()), limit, &sp,
            out_dir.c_str());
        if (s != COSEQ_OK) return fail(s);
        std::printf("latent ablation written to %s\n", out_dir.c_str());
        return 0;
    }
    if (am->parsed()) {
        coseq_status s = coseq_ablate_modality(
            corpus.c, embedder_ckpt.c_str(), train_frac, m_tasks,
            am->count("--lr") || am->count("--batch") || am->count("--epochs") ? &op
                                                                               : nullptr,
            verbose, out_dir.c_str());
        if (s != COSEQ_OK) return fail(s);
        std::printf("modality ablation written to %s\n", out_dir.c_str());
        return 0;
    }
    return 1;
}
