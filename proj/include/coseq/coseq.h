/* coseq — contrastive sequential diffusion over synthetic instructional
 * scenes. C API: opaque handles, status codes, thread-local error text.
 * All functions return COSEQ_OK on success; on failure the return names the
 * error class and coseq_last_error() carries the detail message.
 */
#ifndef COSEQ_H
#define COSEQ_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum coseq_status {
    COSEQ_OK = 0,
    COSEQ_ERR_INVALID_ARG = 1,
    COSEQ_ERR_CONFIG = 2,
    COSEQ_ERR_DIMENSION = 3,
    COSEQ_ERR_DOMAIN = 4,
    COSEQ_ERR_VOCABULARY = 5,
    COSEQ_ERR_STATE = 6,
    COSEQ_ERR_DEPENDENCY = 7,
    COSEQ_ERR_UNRESOLVED_REFERENCE = 8,
    COSEQ_ERR_FORMAT = 9,
    COSEQ_ERR_IO = 10,
    COSEQ_ERR_NUMERIC = 11,
    COSEQ_ERR_INTERNAL = 12
} coseq_status;

const char* coseq_status_name(coseq_status s);

/* Message for the most recent failure on the calling thread. */
const char* coseq_last_error(void);

const char* coseq_version(void);

/* ------------------------------------------------------------------ */
/* corpus                                                               */

typedef struct coseq_corpus coseq_corpus;

typedef struct coseq_corpus_params {
    int n_tasks;
    double mean_steps;
    double nonlinear_fraction;
    int image_size; /* square images, image_size x image_size x 3 */
    uint64_t rng_seed;
} coseq_corpus_params;

void coseq_corpus_params_init(coseq_corpus_params* p);

coseq_status coseq_corpus_generate(const coseq_corpus_params* p, coseq_corpus** out);
coseq_status coseq_corpus_open(const char* dir, coseq_corpus** out);
coseq_status coseq_corpus_save(const coseq_corpus* c, const char* dir);
void coseq_corpus_free(coseq_corpus* c);

int coseq_corpus_task_count(const coseq_corpus* c);
int coseq_corpus_step_count(const coseq_corpus* c);

/* ------------------------------------------------------------------ */
/* training                                                             */

typedef struct coseq_optim_params {
    double learning_rate;
    double beta1, beta2, eps;
    int batch_size;
    int epochs;
    uint64_t seed;
} coseq_optim_params;

/* Table defaults: Adam, lr 0.01, batch 500, 10 epochs. */
void coseq_optim_params_init(coseq_optim_params* p);

/* Trains the dual text/image encoder on the train split and writes a
 * checkpoint; *heldout_top1 (optional) receives text->image top-1 retrieval
 * in batches of 32 on the held-out split. Pass optim = NULL for the
 * module's tuned defaults. */
coseq_status coseq_train_embedder(const coseq_corpus* corpus, double train_frac,
                                  const coseq_optim_params* optim, int verbose,
                                  const char* out_ckpt, double* heldout_top1);

/* Trains the conditioned denoiser. *final_loss (optional) receives the last
 * epoch's mean loss. */
coseq_status coseq_train_diffuser(const coseq_corpus* corpus, const char* embedder_ckpt,
                                  double train_frac, const coseq_optim_params* optim,
                                  int epochs_override, int verbose, const char* out_ckpt,
                                  double* final_loss);

/* Trains the contrastive selection head with m_tasks-way candidate sets;
 * *heldout_acc (optional) receives held-out selection accuracy. */
coseq_status coseq_train_selector(const coseq_corpus* corpus, const char* embedder_ckpt,
                                  double train_frac, int m_tasks,
                                  const coseq_optim_params* optim, int verbose,
                                  const char* out_ckpt, double* heldout_acc);

/* ------------------------------------------------------------------ */
/* captioning                                                           */

/* JSON array of {"index", "raw", "caption"} for one task. Free with
 * coseq_string_free. */
coseq_status coseq_caption_task(const coseq_corpus* corpus, const char* task_id,
                                char** json_out);
void coseq_string_free(char* s);

/* ------------------------------------------------------------------ */
/* synthesis & evaluation                                               */

typedef struct coseq_synth_params {
    int w;                     /* recorded-latent window per step */
    int B;                     /* first-step candidate count */
    uint64_t seed;
    int resume_at_source_iter; /* 0: restart at T (default); 1: resume */
    int fade_frames;           /* cross-fade frames between steps */
    int threads;               /* candidate-generation workers; 0 = auto */
    int dump_latents;          /* write recorded latents as flat binaries */
} coseq_synth_params;

void coseq_synth_params_init(coseq_synth_params* p);

/* Synthesizes one task into out_dir: step_XX.ppm frames, sequence.json,
 * trace.json. */
coseq_status coseq_synthesize(const coseq_corpus* corpus, const char* embedder_ckpt,
                              const char* diffuser_ckpt, const char* selector_ckpt,
                              const char* task_id, const coseq_synth_params* params,
                              const char* out_dir);

/* Synthesizes up to `limit` held-out tasks, writes traces, metrics.csv,
 * histograms and run.json under out_dir. */
coseq_status coseq_evaluate(const coseq_corpus* corpus, const char* embedder_ckpt,
                            const char* diffuser_ckpt, const char* selector_ckpt,
                            double train_frac, int limit,
                            const coseq_synth_params* params, const char* out_dir);

/* Fixed-latent-position sweep (plus the full method) over `limit` tasks;
 * writes ablate_latents.csv and a scatter SVG. */
coseq_status coseq_ablate_latents(const coseq_corpus* corpus, const char* embedder_ckpt,
                                  const char* diffuser_ckpt, const char* selector_ckpt,
                                  const int* positions, int n_positions, int limit,
                                  const coseq_synth_params* params, const char* out_dir);

/* Single-modality ablation: trains standard / text-shuffled / both-shuffled
 * selector variants and writes modality_ablation.csv. */
coseq_status coseq_ablate_modality(const coseq_corpus* corpus, const char* embedder_ckpt,
                                   double train_frac, int m_tasks,
                                   const coseq_optim_params* optim, int verbose,
                                   const char* out_dir);

/* Step-offset and latent-iteration usage histograms over trace.json files;
 * writes CSVs and bar SVGs. */
coseq_status coseq_histograms(const char* const* trace_paths, int n_traces,
                              const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* COSEQ_H */
