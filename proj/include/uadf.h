/* C interface to the uadf fusion engine.
 *
 * Every function returns a uadf_status; on failure the thread's last error
 * message is available from uadf_last_error(). Handles are opaque and owned
 * by the caller, who releases them with the matching *_free function.
 * Strings returned through char** parameters are released with
 * uadf_string_free. Borrowed const char* results stay valid until the
 * owning handle is freed.
 *
 * Handles are immutable after creation and may be shared between threads,
 * except that decoding with an external provider serializes on its
 * connection.
 */
#ifndef UADF_H
#define UADF_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define UADF_API __declspec(dllexport)
#else
#define UADF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum uadf_status {
  UADF_OK = 0,
  UADF_E_INVALID_PARAMETER = 1,
  UADF_E_INVALID_INPUT = 2,
  UADF_E_CONFIGURATION = 3,
  UADF_E_PROVIDER_IO = 4,
  UADF_E_PARSE = 5,
  UADF_E_SCHEMA = 6,
  UADF_E_IO = 7,
  UADF_E_INTERNAL = 8
} uadf_status;

typedef uint32_t uadf_token;

enum { UADF_BOS = 0, UADF_EOS = 1, UADF_UNK = 2 };

typedef struct uadf_vocab uadf_vocab;
typedef struct uadf_corpus uadf_corpus;
typedef struct uadf_provider uadf_provider;
typedef struct uadf_calibration uadf_calibration;
typedef struct uadf_decode_batch uadf_decode_batch;

UADF_API const char* uadf_version(void);
UADF_API const char* uadf_status_string(uadf_status status);
/* Message of the last failed call on this thread ("" if none). */
UADF_API const char* uadf_last_error(void);
UADF_API void uadf_string_free(char* s);

/* ---- numerics ---------------------------------------------------------- */

/* out[i] = softmax(logits / tau)[i]; out has n entries. */
UADF_API uadf_status uadf_softmax(const double* logits, size_t n, double tau, double* out);
/* Shannon entropy in nats of a normalized distribution. */
UADF_API uadf_status uadf_entropy(const double* probs, size_t n, double* out);
/* Lowest index of the maximum. */
UADF_API uadf_status uadf_argmax(const double* values, size_t n, uadf_token* out);
/* sigmoid(u) - beta. */
UADF_API uadf_status uadf_weight(double u, double beta, double* out);
/* (baseline - value) / baseline. */
UADF_API uadf_status uadf_werr(double wer_baseline, double wer_new, double* out);

typedef struct uadf_wer_result {
  double wer;
  size_t substitutions;
  size_t insertions;
  size_t deletions;
  size_t hits;
  size_t n_ref_words;
} uadf_wer_result;

/* Word error rate of whitespace-separated, lowercased texts. */
UADF_API uadf_status uadf_wer(const char* hypothesis, const char* reference, uadf_wer_result* out);

/* ---- fusion ------------------------------------------------------------ */

typedef enum uadf_mode { UADF_MODE_LLM = 0, UADF_MODE_ASR = 1, UADF_MODE_STATIC = 2, UADF_MODE_UADF = 3 } uadf_mode;
typedef enum uadf_combine { UADF_COMBINE_OUTER_SOFTMAX = 0, UADF_COMBINE_RENORMALIZE = 1 } uadf_combine;
typedef enum uadf_uncertainty { UADF_UNCERTAINTY_ENTROPY = 0, UADF_UNCERTAINTY_ARGMAX_TERM = 1 } uadf_uncertainty;

typedef struct uadf_fusion_config {
  uadf_mode mode;
  double w_llm;
  double w_asr;
  double tau1;
  double tau2;
  double beta;
  uadf_combine combine;
  uadf_uncertainty uncertainty;
} uadf_fusion_config;

/* uadf mode, w_llm 1, w_asr 0, tau1 = tau2 = 1, beta 0.5, outer softmax, entropy. */
UADF_API void uadf_fusion_config_init(uadf_fusion_config* cfg);
UADF_API uadf_status uadf_fusion_config_validate(const uadf_fusion_config* cfg);

typedef struct uadf_fusion_info {
  double uncertainty;
  double w_asr_effective;
  uadf_token chosen;
} uadf_fusion_info;

/* One fusion step over two logit vectors of length n. `fused` (n entries) may be NULL. */
UADF_API uadf_status uadf_fuse(const double* logits_llm, const double* logits_asr, size_t n,
                               const uadf_fusion_config* cfg, double* fused, uadf_fusion_info* info);

/* ---- vocabulary -------------------------------------------------------- */

UADF_API uadf_status uadf_vocab_load(const char* path, uadf_vocab** out);
/* Builds <s>, </s>, <unk> followed by `words`. */
UADF_API uadf_status uadf_vocab_from_words(const char* const* words, size_t n, uadf_vocab** out);
UADF_API uadf_status uadf_vocab_save(const uadf_vocab* vocab, const char* path);
UADF_API size_t uadf_vocab_size(const uadf_vocab* vocab);
UADF_API uadf_status uadf_vocab_token(const uadf_vocab* vocab, uadf_token id, const char** out);
/* Unknown words map to UADF_UNK. */
UADF_API uadf_status uadf_vocab_id(const uadf_vocab* vocab, const char* word, uadf_token* out);
/* 64 hex characters plus the terminating NUL. */
UADF_API uadf_status uadf_vocab_hash(const uadf_vocab* vocab, char out[65]);
UADF_API void uadf_vocab_free(uadf_vocab* vocab);

/* ---- corpus ------------------------------------------------------------ */

/* `mapping_json` (may be NULL) renames record fields, e.g.
 * {"reference": "output", "nbest": "input", "id": ""}. */
UADF_API uadf_status uadf_corpus_load(const char* path, const char* mapping_json, uadf_corpus** out);
UADF_API uadf_status uadf_corpus_save(const uadf_corpus* corpus, const char* path);
UADF_API size_t uadf_corpus_size(const uadf_corpus* corpus);
UADF_API uadf_status uadf_corpus_id(const uadf_corpus* corpus, size_t index, const char** out);
UADF_API uadf_status uadf_corpus_reference(const uadf_corpus* corpus, size_t index, const char** out);
UADF_API uadf_status uadf_corpus_observation(const uadf_corpus* corpus, size_t index, const char** out);
UADF_API uadf_status uadf_corpus_nbest_size(const uadf_corpus* corpus, size_t index, size_t* out);
UADF_API uadf_status uadf_corpus_nbest_text(const uadf_corpus* corpus, size_t index, size_t rank, const char** out);
UADF_API void uadf_corpus_free(uadf_corpus* corpus);

typedef struct uadf_generate_options {
  size_t n_train;
  size_t n_val;
  size_t n_test;
  double mean_length;
  double substitution;
  double deletion;
  double insertion;
  double concentration;
  uint64_t seed;
  double diag_min;
  double diag_max;
  double floor;
  size_t beam;
  size_t n_best;
  size_t cluster_size;
  size_t workers;
  const char* grammar_path; /* NULL: built-in airline grammar */
  const char* text_path;    /* sentences, one per line; used when set instead of a grammar */
} uadf_generate_options;

UADF_API void uadf_generate_options_init(uadf_generate_options* options);

/* Synthesizes the three splits and the acoustic-channel provider that produced them. */
UADF_API uadf_status uadf_generate(const uadf_generate_options* options, uadf_vocab** vocab, uadf_corpus** train,
                                   uadf_corpus** val, uadf_corpus** test, uadf_provider** acoustic);
/* Generation settings as a JSON document (for manifests). */
UADF_API uadf_status uadf_generate_options_json(const uadf_generate_options* options, char** out);

/* ---- providers --------------------------------------------------------- */

/* Fills `logits` (vocab_size entries) for the step after `history`, which starts with BOS.
 * Returns 0 on success; any other value fails the step with UADF_E_PROVIDER_IO. */
typedef int (*uadf_logits_fn)(void* user, const char* utterance_id, const uadf_token* history, size_t history_len,
                              double* logits, size_t vocab_size);

UADF_API uadf_status uadf_provider_train_corrector(const uadf_vocab* vocab, const uadf_corpus* train, int order,
                                                   double smoothing, double vote_weight, uadf_provider** out);
/* Model file written by uadf_provider_save (n-gram corrector or acoustic channel). */
UADF_API uadf_status uadf_provider_load(const uadf_vocab* vocab, const char* path, uadf_provider** out);
/* "tcp://host:port" or a shell command speaking the line protocol on stdin/stdout. */
UADF_API uadf_status uadf_provider_connect(const uadf_vocab* vocab, const char* endpoint, int timeout_ms,
                                           uadf_provider** out);
UADF_API uadf_status uadf_provider_from_callback(const uadf_vocab* vocab, uadf_logits_fn fn, void* user,
                                                 uadf_provider** out);
UADF_API uadf_status uadf_provider_save(const uadf_provider* provider, const char* path);
/* "ngram-corrector", "acoustic-channel", "external" or "callback". */
UADF_API const char* uadf_provider_kind(const uadf_provider* provider);
/* Logits for record `index` of `corpus` after `history`. */
UADF_API uadf_status uadf_provider_next_logits(const uadf_provider* provider, const uadf_corpus* corpus, size_t index,
                                               const uadf_token* history, size_t history_len, double* logits);
UADF_API void uadf_provider_free(uadf_provider* provider);

/* Answers protocol requests for the utterances of `corpus` on stdin/stdout until stdin closes. */
UADF_API uadf_status uadf_serve_stdio(const uadf_provider* provider, const uadf_corpus* corpus);
/* Same over TCP; serves `max_connections` clients one after another (0: forever). */
UADF_API uadf_status uadf_serve_tcp(const uadf_provider* provider, const uadf_corpus* corpus, int port,
                                    size_t max_connections);

/* ---- calibration ------------------------------------------------------- */

typedef struct uadf_fit_options {
  double tol;
  double tau_min;
  double tau_max;
  int max_iter;
  size_t n_bins;
  size_t workers;
} uadf_fit_options;

UADF_API void uadf_fit_options_init(uadf_fit_options* options);

typedef struct uadf_calibration_summary {
  double tau;
  double mean_confidence;
  double ter;
  size_t n_dec;
  double ece;
  int clamped; /* 0 none, -1 at tau_min, 1 at tau_max */
  int iterations;
  double uncalibrated_confidence;
  double uncalibrated_ece;
} uadf_calibration_summary;

/* Teacher-forced traces over `val`, then temperature fitting. */
UADF_API uadf_status uadf_calibrate(const uadf_provider* provider, const uadf_corpus* val,
                                    const uadf_fit_options* options, uadf_calibration** out);
UADF_API uadf_status uadf_calibration_summary_get(const uadf_calibration* cal, uadf_calibration_summary* out);
UADF_API uadf_status uadf_calibration_to_json(const uadf_calibration* cal, char** out);
/* Reliability bins of the traced steps at temperature `tau` as CSV. */
UADF_API uadf_status uadf_calibration_reliability_csv(const uadf_calibration* cal, double tau, size_t n_bins,
                                                      char** out);
UADF_API void uadf_calibration_free(uadf_calibration* cal);

/* Fitted temperature stored in a report document written by uadf_calibration_to_json. */
UADF_API uadf_status uadf_calibration_report_tau(const char* report_path, double* tau);

/* ---- decoding ---------------------------------------------------------- */

typedef struct uadf_decode_options {
  double max_len_factor; /* max_len = factor x reference words; 2 by default */
  size_t free_max_len;   /* used when a record has no reference; 64 by default */
  size_t workers;
  int keep_steps;        /* record per-step fusion diagnostics */
} uadf_decode_options;

UADF_API void uadf_decode_options_init(uadf_decode_options* options);

UADF_API uadf_status uadf_decode(const uadf_provider* llm, const uadf_provider* asr, const uadf_fusion_config* cfg,
                                 const uadf_corpus* corpus, const uadf_decode_options* options,
                                 uadf_decode_batch** out);
UADF_API size_t uadf_decode_batch_size(const uadf_decode_batch* batch);
UADF_API uadf_status uadf_decode_batch_hypothesis(const uadf_decode_batch* batch, size_t index, const char** out);
UADF_API uadf_status uadf_decode_batch_tokens(const uadf_decode_batch* batch, size_t index, const uadf_token** tokens,
                                              size_t* n);
/* 1 when the hypothesis ended with EOS, 0 when it hit max_len. */
UADF_API uadf_status uadf_decode_batch_terminated(const uadf_decode_batch* batch, size_t index, int* eos);
/* Corpus-level WER against the references of the decoded corpus. */
UADF_API uadf_status uadf_decode_batch_wer(const uadf_decode_batch* batch, double* out);
/* Hypothesis file: one {"id","hypothesis","terminated"} document per line. */
UADF_API uadf_status uadf_decode_batch_save(const uadf_decode_batch* batch, const char* path);
/* Per-step diagnostics (needs keep_steps). */
UADF_API uadf_status uadf_decode_batch_save_steps(const uadf_decode_batch* batch, const char* path);
UADF_API void uadf_decode_batch_free(uadf_decode_batch* batch);

/* ---- sweeps and scoring ------------------------------------------------ */

/* Static-mode grid over w_llm x w_asr on `corpus`. The table is CSV (w_llm,w_asr,wer). */
UADF_API uadf_status uadf_sweep_static(const uadf_provider* llm, const uadf_provider* asr,
                                       const uadf_fusion_config* base, const uadf_corpus* corpus,
                                       const double* w_llm, size_t n_llm, const double* w_asr, size_t n_asr,
                                       const uadf_decode_options* options, double* best_w_llm, double* best_w_asr,
                                       double* best_wer, char** table_csv);
/* UADF decode per beta. The table is CSV (beta,wer). */
UADF_API uadf_status uadf_sweep_beta(const uadf_provider* llm, const uadf_provider* asr,
                                     const uadf_fusion_config* base, const uadf_corpus* corpus, const double* betas,
                                     size_t n, const uadf_decode_options* options, char** table_csv);

typedef enum uadf_normalization {
  UADF_NORMALIZE_LOWERCASE = 0,         /* lowercase, split on whitespace */
  UADF_NORMALIZE_STRIP_PUNCTUATION = 1  /* also drop punctuation other than apostrophes */
} uadf_normalization;

/* Scores hypothesis files against `corpus`. `lm` (may be NULL) must be an n-gram
 * corrector; its n-gram rescoring of the N-best lists is reported as lm_rank. */
UADF_API uadf_status uadf_score(const uadf_corpus* corpus, const char* const* names, const char* const* hypothesis_paths,
                                size_t n_systems, const char* baseline, const uadf_provider* lm, double lm_lambda,
                                uadf_normalization normalization, char** document_json);

#ifdef __cplusplus
}
#endif

#endif /* UADF_H */
