#ifndef PROMPTDST_H
#define PROMPTDST_H

/* C interface to the prompt-based dialogue state tracker.
 *
 * Every function returns a pdst_status; on failure pdst_last_error() holds a
 * message for the calling thread. Strings returned through char** are owned
 * by the caller and released with pdst_string_free. Handles are released
 * with their *_free function; passing NULL to a free function is a no-op.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PDST_API __declspec(dllexport)
#else
#define PDST_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  PDST_OK = 0,
  PDST_E_INVALID_ARGUMENT = 1,
  PDST_E_PARSE = 2,
  PDST_E_ONTOLOGY = 3,
  PDST_E_RANGE = 4,
  PDST_E_LOOKUP = 5,
  PDST_E_BACKEND = 6,
  PDST_E_DATA = 7,
  PDST_E_IO = 8,
  PDST_E_NUMERIC = 9,
  PDST_E_CONFIG = 10,
  PDST_E_INTERNAL = 11
} pdst_status;

typedef enum {
  PDST_STRATEGY_MLM_WGS = 0,
  PDST_STRATEGY_CLM = 1,
  PDST_STRATEGY_KNOWN_K = 2,
  PDST_STRATEGY_KEYWORD = 3
} pdst_domain_strategy;

typedef enum { PDST_SLOTS_GENERATIVE = 0, PDST_SLOTS_CATEGORICAL = 1 } pdst_slot_mode;
typedef enum { PDST_LOSS_NLL = 0, PDST_LOSS_NLL_PLUS_UL_EOS = 1 } pdst_loss_kind;
typedef enum { PDST_OBJECTIVE_CLM = 0, PDST_OBJECTIVE_MLM = 1 } pdst_domain_objective;
typedef enum { PDST_PARTIAL_RECALL = 0, PDST_PARTIAL_JACCARD = 1 } pdst_partial_mode;

typedef struct pdst_ontology pdst_ontology;
typedef struct pdst_examples pdst_examples;
typedef struct pdst_prompts pdst_prompts;
typedef struct pdst_keywords pdst_keywords;
typedef struct pdst_backend pdst_backend;
typedef struct pdst_pipeline pdst_pipeline;
typedef struct pdst_report pdst_report;

typedef struct {
  int speaker_tagged;       /* 0: plain utterances */
  int include_system_turns;
  size_t max_turns;         /* 0: unlimited */
} pdst_history_options;

typedef struct {
  double learning_rate;
  int epochs;
  int batch_size;
  uint64_t seed;
  pdst_loss_kind loss;
  double ul_weight;
} pdst_finetune_config;

typedef struct {
  int population_size;
  int generations;
  double mutation_rate;
  double mutation_sigma;
  double crossover_rate;
  int elitism_count;
  int tournament_size;
  uint64_t seed;
} pdst_ga_config;

typedef struct {
  pdst_domain_strategy strategy;
  pdst_slot_mode slot_mode;
  int all_slots;
  int beam_size;
  int max_new_tokens;
  int suppress_eos_until;
  double weights[4];
  int keyword_prefix_stems;
  pdst_history_options history;
} pdst_pipeline_config;

/* ---- errors and memory */
PDST_API const char* pdst_last_error(void);
PDST_API const char* pdst_status_name(pdst_status status);
PDST_API void pdst_string_free(char* s);

/* ---- defaults */
PDST_API void pdst_history_options_default(pdst_history_options* out);
/* objective selects the MLM or CLM hyperparameter defaults. */
PDST_API void pdst_finetune_config_default(pdst_domain_objective objective,
                                           pdst_finetune_config* out);
PDST_API void pdst_finetune_config_seq2seq_default(pdst_finetune_config* out);
PDST_API void pdst_ga_config_default(pdst_ga_config* out);
PDST_API void pdst_pipeline_config_default(pdst_pipeline_config* out);

/* ---- utilities */
PDST_API uint64_t pdst_hash64(const char* data, size_t len);
/* Writes to "<path>.tmp" and renames; parent directories are created. */
PDST_API pdst_status pdst_write_file_atomic(const char* path, const char* data, size_t len);
/* Largest-remainder allocation of size over the four strata. */
PDST_API pdst_status pdst_stratum_counts(size_t size, const double dist[4], size_t counts[4]);

/* ---- ontology */
PDST_API pdst_status pdst_ontology_load(const char* path, pdst_ontology** out);
PDST_API void pdst_ontology_free(pdst_ontology* o);
PDST_API size_t pdst_ontology_slot_count(const pdst_ontology* o);

/* ---- examples and datasets */
PDST_API pdst_status pdst_corpus_load(const pdst_ontology* o, const char* path,
                                      pdst_examples** out);
/* Reads an example cache or dataset file (JSON lines). */
PDST_API pdst_status pdst_examples_read(const pdst_ontology* o, const char* path,
                                        pdst_examples** out);
PDST_API pdst_status pdst_examples_write(const pdst_examples* e, const char* path);
PDST_API pdst_status pdst_examples_append(pdst_examples* dst, const pdst_examples* src);
PDST_API size_t pdst_examples_count(const pdst_examples* e);
PDST_API void pdst_examples_free(pdst_examples* e);

PDST_API pdst_status pdst_sample_domain(const pdst_examples* pool, size_t size,
                                        const double dist[4], uint64_t seed,
                                        pdst_examples** out, size_t counts[4]);
PDST_API pdst_status pdst_sample_slot(const pdst_examples* pool, const pdst_ontology* o,
                                      size_t per_slot, uint64_t seed, pdst_examples** out);

/* ---- prompts and keywords */
PDST_API pdst_status pdst_prompts_load(const pdst_ontology* o, const char* path,
                                       pdst_prompts** out);
PDST_API void pdst_prompts_free(pdst_prompts* p);
PDST_API pdst_status pdst_keywords_load(const char* path, pdst_keywords** out);
PDST_API void pdst_keywords_free(pdst_keywords* k);

/* ---- backends */
/* descriptor_json: {"kind":"mock","table":path} or
 * {"kind":"remote","url":...,"model":...}. */
PDST_API pdst_status pdst_backend_open(const char* descriptor_json, pdst_backend** out);
PDST_API pdst_status pdst_backend_descriptor(const pdst_backend* b, char** out_json);
PDST_API void pdst_backend_free(pdst_backend* b);

PDST_API pdst_status pdst_train_domain(const pdst_backend* b, const pdst_examples* train,
                                       const pdst_prompts* p, pdst_domain_objective objective,
                                       const pdst_finetune_config* config,
                                       const pdst_history_options* history,
                                       pdst_backend** out, size_t* n_pairs);
PDST_API pdst_status pdst_train_slot(const pdst_backend* b, const pdst_examples* train,
                                     const pdst_ontology* o, const pdst_prompts* p,
                                     const pdst_finetune_config* config,
                                     const pdst_history_options* history,
                                     pdst_backend** out, size_t* n_pairs);

/* ---- WGS weights */
PDST_API pdst_status pdst_ga_learn_weights(const pdst_backend* mlm, const pdst_examples* train,
                                           const pdst_ontology* o, const pdst_prompts* p,
                                           const pdst_ga_config* config,
                                           const pdst_history_options* history,
                                           double weights[4], double* fitness);
PDST_API pdst_status pdst_weights_write(const double weights[4], const char* path);
PDST_API pdst_status pdst_weights_read(const char* path, double weights[4]);

/* ---- prediction */
/* domain_backend may be NULL for the keyword strategy; keywords may be NULL
 * for the others. */
PDST_API pdst_status pdst_pipeline_create(const pdst_ontology* o, const pdst_prompts* p,
                                          const pdst_keywords* k,
                                          const pdst_backend* domain_backend,
                                          const pdst_backend* slot_backend,
                                          const pdst_pipeline_config* config,
                                          pdst_pipeline** out);
PDST_API void pdst_pipeline_free(pdst_pipeline* pl);
/* known_k <= 0 means unknown. Returns one dump record as JSON. */
PDST_API pdst_status pdst_pipeline_predict(const pdst_pipeline* pl, const char* dialogue_history,
                                           int known_k, char** out_json);
/* Predicts every turn (workers >= 1 threads) and writes the JSON-lines dump
 * atomically. Records keep the input order. */
PDST_API pdst_status pdst_pipeline_dump(const pdst_pipeline* pl, const pdst_examples* turns,
                                        unsigned workers, const char* path);

/* ---- evaluation */
PDST_API pdst_status pdst_evaluate(const pdst_ontology* o, const char* dump_path,
                                   const pdst_examples* gold, pdst_partial_mode mode,
                                   pdst_report** out);
PDST_API pdst_status pdst_report_read(const char* json_path, pdst_report** out);
PDST_API pdst_status pdst_report_json(const pdst_report* r, int with_reference, char** out);
PDST_API pdst_status pdst_report_csv(const pdst_report* r, char** out);
/* name: full_accuracy, partial_accuracy, strict_slot_accuracy,
 * flexible_slot_accuracy, joint_accuracy, slot_accuracy. */
PDST_API pdst_status pdst_report_metric(const pdst_report* r, const char* name, double* out);
PDST_API size_t pdst_report_examples(const pdst_report* r);
PDST_API void pdst_report_free(pdst_report* r);
/* Published reference numbers as a JSON array. */
PDST_API pdst_status pdst_reference_tables(char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* PROMPTDST_H */
