/*
 * C interface to the cogcn graph-classification toolkit.
 *
 * All objects are opaque handles created by the library and released with
 * the matching *_free function. Every fallible call returns a cogcn_status;
 * on failure, cogcn_last_error() describes the problem for the calling
 * thread until the next failing call on that thread.
 */
#ifndef COGCN_COGCN_H
#define COGCN_COGCN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(COGCN_BUILDING_LIBRARY)
#define COGCN_API __declspec(dllexport)
#else
#define COGCN_API __declspec(dllimport)
#endif
#else
#define COGCN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cogcn_status {
  COGCN_OK = 0,
  COGCN_ERR_USAGE = 1,        /* invalid argument or configuration */
  COGCN_ERR_DATA = 2,         /* malformed or inconsistent input data */
  COGCN_ERR_VERIFICATION = 3, /* a numeric self-check failed */
  COGCN_ERR_IO = 4,
  COGCN_ERR_INTERNAL = 5
} cogcn_status;

typedef enum cogcn_graph_kind { COGCN_GRAPH_COSINE = 0, COGCN_GRAPH_TEMPORAL = 1 } cogcn_graph_kind;

typedef enum cogcn_precision { COGCN_FLOAT32 = 0, COGCN_FLOAT64 = 1 } cogcn_precision;

typedef struct cogcn_dataset cogcn_dataset;
typedef struct cogcn_graph cogcn_graph;
typedef struct cogcn_model cogcn_model;
typedef struct cogcn_metrics cogcn_metrics;

COGCN_API const char* cogcn_version(void);
COGCN_API const char* cogcn_last_error(void);
COGCN_API const char* cogcn_status_name(cogcn_status status);

/* Strings returned through char** out-parameters are owned by the caller. */
COGCN_API void cogcn_string_free(char* s);

/* ---- datasets ---------------------------------------------------------- */

typedef struct cogcn_synth_spec {
  int n_classes;
  int n_speakers;
  int utt_per_speaker;
  int frames_lo;
  int frames_hi;
  int d;
  double noise_frac;
  double cluster_sep;
  uint64_t seed;
} cogcn_synth_spec;

COGCN_API void cogcn_synth_spec_default(cogcn_synth_spec* spec);
COGCN_API cogcn_status cogcn_dataset_synth(const cogcn_synth_spec* spec, cogcn_dataset** out);
COGCN_API cogcn_status cogcn_dataset_load(const char* manifest_path, cogcn_dataset** out);
/* Writes manifest.jsonl and features/<id>.csv into dir. */
COGCN_API cogcn_status cogcn_dataset_save(const cogcn_dataset* ds, const char* dir);
COGCN_API void cogcn_dataset_free(cogcn_dataset* ds);

COGCN_API size_t cogcn_dataset_size(const cogcn_dataset* ds);
COGCN_API int cogcn_dataset_dim(const cogcn_dataset* ds);
COGCN_API int cogcn_dataset_num_classes(const cogcn_dataset* ds);
COGCN_API size_t cogcn_dataset_num_speakers(const cogcn_dataset* ds);
/* Returned pointers stay valid until the dataset is freed. */
COGCN_API const char* cogcn_dataset_utterance_id(const cogcn_dataset* ds, size_t index);
COGCN_API const char* cogcn_dataset_speaker(const cogcn_dataset* ds, size_t index); /* sorted order */
COGCN_API cogcn_status cogcn_dataset_find(const cogcn_dataset* ds, const char* id, size_t* index);
/* New dataset z-scored with statistics fit over all of its frames. */
COGCN_API cogcn_status cogcn_dataset_standardize(const cogcn_dataset* ds, cogcn_dataset** out);

/* ---- graphs ------------------------------------------------------------ */

/* Builds the graph of one utterance from its raw (unstandardized) frames.
 * gamma is ignored for temporal graphs. */
COGCN_API cogcn_status cogcn_graph_build(const cogcn_dataset* ds, size_t utterance, cogcn_graph_kind kind,
                                         double gamma, cogcn_graph** out);
COGCN_API void cogcn_graph_free(cogcn_graph* g);
COGCN_API size_t cogcn_graph_num_nodes(const cogcn_graph* g);
COGCN_API size_t cogcn_graph_num_edges(const cogcn_graph* g);
/* Edge e (i < j), in ascending (i, j) order. */
COGCN_API cogcn_status cogcn_graph_edge(const cogcn_graph* g, size_t e, size_t* i, size_t* j);
COGCN_API cogcn_status cogcn_graph_write_dot(const cogcn_graph* g, const char* path);
COGCN_API cogcn_status cogcn_graph_write_json(const cogcn_graph* g, const char* path);
COGCN_API cogcn_status cogcn_graph_write_features(const cogcn_graph* g, const char* path);

/* ---- training ---------------------------------------------------------- */

typedef struct cogcn_train_options {
  int hidden;                 /* z */
  int use_pre;
  int use_skip;
  int self_in_aggregation;
  double dropout;
  double lr;
  int epochs;
  int batch_size;
  double adam_beta1;
  double adam_beta2;
  double adam_eps;
  uint64_t seed;
  cogcn_graph_kind graph_kind;
  cogcn_precision precision;
  const double* gamma_grid; /* borrowed for the duration of the call */
  size_t gamma_grid_len;
  const int* k_grid;
  size_t k_grid_len;
  int jobs;
} cogcn_train_options;

/* Fills in the defaults: z=128, lr=1e-3, 50 epochs, batch 32, dropout 0.1,
 * gamma grid {0.5, 0.55, 0.6}, K grid {2, 3, 4}, float32. */
COGCN_API void cogcn_train_options_default(cogcn_train_options* opts);

/* Leave-one-speaker-out cross-validation. If out_dir is non-NULL, writes
 * metrics.json and fold_<speaker>/{checkpoint.json,history.csv}. */
COGCN_API cogcn_status cogcn_run_loso(const cogcn_dataset* ds, const cogcn_train_options* opts, const char* out_dir,
                                      cogcn_metrics** out);
/* A single fold testing on one speaker. */
COGCN_API cogcn_status cogcn_run_holdout(const cogcn_dataset* ds, const cogcn_train_options* opts,
                                         const char* test_speaker, const char* out_dir, cogcn_metrics** out);

COGCN_API void cogcn_metrics_free(cogcn_metrics* m);
COGCN_API double cogcn_metrics_wa(const cogcn_metrics* m);
COGCN_API double cogcn_metrics_ua(const cogcn_metrics* m);
COGCN_API cogcn_status cogcn_metrics_json(const cogcn_metrics* m, char** out);

/* ---- checkpoints & evaluation ------------------------------------------ */

COGCN_API cogcn_status cogcn_model_load(const char* checkpoint_path, cogcn_model** out);
COGCN_API void cogcn_model_free(cogcn_model* model);
/* Evaluates the model on the dataset, or on one speaker's utterances when
 * speaker is non-NULL. Fails on d / class_names mismatch. */
COGCN_API cogcn_status cogcn_evaluate(const cogcn_model* model, const cogcn_dataset* ds, const char* speaker,
                                      cogcn_metrics** out);

/* ---- diagnostics ------------------------------------------------------- */

COGCN_API cogcn_status cogcn_param_count(int d, int z, int k, int c, int use_pre, int use_skip, uint64_t* out);
/* Finite-difference check of the hand-written gradients on `trials` random
 * instances. Returns COGCN_ERR_VERIFICATION if max_rel_error >= 1e-4. */
COGCN_API cogcn_status cogcn_gradcheck(uint64_t seed, int trials, double* max_rel_error, size_t* checked,
                                       size_t* skipped);

#ifdef __cplusplus
}
#endif

#endif /* COGCN_COGCN_H */
