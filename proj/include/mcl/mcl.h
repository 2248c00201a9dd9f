/* C interface to the MCL recommendation engine.
 *
 * Usage: create an engine, point it at a dataset, adjust config keys, run
 * commands. All functions return MCL_OK on success; on failure the engine
 * keeps the last error message. Handles are opaque and single-threaded;
 * create one engine per worker for parallel experiments.
 */
#ifndef MCL_MCL_H
#define MCL_MCL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct mcl_engine mcl_engine;

typedef enum {
  MCL_OK = 0,
  MCL_ERR_INTERNAL = 1,
  MCL_ERR_CONFIG = 2, /* bad config keys/values, invalid grids */
  MCL_ERR_DATA = 3,   /* missing/malformed files, schema violations */
  MCL_ERR_NUMERIC = 4 /* non-finite values during training */
} mcl_status;

const char* mcl_version(void);

mcl_engine* mcl_engine_new(void);
void mcl_engine_free(mcl_engine* engine);

/* Last error message for this engine; empty string when the previous call
 * succeeded. The pointer stays valid until the next call on the engine. */
const char* mcl_last_error(const mcl_engine* engine);

/* Training configuration: flat string key/value pairs (see README for the
 * key list), or a whole `key = value` config file. */
mcl_status mcl_config_set(mcl_engine* engine, const char* key, const char* value);
mcl_status mcl_config_load(mcl_engine* engine, const char* path);

/* Dataset source: an ml-100k directory, a directory with manifest.txt, or a
 * manifest file path. */
mcl_status mcl_load_dataset(mcl_engine* engine, const char* path);

/* Commands. Artifacts are written under out_dir/<run-id>/. */
mcl_status mcl_run_train(mcl_engine* engine, const char* out_dir);
mcl_status mcl_run_evaluate(mcl_engine* engine, const char* checkpoint, const char* out_dir);
/* noise_ratios: fractions of the train split to perturb, one run each;
 * include_extra_paths adds one run with the dataset's additional paths. */
mcl_status mcl_run_robustness(mcl_engine* engine, const char* out_dir,
                              const double* noise_ratios, size_t n_ratios,
                              int include_extra_paths);
mcl_status mcl_run_ablate(mcl_engine* engine, const char* out_dir);
/* grid_spec: "tau=0.5,0.55;lr=0.001,0.01;L=0,1,2;d=64,128" */
mcl_status mcl_run_sweep(mcl_engine* engine, const char* out_dir, const char* grid_spec);
mcl_status mcl_export_embeddings(mcl_engine* engine, const char* checkpoint,
                                 const char* out_path);

/* Metric readback for the most recent train/evaluate run. `name` is
 * "recall" or "ndcg"; returns -1.0 when the metric is unavailable. */
double mcl_metric(const mcl_engine* engine, const char* name, int k);
/* Best validation Recall@20 of the most recent training run, -1 if none. */
double mcl_best_val_recall20(const mcl_engine* engine);

/* Writes a synthetic fixture dataset ("movielens", "amazon", "yelp"). */
mcl_status mcl_write_fixture(const char* shape, const char* dir, uint64_t seed);

#ifdef __cplusplus
}
#endif

#endif /* MCL_MCL_H */
