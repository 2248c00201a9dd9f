#include "mcl/mcl.h"

#include <memory>
#include <optional>
#include <string>

#include "mcl/dataset.hpp"
#include "mcl/evaluation.hpp"
#include "mcl/experiment.hpp"
#include "mcl/trainer.hpp"

using namespace mcl;

struct mcl_engine {
  train::TrainConfig config;
  std::optional<app::Dataset> dataset;
  std::optional<eval::RunMetrics> last_metrics;
  double last_val_recall20 = -1.0;
  std::string last_error;
};

namespace {

mcl_status status_from_exit_code(int code) {
  switch (code) {
    case 2:
      return MCL_ERR_CONFIG;
    case 3:
      return MCL_ERR_DATA;
    case 4:
      return MCL_ERR_NUMERIC;
    default:
      return MCL_ERR_INTERNAL;
  }
}

template <class Fn>
mcl_status guarded(mcl_engine* engine, Fn&& fn) {
  engine->last_error.clear();
  try {
    fn();
    return MCL_OK;
  } catch (const Error& e) {
    engine->last_error = e.what();
    return status_from_exit_code(e.exit_code());
  } catch (const std::exception& e) {
    engine->last_error = e.what();
    return MCL_ERR_INTERNAL;
  }
}

app::Dataset& require_dataset(mcl_engine* engine) {
  if (!engine->dataset)
    fail(ErrorCode::ConfigError, "no dataset loaded; call mcl_load_dataset first");
  return *engine->dataset;
}

}  // namespace

extern "C" {

const char* mcl_version(void) { return app::version_string(); }

mcl_engine* mcl_engine_new(void) { return new mcl_engine(); }

void mcl_engine_free(mcl_engine* engine) { delete engine; }

const char* mcl_last_error(const mcl_engine* engine) {
  return engine ? engine->last_error.c_str() : "null engine";
}

mcl_status mcl_config_set(mcl_engine* engine, const char* key, const char* value) {
  if (!engine || !key || !value) return MCL_ERR_CONFIG;
  return guarded(engine, [&] {
    engine->config.set(key, value);
    engine->config.validate();
  });
}

mcl_status mcl_config_load(mcl_engine* engine, const char* path) {
  if (!engine || !path) return MCL_ERR_CONFIG;
  return guarded(engine, [&] { engine->config = train::TrainConfig::from_file(path); });
}

mcl_status mcl_load_dataset(mcl_engine* engine, const char* path) {
  if (!engine || !path) return MCL_ERR_CONFIG;
  return guarded(engine, [&] { engine->dataset = app::load_dataset(path); });
}

mcl_status mcl_run_train(mcl_engine* engine, const char* out_dir) {
  if (!engine || !out_dir) return MCL_ERR_CONFIG;
  return guarded(engine, [&] {
    app::RunOptions opts;
    opts.out_dir = out_dir;
    app::RunRecord record = app::run_experiment(require_dataset(engine), engine->config, opts);
    engine->last_metrics = record.metrics;
    engine->last_val_recall20 = record.best_val_recall20;
  });
}

mcl_status mcl_run_evaluate(mcl_engine* engine, const char* checkpoint, const char* out_dir) {
  if (!engine || !checkpoint || !out_dir) return MCL_ERR_CONFIG;
  return guarded(engine, [&] {
    app::RunOptions opts;
    opts.out_dir = out_dir;
    opts.condition = "evaluate";
    app::RunRecord record =
        app::evaluate_checkpoint(require_dataset(engine), engine->config, checkpoint, opts);
    engine->last_metrics = record.metrics;
  });
}

mcl_status mcl_run_robustness(mcl_engine* engine, const char* out_dir,
                              const double* noise_ratios, size_t n_ratios,
                              int include_extra_paths) {
  if (!engine || !out_dir) return MCL_ERR_CONFIG;
  return guarded(engine, [&] {
    std::vector<eval::PerturbationSpec> specs;
    for (size_t i = 0; i < n_ratios; ++i) {
      eval::PerturbationSpec spec;
      spec.kind = eval::PerturbationSpec::Kind::NoiseEdges;
      spec.noise_ratio = noise_ratios[i];
      specs.push_back(spec);
    }
    if (include_extra_paths) {
      eval::PerturbationSpec spec;
      spec.kind = eval::PerturbationSpec::Kind::ExtraMetaPaths;
      specs.push_back(spec);
    }
    app::run_robustness(require_dataset(engine), engine->config, specs, out_dir);
  });
}

mcl_status mcl_run_ablate(mcl_engine* engine, const char* out_dir) {
  if (!engine || !out_dir) return MCL_ERR_CONFIG;
  return guarded(engine,
                 [&] { app::run_ablations(require_dataset(engine), engine->config, out_dir); });
}

mcl_status mcl_run_sweep(mcl_engine* engine, const char* out_dir, const char* grid_spec) {
  if (!engine || !out_dir) return MCL_ERR_CONFIG;
  return guarded(engine, [&] {
    app::SweepGrid grid = app::SweepGrid::parse(grid_spec ? grid_spec : "");
    app::run_sweep(require_dataset(engine), engine->config, grid, out_dir);
  });
}

mcl_status mcl_export_embeddings(mcl_engine* engine, const char* checkpoint,
                                 const char* out_path) {
  if (!engine || !checkpoint || !out_path) return MCL_ERR_CONFIG;
  return guarded(engine, [&] {
    app::export_embeddings_from_checkpoint(require_dataset(engine), engine->config, checkpoint,
                                           out_path);
  });
}

double mcl_metric(const mcl_engine* engine, const char* name, int k) {
  if (!engine || !name || !engine->last_metrics) return -1.0;
  const eval::RunMetrics& m = *engine->last_metrics;
  for (size_t i = 0; i < m.k_values.size(); ++i) {
    if (m.k_values[i] != k) continue;
    if (std::string(name) == "recall") return m.recall[i];
    if (std::string(name) == "ndcg") return m.ndcg[i];
  }
  return -1.0;
}

double mcl_best_val_recall20(const mcl_engine* engine) {
  return engine ? engine->last_val_recall20 : -1.0;
}

mcl_status mcl_write_fixture(const char* shape, const char* dir, uint64_t seed) {
  if (!shape || !dir) return MCL_ERR_CONFIG;
  try {
    app::write_synthetic_fixture(shape, dir, seed);
    return MCL_OK;
  } catch (const Error& e) {
    return status_from_exit_code(e.exit_code());
  } catch (...) {
    return MCL_ERR_INTERNAL;
  }
}

}  // extern "C"
