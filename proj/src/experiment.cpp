#include "mcl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mcl::app {

namespace fs = std::filesystem;

const char* version_string() { return "mcl 0.1.0"; }

namespace {

std::string format_double_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string default_run_id(const Dataset& ds, const train::TrainConfig& cfg,
                           const RunOptions& opts) {
  std::ostringstream os;
  os << ds.name << '-' << opts.condition << "-s" << cfg.seed;
  return os.str();
}

std::vector<hin::MetaPath> effective_paths(const Dataset& ds, bool extra) {
  std::vector<hin::MetaPath> paths = ds.base_paths;
  if (extra) paths.insert(paths.end(), ds.extra_paths.begin(), ds.extra_paths.end());
  return paths;
}

// Deterministic per-run metrics file; timing stays out of it on purpose
// (it lives in log.jsonl and the robustness report).
void write_metrics_csv(const std::string& path, const std::string& condition,
                       const eval::RunMetrics& metrics) {
  std::ofstream out(path, std::ios::trunc);
  out << "condition,K,recall,ndcg,seed\n";
  out.setf(std::ios::fixed);
  out.precision(6);
  for (size_t i = 0; i < metrics.k_values.size(); ++i)
    out << condition << ',' << metrics.k_values[i] << ',' << metrics.recall[i] << ','
        << metrics.ndcg[i] << ',' << metrics.seed << '\n';
}

}  // namespace

hin::Hin rebuild_with_interactions(const Dataset& ds,
                                   const std::vector<train::Interaction>& interactions) {
  const hin::Hin& base = ds.hin;
  const hin::RelId inter_rel = base.require_relation(ds.interaction_relation);
  std::vector<hin::NodeInput> nodes;
  for (hin::TypeId t = 0; t < base.num_types(); ++t)
    for (int i = 0; i < base.count(t); ++i) nodes.push_back({base.type_name(t), base.external_id(t, i)});
  std::vector<hin::SchemaInput> schema;
  for (const hin::SchemaTriple& s : base.schema())
    schema.push_back({base.type_name(s.src_type), base.relation_name(s.rel),
                      base.type_name(s.dst_type)});
  std::vector<hin::EdgeInput> edges;
  for (const hin::Hin::Edge& e : base.edges()) {
    if (e.rel == inter_rel) continue;  // replaced by the split's edges
    edges.push_back({base.type_name(e.src_type), base.external_id(e.src_type, e.src),
                     base.relation_name(e.rel), base.type_name(e.dst_type),
                     base.external_id(e.dst_type, e.dst)});
  }
  const hin::TypeId user_t = base.user_type();
  const hin::TypeId item_t = base.item_type();
  const std::string rel_name = ds.interaction_relation;
  for (const train::Interaction& x : interactions)
    edges.push_back({base.type_name(user_t), base.external_id(user_t, x.user), rel_name,
                     base.type_name(item_t), base.external_id(item_t, x.item)});
  hin::Hin rebuilt = hin::build_hin(nodes, edges, schema);
  rebuilt.set_roles(rebuilt.require_type(base.type_name(user_t)),
                    rebuilt.require_type(base.type_name(item_t)));
  return rebuilt;
}

void export_embeddings_tsv(const hin::Hin& hin, const ad::Tensor& user_reps,
                           const ad::Tensor& item_reps, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::MissingFile, "cannot write embeddings to " + path);
  out.setf(std::ios::fixed);
  out.precision(8);
  auto dump = [&](hin::TypeId type, const ad::Tensor& reps) {
    for (int i = 0; i < reps.rows; ++i) {
      out << hin.external_id(type, i) << '\t' << hin.type_name(type);
      for (int c = 0; c < reps.cols; ++c) out << '\t' << reps.at(i, c);
      out << '\n';
    }
  };
  dump(hin.user_type(), user_reps);
  dump(hin.item_type(), item_reps);
}

RunRecord run_experiment(const Dataset& ds, const train::TrainConfig& cfg,
                         const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto wall_start = std::chrono::system_clock::now();
  cfg.validate();

  train::InteractionSplit split = train::split_interactions(
      ds.interactions, ds.hin.count(ds.hin.user_type()), ds.hin.count(ds.hin.item_type()),
      cfg.seed);
  if (opts.noise_ratio > 0.0) {
    Rng noise_rng(cfg.seed, "noise");
    split = eval::inject_noise(split, opts.noise_ratio, noise_rng).split;
  }

  // the learned graph only sees training (and injected) interactions
  hin::Hin working = rebuild_with_interactions(ds, split.train);
  train::GraphContext ctx =
      train::build_graph_context(working, effective_paths(ds, opts.use_extra_paths));

  RunRecord record;
  record.condition = opts.condition;
  record.run_id = opts.run_id.empty() ? default_run_id(ds, cfg, opts) : opts.run_id;
  record.seed = cfg.seed;
  record.version = version_string();
  record.config_text = cfg.to_text();

  std::ofstream jsonl;
  if (opts.write_artifacts) {
    record.out_dir = (fs::path(opts.out_dir) / record.run_id).string();
    fs::create_directories(record.out_dir);
    std::ofstream(record.out_dir + "/config.txt", std::ios::trunc) << record.config_text;
    jsonl.open(record.out_dir + "/log.jsonl", std::ios::trunc);
  }

  train::Trainer trainer(ctx, split, cfg);
  train::Trainer::FitResult fit = trainer.fit(opts.write_artifacts ? &jsonl : nullptr);
  record.best_val_recall20 = fit.best_val_recall20;
  record.best_epoch = fit.best_epoch;

  auto [user_reps, item_reps] = trainer.final_reps();
  eval::RankingResult ranking = eval::evaluate_split(user_reps, item_reps, split, cfg.eval_k);
  record.metrics.k_values = ranking.k_values;
  record.metrics.recall = ranking.recall;
  record.metrics.ndcg = ranking.ndcg;
  record.metrics.seed = cfg.seed;
  record.metrics.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  record.started_unix = std::chrono::duration<double>(wall_start.time_since_epoch()).count();
  record.finished_unix =
      std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();

  if (opts.write_artifacts) {
    write_metrics_csv(record.out_dir + "/metrics.csv", record.condition, record.metrics);
    record.checkpoint_path = record.out_dir + "/checkpoint.bin";
    ad::save_checkpoint(record.checkpoint_path, trainer.params().named());
    if (opts.export_embeddings)
      export_embeddings_tsv(working, user_reps, item_reps, record.out_dir + "/embeddings.tsv");
  }
  return record;
}

namespace {

// A checkpoint's parameter names identify the meta-path set it was trained
// with; runs from the redundant-path conditions carry the additional paths.
bool checkpoint_has_extra_paths(const Dataset& ds,
                                const std::vector<std::pair<std::string, ad::Tensor>>& loaded) {
  for (const hin::MetaPath& p : ds.extra_paths)
    for (const auto& [name, tensor] : loaded)
      if (name == "path.a." + p.name) return true;
  return false;
}

void assign_params(train::Trainer& trainer,
                   std::vector<std::pair<std::string, ad::Tensor>> loaded) {
  for (auto& [name, tensor] : loaded) {
    ad::Tensor& target = trainer.params().find(name);
    if (!target.same_shape(tensor))
      fail(ErrorCode::ShapeMismatch, "checkpoint parameter '" + name + "' has shape " +
                                         std::to_string(tensor.rows) + "x" +
                                         std::to_string(tensor.cols) +
                                         " but the model expects " + std::to_string(target.rows) +
                                         "x" + std::to_string(target.cols));
    target = std::move(tensor);
  }
}

}  // namespace

RunRecord evaluate_checkpoint(const Dataset& ds, const train::TrainConfig& cfg,
                              const std::string& checkpoint_path, const RunOptions& opts) {
  cfg.validate();
  train::InteractionSplit split = train::split_interactions(
      ds.interactions, ds.hin.count(ds.hin.user_type()), ds.hin.count(ds.hin.item_type()),
      cfg.seed);
  hin::Hin working = rebuild_with_interactions(ds, split.train);
  auto loaded = ad::load_checkpoint(checkpoint_path);
  const bool extra = opts.use_extra_paths || checkpoint_has_extra_paths(ds, loaded);
  train::GraphContext ctx = train::build_graph_context(working, effective_paths(ds, extra));
  train::Trainer trainer(ctx, split, cfg);
  assign_params(trainer, std::move(loaded));

  RunRecord record;
  record.condition = opts.condition;
  record.run_id = opts.run_id.empty() ? default_run_id(ds, cfg, opts) + "-eval" : opts.run_id;
  record.seed = cfg.seed;
  record.version = version_string();
  record.config_text = cfg.to_text();
  record.checkpoint_path = checkpoint_path;

  auto [user_reps, item_reps] = trainer.final_reps();
  eval::RankingResult ranking = eval::evaluate_split(user_reps, item_reps, split, cfg.eval_k);
  record.metrics.k_values = ranking.k_values;
  record.metrics.recall = ranking.recall;
  record.metrics.ndcg = ranking.ndcg;
  record.metrics.seed = cfg.seed;
  if (opts.write_artifacts) {
    record.out_dir = (fs::path(opts.out_dir) / record.run_id).string();
    fs::create_directories(record.out_dir);
    write_metrics_csv(record.out_dir + "/metrics.csv", record.condition, record.metrics);
    if (opts.export_embeddings)
      export_embeddings_tsv(working, user_reps, item_reps, record.out_dir + "/embeddings.tsv");
  }
  return record;
}

void export_embeddings_from_checkpoint(const Dataset& ds, const train::TrainConfig& cfg,
                                       const std::string& checkpoint_path,
                                       const std::string& out_path) {
  cfg.validate();
  train::InteractionSplit split = train::split_interactions(
      ds.interactions, ds.hin.count(ds.hin.user_type()), ds.hin.count(ds.hin.item_type()),
      cfg.seed);
  hin::Hin working = rebuild_with_interactions(ds, split.train);
  auto loaded = ad::load_checkpoint(checkpoint_path);
  train::GraphContext ctx = train::build_graph_context(
      working, effective_paths(ds, checkpoint_has_extra_paths(ds, loaded)));
  train::Trainer trainer(ctx, split, cfg);
  assign_params(trainer, std::move(loaded));
  auto [user_reps, item_reps] = trainer.final_reps();
  export_embeddings_tsv(working, user_reps, item_reps, out_path);
}

SweepGrid SweepGrid::parse(const std::string& spec) {
  SweepGrid grid;
  std::stringstream groups(spec);
  std::string group;
  while (std::getline(groups, group, ';')) {
    if (group.empty()) continue;
    const size_t eq = group.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::ConfigError, "sweep grid entry '" + group + "' is not key=v1,v2,...");
    const std::string key = group.substr(0, eq);
    std::stringstream vals(group.substr(eq + 1));
    std::string val;
    while (std::getline(vals, val, ',')) {
      if (val.empty()) continue;
      try {
        if (key == "L") grid.prop_orders.push_back(std::stoi(val));
        else if (key == "tau") grid.taus.push_back(std::stod(val));
        else if (key == "lr") grid.lrs.push_back(std::stod(val));
        else if (key == "d") grid.dims.push_back(std::stoi(val));
        else fail(ErrorCode::ConfigError, "unknown sweep key '" + key + "' (L, tau, lr, d)");
      } catch (const Error&) {
        throw;
      } catch (...) {
        fail(ErrorCode::ConfigError, "bad sweep value '" + val + "' for key '" + key + "'");
      }
    }
  }
  return grid;
}

std::vector<RunRecord> run_sweep(const Dataset& ds, const train::TrainConfig& base,
                                 const SweepGrid& grid, const std::string& out_dir) {
  const std::vector<int> orders = grid.prop_orders.empty() ? std::vector<int>{base.prop_order}
                                                           : grid.prop_orders;
  const std::vector<double> taus = grid.taus.empty() ? std::vector<double>{base.tau} : grid.taus;
  const std::vector<double> lrs = grid.lrs.empty() ? std::vector<double>{base.lr} : grid.lrs;
  const std::vector<int> dims = grid.dims.empty() ? std::vector<int>{base.d} : grid.dims;

  fs::create_directories(out_dir);
  std::ofstream summary(fs::path(out_dir) / "sweep_summary.csv", std::ios::trunc);
  summary << "run_id,d,L,tau,lr,val_recall20,test_recall20,test_ndcg20,best\n";

  std::vector<RunRecord> records;
  size_t best_index = 0;
  for (int d : dims)
    for (int order : orders)
      for (double tau : taus)
        for (double lr : lrs) {
          train::TrainConfig cfg = base;
          cfg.d = d;
          cfg.prop_order = order;
          cfg.tau = tau;
          cfg.lr = lr;
          RunOptions opts;
          opts.out_dir = out_dir;
          opts.condition = "sweep";
          std::ostringstream id;
          id << ds.name << "-sweep-d" << d << "-L" << order << "-tau"
             << format_double_short(tau) << "-lr" << format_double_short(lr) << "-s" << cfg.seed;
          opts.run_id = id.str();
          records.push_back(run_experiment(ds, cfg, opts));
          if (records.back().best_val_recall20 > records[best_index].best_val_recall20)
            best_index = records.size() - 1;
        }
  for (size_t i = 0; i < records.size(); ++i) {
    const RunRecord& r = records[i];
    train::TrainConfig cfg = train::TrainConfig::from_text(r.config_text);
    summary << r.run_id << ',' << cfg.d << ',' << cfg.prop_order << ','
            << format_double_short(cfg.tau) << ',' << format_double_short(cfg.lr) << ','
            << r.best_val_recall20 << ',' << r.metrics.recall_at(20) << ','
            << r.metrics.ndcg_at(20) << ',' << (i == best_index ? 1 : 0) << '\n';
  }
  return records;
}

namespace {

// One JSON line per completed run, appended next to the report CSVs.
void append_run_jsonl(const std::string& out_dir, const RunRecord& record) {
  std::ofstream out(fs::path(out_dir) / "runs.jsonl", std::ios::app);
  char line[512];
  std::snprintf(line, sizeof line,
                R"({"run_id":"%s","condition":"%s","seed":%llu,"recall20":%.10g,)"
                R"("ndcg20":%.10g,"val_recall20":%.10g,"best_epoch":%d,"wall_seconds":%.2f})",
                record.run_id.c_str(), record.condition.c_str(),
                static_cast<unsigned long long>(record.seed), record.metrics.recall_at(20),
                record.metrics.ndcg_at(20), record.best_val_recall20, record.best_epoch,
                record.metrics.wall_seconds);
  out << line << '\n';
}

}  // namespace

std::vector<RunRecord> run_ablations(const Dataset& ds, const train::TrainConfig& cfg,
                                     const std::string& out_dir) {
  struct Variant {
    const char* condition;
    const char* flag;  // nullptr for the full model
  };
  const Variant variants[] = {
      {"mcl", nullptr},   {"wo_mask", "no_mask"}, {"wo_cl", "no_cl"},
      {"wo_1hop", "no_1hop"}, {"wo_meta", "no_meta"},
  };
  fs::create_directories(out_dir);
  std::vector<RunRecord> records;
  for (const Variant& v : variants) {
    train::TrainConfig variant_cfg = cfg;
    if (v.flag != nullptr) variant_cfg.set(v.flag, "true");
    RunOptions opts;
    opts.out_dir = out_dir;
    opts.condition = v.condition;
    records.push_back(run_experiment(ds, variant_cfg, opts));
    append_run_jsonl(out_dir, records.back());
  }
  std::ofstream csv(fs::path(out_dir) / "ablation.csv", std::ios::trunc);
  csv << "condition,K,recall,ndcg,seed\n";
  csv.setf(std::ios::fixed);
  csv.precision(6);
  for (const RunRecord& r : records)
    for (size_t i = 0; i < r.metrics.k_values.size(); ++i)
      csv << r.condition << ',' << r.metrics.k_values[i] << ',' << r.metrics.recall[i] << ','
          << r.metrics.ndcg[i] << ',' << r.seed << '\n';
  return records;
}

eval::RobustnessReport run_robustness(const Dataset& ds, const train::TrainConfig& cfg,
                                      const std::vector<eval::PerturbationSpec>& perturbations,
                                      const std::string& out_dir) {
  fs::create_directories(out_dir);
  RunOptions clean_opts;
  clean_opts.out_dir = out_dir;
  clean_opts.condition = "clean";
  RunRecord clean = run_experiment(ds, cfg, clean_opts);
  append_run_jsonl(out_dir, clean);

  eval::RobustnessReport report = eval::run_robustness_suite(
      clean.metrics, perturbations, [&](const eval::PerturbationSpec& spec) {
        RunOptions opts;
        opts.out_dir = out_dir;
        opts.condition = spec.label();
        RunRecord record;
        if (spec.kind == eval::PerturbationSpec::Kind::NoiseEdges) {
          opts.noise_ratio = spec.noise_ratio;
          record = run_experiment(ds, cfg, opts);
        } else if (spec.added_paths.empty()) {
          opts.use_extra_paths = true;
          record = run_experiment(ds, cfg, opts);
        } else {
          opts.use_extra_paths = true;
          Dataset filtered = ds;  // keep only the named additional paths
          filtered.extra_paths.clear();
          for (const hin::MetaPath& p : ds.extra_paths)
            if (std::find(spec.added_paths.begin(), spec.added_paths.end(), p.name) !=
                spec.added_paths.end())
              filtered.extra_paths.push_back(p);
          if (filtered.extra_paths.empty())
            fail(ErrorCode::ConfigError, "no declared additional meta-path matches the request");
          record = run_experiment(filtered, cfg, opts);
        }
        append_run_jsonl(out_dir, record);
        return record.metrics;
      });
  std::ofstream(fs::path(out_dir) / "robustness.csv", std::ios::trunc) << report.to_csv();
  return report;
}

}  // namespace mcl::app
