#include "mcl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mcl/evaluation.hpp"

namespace mcl::train {

using ad::Tensor;
using ad::Var;

// ---------------------------------------------------------------------------
// Interaction split
// ---------------------------------------------------------------------------

bool InteractionSplit::in_train(int user, int item) const {
  const auto& items = train_by_user[user];
  return std::binary_search(items.begin(), items.end(), item);
}

bool InteractionSplit::known(int user, int item) const {
  if (in_train(user, item)) return true;
  const auto& val = val_by_user[user];
  if (std::binary_search(val.begin(), val.end(), item)) return true;
  const auto& test = test_by_user[user];
  return std::binary_search(test.begin(), test.end(), item);
}

void InteractionSplit::rebuild_index() {
  train_by_user.assign(num_users, {});
  val_by_user.assign(num_users, {});
  test_by_user.assign(num_users, {});
  for (const Interaction& x : train) train_by_user[x.user].push_back(x.item);
  for (const Interaction& x : validation) val_by_user[x.user].push_back(x.item);
  for (const Interaction& x : test) test_by_user[x.user].push_back(x.item);
  for (auto* lists : {&train_by_user, &val_by_user, &test_by_user})
    for (auto& v : *lists) std::sort(v.begin(), v.end());
}

InteractionSplit split_interactions(const std::vector<Interaction>& interactions, int num_users,
                                    int num_items, uint64_t seed) {
  std::vector<std::vector<int>> by_user(num_users);
  for (const Interaction& x : interactions) {
    if (x.user < 0 || x.user >= num_users || x.item < 0 || x.item >= num_items)
      fail(ErrorCode::UnknownNode, "interaction references an out-of-range user or item");
    by_user[x.user].push_back(x.item);
  }
  InteractionSplit split;
  split.num_users = num_users;
  split.num_items = num_items;
  Rng rng(seed, "split");
  for (int u = 0; u < num_users; ++u) {
    auto& items = by_user[u];
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    if (items.empty())
      fail(ErrorCode::UserWithoutInteractions,
           "user " + std::to_string(u) + " has no interactions");
    rng.shuffle(items);
    const int n = static_cast<int>(items.size());
    const int pool = static_cast<int>(std::ceil(0.8 * n));
    const int test_count = n - pool;
    int val_count = static_cast<int>(std::lround(0.1 * pool));
    if (pool - val_count < 1) val_count = pool - 1;  // never drop the last train edge
    for (int k = 0; k < test_count; ++k) split.test.push_back({u, items[k]});
    for (int k = test_count; k < test_count + val_count; ++k)
      split.validation.push_back({u, items[k]});
    for (int k = test_count + val_count; k < n; ++k) split.train.push_back({u, items[k]});
  }
  split.rebuild_index();
  return split;
}

std::vector<BprTriple> sample_bpr_batch(const InteractionSplit& split, int batch, Rng& rng) {
  if (batch < 1) fail(ErrorCode::EmptyBatch, "batch size must be at least 1");
  if (split.train.empty()) fail(ErrorCode::EmptyBatch, "training set is empty");
  std::vector<BprTriple> triples;
  triples.reserve(batch);
  for (int b = 0; b < batch; ++b) {
    const Interaction& obs = split.train[rng.bounded(split.train.size())];
    int neg = -1;
    for (int attempt = 0; attempt < 100; ++attempt) {
      const int candidate = static_cast<int>(rng.bounded(split.num_items));
      if (!split.in_train(obs.user, candidate)) {
        neg = candidate;
        break;
      }
    }
    if (neg < 0)
      fail(ErrorCode::SaturatedUser, "user " + std::to_string(obs.user) +
                                         " has no unobserved item to sample as a negative");
    triples.push_back({obs.user, obs.item, neg});
  }
  return triples;
}

Var bpr_loss(Var user_reps, Var item_reps, const std::vector<BprTriple>& triples, double lambda2,
             const std::vector<Var>& regularized) {
  if (triples.empty()) fail(ErrorCode::EmptyBatch, "bpr_loss: empty batch");
  std::vector<int> users, pos_items, neg_items;
  users.reserve(triples.size());
  pos_items.reserve(triples.size());
  neg_items.reserve(triples.size());
  for (const BprTriple& t : triples) {
    users.push_back(t.user);
    pos_items.push_back(t.pos);
    neg_items.push_back(t.neg);
  }
  Var u = ad::gather_rows(user_reps, users);
  Var pos = ad::row_sum(ad::mul(u, ad::gather_rows(item_reps, pos_items)));
  Var neg = ad::row_sum(ad::mul(u, ad::gather_rows(item_reps, neg_items)));
  Var loss = ad::scalar_mul(ad::sum_all(ad::log_eps(ad::sigmoid(ad::sub(pos, neg)))), -1.0);
  for (Var p : regularized)
    loss = ad::add(loss, ad::scalar_mul(ad::sum_all(ad::mul(p, p)), lambda2));
  return loss;
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail(ErrorCode::ConfigError, "key '" + key + "' expects a boolean, got '" + value + "'");
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  auto to_int = [&](int lo) {
    int v;
    try {
      v = std::stoi(value);
    } catch (...) {
      fail(ErrorCode::ConfigError, "key '" + key + "' expects an integer, got '" + value + "'");
    }
    if (v < lo)
      fail(ErrorCode::ConfigError, "key '" + key + "' must be at least " + std::to_string(lo));
    return v;
  };
  auto to_double = [&] {
    try {
      return std::stod(value);
    } catch (...) {
      fail(ErrorCode::ConfigError, "key '" + key + "' expects a number, got '" + value + "'");
    }
  };
  if (key == "d") d = to_int(1);
  else if (key == "batch") batch = to_int(1);
  else if (key == "epochs") epochs = to_int(1);
  else if (key == "patience") patience = to_int(0);
  else if (key == "lr") lr = to_double();
  else if (key == "lambda2") lambda2 = to_double();
  else if (key == "beta") beta = to_double();
  else if (key == "mask_delta") mask_delta = to_double();
  else if (key == "prop_order_L") prop_order = to_int(0);
  else if (key == "mask_enabled") mask_enabled = parse_bool(key, value);
  else if (key == "tau") tau = to_double();
  else if (key == "lambda1") lambda1 = to_double();
  else if (key == "double_exp") double_exp = parse_bool(key, value);
  else if (key == "infonce_ablation") infonce_ablation = parse_bool(key, value);
  else if (key == "detach_augmentation") detach_augmentation = parse_bool(key, value);
  else if (key == "aggregate_projected") aggregate_projected = parse_bool(key, value);
  else if (key == "seed") {
    try {
      seed = static_cast<uint64_t>(std::stoull(value));
    } catch (...) {
      fail(ErrorCode::ConfigError, "key 'seed' expects an unsigned integer, got '" + value + "'");
    }
  }
  else if (key == "no_mask") no_mask = parse_bool(key, value);
  else if (key == "no_cl") no_cl = parse_bool(key, value);
  else if (key == "no_1hop") no_1hop = parse_bool(key, value);
  else if (key == "no_meta") no_meta = parse_bool(key, value);
  else if (key == "eval_k") {
    eval_k.clear();
    std::stringstream ss(value);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (!tok.empty()) eval_k.push_back(std::stoi(tok));
    }
    if (eval_k.empty()) fail(ErrorCode::ConfigError, "eval_k needs at least one cutoff");
  } else if (key == "fusion") {
    if (value == "sum") fusion = Fusion::Sum;
    else if (value == "concat") fusion = Fusion::Concat;
    else if (value == "meta_only") fusion = Fusion::MetaOnly;
    else fail(ErrorCode::ConfigError, "fusion must be sum, concat, or meta_only");
  } else if (key == "l2_scope") {
    if (value == "embeddings") l2_scope = L2Scope::Embeddings;
    else if (value == "all") l2_scope = L2Scope::All;
    else fail(ErrorCode::ConfigError, "l2_scope must be embeddings or all");
  } else if (key == "model") {
    if (value == "mcl") model = ModelKind::Mcl;
    else if (value == "bpr_mf") model = ModelKind::BprMf;
    else fail(ErrorCode::ConfigError, "model must be mcl or bpr_mf");
  } else {
    fail(ErrorCode::ConfigError, "unknown config key '" + key + "'");
  }
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::ConfigError,
           "config line " + std::to_string(line_no) + " is not 'key = value'");
    cfg.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, "cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_text(buffer.str());
}

void TrainConfig::validate() const {
  if (lr <= 0.0) fail(ErrorCode::ConfigError, "lr must be positive");
  if (lambda2 < 0.0) fail(ErrorCode::ConfigError, "lambda2 must be non-negative");
  if (beta < 0.0) fail(ErrorCode::ConfigError, "beta must be non-negative");
  if (mask_delta < 0.0 || mask_delta > 0.95)
    fail(ErrorCode::ConfigError, "mask_delta must lie in [0, 0.95]");
  if (tau <= 0.0) fail(ErrorCode::NonpositiveTau, "tau must be positive");
  if (lambda1 < 0.0 || lambda1 > 1.0) fail(ErrorCode::ConfigError, "lambda1 must lie in [0, 1]");
  if (no_1hop && no_meta)
    fail(ErrorCode::ConfigError, "no_1hop and no_meta cannot both be set: no view remains");
  for (int k : eval_k)
    if (k < 1) fail(ErrorCode::ConfigError, "eval_k entries must be positive");
}

double TrainConfig::effective_beta() const {
  if (no_cl || no_meta || no_1hop || model == ModelKind::BprMf) return 0.0;
  return beta;
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "d = " << d << '\n';
  os << "batch = " << batch << '\n';
  os << "epochs = " << epochs << '\n';
  os << "patience = " << patience << '\n';
  os << "lr = " << format_double(lr) << '\n';
  os << "lambda2 = " << format_double(lambda2) << '\n';
  os << "beta = " << format_double(beta) << '\n';
  os << "mask_delta = " << format_double(mask_delta) << '\n';
  os << "prop_order_L = " << prop_order << '\n';
  os << "mask_enabled = " << (mask_enabled ? "true" : "false") << '\n';
  os << "tau = " << format_double(tau) << '\n';
  os << "lambda1 = " << format_double(lambda1) << '\n';
  os << "double_exp = " << (double_exp ? "true" : "false") << '\n';
  os << "infonce_ablation = " << (infonce_ablation ? "true" : "false") << '\n';
  os << "detach_augmentation = " << (detach_augmentation ? "true" : "false") << '\n';
  os << "aggregate_projected = " << (aggregate_projected ? "true" : "false") << '\n';
  os << "seed = " << seed << '\n';
  os << "no_mask = " << (no_mask ? "true" : "false") << '\n';
  os << "no_cl = " << (no_cl ? "true" : "false") << '\n';
  os << "no_1hop = " << (no_1hop ? "true" : "false") << '\n';
  os << "no_meta = " << (no_meta ? "true" : "false") << '\n';
  os << "eval_k = ";
  for (size_t i = 0; i < eval_k.size(); ++i) os << (i ? "," : "") << eval_k[i];
  os << '\n';
  os << "fusion = "
     << (fusion == Fusion::Sum ? "sum" : fusion == Fusion::Concat ? "concat" : "meta_only")
     << '\n';
  os << "l2_scope = " << (l2_scope == L2Scope::Embeddings ? "embeddings" : "all") << '\n';
  os << "model = " << (model == ModelKind::Mcl ? "mcl" : "bpr_mf") << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Parameters and graph context
// ---------------------------------------------------------------------------

Tensor& ModelParams::find(const std::string& name) {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return tensors[i];
  fail(ErrorCode::MissingEmbedding, "no parameter named '" + name + "'");
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(names.size());
  for (size_t i = 0; i < names.size(); ++i) out.emplace_back(names[i], &tensors[i]);
  return out;
}

std::vector<Tensor*> ModelParams::pointers() {
  std::vector<Tensor*> out;
  out.reserve(tensors.size());
  for (Tensor& t : tensors) out.push_back(&t);
  return out;
}

ModelParams init_params(const hin::Hin& hin, const std::vector<hin::MetaPath>& paths, int d,
                        uint64_t seed) {
  Rng rng(seed, "init");
  ModelParams params;
  auto push = [&params](std::string name, Tensor t) {
    params.names.push_back(std::move(name));
    params.tensors.push_back(std::move(t));
  };
  for (hin::TypeId t = 0; t < hin.num_types(); ++t)
    push("embedding." + hin.type_name(t), ad::xavier_init(hin.count(t), d, rng));
  for (hin::RelId r = 0; r < hin.num_relations(); ++r) {
    push("one_hop.P." + hin.relation_name(r), ad::xavier_init(d, d, rng));
    push("one_hop.a." + hin.relation_name(r), ad::xavier_init(2 * d, 1, rng));
  }
  for (const hin::MetaPath& p : paths)
    push("path.a." + p.name, ad::xavier_init(2 * d, 1, rng));
  push("semantic.W", ad::xavier_init(d, d, rng));
  push("semantic.b", ad::xavier_init(1, d, rng));
  push("semantic.q", ad::xavier_init(d, 1, rng));
  push("contrast.W1", ad::xavier_init(d, d, rng));
  push("contrast.b1", ad::xavier_init(1, d, rng));
  push("contrast.W2", ad::xavier_init(d, d, rng));
  push("contrast.b2", ad::xavier_init(1, d, rng));
  return params;
}

GraphContext build_graph_context(const hin::Hin& hin, const std::vector<hin::MetaPath>& paths) {
  if (hin.user_type() < 0 || hin.item_type() < 0)
    fail(ErrorCode::ConfigError, "user/item roles must be designated before building contexts");
  GraphContext ctx;
  ctx.hin = &hin;
  ctx.one_hop = enc::build_one_hop_contexts(hin);
  std::vector<const hin::MetaPathGraph*> user_graphs, item_graphs;
  for (size_t i = 0; i < paths.size(); ++i) {
    PathContext pc;
    pc.path = paths[i];
    pc.graph = hin::metapath_subgraph(hin, paths[i]);
    pc.param_index = i;
    pc.mask = hin::adjacency_mask(pc.graph);
    pc.norm_adj = hin::normalized_adjacency(pc.graph);
    if (pc.graph.endpoint_type == hin.user_type()) {
      ctx.user_paths.push_back(std::move(pc));
    } else if (pc.graph.endpoint_type == hin.item_type()) {
      ctx.item_paths.push_back(std::move(pc));
    } else {
      fail(ErrorCode::ConfigError, "meta-path '" + paths[i].name +
                                       "' does not end on the user or item type");
    }
  }
  for (const PathContext& pc : ctx.user_paths) user_graphs.push_back(&pc.graph);
  for (const PathContext& pc : ctx.item_paths) item_graphs.push_back(&pc.graph);
  if (!user_graphs.empty()) ctx.pos_user = hin::positive_mask(hin::positive_matrix(user_graphs));
  if (!item_graphs.empty()) ctx.pos_item = hin::positive_mask(hin::positive_matrix(item_graphs));
  ctx.identity_user = Tensor::identity(hin.count(hin.user_type()));
  ctx.identity_item = Tensor::identity(hin.count(hin.item_type()));
  return ctx;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct Trainer::RegisteredVars {
  std::vector<Var> all;
  std::vector<Var> embeddings;   // by type id
  std::vector<Var> projection;   // by relation id
  std::vector<Var> rel_scorer;   // by relation id
  std::vector<Var> path_scorer;  // by path param_index
  enc::SemanticVars semantic;
  cl::ProjectionVars contrast;
};

Trainer::RegisteredVars Trainer::make_vars(ad::Tape& tape, bool trainable) {
  const hin::Hin& hin = *ctx_.hin;
  const size_t num_paths = ctx_.user_paths.size() + ctx_.item_paths.size();
  RegisteredVars vars;
  for (Tensor& t : params_.tensors)
    vars.all.push_back(trainable ? tape.param(t) : tape.constant_ref(&t));
  size_t at = 0;
  for (hin::TypeId t = 0; t < hin.num_types(); ++t) vars.embeddings.push_back(vars.all[at++]);
  for (hin::RelId r = 0; r < hin.num_relations(); ++r) {
    vars.projection.push_back(vars.all[at++]);
    vars.rel_scorer.push_back(vars.all[at++]);
  }
  for (size_t p = 0; p < num_paths; ++p) vars.path_scorer.push_back(vars.all[at++]);
  vars.semantic = {vars.all[at], vars.all[at + 1], vars.all[at + 2]};
  at += 3;
  vars.contrast = {vars.all[at], vars.all[at + 1], vars.all[at + 2], vars.all[at + 3]};
  return vars;
}

struct Trainer::ViewReps {
  Var rep_user, rep_item;
  Var h1_user, h1_item;
  Var h2_user, h2_item;
  bool have_one_hop = false;
  bool have_meta = false;
};

Trainer::Trainer(const GraphContext& ctx, const InteractionSplit& split, TrainConfig cfg)
    : ctx_(ctx),
      split_(split),
      cfg_(std::move(cfg)),
      adam_(cfg_.lr),
      mask_rng_(cfg_.seed, "mask"),
      sample_rng_(cfg_.seed, "negative-sampling") {
  cfg_.validate();
  const hin::Hin& hin = *ctx_.hin;
  if (split_.num_users != hin.count(hin.user_type()) ||
      split_.num_items != hin.count(hin.item_type()))
    fail(ErrorCode::ShapeMismatch, "split does not match the graph's user/item counts");
  if (cfg_.model == ModelKind::Mcl && !cfg_.no_meta &&
      (ctx_.user_paths.empty() || ctx_.item_paths.empty()))
    fail(ErrorCode::ConfigError,
         "the meta-path view needs at least one user path and one item path");
  size_t num_paths = ctx_.user_paths.size() + ctx_.item_paths.size();
  std::vector<hin::MetaPath> paths(num_paths);
  for (const PathContext& pc : ctx_.user_paths) paths[pc.param_index] = pc.path;
  for (const PathContext& pc : ctx_.item_paths) paths[pc.param_index] = pc.path;
  params_ = init_params(hin, paths, cfg_.d, cfg_.seed);
}

Trainer::ViewReps Trainer::forward_views(ad::Tape& tape, RegisteredVars& vars,
                                         const StepInputs* step) const {
  const hin::Hin& hin = *ctx_.hin;
  const hin::TypeId user_t = hin.user_type();
  const hin::TypeId item_t = hin.item_type();
  ViewReps reps;

  if (cfg_.model == ModelKind::BprMf) {
    reps.rep_user = vars.embeddings[user_t];
    reps.rep_item = vars.embeddings[item_t];
    return reps;
  }

  if (!cfg_.no_1hop) {
    enc::OneHopVars oh{vars.projection, vars.rel_scorer};
    enc::OneHopResult res =
        enc::one_hop_encode(ctx_.one_hop, vars.embeddings, oh, cfg_.aggregate_projected);
    reps.h1_user = res.by_type[user_t];
    reps.h1_item = res.by_type[item_t];
    reps.have_one_hop = true;
  }

  if (!cfg_.no_meta) {
    auto encode_type = [&](const std::vector<PathContext>& paths, Var base,
                           const aug::MaskVector* mask) {
      Var source = base;
      if (mask != nullptr && !cfg_.no_mask && cfg_.mask_enabled)
        source = aug::apply_mask(base, *mask);
      std::vector<Var> path_embs;
      for (const PathContext& pc : paths) {
        Var e_bar;
        if (cfg_.no_mask) {
          e_bar = base;  // ablation: raw embeddings straight into attention
        } else {
          Var norm_adj = tape.constant_ref(&pc.norm_adj);
          e_bar = aug::propagate_with(norm_adj, source, cfg_.prop_order).matrix;
          if (cfg_.detach_augmentation) e_bar = ad::detach(e_bar);
        }
        Var mask_var = tape.constant_ref(&pc.mask);
        path_embs.push_back(
            enc::node_level_encode(mask_var, e_bar, vars.path_scorer[pc.param_index]).h);
      }
      return enc::semantic_fuse(path_embs, vars.semantic).h;
    };
    reps.h2_user = encode_type(ctx_.user_paths, vars.embeddings[user_t],
                               step ? &step->user_mask : nullptr);
    reps.h2_item = encode_type(ctx_.item_paths, vars.embeddings[item_t],
                               step ? &step->item_mask : nullptr);
    reps.have_meta = true;
  }

  if (!reps.have_one_hop) {
    reps.rep_user = reps.h2_user;
    reps.rep_item = reps.h2_item;
  } else if (!reps.have_meta) {
    reps.rep_user = reps.h1_user;
    reps.rep_item = reps.h1_item;
  } else {
    switch (cfg_.fusion) {
      case Fusion::Sum:
        reps.rep_user = ad::add(reps.h1_user, reps.h2_user);
        reps.rep_item = ad::add(reps.h1_item, reps.h2_item);
        break;
      case Fusion::Concat:
        reps.rep_user = ad::concat_cols({reps.h1_user, reps.h2_user});
        reps.rep_item = ad::concat_cols({reps.h1_item, reps.h2_item});
        break;
      case Fusion::MetaOnly:
        reps.rep_user = reps.h2_user;
        reps.rep_item = reps.h2_item;
        break;
    }
  }
  return reps;
}

StepLosses Trainer::compute_loss(const StepInputs& inputs, std::vector<Tensor>* grads) {
  const hin::Hin& hin = *ctx_.hin;
  ad::Tape tape;
  RegisteredVars vars = make_vars(tape, /*trainable=*/true);
  ViewReps reps = forward_views(tape, vars, &inputs);

  std::vector<Var> regularized;
  if (cfg_.l2_scope == L2Scope::Embeddings) {
    for (hin::TypeId t = 0; t < hin.num_types(); ++t)
      regularized.push_back(vars.embeddings[t]);
  } else {
    regularized = vars.all;
  }
  Var l_bpr = bpr_loss(reps.rep_user, reps.rep_item, inputs.batch, cfg_.lambda2, regularized);

  StepLosses losses;
  losses.l_bpr = tape.value(l_bpr.id).scalar();
  Var total = l_bpr;
  const double beta = cfg_.effective_beta();
  if (beta > 0.0 && reps.have_one_hop && reps.have_meta) {
    Var z1u = cl::project(reps.h1_user, vars.contrast);
    Var z2u = cl::project(reps.h2_user, vars.contrast);
    Var z1i = cl::project(reps.h1_item, vars.contrast);
    Var z2i = cl::project(reps.h2_item, vars.contrast);
    cl::SimilarityPair pair_u = cl::similarity_pair(z1u, z2u, cfg_.tau, cfg_.double_exp);
    cl::SimilarityPair pair_i = cl::similarity_pair(z1i, z2i, cfg_.tau, cfg_.double_exp);
    Var pos_u = tape.constant_ref(cfg_.infonce_ablation ? &ctx_.identity_user : &ctx_.pos_user);
    Var pos_i = tape.constant_ref(cfg_.infonce_ablation ? &ctx_.identity_item : &ctx_.pos_item);
    Var l_u = cl::contrastive_loss(pair_u, pos_u, cfg_.lambda1);
    Var l_i = cl::contrastive_loss(pair_i, pos_i, cfg_.lambda1);
    losses.l_u = tape.value(l_u.id).scalar();
    losses.l_i = tape.value(l_i.id).scalar();
    total = ad::add(total, ad::scalar_mul(ad::add(l_u, l_i), beta));
  }
  losses.total = tape.value(total.id).scalar();

  if (grads != nullptr) {
    tape.backward(total);
    grads->clear();
    grads->reserve(vars.all.size());
    for (Var v : vars.all) grads->push_back(tape.grad(v));
  }
  return losses;
}

StepInputs Trainer::draw_step_inputs() {
  const hin::Hin& hin = *ctx_.hin;
  StepInputs inputs;
  inputs.user_mask = aug::sample_mask(hin.count(hin.user_type()), cfg_.mask_delta, mask_rng_);
  inputs.item_mask = aug::sample_mask(hin.count(hin.item_type()), cfg_.mask_delta, mask_rng_);
  inputs.batch = sample_bpr_batch(split_, cfg_.batch, sample_rng_);
  return inputs;
}

int Trainer::batches_per_epoch() const {
  return std::max<int>(1, static_cast<int>(split_.train.size()) / cfg_.batch);
}

EpochReport Trainer::train_epoch() {
  EpochReport report;
  const int batches = batches_per_epoch();
  std::vector<Tensor> grads;
  std::vector<Tensor*> param_ptrs = params_.pointers();
  for (int b = 0; b < batches; ++b) {
    StepInputs inputs = draw_step_inputs();
    StepLosses losses;
    try {
      losses = compute_loss(inputs, &grads);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NumericError)
        fail(ErrorCode::NonFiniteLoss, "non-finite loss at epoch " + std::to_string(epoch_ + 1) +
                                           ", batch " + std::to_string(b) + ": " + e.what());
      throw;
    }
    double sq_norm = 0.0;
    std::vector<const Tensor*> grad_ptrs;
    grad_ptrs.reserve(grads.size());
    for (const Tensor& g : grads) {
      grad_ptrs.push_back(&g);
      for (double x : g.data) sq_norm += x * x;
    }
    ad::adam_step(param_ptrs, grad_ptrs, adam_);
    report.l_bpr += losses.l_bpr;
    report.l_u += losses.l_u;
    report.l_i += losses.l_i;
    report.total += losses.total;
    report.grad_norm += std::sqrt(sq_norm);
  }
  report.l_bpr /= batches;
  report.l_u /= batches;
  report.l_i /= batches;
  report.total /= batches;
  report.grad_norm /= batches;
  report.epoch = ++epoch_;
  return report;
}

std::pair<Tensor, Tensor> Trainer::final_reps() {
  ad::Tape tape;
  RegisteredVars vars = make_vars(tape, /*trainable=*/false);
  ViewReps reps = forward_views(tape, vars, nullptr);
  return {tape.value(reps.rep_user.id), tape.value(reps.rep_item.id)};
}

double Trainer::validation_recall20() {
  if (split_.validation.empty()) return 0.0;
  auto [user_reps, item_reps] = final_reps();
  eval::RankingResult r =
      eval::topk_rank(user_reps, item_reps, split_.train_by_user, split_.val_by_user, {20});
  return r.recall[0];
}

Trainer::FitResult Trainer::fit(std::ostream* jsonl) {
  FitResult result;
  std::vector<Tensor> best_tensors;
  const bool has_validation = !split_.validation.empty();
  int since_best = 0;
  for (int e = 0; e < cfg_.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochReport report = train_epoch();
    report.val_recall20 = has_validation ? validation_recall20() : 0.0;
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (jsonl != nullptr) {
      char line[512];
      std::snprintf(line, sizeof line,
                    R"({"epoch":%d,"l_bpr":%.10g,"l_u":%.10g,"l_i":%.10g,"total":%.10g,)"
                    R"("val_recall20":%.10g,"seconds":%.3f})",
                    report.epoch, report.l_bpr, report.l_u, report.l_i, report.total,
                    report.val_recall20, report.seconds);
      (*jsonl) << line << '\n';
      jsonl->flush();
    }
    result.history.push_back(report);
    if (!has_validation) continue;
    if (result.best_epoch < 0 || report.val_recall20 > result.best_val_recall20) {
      result.best_epoch = report.epoch;
      result.best_val_recall20 = report.val_recall20;
      best_tensors = params_.tensors;
      since_best = 0;
    } else if (++since_best >= cfg_.patience) {
      break;
    }
  }
  if (has_validation && !best_tensors.empty()) {
    params_.tensors = std::move(best_tensors);  // report the best-epoch checkpoint
  } else if (!result.history.empty()) {
    result.best_epoch = result.history.back().epoch;
  }
  return result;
}

}  // namespace mcl::train
