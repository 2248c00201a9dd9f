#include "mcl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace mcl::eval {

using ad::Tensor;

double recall_at_k(const std::vector<int>& ranked, const std::vector<int>& relevant_sorted,
                   int k) {
  if (relevant_sorted.empty())
    fail(ErrorCode::NoRelevantItems, "recall_at_k: empty relevant set");
  int hits = 0;
  const int limit = std::min<int>(k, static_cast<int>(ranked.size()));
  for (int r = 0; r < limit; ++r)
    if (std::binary_search(relevant_sorted.begin(), relevant_sorted.end(), ranked[r])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(relevant_sorted.size());
}

double ndcg_at_k(const std::vector<int>& ranked, const std::vector<int>& relevant_sorted, int k) {
  if (relevant_sorted.empty())
    fail(ErrorCode::NoRelevantItems, "ndcg_at_k: empty relevant set");
  if (k < 1) fail(ErrorCode::ConfigError, "ndcg_at_k: k must be at least 1");
  double dcg = 0.0;
  const int limit = std::min<int>(k, static_cast<int>(ranked.size()));
  for (int r = 0; r < limit; ++r)
    if (std::binary_search(relevant_sorted.begin(), relevant_sorted.end(), ranked[r]))
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  const int ideal = std::min<int>(k, static_cast<int>(relevant_sorted.size()));
  double idcg = 0.0;
  for (int r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

RankingResult topk_rank(const Tensor& user_embs, const Tensor& item_embs,
                        const std::vector<std::vector<int>>& exclude_by_user,
                        const std::vector<std::vector<int>>& targets_by_user,
                        const std::vector<int>& k_values) {
  const int num_users = user_embs.rows;
  const int num_items = item_embs.rows;
  if (user_embs.cols != item_embs.cols)
    fail(ErrorCode::ShapeMismatch, "topk_rank: representation widths differ");
  if (static_cast<int>(targets_by_user.size()) != num_users ||
      static_cast<int>(exclude_by_user.size()) != num_users)
    fail(ErrorCode::ShapeMismatch, "topk_rank: per-user lists must cover every user");
  RankingResult result;
  result.k_values = k_values;
  const int k_max = *std::max_element(k_values.begin(), k_values.end());
  result.per_user_recall.resize(k_values.size());
  result.per_user_ndcg.resize(k_values.size());

  std::vector<int> order;
  order.reserve(num_items);
  std::vector<double> scores(num_items);
  for (int u = 0; u < num_users; ++u) {
    if (targets_by_user[u].empty()) continue;
    const double* urow = user_embs.row(u);
    for (int i = 0; i < num_items; ++i) {
      const double* irow = item_embs.row(i);
      double s = 0.0;
      for (int c = 0; c < user_embs.cols; ++c) s += urow[c] * irow[c];
      scores[i] = s;
    }
    // excluded items are dropped entirely, so short lists never leak them
    order.clear();
    for (int i = 0; i < num_items; ++i)
      if (!std::binary_search(exclude_by_user[u].begin(), exclude_by_user[u].end(), i))
        order.push_back(i);
    const int take = std::min<int>(k_max, static_cast<int>(order.size()));
    std::partial_sort(order.begin(), order.begin() + take, order.end(), [&](int a, int b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;
    });
    result.users.push_back(u);
    result.topk.emplace_back(order.begin(), order.begin() + take);
    for (size_t ki = 0; ki < k_values.size(); ++ki) {
      result.per_user_recall[ki].push_back(
          recall_at_k(result.topk.back(), targets_by_user[u], k_values[ki]));
      result.per_user_ndcg[ki].push_back(
          ndcg_at_k(result.topk.back(), targets_by_user[u], k_values[ki]));
    }
  }
  if (result.users.empty())
    fail(ErrorCode::EmptyTestSet, "topk_rank: no user has target items");
  for (size_t ki = 0; ki < k_values.size(); ++ki) {
    const auto& rec = result.per_user_recall[ki];
    const auto& nd = result.per_user_ndcg[ki];
    result.recall.push_back(std::accumulate(rec.begin(), rec.end(), 0.0) / rec.size());
    result.ndcg.push_back(std::accumulate(nd.begin(), nd.end(), 0.0) / nd.size());
  }
  return result;
}

RankingResult evaluate_split(const Tensor& user_embs, const Tensor& item_embs,
                             const train::InteractionSplit& split,
                             const std::vector<int>& k_values) {
  return topk_rank(user_embs, item_embs, split.train_by_user, split.test_by_user, k_values);
}

NoiseInjection inject_noise(const train::InteractionSplit& split, double ratio, Rng& rng) {
  if (ratio <= 0.0 || ratio > 1.0)
    fail(ErrorCode::ConfigError, "noise ratio must lie in (0, 1], got " + std::to_string(ratio));
  NoiseInjection out;
  out.split = split;
  const int to_add = static_cast<int>(
      std::ceil(ratio * static_cast<double>(split.train.size())));

  // distinct source interactions via partial Fisher-Yates over train indices
  std::vector<int> idx(split.train.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int pick = 0; pick < to_add; ++pick) {
    const size_t j = pick + rng.bounded(idx.size() - pick);
    std::swap(idx[pick], idx[j]);
  }

  std::vector<std::vector<int>> added_by_user(split.num_users);
  auto eligible = [&](int user, int item) {
    if (out.split.known(user, item)) return false;
    const auto& added = added_by_user[user];
    return !std::binary_search(added.begin(), added.end(), item);
  };
  for (int pick = 0; pick < to_add; ++pick) {
    const int user = split.train[idx[pick]].user;
    int partner = -1;
    for (int attempt = 0; attempt < 100; ++attempt) {
      const int candidate = static_cast<int>(rng.bounded(split.num_items));
      if (eligible(user, candidate)) {
        partner = candidate;
        break;
      }
    }
    if (partner < 0) {
      // fall back to a linear scan before declaring the user saturated
      for (int candidate = 0; candidate < split.num_items && partner < 0; ++candidate)
        if (eligible(user, candidate)) partner = candidate;
    }
    if (partner < 0) {
      ++out.skipped_saturated;
      continue;
    }
    auto& added = added_by_user[user];
    added.insert(std::lower_bound(added.begin(), added.end(), partner), partner);
    ++out.added;
  }
  for (int u = 0; u < split.num_users; ++u)
    for (int item : added_by_user[u]) out.split.train.push_back({u, item});
  out.split.rebuild_index();
  if (out.skipped_saturated > 0)
    std::fprintf(stderr, "warning: skipped %d noise edges, users had no unobserved items\n",
                 out.skipped_saturated);
  return out;
}

std::string PerturbationSpec::label() const {
  if (kind == Kind::NoiseEdges) {
    std::ostringstream os;
    os << "noise_" << static_cast<int>(noise_ratio * 100 + 0.5) << "pct";
    return os.str();
  }
  std::string name = "extra_paths";
  for (const std::string& p : added_paths) name += "_" + p;
  return name;
}

double RunMetrics::recall_at(int k) const {
  for (size_t i = 0; i < k_values.size(); ++i)
    if (k_values[i] == k) return recall[i];
  fail(ErrorCode::ConfigError, "metrics do not include K=" + std::to_string(k));
}

double RunMetrics::ndcg_at(int k) const {
  for (size_t i = 0; i < k_values.size(); ++i)
    if (k_values[i] == k) return ndcg[i];
  fail(ErrorCode::ConfigError, "metrics do not include K=" + std::to_string(k));
}

namespace {

void append_rows(RobustnessReport& report, const std::string& condition, const RunMetrics& m,
                 const RunMetrics& clean) {
  for (size_t i = 0; i < m.k_values.size(); ++i) {
    RobustnessReport::Row row;
    row.condition = condition;
    row.k = m.k_values[i];
    row.recall = m.recall[i];
    row.ndcg = m.ndcg[i];
    const double base = clean.recall_at(row.k);
    row.rel_drop_pct = base != 0.0 ? (base - row.recall) / base * 100.0 : 0.0;
    row.seed = m.seed;
    row.wall_seconds = m.wall_seconds;
    report.rows.push_back(std::move(row));
  }
}

}  // namespace

RobustnessReport run_robustness_suite(
    const RunMetrics& clean, const std::vector<PerturbationSpec>& perturbations,
    const std::function<RunMetrics(const PerturbationSpec&)>& run_perturbed) {
  RobustnessReport report;
  append_rows(report, "clean", clean, clean);
  for (const PerturbationSpec& spec : perturbations)
    append_rows(report, spec.label(), run_perturbed(spec), clean);
  return report;
}

std::string RobustnessReport::to_csv() const {
  std::ostringstream os;
  os << "condition,K,recall,ndcg,rel_drop_pct,seed,wall_seconds\n";
  os.setf(std::ios::fixed);
  for (const Row& r : rows) {
    os.precision(6);
    os << r.condition << ',' << r.k << ',' << r.recall << ',' << r.ndcg << ',' << r.rel_drop_pct
       << ',' << r.seed << ',';
    os.precision(2);
    os << r.wall_seconds << '\n';
  }
  return os.str();
}

}  // namespace mcl::eval
