#include "mcl/hin.hpp"

#include <algorithm>
#include <cstdint>

namespace mcl::hin {

namespace {

// Row-major bit matrix used for boolean adjacency composition.
class BitMatrix {
 public:
  BitMatrix(int rows, int cols)
      : rows_(rows), cols_(cols), words_(static_cast<size_t>(cols + 63) / 64),
        bits_(static_cast<size_t>(rows) * words_, 0) {}

  void set(int r, int c) { bits_[row_word(r) + c / 64] |= 1ULL << (c % 64); }
  bool get(int r, int c) const { return (bits_[row_word(r) + c / 64] >> (c % 64)) & 1; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }

  // this := this OR other (same shape).
  void or_with(const BitMatrix& o) {
    for (size_t i = 0; i < bits_.size(); ++i) bits_[i] |= o.bits_[i];
  }

  // Boolean product: out(i, :) = OR over set bits k of row i of rhs(k, :).
  BitMatrix multiply(const BitMatrix& rhs) const {
    BitMatrix out(rows_, rhs.cols_);
    for (int i = 0; i < rows_; ++i) {
      const uint64_t* row = bits_.data() + row_word(i);
      uint64_t* orow = out.bits_.data() + out.row_word(i);
      for (size_t w = 0; w < words_; ++w) {
        uint64_t bitsw = row[w];
        while (bitsw) {
          const int k = static_cast<int>(w * 64) + __builtin_ctzll(bitsw);
          bitsw &= bitsw - 1;
          const uint64_t* rrow = rhs.bits_.data() + rhs.row_word(k);
          for (size_t v = 0; v < rhs.words_; ++v) orow[v] |= rrow[v];
        }
      }
    }
    return out;
  }

  BitMatrix transposed() const {
    BitMatrix out(cols_, rows_);
    for (int i = 0; i < rows_; ++i) {
      const uint64_t* row = bits_.data() + row_word(i);
      for (size_t w = 0; w < words_; ++w) {
        uint64_t bitsw = row[w];
        while (bitsw) {
          const int c = static_cast<int>(w * 64) + __builtin_ctzll(bitsw);
          bitsw &= bitsw - 1;
          out.set(c, i);
        }
      }
    }
    return out;
  }

  void clear_diagonal() {
    const int n = std::min(rows_, cols_);
    for (int i = 0; i < n; ++i) bits_[row_word(i) + i / 64] &= ~(1ULL << (i % 64));
  }

  template <class Fn>
  void for_each_set(int r, Fn&& fn) const {
    const uint64_t* row = bits_.data() + row_word(r);
    for (size_t w = 0; w < words_; ++w) {
      uint64_t bitsw = row[w];
      while (bitsw) {
        fn(static_cast<int>(w * 64) + __builtin_ctzll(bitsw));
        bitsw &= bitsw - 1;
      }
    }
  }

 private:
  size_t row_word(int r) const { return static_cast<size_t>(r) * words_; }

  int rows_, cols_;
  size_t words_;
  std::vector<uint64_t> bits_;
};

bool csr_contains(const std::vector<int>& row_ptr, const std::vector<int>& cols, int a, int b) {
  const auto begin = cols.begin() + row_ptr[a];
  const auto end = cols.begin() + row_ptr[a + 1];
  return std::binary_search(begin, end, b);
}

}  // namespace

bool MetaPathGraph::has_edge(int a, int b) const { return csr_contains(row_ptr, cols, a, b); }
bool PositiveMatrix::contains(int a, int b) const { return csr_contains(row_ptr, cols, a, b); }

// ---------------------------------------------------------------------------
// Hin
// ---------------------------------------------------------------------------

TypeId Hin::type_id(const std::string& name) const {
  auto it = type_by_name_.find(name);
  return it == type_by_name_.end() ? -1 : it->second;
}

RelId Hin::relation_id(const std::string& name) const {
  auto it = relation_by_name_.find(name);
  return it == relation_by_name_.end() ? -1 : it->second;
}

TypeId Hin::require_type(const std::string& name) const {
  TypeId t = type_id(name);
  if (t < 0) fail(ErrorCode::UnknownNode, "unknown node type: " + name);
  return t;
}

RelId Hin::require_relation(const std::string& name) const {
  RelId r = relation_id(name);
  if (r < 0) fail(ErrorCode::SchemaViolation, "unknown relation: " + name);
  return r;
}

int Hin::total_nodes() const {
  int total = 0;
  for (const auto& ids : external_ids_) total += static_cast<int>(ids.size());
  return total;
}

int Hin::internal_id(TypeId t, const std::string& external) const {
  const auto& index = index_by_external_[t];
  auto it = index.find(external);
  if (it == index.end())
    fail(ErrorCode::UnknownNode, "unknown node '" + external + "' of type " + type_names_[t]);
  return it->second;
}

bool Hin::schema_allows(TypeId src, RelId rel, TypeId dst) const {
  for (const SchemaTriple& s : schema_)
    if (s.src_type == src && s.rel == rel && s.dst_type == dst) return true;
  return false;
}

std::pair<TypeId, TypeId> Hin::step_types(const MetaPathStep& step) const {
  for (const SchemaTriple& s : schema_) {
    if (s.rel != step.rel) continue;
    return step.reverse ? std::pair{s.dst_type, s.src_type} : std::pair{s.src_type, s.dst_type};
  }
  fail(ErrorCode::SchemaViolation, "relation id not present in schema");
}

std::vector<std::pair<RelId, std::vector<int>>> Hin::one_hop_neighbors(TypeId t, int idx) const {
  if (t < 0 || t >= num_types() || idx < 0 || idx >= count(t))
    fail(ErrorCode::UnknownNode, "one_hop_neighbors: node does not exist");
  std::vector<std::pair<RelId, std::vector<int>>> groups;
  for (RelId r = 0; r < num_relations(); ++r) {
    std::vector<int> ids;
    const auto [src_t, dst_t] = step_types({r, false});
    if (src_t == t)
      for (int nb : adj_fwd_[r][idx]) ids.push_back(global_id(dst_t, nb));
    if (dst_t == t)
      for (int nb : adj_rev_[r][idx]) ids.push_back(global_id(src_t, nb));
    if (ids.empty()) continue;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    groups.emplace_back(r, std::move(ids));
  }
  return groups;
}

ad::Tensor Hin::relation_mask(RelId rel, bool reverse) const {
  const auto [from_t, to_t] = step_types({rel, reverse});
  ad::Tensor mask(count(from_t), count(to_t));
  const auto& adj = reverse ? adj_rev_[rel] : adj_fwd_[rel];
  for (int i = 0; i < mask.rows; ++i)
    for (int nb : adj[i]) mask.at(i, nb) = 1.0;
  return mask;
}

void Hin::set_roles(TypeId user, TypeId item) {
  if (user < 0 || user >= num_types() || item < 0 || item >= num_types() || user == item)
    fail(ErrorCode::ConfigError, "invalid user/item type designation");
  user_type_ = user;
  item_type_ = item;
}

void Hin::finalize() {
  type_offsets_.assign(num_types() + 1, 0);
  for (TypeId t = 0; t < num_types(); ++t)
    type_offsets_[t + 1] = type_offsets_[t] + count(t);

  adj_fwd_.assign(num_relations(), {});
  adj_rev_.assign(num_relations(), {});
  for (RelId r = 0; r < num_relations(); ++r) {
    const auto [src_t, dst_t] = step_types({r, false});
    adj_fwd_[r].resize(count(src_t));
    adj_rev_[r].resize(count(dst_t));
  }
  for (const Edge& e : edges_) {
    adj_fwd_[e.rel][e.src].push_back(e.dst);
    adj_rev_[e.rel][e.dst].push_back(e.src);
  }
  for (RelId r = 0; r < num_relations(); ++r) {
    for (auto& v : adj_fwd_[r]) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    for (auto& v : adj_rev_[r]) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
  }
}

Hin build_hin(const std::vector<NodeInput>& nodes, const std::vector<EdgeInput>& edges,
              const std::vector<SchemaInput>& schema) {
  Hin hin;
  auto intern_type = [&hin](const std::string& name) {
    auto it = hin.type_by_name_.find(name);
    if (it != hin.type_by_name_.end()) return it->second;
    const TypeId t = static_cast<TypeId>(hin.type_names_.size());
    hin.type_names_.push_back(name);
    hin.type_by_name_.emplace(name, t);
    hin.external_ids_.emplace_back();
    hin.index_by_external_.emplace_back();
    return t;
  };

  for (const SchemaInput& s : schema) {
    const TypeId src = intern_type(s.src_type);
    const TypeId dst = intern_type(s.dst_type);
    RelId rel = hin.relation_id(s.rel);
    if (rel < 0) {
      rel = static_cast<RelId>(hin.relation_names_.size());
      hin.relation_names_.push_back(s.rel);
      hin.relation_by_name_.emplace(s.rel, rel);
    } else {
      // One relation name maps to one typed triple; reuse must agree.
      const auto [esrc, edst] = hin.step_types({rel, false});
      if (esrc != src || edst != dst)
        fail(ErrorCode::SchemaViolation,
             "relation '" + s.rel + "' declared twice with different endpoint types");
      continue;
    }
    hin.schema_.push_back({src, rel, dst});
  }

  for (const NodeInput& n : nodes) {
    const TypeId t = intern_type(n.type);
    auto [it, inserted] = hin.index_by_external_[t].emplace(
        n.id, static_cast<int>(hin.external_ids_[t].size()));
    if (!inserted)
      fail(ErrorCode::DuplicateNode, "duplicate node '" + n.id + "' of type " + n.type);
    hin.external_ids_[t].push_back(n.id);
  }

  if (hin.num_types() + hin.num_relations() <= 2)
    fail(ErrorCode::SchemaViolation,
         "not a heterogeneous network: |node types| + |relation types| must exceed 2");

  hin.edges_.reserve(edges.size());
  for (const EdgeInput& e : edges) {
    const TypeId src_t = hin.type_id(e.src_type);
    const TypeId dst_t = hin.type_id(e.dst_type);
    if (src_t < 0 || dst_t < 0)
      fail(ErrorCode::UnknownNode, "edge references unknown node type");
    const RelId rel = hin.relation_id(e.rel);
    if (rel < 0 || !hin.schema_allows(src_t, rel, dst_t))
      fail(ErrorCode::SchemaViolation, "edge (" + e.src_type + ", " + e.rel + ", " +
                                           e.dst_type + ") is not allowed by the schema");
    hin.edges_.push_back({src_t, hin.internal_id(src_t, e.src), rel, dst_t,
                          hin.internal_id(dst_t, e.dst)});
  }

  hin.finalize();
  return hin;
}

// ---------------------------------------------------------------------------
// Meta-path machinery
// ---------------------------------------------------------------------------

MetaPath make_metapath(const Hin& hin, std::string name, std::vector<MetaPathStep> steps) {
  if (steps.empty()) fail(ErrorCode::TypeMismatch, "meta-path '" + name + "' has no steps");
  MetaPath path;
  path.name = std::move(name);
  path.steps = std::move(steps);
  const auto [start, first_to] = hin.step_types(path.steps.front());
  TypeId cur = first_to;
  for (size_t i = 1; i < path.steps.size(); ++i) {
    const auto [from, to] = hin.step_types(path.steps[i]);
    if (from != cur)
      fail(ErrorCode::TypeMismatch,
           "meta-path '" + path.name + "' does not compose at step " + std::to_string(i) +
               ": expected source type " + hin.type_name(cur));
    cur = to;
  }
  if (cur != start)
    fail(ErrorCode::TypeMismatch, "meta-path '" + path.name + "' endpoint types differ: " +
                                      hin.type_name(start) + " vs " + hin.type_name(cur));
  path.endpoint_type = start;
  return path;
}

namespace {

BitMatrix step_bits(const Hin& hin, const MetaPathStep& step) {
  const auto [from_t, to_t] = hin.step_types(step);
  BitMatrix m(hin.count(from_t), hin.count(to_t));
  const auto& adj = step.reverse ? hin.reverse_adjacency(step.rel) : hin.forward_adjacency(step.rel);
  for (int i = 0; i < m.rows(); ++i)
    for (int nb : adj[i]) m.set(i, nb);
  return m;
}

}  // namespace

MetaPathGraph metapath_subgraph(const Hin& hin, const MetaPath& path) {
  MetaPath checked = path.endpoint_type >= 0
                         ? path
                         : make_metapath(hin, path.name, path.steps);
  BitMatrix acc = step_bits(hin, checked.steps[0]);
  for (size_t i = 1; i < checked.steps.size(); ++i)
    acc = acc.multiply(step_bits(hin, checked.steps[i]));

  acc.or_with(acc.transposed());
  acc.clear_diagonal();

  MetaPathGraph g;
  g.endpoint_type = checked.endpoint_type;
  g.n = hin.count(checked.endpoint_type);
  g.row_ptr.assign(g.n + 1, 0);
  g.degrees.assign(g.n, 0);
  for (int i = 0; i < g.n; ++i) {
    acc.for_each_set(i, [&](int j) {
      g.cols.push_back(j);
      ++g.degrees[i];
    });
    g.row_ptr[i + 1] = static_cast<int>(g.cols.size());
  }
  return g;
}

PositiveMatrix positive_matrix(const std::vector<const MetaPathGraph*>& subgraphs) {
  if (subgraphs.empty())
    fail(ErrorCode::EmptyPathList, "positive_matrix: need at least one subgraph");
  const TypeId type = subgraphs[0]->endpoint_type;
  const int n = subgraphs[0]->n;
  for (const MetaPathGraph* g : subgraphs)
    if (g->endpoint_type != type || g->n != n)
      fail(ErrorCode::MixedEndpointTypes,
           "positive_matrix: subgraphs span different endpoint types");

  PositiveMatrix pos;
  pos.endpoint_type = type;
  pos.n = n;
  pos.row_ptr.assign(n + 1, 0);
  const MetaPathGraph* base = subgraphs[0];
  for (int i = 0; i < n; ++i) {
    pos.cols.push_back(i);  // a node is always its own cross-view positive
    for (int k = base->row_ptr[i]; k < base->row_ptr[i + 1]; ++k) {
      const int j = base->cols[k];
      bool in_all = true;
      for (size_t s = 1; s < subgraphs.size() && in_all; ++s)
        in_all = subgraphs[s]->has_edge(i, j);
      if (in_all) pos.cols.push_back(j);
    }
    std::sort(pos.cols.begin() + pos.row_ptr[i], pos.cols.end());
    pos.row_ptr[i + 1] = static_cast<int>(pos.cols.size());
  }
  return pos;
}

// ---------------------------------------------------------------------------
// Dense materializations
// ---------------------------------------------------------------------------

ad::Tensor adjacency_mask(const MetaPathGraph& g) {
  ad::Tensor mask(g.n, g.n);
  for (int i = 0; i < g.n; ++i)
    for (int k = g.row_ptr[i]; k < g.row_ptr[i + 1]; ++k) mask.at(i, g.cols[k]) = 1.0;
  return mask;
}

ad::Tensor normalized_adjacency(const MetaPathGraph& g) {
  std::vector<double> inv_sqrt(g.n, 1.0);
  for (int i = 0; i < g.n; ++i)
    if (g.degrees[i] > 0) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(g.degrees[i]));
  ad::Tensor a(g.n, g.n);
  for (int i = 0; i < g.n; ++i) {
    if (g.degrees[i] == 0) {
      a.at(i, i) = 1.0;  // isolated nodes keep their own value
      continue;
    }
    for (int k = g.row_ptr[i]; k < g.row_ptr[i + 1]; ++k) {
      const int j = g.cols[k];
      a.at(i, j) = inv_sqrt[i] * inv_sqrt[j];
    }
  }
  return a;
}

ad::Tensor positive_mask(const PositiveMatrix& p) {
  ad::Tensor mask(p.n, p.n);
  for (int i = 0; i < p.n; ++i)
    for (int k = p.row_ptr[i]; k < p.row_ptr[i + 1]; ++k) mask.at(i, p.cols[k]) = 1.0;
  return mask;
}

}  // namespace mcl::hin
