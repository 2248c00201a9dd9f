#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mcl/common.hpp"
#include "mcl/tensor.hpp"

namespace mcl::hin {

using TypeId = int;
using RelId = int;

struct SchemaTriple {
  TypeId src_type;
  RelId rel;
  TypeId dst_type;
};

// Raw construction inputs, external (string) identifiers throughout. Edges
// carry explicit endpoint types so that schema violations are detectable
// rather than silently re-resolved.
struct NodeInput {
  std::string type;
  std::string id;
};
struct EdgeInput {
  std::string src_type;
  std::string src;
  std::string rel;
  std::string dst_type;
  std::string dst;
};
struct SchemaInput {
  std::string src_type;
  std::string rel;
  std::string dst_type;
};

struct MetaPathStep {
  RelId rel;
  bool reverse;  // traverse dst -> src
};

struct MetaPath {
  std::string name;
  std::vector<MetaPathStep> steps;
  TypeId endpoint_type = -1;  // filled in by validation against a schema
};

// Homogeneous graph over one node type induced by a meta-path: symmetric,
// binary, zero diagonal. CSR with sorted column indices.
struct MetaPathGraph {
  TypeId endpoint_type = -1;
  int n = 0;
  std::vector<int> row_ptr;
  std::vector<int> cols;
  std::vector<int> degrees;

  int nnz() const { return static_cast<int>(cols.size()); }
  bool has_edge(int a, int b) const;
};

// Cross-view positive-pair matrix: node pairs connected in every configured
// meta-path subgraph of one type, plus the diagonal.
struct PositiveMatrix {
  TypeId endpoint_type = -1;
  int n = 0;
  std::vector<int> row_ptr;
  std::vector<int> cols;

  bool contains(int a, int b) const;
};

// Validated heterogeneous information network. Immutable once built; safe to
// share read-only across threads.
class Hin {
 public:
  struct Edge {
    TypeId src_type;
    int src;
    RelId rel;
    TypeId dst_type;
    int dst;
  };

  int num_types() const { return static_cast<int>(type_names_.size()); }
  int num_relations() const { return static_cast<int>(relation_names_.size()); }
  const std::string& type_name(TypeId t) const { return type_names_[t]; }
  const std::string& relation_name(RelId r) const { return relation_names_[r]; }
  TypeId type_id(const std::string& name) const;        // -1 when unknown
  RelId relation_id(const std::string& name) const;     // -1 when unknown
  TypeId require_type(const std::string& name) const;
  RelId require_relation(const std::string& name) const;

  int count(TypeId t) const { return static_cast<int>(external_ids_[t].size()); }
  int total_nodes() const;
  int global_offset(TypeId t) const { return type_offsets_[t]; }
  int global_id(TypeId t, int idx) const { return type_offsets_[t] + idx; }

  int internal_id(TypeId t, const std::string& external) const;  // UnknownNode on miss
  const std::string& external_id(TypeId t, int idx) const { return external_ids_[t][idx]; }

  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<SchemaTriple>& schema() const { return schema_; }
  bool schema_allows(TypeId src, RelId rel, TypeId dst) const;

  // Endpoint types of one traversal step.
  std::pair<TypeId, TypeId> step_types(const MetaPathStep& step) const;

  // Neighbor lists of one node grouped by relation, ids ascending within each
  // group, groups ordered by relation id. Neighbor ids are global.
  std::vector<std::pair<RelId, std::vector<int>>> one_hop_neighbors(TypeId t, int idx) const;

  // Binary incidence of one relation as a dense tensor: rows are the
  // traversal-source type, columns the traversal-target type.
  ad::Tensor relation_mask(RelId rel, bool reverse) const;

  // Designated recommendation roles; set by dataset loaders.
  void set_roles(TypeId user, TypeId item);
  TypeId user_type() const { return user_type_; }
  TypeId item_type() const { return item_type_; }

 private:
  friend Hin build_hin(const std::vector<NodeInput>&, const std::vector<EdgeInput>&,
                       const std::vector<SchemaInput>&);

  std::vector<std::string> type_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, TypeId> type_by_name_;
  std::unordered_map<std::string, RelId> relation_by_name_;
  std::vector<SchemaTriple> schema_;
  std::vector<std::vector<std::string>> external_ids_;  // per type
  std::vector<std::unordered_map<std::string, int>> index_by_external_;
  std::vector<int> type_offsets_;
  std::vector<Edge> edges_;
  // per-relation neighbor lists in both directions, indexed [rel][node]
  std::vector<std::vector<std::vector<int>>> adj_fwd_;
  std::vector<std::vector<std::vector<int>>> adj_rev_;
  TypeId user_type_ = -1;
  TypeId item_type_ = -1;

  void finalize();

 public:
  const std::vector<std::vector<int>>& forward_adjacency(RelId r) const { return adj_fwd_[r]; }
  const std::vector<std::vector<int>>& reverse_adjacency(RelId r) const { return adj_rev_[r]; }
};

// Validates node uniqueness, edge endpoints, schema membership and the
// heterogeneity requirement, and reindexes nodes contiguously per type.
Hin build_hin(const std::vector<NodeInput>& nodes, const std::vector<EdgeInput>& edges,
              const std::vector<SchemaInput>& schema);

// Type-checks a step sequence against the schema; both endpoints must be the
// same type. Throws TypeMismatch otherwise.
MetaPath make_metapath(const Hin& hin, std::string name, std::vector<MetaPathStep> steps);

// Boolean composition of the step adjacencies, symmetrized, self-loops
// dropped. Path multiplicities are discarded.
MetaPathGraph metapath_subgraph(const Hin& hin, const MetaPath& path);

// Intersection of the given subgraphs' edge sets plus the diagonal.
PositiveMatrix positive_matrix(const std::vector<const MetaPathGraph*>& subgraphs);

// Dense materializations for the learned path.
ad::Tensor adjacency_mask(const MetaPathGraph& g);
// Symmetrically normalized adjacency D^{-1/2} A D^{-1/2}; zero-degree nodes
// get a unit self-entry so their rows pass through propagation unchanged.
ad::Tensor normalized_adjacency(const MetaPathGraph& g);
ad::Tensor positive_mask(const PositiveMatrix& p);

}  // namespace mcl::hin
