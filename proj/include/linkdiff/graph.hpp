#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "linkdiff/geometry.hpp"

namespace linkdiff {

inline constexpr int kMaxNodes = 20;
/// [validity, type, x, y, adjacency slots 0..19]
inline constexpr int kRowWidth = 24;
inline constexpr int kAdjOffset = 4;

inline constexpr int kMotorPivot = 0;
inline constexpr int kMotorNode = 1;

enum class NodeType : std::int8_t { Grounded, Revolute, Pad };

/// Grounded -> 1, Revolute -> 0, Pad -> -1.
double encode_type(NodeType type);
const char* type_name(NodeType type);

enum class Edge : std::int8_t { Absent = 0, Present = 1, Pad = -1 };

using AdjacencyRow = std::array<Edge, kMaxNodes>;

struct NodeRecord {
  bool valid = false;
  NodeType type = NodeType::Pad;
  Vec2 position{};
  AdjacencyRow adjacency = pad_row();

  static constexpr AdjacencyRow pad_row() {
    AdjacencyRow row{};
    row.fill(Edge::Pad);
    return row;
  }

  bool operator==(const NodeRecord&) const = default;
};

/// A planar 1-DoF linkage. Node 0 is the motor pivot, node 1 the motor endpoint,
/// and the end effector is the last valid node. Adjacency lives in the strict
/// lower triangle: row i only references nodes j < i.
class MechanismGraph {
 public:
  MechanismGraph() = default;

  /// Two-node motor stub: grounded pivot plus revolute crank endpoint.
  static MechanismGraph motor(Vec2 pivot, Vec2 crank_end);

  /// Appends a node connected to `parents` (all must be existing nodes). Returns its index.
  int add_node(NodeType type, Vec2 position, std::span<const int> parents = {});
  int add_grounded(Vec2 position) { return add_node(NodeType::Grounded, position); }
  int add_revolute(Vec2 position, int parent_a, int parent_b) {
    const std::array<int, 2> parents{parent_a, parent_b};
    return add_node(NodeType::Revolute, position, parents);
  }

  /// Number of valid nodes (counted, not assumed contiguous).
  int node_count() const;
  int end_effector() const { return node_count() - 1; }
  int grounded_count() const;

  bool has_edge(int a, int b) const;
  /// Unordered edges as (smaller, larger) pairs in row-major order.
  std::vector<std::pair<int, int>> edges() const;
  /// All neighbors of `node` among valid nodes.
  std::vector<int> neighbors(int node) const;

  NodeRecord& operator[](int i) { return nodes[static_cast<std::size_t>(i)]; }
  const NodeRecord& operator[](int i) const { return nodes[static_cast<std::size_t>(i)]; }

  bool operator==(const MechanismGraph&) const = default;

  std::array<NodeRecord, kMaxNodes> nodes{};
};

using FeatureRow = std::array<double, kRowWidth>;
using FeatureMatrix = std::array<FeatureRow, kMaxNodes>;

struct GraphViolation {
  int node;
  std::string what;
};

/// Structural invariants: contiguous validity prefix, motor convention, pad
/// masking of invalid rows and of slots j >= i. Does not look at coordinates.
std::optional<GraphViolation> structural_violation(const MechanismGraph& graph);

/// Structural invariants plus finite coordinates inside [-1, 1].
std::optional<GraphViolation> find_violation(const MechanismGraph& graph);

/// Throws MalformedGraph on the first violated invariant.
void check_well_formed(const MechanismGraph& graph);

/// Row encoding of a single node; performs no validation.
FeatureRow encode_node(const NodeRecord& node);
/// The canonical padding row [0, -1, 0, 0, -1 x 20].
FeatureRow pad_feature_row();

/// Throws MalformedGraph if the graph is not well formed.
FeatureMatrix encode_mechanism(const MechanismGraph& graph);

/// Decodes one row at position `index`. Throws IllegalAlphabet.
NodeRecord decode_row(const FeatureRow& row, int index);

/// Throws IllegalAlphabet or NonPrefixValidity.
MechanismGraph decode_feature_matrix(const FeatureMatrix& matrix);

/// Decodes the rows of a partially built matrix; missing rows are padding.
MechanismGraph decode_rows(std::span<const FeatureRow> rows);

/// Keeps nodes 0..k-1. Throws PrefixTooShort unless 2 <= k <= node_count().
MechanismGraph truncate_to_prefix(const MechanismGraph& graph, int k);

}  // namespace linkdiff
