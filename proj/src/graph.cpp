#include "linkdiff/graph.hpp"

#include <cmath>

#include "linkdiff/errors.hpp"

namespace linkdiff {

double encode_type(NodeType type) {
  switch (type) {
    case NodeType::Grounded:
      return 1.0;
    case NodeType::Revolute:
      return 0.0;
    case NodeType::Pad:
      break;
  }
  return -1.0;
}

const char* type_name(NodeType type) {
  switch (type) {
    case NodeType::Grounded:
      return "grounded";
    case NodeType::Revolute:
      return "revolute";
    case NodeType::Pad:
      break;
  }
  return "pad";
}

MechanismGraph MechanismGraph::motor(Vec2 pivot, Vec2 crank_end) {
  MechanismGraph g;
  g.add_node(NodeType::Grounded, pivot);
  const std::array<int, 1> parent{kMotorPivot};
  g.add_node(NodeType::Revolute, crank_end, parent);
  return g;
}

int MechanismGraph::add_node(NodeType type, Vec2 position, std::span<const int> parents) {
  const int index = node_count();
  if (index >= kMaxNodes) throw MalformedGraph(index, "graph is full");
  NodeRecord& node = nodes[static_cast<std::size_t>(index)];
  node.valid = true;
  node.type = type;
  node.position = position;
  node.adjacency = NodeRecord::pad_row();
  for (int j = 0; j < index; ++j) node.adjacency[static_cast<std::size_t>(j)] = Edge::Absent;
  for (int p : parents) {
    if (p < 0 || p >= index) throw MalformedGraph(index, "parent " + std::to_string(p) + " does not precede it");
    node.adjacency[static_cast<std::size_t>(p)] = Edge::Present;
  }
  return index;
}

int MechanismGraph::node_count() const {
  int n = 0;
  for (const auto& node : nodes) n += node.valid ? 1 : 0;
  return n;
}

int MechanismGraph::grounded_count() const {
  int n = 0;
  for (const auto& node : nodes) n += (node.valid && node.type == NodeType::Grounded) ? 1 : 0;
  return n;
}

bool MechanismGraph::has_edge(int a, int b) const {
  if (a == b) return false;
  const int hi = a > b ? a : b;
  const int lo = a > b ? b : a;
  const NodeRecord& row = nodes[static_cast<std::size_t>(hi)];
  return row.valid && row.adjacency[static_cast<std::size_t>(lo)] == Edge::Present;
}

std::vector<std::pair<int, int>> MechanismGraph::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < kMaxNodes; ++i) {
    if (!nodes[static_cast<std::size_t>(i)].valid) continue;
    for (int j = 0; j < i; ++j)
      if (nodes[static_cast<std::size_t>(i)].adjacency[static_cast<std::size_t>(j)] == Edge::Present)
        out.emplace_back(j, i);
  }
  return out;
}

std::vector<int> MechanismGraph::neighbors(int node) const {
  std::vector<int> out;
  for (int j = 0; j < kMaxNodes; ++j)
    if (has_edge(node, j)) out.push_back(j);
  return out;
}

std::optional<GraphViolation> structural_violation(const MechanismGraph& graph) {
  bool seen_invalid = false;
  for (int i = 0; i < kMaxNodes; ++i) {
    const NodeRecord& node = graph[i];
    if (!node.valid) {
      seen_invalid = true;
      if (node.type != NodeType::Pad) return GraphViolation{i, "invalid node must have pad type"};
      for (Edge e : node.adjacency)
        if (e != Edge::Pad) return GraphViolation{i, "invalid node must have an all-pad adjacency row"};
      continue;
    }
    if (seen_invalid) return GraphViolation{i, "valid node follows padding"};
    if (node.type == NodeType::Pad) return GraphViolation{i, "valid node has pad type"};
    for (int j = 0; j < kMaxNodes; ++j) {
      const Edge e = node.adjacency[static_cast<std::size_t>(j)];
      if (j >= i && e != Edge::Pad)
        return GraphViolation{i, "adjacency slot " + std::to_string(j) + " must be pad"};
      if (j < i && e == Edge::Pad)
        return GraphViolation{i, "adjacency slot " + std::to_string(j) + " must not be pad"};
    }
  }
  if (!graph[kMotorPivot].valid || graph[kMotorPivot].type != NodeType::Grounded)
    return GraphViolation{kMotorPivot, "motor pivot must be a valid grounded node"};
  if (!graph[kMotorNode].valid || graph[kMotorNode].type != NodeType::Revolute)
    return GraphViolation{kMotorNode, "motor endpoint must be a valid revolute node"};
  if (graph[kMotorNode].adjacency[kMotorPivot] != Edge::Present)
    return GraphViolation{kMotorNode, "motor endpoint must be linked to the motor pivot"};
  return std::nullopt;
}

std::optional<GraphViolation> find_violation(const MechanismGraph& graph) {
  if (auto v = structural_violation(graph)) return v;
  for (int i = 0; i < kMaxNodes; ++i) {
    const NodeRecord& node = graph[i];
    const Vec2 p = node.position;
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || std::abs(p.x) > 1.0 || std::abs(p.y) > 1.0)
      return GraphViolation{i, "position outside [-1, 1]"};
    if (!node.valid && (p.x != 0.0 || p.y != 0.0))
      return GraphViolation{i, "invalid node must sit at the origin"};
  }
  return std::nullopt;
}

void check_well_formed(const MechanismGraph& graph) {
  if (auto v = find_violation(graph)) throw MalformedGraph(v->node, v->what);
}

FeatureRow encode_node(const NodeRecord& node) {
  FeatureRow row{};
  row[0] = node.valid ? 1.0 : 0.0;
  row[1] = encode_type(node.type);
  row[2] = node.position.x;
  row[3] = node.position.y;
  for (int j = 0; j < kMaxNodes; ++j)
    row[static_cast<std::size_t>(kAdjOffset + j)] = static_cast<double>(node.adjacency[static_cast<std::size_t>(j)]);
  return row;
}

FeatureRow pad_feature_row() { return encode_node(NodeRecord{}); }

FeatureMatrix encode_mechanism(const MechanismGraph& graph) {
  check_well_formed(graph);
  FeatureMatrix m{};
  for (int i = 0; i < kMaxNodes; ++i) m[static_cast<std::size_t>(i)] = encode_node(graph[i]);
  return m;
}

namespace {

bool is_one_of(double v, std::initializer_list<double> alphabet) {
  for (double a : alphabet)
    if (v == a) return true;
  return false;
}

}  // namespace

NodeRecord decode_row(const FeatureRow& row, int index) {
  auto bad = [&](int col) { return IllegalAlphabet(index, col, row[static_cast<std::size_t>(col)]); };
  NodeRecord node;
  if (!is_one_of(row[0], {0.0, 1.0})) throw bad(0);
  if (!is_one_of(row[1], {1.0, 0.0, -1.0})) throw bad(1);
  for (int c = 2; c < 4; ++c) {
    const double v = row[static_cast<std::size_t>(c)];
    if (!std::isfinite(v) || v < -1.0 || v > 1.0) throw bad(c);
  }
  node.valid = row[0] == 1.0;
  node.type = row[1] == 1.0 ? NodeType::Grounded : (row[1] == 0.0 ? NodeType::Revolute : NodeType::Pad);
  node.position = {row[2], row[3]};
  for (int j = 0; j < kMaxNodes; ++j) {
    const int col = kAdjOffset + j;
    const double v = row[static_cast<std::size_t>(col)];
    const bool live = node.valid && j < index;
    if (live ? !is_one_of(v, {0.0, 1.0}) : v != -1.0) throw bad(col);
    node.adjacency[static_cast<std::size_t>(j)] = static_cast<Edge>(static_cast<int>(v));
  }
  if (node.valid && node.type == NodeType::Pad) throw bad(1);
  if (!node.valid) {
    if (node.type != NodeType::Pad) throw bad(1);
    if (row[2] != 0.0) throw bad(2);
    if (row[3] != 0.0) throw bad(3);
  }
  return node;
}

MechanismGraph decode_rows(std::span<const FeatureRow> rows) {
  MechanismGraph g;
  bool seen_invalid = false;
  const int n = static_cast<int>(rows.size() < kMaxNodes ? rows.size() : kMaxNodes);
  for (int i = 0; i < n; ++i) {
    NodeRecord node = decode_row(rows[static_cast<std::size_t>(i)], i);
    if (node.valid && seen_invalid) throw NonPrefixValidity(i);
    seen_invalid = seen_invalid || !node.valid;
    g[i] = node;
  }
  return g;
}

MechanismGraph decode_feature_matrix(const FeatureMatrix& matrix) { return decode_rows(matrix); }

MechanismGraph truncate_to_prefix(const MechanismGraph& graph, int k) {
  if (k < 2 || k > graph.node_count()) throw PrefixTooShort(k);
  MechanismGraph out = graph;
  for (int i = k; i < kMaxNodes; ++i) out[i] = NodeRecord{};
  return out;
}

}  // namespace linkdiff
