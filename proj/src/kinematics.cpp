#include "linkdiff/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "linkdiff/errors.hpp"

namespace linkdiff {

SolveOrder check_dyadic_solvability(const MechanismGraph& graph) {
  if (auto v = structural_violation(graph)) throw MalformedGraph(v->node, v->what);
  const int n = graph.node_count();

  std::array<bool, kMaxNodes> known{};
  SolveOrder order;
  for (int i = 0; i < n; ++i) {
    known[static_cast<std::size_t>(i)] = graph[i].type == NodeType::Grounded || i == kMotorNode;
    if (known[static_cast<std::size_t>(i)]) order.fixed_set.push_back(i);
  }

  // The initial set is rigid except for the crank; any other edge inside it
  // is a constraint the motion cannot satisfy.
  for (auto [a, b] : graph.edges()) {
    const bool motor_edge = a == kMotorPivot && b == kMotorNode;
    if (!motor_edge && known[static_cast<std::size_t>(a)] && known[static_cast<std::size_t>(b)])
      throw TopologyError(TopologyFailure::Overconstrained, b,
                          "overconstrained: node " + std::to_string(b) + " links two fixed joints");
  }

  int remaining = n - static_cast<int>(order.fixed_set.size());
  while (remaining > 0) {
    int pick = -1;
    std::array<int, 2> parents{};
    for (int u = 0; u < n; ++u) {
      if (known[static_cast<std::size_t>(u)]) continue;
      int count = 0;
      std::array<int, 2> found{};
      for (int j = 0; j < n; ++j) {
        if (!known[static_cast<std::size_t>(j)] || !graph.has_edge(u, j)) continue;
        if (count < 2) found[static_cast<std::size_t>(count)] = j;
        ++count;
      }
      if (count > 2)
        throw TopologyError(TopologyFailure::Overconstrained, u,
                            "overconstrained: node " + std::to_string(u) + " has " + std::to_string(count) +
                                " known neighbors");
      if (count == 2 && pick < 0) {
        pick = u;
        parents = found;
      }
    }
    if (pick < 0) {
      int first_unknown = 0;
      while (known[static_cast<std::size_t>(first_unknown)]) ++first_unknown;
      throw TopologyError(TopologyFailure::NonDyadic, first_unknown,
                          "non-dyadic structure: no unknown node has exactly two known neighbors");
    }
    order.steps.push_back({pick, std::min(parents[0], parents[1]), std::max(parents[0], parents[1])});
    known[static_cast<std::size_t>(pick)] = true;
    --remaining;
  }
  return order;
}

Vec2 solve_position(Vec2 xi, Vec2 xj, double g_ik, double g_jk, Branch branch) {
  const Vec2 base = xj - xi;
  const double l = base.norm();
  if (!(l >= kDegenerateBaseTol))
    throw KinematicError(KinematicFailure::DegenerateBase, "degenerate base: parents coincide");
  if (!(g_ik >= kDegenerateBaseTol) || !(g_jk >= kDegenerateBaseTol))
    throw KinematicError(KinematicFailure::DegenerateLink, "degenerate link: zero length");

  double cos_phi = (l * l + g_ik * g_ik - g_jk * g_jk) / (2.0 * l * g_ik);
  if (cos_phi > 1.0 || cos_phi < -1.0) {
    if (std::abs(cos_phi) - 1.0 > kCosClampTol)
      throw KinematicError(KinematicFailure::BranchDefect,
                           "branch defect: triangle inequality violated (cos phi = " + std::to_string(cos_phi) + ")");
    cos_phi = std::clamp(cos_phi, -1.0, 1.0);
  }
  const double sin_phi = static_cast<double>(static_cast<int>(branch)) * std::sqrt(1.0 - cos_phi * cos_phi);
  return xi + rotate(base / l, cos_phi, sin_phi) * g_ik;
}

LinkLengths link_lengths(const MechanismGraph& graph) {
  LinkLengths out;
  for (auto [a, b] : graph.edges()) out[{a, b}] = distance(graph[a].position, graph[b].position);
  return out;
}

std::vector<double> angle_grid(int n_angles) {
  std::vector<double> out(static_cast<std::size_t>(n_angles));
  for (int a = 0; a < n_angles; ++a)
    out[static_cast<std::size_t>(a)] = 2.0 * std::numbers::pi * a / n_angles;
  return out;
}

std::vector<Vec2> Trajectory::node_path(int node) const {
  std::vector<Vec2> out;
  out.reserve(angles.size());
  for (int a = 0; a < static_cast<int>(angles.size()); ++a) out.push_back(at(a, node));
  return out;
}

Trajectory simulate(const MechanismGraph& graph, int n_angles) {
  if (n_angles < 1) throw Error("n_angles must be positive");
  const SolveOrder order = check_dyadic_solvability(graph);
  const LinkLengths lengths = link_lengths(graph);

  struct Step {
    SolveStep s;
    double g_ik;
    double g_jk;
  };
  std::vector<Step> steps;
  steps.reserve(order.steps.size());
  for (const SolveStep& s : order.steps)
    steps.push_back({s, lengths.at({std::min(s.parent_i, s.node), std::max(s.parent_i, s.node)}),
                     lengths.at({std::min(s.parent_j, s.node), std::max(s.parent_j, s.node)})});

  Trajectory traj;
  traj.angles = angle_grid(n_angles);
  traj.node_count = graph.node_count();
  traj.positions.resize(static_cast<std::size_t>(n_angles * traj.node_count));

  const Vec2 pivot = graph[kMotorPivot].position;
  const Vec2 crank = graph[kMotorNode].position - pivot;
  for (int a = 0; a < n_angles; ++a) {
    Vec2* row = traj.positions.data() + static_cast<std::ptrdiff_t>(a) * traj.node_count;
    for (int i : order.fixed_set) row[i] = graph[i].position;
    row[kMotorNode] = pivot + rotate(crank, traj.angles[static_cast<std::size_t>(a)]);
    for (const Step& st : steps) {
      try {
        row[st.s.node] = solve_position(row[st.s.parent_i], row[st.s.parent_j], st.g_ik, st.g_jk);
      } catch (const KinematicError& e) {
        throw KinematicError(e.kind(),
                             std::string(e.what()) + " at node " + std::to_string(st.s.node) + ", angle index " +
                                 std::to_string(a),
                             st.s.node, a, traj.angles[static_cast<std::size_t>(a)]);
      }
    }
  }
  return traj;
}

Curve trace_coupler_curve(const MechanismGraph& graph, int n_angles) {
  const Trajectory traj = simulate(graph, n_angles);
  return Curve{traj.node_path(traj.node_count - 1), true};
}

ValidationReport validate(const MechanismGraph& graph, int n_angles) {
  ValidationReport report;
  if (auto v = structural_violation(graph)) {
    report.failing_node = v->node;
    report.reason = "malformed: " + v->what;
    return report;
  }
  try {
    check_dyadic_solvability(graph);
  } catch (const TopologyError& e) {
    if (e.node() >= 0) report.failing_node = e.node();
    report.reason = e.what();
    return report;
  }
  report.topology_ok = true;
  try {
    simulate(graph, n_angles);
  } catch (const KinematicError& e) {
    if (e.node() >= 0) report.failing_node = e.node();
    if (e.angle_index() >= 0) {
      report.failing_angle_index = e.angle_index();
      report.failing_angle = e.angle();
    }
    report.reason = e.what();
    return report;
  }
  report.kinematics_ok = true;
  return report;
}

}  // namespace linkdiff
