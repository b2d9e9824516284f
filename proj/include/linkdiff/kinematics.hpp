#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "linkdiff/curve.hpp"
#include "linkdiff/geometry.hpp"
#include "linkdiff/graph.hpp"

namespace linkdiff {

inline constexpr int kDefaultAngles = 200;
/// Parents closer than this cannot anchor a trilateration.
inline constexpr double kDegenerateBaseTol = 1e-9;
/// cos(phi) within this distance outside [-1, 1] is clamped.
inline constexpr double kCosClampTol = 1e-12;

struct SolveStep {
  int node;
  int parent_i;  ///< lower-index parent; the rotation is anchored here
  int parent_j;
  bool operator==(const SolveStep&) const = default;
};

/// Order in which revolute nodes are trilaterated from the initially known set.
struct SolveOrder {
  std::vector<SolveStep> steps;
  std::vector<int> fixed_set;  ///< grounded nodes plus the motor endpoint, ascending
};

/// Expands the known set one node at a time, each time picking the lowest-index
/// unknown node with exactly two known neighbours.
///
/// Throws TopologyError(Overconstrained) when an unknown node sees more than two
/// known neighbours, or when an edge joins two nodes of the initial known set
/// other than the motor crank. Throws TopologyError(NonDyadic) when unknown
/// nodes remain but none has exactly two known neighbours.
SolveOrder check_dyadic_solvability(const MechanismGraph& graph);

enum class Branch : int { Positive = 1, Negative = -1 };

/// Places node k at distance g_ik from xi and g_jk from xj using the law of
/// cosines and a rotation of the base direction xi->xj by branch * phi.
Vec2 solve_position(Vec2 xi, Vec2 xj, double g_ik, double g_jk, Branch branch = Branch::Positive);

using LinkLengths = std::map<std::pair<int, int>, double>;

/// Edge lengths at the stored (theta = 0) configuration, keyed by (lo, hi).
LinkLengths link_lengths(const MechanismGraph& graph);

/// Uniform half-open grid on [0, 2*pi).
std::vector<double> angle_grid(int n_angles);

struct Trajectory {
  std::vector<double> angles;
  int node_count = 0;
  std::vector<Vec2> positions;  ///< angle-major: positions[a * node_count + node]

  Vec2 at(int angle_index, int node) const {
    return positions[static_cast<std::size_t>(angle_index * node_count + node)];
  }
  std::vector<Vec2> node_path(int node) const;
};

/// Forward simulation over one motor revolution with the positive branch for
/// every dyad. Throws TopologyError or KinematicError (with node and angle).
Trajectory simulate(const MechanismGraph& graph, int n_angles = kDefaultAngles);

/// End-effector path over the motor grid (not normalized).
Curve trace_coupler_curve(const MechanismGraph& graph, int n_angles = kDefaultAngles);

struct ValidationReport {
  bool topology_ok = false;
  bool kinematics_ok = false;
  std::optional<int> failing_node;
  std::optional<int> failing_angle_index;
  std::optional<double> failing_angle;
  std::string reason;

  bool ok() const { return topology_ok && kinematics_ok; }
};

/// Topological check, then (only if it passed) kinematic check. Never throws
/// for malformed graphs; those report topology_ok = false.
ValidationReport validate(const MechanismGraph& graph, int n_angles = kDefaultAngles);

}  // namespace linkdiff
