#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "linkdiff/curve.hpp"
#include "linkdiff/graph.hpp"
#include "linkdiff/kinematics.hpp"
#include "linkdiff/rng.hpp"

namespace linkdiff {

struct DataGenConfig {
  int count = 100;
  int min_nodes = 4;
  int max_nodes = 8;
  /// Chance that an appended (non-final) node is an extra grounded joint.
  double extra_ground_prob = 0.25;
  int n_angles = kDefaultAngles;
  int max_node_attempts = 200;
  /// Upper bound on link length when placing a dyad joint.
  double max_link = 0.8;
  double min_link = 0.05;
  std::uint64_t seed = 0;
  int workers = 1;

  /// Throws Error describing the first bad field.
  void check() const;
};

/// Builds a random dyadic mechanism node by node; each appended node must leave
/// the partial graph valid. Throws GenerationExhausted when a node cannot be
/// placed within max_node_attempts.
MechanismGraph sample_random_mechanism(const DataGenConfig& config, Rng& rng);

struct DatasetRecord {
  MechanismGraph graph;
  Curve curve;  ///< normalized end-effector trace
  std::uint64_t seed = 0;

  bool operator==(const DatasetRecord&) const = default;
};

/// Traces and normalizes the graph's coupler curve.
DatasetRecord make_record(const MechanismGraph& graph, std::uint64_t seed, int n_angles = kDefaultAngles);

struct DatasetSummary {
  int written = 0;
  int skipped = 0;
  int exhausted_events = 0;
};

/// Record i uses stream derive_seed(seed, {i, retry}); records are identical for
/// any worker count.
std::vector<DatasetRecord> generate_records(const DataGenConfig& config, DatasetSummary* summary = nullptr);

DatasetSummary generate_dataset(const DataGenConfig& config, const std::string& path);

void write_dataset(const std::string& path, const std::vector<DatasetRecord>& records);

/// Parses and re-checks every record: validity and re-simulated curve (1e-9).
/// Throws ParseError or InvariantViolation.
std::vector<DatasetRecord> load_dataset(const std::string& path);

/// 90/10 split by record index.
struct DatasetSplit {
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> eval;
};
DatasetSplit split_dataset(std::vector<DatasetRecord> records);

}  // namespace linkdiff
