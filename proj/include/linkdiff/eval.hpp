#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "linkdiff/datagen.hpp"
#include "linkdiff/synthesis.hpp"

namespace linkdiff {

struct ExperimentConfig {
  std::string dataset_path;
  std::string checkpoint_path;
  std::vector<Strategy> strategies{Strategy::OneShot, Strategy::GraphRetry, Strategy::NodeRetry};
  int runs = 3;
  /// Synthesis seed per run. When empty, run r uses derive_seed(seed, {"run", r}).
  std::vector<std::uint64_t> run_seeds;
  std::uint64_t seed = 0;
  int n_eval = 200;
  int max_retries = 25;
  int n_angles = kDefaultAngles;
  int workers = 1;

  void check() const;
  std::uint64_t run_seed(int run) const;
};

/// One strategy x run cell.
struct CellResult {
  Strategy strategy = Strategy::OneShot;
  int run = 0;
  std::uint64_t seed = 0;
  int n_eval = 0;
  int successes = 0;
  double success_rate = 0.0;
  /// Chamfer statistics over valid outcomes only; n is the valid count.
  int chamfer_n = 0;
  std::optional<double> chamfer_mean;
  std::optional<double> chamfer_std;
  int node_draws = 0;
  std::vector<bool> valid;
  std::vector<int> node_counts;
  std::vector<std::optional<double>> chamfer;
};

/// Cross-run aggregates: std is the sample standard deviation of the run values
/// (absent with a single run).
struct StrategySummary {
  Strategy strategy = Strategy::OneShot;
  double success_mean = 0.0;
  std::optional<double> success_std;
  std::optional<double> chamfer_mean;
  std::optional<double> chamfer_std;
};

/// Node counts per conditioning curve across runs for one strategy.
struct DiversityReport {
  Strategy strategy = Strategy::OneShot;
  std::vector<std::vector<int>> counts;  ///< [curve][run]
  /// Per curve: counts differ across runs. Absent when there is a single run.
  std::vector<std::optional<bool>> varies;
  int varying_curves = 0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::string model;
  std::vector<CellResult> cells;
  std::vector<StrategySummary> summaries;
  std::vector<DiversityReport> diversity;
  /// Per run: success(NodeRetry) >= success(GraphRetry) >= success(OneShot), when all three ran.
  std::vector<std::optional<bool>> ordering;
  std::vector<std::string> invariant_failures;

  const CellResult& cell(Strategy s, int run) const;
};

/// Chamfer distance between the graph's normalized coupler curve and the
/// normalized target. A stationary end effector is placed at the origin without
/// rescaling. Throws KinematicError/TopologyError for invalid graphs.
double outcome_chamfer(const MechanismGraph& graph, const Curve& target, int n_angles = kDefaultAngles);

/// Synthesizes every (strategy, run) cell against the first n_eval curves and
/// re-checks the report invariants. Curve i is synthesized as item i in every cell.
ExperimentReport run_experiment(std::span<const Curve> curves, NodeSampler& sampler, const ExperimentConfig& config,
                                std::string model_label = "");

/// Success rates per cell plus cross-run summaries (Chamfer fields left empty).
ExperimentReport run_success_experiment(std::span<const Curve> curves, NodeSampler& sampler,
                                        const ExperimentConfig& config);
/// Full cells with Chamfer statistics over valid outcomes.
ExperimentReport run_chamfer_experiment(std::span<const Curve> curves, NodeSampler& sampler,
                                        const ExperimentConfig& config);
/// Node-count matrix and variation flags; runs == 1 gives N/A flags.
std::vector<DiversityReport> run_diversity_report(std::span<const Curve> curves, NodeSampler& sampler,
                                                  const ExperimentConfig& config);

/// Sample standard deviation (n - 1). Absent for fewer than two values.
std::optional<double> sample_std(std::span<const double> values);

/// Stable report schema; numbers use shortest round-trip formatting.
nlohmann::ordered_json report_to_json(const ExperimentReport& report);

/// Replays a fixed mechanism per item: answers request (item, step) with row
/// `step` of graph `item`. Used as an oracle model.
class ReplaySampler : public NodeSampler {
 public:
  explicit ReplaySampler(std::vector<MechanismGraph> graphs);
  std::vector<FeatureRow> sample(std::span<const SampleRequest> requests) override;

 private:
  std::vector<FeatureMatrix> rows_;
};

/// Always answers with the stop row, so every outcome is the empty (invalid) graph.
class InvalidSampler : public NodeSampler {
 public:
  std::vector<FeatureRow> sample(std::span<const SampleRequest> requests) override;
};

/// Always emits the same four-bar, independent of seed and curve.
class FourBarSampler : public NodeSampler {
 public:
  FourBarSampler();
  std::vector<FeatureRow> sample(std::span<const SampleRequest> requests) override;

 private:
  FeatureMatrix rows_;
};

}  // namespace linkdiff
