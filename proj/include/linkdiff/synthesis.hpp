#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "linkdiff/curve.hpp"
#include "linkdiff/diffusion.hpp"
#include "linkdiff/graph.hpp"
#include "linkdiff/kinematics.hpp"

namespace linkdiff {

enum class Strategy { OneShot, GraphRetry, NodeRetry };

/// "one-shot", "graph-retry", "node-retry".
const char* strategy_name(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view name);

struct SynthesisConfig {
  Strategy strategy = Strategy::NodeRetry;
  /// GraphRetry: total passes. NodeRetry: total draws per node.
  int max_retries = 25;
  int n_max = kMaxNodes;
  int n_angles = kDefaultAngles;
  std::uint64_t seed = 0;
  int workers = 1;

  void check() const;
};

struct SynthesisOutcome {
  MechanismGraph graph;
  bool valid = false;
  ValidationReport report;
  std::vector<int> attempts;  ///< draws consumed per accepted node (last pass)
  std::vector<int> warnings;  ///< nodes kept although still invalid after all retries
  int passes = 0;             ///< whole-graph passes (GraphRetry), otherwise 1
  int samples = 0;            ///< total node draws
};

/// One node draw. The seed is derived from (config seed, item, pass, step, attempt).
struct SampleRequest {
  std::span<const FeatureRow> prefix;  ///< rows 0 .. step-1
  int step = 0;
  const CurveEmbedding* curve = nullptr;
  std::size_t item = 0;
  int pass = 0;
  int attempt = 0;
  std::uint64_t seed = 0;
};

/// Produces one discretized row per request. Must be pure in its inputs.
class NodeSampler {
 public:
  virtual ~NodeSampler() = default;
  virtual std::vector<FeatureRow> sample(std::span<const SampleRequest> requests) = 0;
};

/// Samples rows with the trained denoiser.
class DiffusionSampler : public NodeSampler {
 public:
  explicit DiffusionSampler(const DenoiserModel& model, int workers = 1) : model_(model), workers_(workers) {}
  std::vector<FeatureRow> sample(std::span<const SampleRequest> requests) override;

 private:
  const DenoiserModel& model_;
  int workers_;
};

std::uint64_t item_stream(std::uint64_t seed, std::size_t item);
std::uint64_t node_stream(std::uint64_t item_seed, int pass, int step, int attempt);

/// Runs every curve through `config.strategy` in lockstep. Outcome i is identical
/// to running curve i alone with the same item index.
std::vector<SynthesisOutcome> batch_generate(std::span<const Curve> curves, NodeSampler& sampler,
                                             const SynthesisConfig& config);

/// Same as batch_generate but starting from precomputed curve embeddings.
/// `first_item` offsets the item index used for stream derivation.
std::vector<SynthesisOutcome> batch_generate(std::span<const CurveEmbedding> embeddings, NodeSampler& sampler,
                                             const SynthesisConfig& config, std::size_t first_item = 0);

SynthesisOutcome generate_one_shot(const Curve& curve, NodeSampler& sampler, SynthesisConfig config);
SynthesisOutcome generate_graph_retry(const Curve& curve, NodeSampler& sampler, SynthesisConfig config);
SynthesisOutcome generate_node_retry(const Curve& curve, NodeSampler& sampler, SynthesisConfig config);

/// Structured sidecar text: one JSON object per outcome with valid, attempts,
/// warnings, passes and samples.
std::string format_outcome_sidecar(const SynthesisOutcome& outcome, std::size_t item);

}  // namespace linkdiff
