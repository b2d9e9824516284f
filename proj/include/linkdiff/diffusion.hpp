#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "linkdiff/curve.hpp"
#include "linkdiff/graph.hpp"
#include "linkdiff/nn.hpp"
#include "linkdiff/rng.hpp"

namespace linkdiff {

/// Continuous relaxation of one feature row.
using NodeVector = std::array<double, kRowWidth>;

struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
};

/// Linear beta interpolation over `steps` steps. Throws BadSchedule unless
/// 0 < beta_start <= beta_end < 1 and steps >= 2.
NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps. Throws StepOutOfRange.
NodeVector q_sample(const NodeVector& x0, int t, const NodeVector& eps, const NoiseSchedule& schedule);

/// Per-step posterior variance (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t.
double posterior_variance(const NoiseSchedule& schedule, int t);

/// Posterior mean of x_{t-1} given x_t and a clean estimate.
NodeVector posterior_mean(const NoiseSchedule& schedule, int t, const NodeVector& x0_hat, const NodeVector& x_t);

/// Raw denoiser outputs, in row-slot order.
struct DenoiserOutput {
  double validity = 0.0;  ///< logit
  double type = 0.0;      ///< logit, positive means grounded
  Vec2 position;
  std::array<double, kMaxNodes> adjacency{};  ///< logits

  static DenoiserOutput from_raw(std::span<const double> raw);
  NodeVector raw() const;
};

/// Maps logits to the nearest alphabet values: validity, type and adjacency by
/// sign, position clamped to [-1, 1], slots >= step forced to pad. An invalid
/// prediction yields the pad row.
FeatureRow discretize(const DenoiserOutput& out, int step);

struct ModelConfig {
  int hidden = 256;
  int hidden_layers = 2;
  int encoder_hidden = 64;
  int context_size = 32;
  int time_embedding = 16;
  int diffusion_steps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.05;
  std::uint64_t init_seed = 0;

  /// Throws Error on out-of-range fields.
  void check() const;
};

struct DenoiserModel {
  ModelConfig config;
  NoiseSchedule schedule;
  MlpParams encoder;   ///< feature row -> context features (pooled over the prefix)
  /// [x_t | time embedding | context | one-hot step | curve] -> last hidden layer (ReLU throughout)
  MlpParams trunk;
  /// [last hidden | x_t | time embedding] -> row logits and position
  MlpParams head;
  FilmParams film;  ///< curve embedding -> (gamma, beta) on the first hidden layer

  static DenoiserModel create(const ModelConfig& config);
  int input_size() const;
  ParamViews views();
  ConstParamViews views() const;
  DenoiserModel zeros_like() const;
  std::size_t parameter_count() const;
};

/// Sinusoidal embedding of a diffusion timestep.
std::vector<double> time_embedding(int timestep, int width);

/// Everything the denoiser sees for node `step` apart from x_t and the timestep.
struct ConditioningContext {
  CurveEmbedding curve{};
  std::vector<double> summary;  ///< mean-pooled encoder output over rows < step; zeros when step == 0
  int step = 0;                 ///< 0-based index of the node being generated
};

/// Reads only prefix[0 .. step). Throws DimMismatch when the prefix is shorter
/// than `step` or step is outside [0, kMaxNodes).
ConditioningContext context_encode(const DenoiserModel& model, std::span<const FeatureRow> prefix, int step,
                                   const CurveEmbedding& curve);

/// Batched denoiser evaluation: row i uses contexts[i], x_t[i] and timesteps[i].
Tensor2 denoise(const DenoiserModel& model, std::span<const ConditioningContext> contexts, const Tensor2& x_t,
                std::span<const int> timesteps);

struct LossWeights {
  double position = 1.0;
  double validity = 1.0;
  double type = 1.0;
  double adjacency = 2.0;
  /// Positive-class weight for adjacency, #absent / #present over active slots.
  double edge_pos_weight = 1.0;
  double huber_delta = 0.1;
};

struct LossTerms {
  double position = 0.0;
  double validity = 0.0;
  double type = 0.0;
  double adjacency = 0.0;
  double total = 0.0;
};

/// Loss of one prediction against a clean row at node index `step`. Adjacency
/// cross-entropy is averaged over the active slots j < step. Writes
/// dL/d(raw) into d_raw when non-empty; masked slots get zero gradient.
LossTerms node_loss(std::span<const double> raw, const FeatureRow& clean, int step, const LossWeights& weights,
                    std::span<double> d_raw = {});

/// One supervised item: node `step` of `rows`, conditioned on `curve`.
struct TrainingExample {
  const FeatureMatrix* rows = nullptr;
  int step = 0;
  const CurveEmbedding* curve = nullptr;
};

struct TrainingLoss {
  double loss = 0.0;
  LossTerms terms;  ///< batch means, unweighted by the term weights except in total
  DenoiserModel gradients;
};

/// Draws a diffusion timestep and noise per example from `rng` (in order),
/// corrupts the clean row and returns the mean loss and its parameter gradients.
/// `relu_signs`, when non-null, receives every ReLU sign (for gradient checks).
/// Throws EmptyBatch.
TrainingLoss training_loss(const DenoiserModel& model, std::span<const TrainingExample> batch,
                           const LossWeights& weights, Rng& rng, std::vector<bool>* relu_signs = nullptr);

/// #absent / #present over adjacency slots j < i of valid rows i >= 1.
double edge_positive_weight(std::span<const FeatureMatrix> graphs);

struct NodeSample {
  FeatureRow row{};
  DenoiserOutput raw;  ///< final-step prediction
};

/// Ancestral sampling of one node per context; item i draws all of its noise from
/// Rng(seeds[i]). Results do not depend on batching or on `workers`.
std::vector<NodeSample> p_sample_nodes(const DenoiserModel& model, std::span<const ConditioningContext> contexts,
                                       std::span<const std::uint64_t> seeds, int workers = 1);

NodeSample p_sample_node(const DenoiserModel& model, const ConditioningContext& context, std::uint64_t seed);

}  // namespace linkdiff
