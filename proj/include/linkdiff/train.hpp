#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "linkdiff/datagen.hpp"
#include "linkdiff/diffusion.hpp"

namespace linkdiff {

struct TrainConfig {
  int steps = 500;
  int batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  /// When set, the adjacency positive-class weight is measured on the training set.
  bool auto_edge_weight = true;
  LossWeights weights;
  ModelConfig model;

  void check() const;
};

/// Plain `key=value` lines, one per field, fixed order.
std::string format_train_config(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys and bad values raise ParseError.
TrainConfig parse_train_config(std::istream& in);
TrainConfig read_train_config(const std::string& path);

/// Encoded graphs and curve embeddings ready for batching.
struct TrainingSet {
  std::vector<FeatureMatrix> graphs;
  std::vector<int> node_counts;
  std::vector<CurveEmbedding> curves;

  static TrainingSet from_records(const std::vector<DatasetRecord>& records);
  std::size_t size() const { return graphs.size(); }
};

/// Everything needed to resume training exactly.
struct Checkpoint {
  TrainConfig config;
  DenoiserModel model;
  AdamState optimizer;
  std::int64_t step = 0;
};

/// Layout (all integers and floats little-endian):
///   8 bytes  magic "LKDFCKPT"
///   u32      format version (1)
///   i64 x 10 hidden, hidden_layers, encoder_hidden, context_size, time_embedding,
///            diffusion_steps, batch_size, steps, step, optimizer step
///   u64 x 2  model init seed, training seed
///   u8       auto_edge_weight
///   f64 x 12 beta_start, beta_end, learning_rate, weight position/validity/type/adjacency,
///            edge_pos_weight, huber_delta, adam beta1/beta2/epsilon
///   u32      number of parameter arrays; then per array: u32 rows, u32 cols, rows*cols f64
///            (encoder, trunk, head, FiLM gamma map, FiLM beta map; weight then bias per layer)
///   u64      optimizer moment length n; then n f64 first moments, n f64 second moments
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
/// Throws IoError on unreadable or inconsistent files.
Checkpoint load_checkpoint(const std::string& path);

class Trainer {
 public:
  Trainer(const TrainConfig& config, TrainingSet data);
  Trainer(Checkpoint checkpoint, TrainingSet data);

  /// One optimizer step on batch `step()`; batch draws come from
  /// derive_seed(seed, {"batch", step}) so resumed runs continue identically.
  double step();
  /// Runs until `steps` optimizer steps have been taken in total.
  std::vector<double> run(int steps, const std::function<void(std::int64_t, double)>& on_step = {});

  const Checkpoint& state() const { return state_; }
  std::int64_t steps_taken() const { return state_.step; }

 private:
  Checkpoint state_;
  TrainingSet data_;
};

/// Moving average with a trailing window (shorter at the start).
std::vector<double> moving_average(const std::vector<double>& values, int window);

}  // namespace linkdiff
