#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "linkdiff/rng.hpp"

namespace linkdiff {

/// Dense row-major matrix of doubles.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(int rows, int cols, double fill = 0.0);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  std::span<double> row(int r) { return {data_.data() + static_cast<std::ptrdiff_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const double> row(int r) const {
    return {data_.data() + static_cast<std::ptrdiff_t>(r) * cols_, static_cast<std::size_t>(cols_)};
  }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Tensor2&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

using ParamViews = std::vector<std::span<double>>;
using ConstParamViews = std::vector<std::span<const double>>;

ConstParamViews as_const(const ParamViews& views);
std::size_t total_size(const ConstParamViews& views);

enum class Activation { Relu, Identity };

struct DenseLayer {
  Tensor2 weight;  ///< in x out
  std::vector<double> bias;
  Activation activation = Activation::Relu;
};

/// Affine/activation stack. When film_layer >= 0, that layer's pre-activation h
/// is replaced by gamma * h + beta before its activation.
struct MlpParams {
  std::vector<DenseLayer> layers;
  int film_layer = -1;

  /// ReLU on hidden layers, identity on the output layer; uniform
  /// +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
  static MlpParams create(std::span<const int> sizes, Rng& rng, int film_layer = -1);

  std::vector<int> sizes() const;
  int input_size() const { return layers.front().weight.rows(); }
  int output_size() const { return layers.back().weight.cols(); }
  int film_width() const { return film_layer < 0 ? 0 : layers[static_cast<std::size_t>(film_layer)].weight.cols(); }

  /// weight, bias for each layer in order.
  ParamViews views();
  ConstParamViews views() const;
  MlpParams zeros_like() const;
};

struct FilmValues {
  Tensor2 gamma;
  Tensor2 beta;
};

struct MlpCache {
  std::vector<Tensor2> inputs;     ///< input of each layer
  std::vector<Tensor2> affine;     ///< x W + b, before FiLM
  std::vector<Tensor2> activated;  ///< pre-activation after FiLM (what the nonlinearity sees)
  std::optional<FilmValues> film;
};

struct MlpForward {
  Tensor2 output;
  MlpCache cache;
};

/// Throws DimMismatch on shape errors.
MlpForward mlp_forward(const MlpParams& params, const Tensor2& input, const FilmValues* film = nullptr);

struct MlpGradients {
  MlpParams params;  ///< same shapes as the forward parameters
  Tensor2 input;
  std::optional<FilmValues> film;
};

MlpGradients mlp_backward(const MlpParams& params, const MlpCache& cache, const Tensor2& d_output);

/// Signs of every ReLU pre-activation, in cache order.
void relu_pattern(const MlpParams& params, const MlpCache& cache, std::vector<bool>& out);

/// Two single-layer affine maps from a conditioning vector to gamma and beta.
/// The gamma bias starts at 1 so a fresh map is close to the identity modulation.
struct FilmParams {
  MlpParams gamma_map;
  MlpParams beta_map;

  static FilmParams create(int conditioning_size, int width, Rng& rng);
  ParamViews views();
  ConstParamViews views() const;
  FilmParams zeros_like() const;
};

FilmValues film_forward(const FilmParams& film, const Tensor2& conditioning);
/// Accumulates parameter gradients into `grads`; returns d(conditioning).
Tensor2 film_backward(const FilmParams& film, const Tensor2& conditioning, const FilmValues& d_film, FilmParams& grads);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected adaptive-moment update over all parameter views.
/// Throws DimMismatch when the views disagree with each other or the state.
void optimizer_step(AdamState& state, const ParamViews& params, const ConstParamViews& grads, double lr);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Entries whose +-epsilon probe flipped a ReLU sign; FD is meaningless there.
  std::size_t skipped_kinks = 0;
};

/// Evaluates the loss at the current parameters; fills `pattern` with the
/// activation signs when non-null.
using ProbeFn = std::function<double(std::vector<bool>* pattern)>;

/// Central differences over every parameter entry against `analytic`:
/// max |g_fd - g_bp| / max(1e-8, |g_fd| + |g_bp|).
GradCheckResult grad_check(const ParamViews& params, const ConstParamViews& analytic, const ProbeFn& loss,
                           double epsilon);

/// loss(output, d_output) -> scalar; writes dL/d(output) when d_output is non-null.
using LossFn = std::function<double(const Tensor2& output, Tensor2* d_output)>;

struct FilmInput {
  FilmParams* params;
  const Tensor2* conditioning;
};

/// Gradient check of an MLP (and optional FiLM maps) against `loss`.
GradCheckResult grad_check(MlpParams& params, const Tensor2& input, const LossFn& loss, double epsilon,
                           std::optional<FilmInput> film = std::nullopt);

}  // namespace linkdiff
