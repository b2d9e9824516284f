#include "linkdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "linkdiff/errors.hpp"
#include "linkdiff/parallel.hpp"

namespace linkdiff {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

/// -[w y log s(z) + (1 - y) log(1 - s(z))] and its derivative in z.
double weighted_bce(double z, double y, double w, double* dz) {
  if (dz) *dz = w * y * (sigmoid(z) - 1.0) + (1.0 - y) * sigmoid(z);
  return w * y * softplus(-z) + (1.0 - y) * softplus(z);
}

double huber(double e, double delta, double* de) {
  if (std::abs(e) <= delta) {
    if (de) *de = e;
    return 0.5 * e * e;
  }
  if (de) *de = e > 0.0 ? delta : -delta;
  return delta * (std::abs(e) - 0.5 * delta);
}

struct InputLayout {
  int x = 0;
  int time = 0;
  int context = 0;
  int step = 0;
  int curve = 0;
  int width = 0;
};

InputLayout layout(const ModelConfig& c) {
  InputLayout l;
  l.time = kRowWidth;
  l.context = l.time + c.time_embedding;
  l.step = l.context + c.context_size;
  l.curve = l.step + kMaxNodes;
  l.width = l.curve + kEmbeddingSize;
  return l;
}

/// Columns of the input that are concatenated again in front of the head.
int skip_width(const ModelConfig& c) { return kRowWidth + c.time_embedding; }

struct DenoiserForward {
  MlpForward trunk;
  MlpForward head;
};

DenoiserForward denoiser_forward(const DenoiserModel& model, const Tensor2& input, const FilmValues& film) {
  DenoiserForward f;
  f.trunk = mlp_forward(model.trunk, input, &film);
  const int hidden = f.trunk.output.cols();
  const int skip = skip_width(model.config);
  Tensor2 head_in(input.rows(), hidden + skip);
  for (int i = 0; i < input.rows(); ++i) {
    auto row = head_in.row(i);
    const auto h = f.trunk.output.row(i);
    std::copy(h.begin(), h.end(), row.begin());
    const auto x = input.row(i);
    std::copy(x.begin(), x.begin() + skip, row.begin() + hidden);
  }
  f.head = mlp_forward(model.head, head_in);
  return f;
}

/// Fills every input column except x_t and the time embedding.
void fill_static_inputs(const DenoiserModel& model, std::span<const ConditioningContext> contexts, Tensor2& input) {
  const InputLayout l = layout(model.config);
  for (int i = 0; i < input.rows(); ++i) {
    const ConditioningContext& ctx = contexts[static_cast<std::size_t>(i)];
    if (static_cast<int>(ctx.summary.size()) != model.config.context_size)
      throw DimMismatch("context summary has " + std::to_string(ctx.summary.size()) + " entries");
    if (ctx.step < 0 || ctx.step >= kMaxNodes) throw DimMismatch("context step out of range");
    auto row = input.row(i);
    std::copy(ctx.summary.begin(), ctx.summary.end(), row.begin() + l.context);
    row[static_cast<std::size_t>(l.step + ctx.step)] = 1.0;
    std::copy(ctx.curve.begin(), ctx.curve.end(), row.begin() + l.curve);
  }
}

void fill_dynamic_inputs(const DenoiserModel& model, const Tensor2& x_t, std::span<const int> timesteps, Tensor2& input) {
  const InputLayout l = layout(model.config);
  for (int i = 0; i < input.rows(); ++i) {
    auto row = input.row(i);
    const auto x = x_t.row(i);
    std::copy(x.begin(), x.end(), row.begin() + l.x);
    const auto emb = time_embedding(timesteps[static_cast<std::size_t>(i)], model.config.time_embedding);
    std::copy(emb.begin(), emb.end(), row.begin() + l.time);
  }
}

Tensor2 curve_matrix(std::span<const ConditioningContext> contexts) {
  Tensor2 c(static_cast<int>(contexts.size()), kEmbeddingSize);
  for (std::size_t i = 0; i < contexts.size(); ++i)
    std::copy(contexts[i].curve.begin(), contexts[i].curve.end(), c.row(static_cast<int>(i)).begin());
  return c;
}

void check_step(const NoiseSchedule& schedule, int t) {
  if (t < 0 || t >= schedule.steps)
    throw StepOutOfRange("diffusion step " + std::to_string(t) + " outside [0, " + std::to_string(schedule.steps) + ")");
}

}  // namespace

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw BadSchedule("need at least 2 diffusion steps");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw BadSchedule("need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.steps = steps;
  double product = 1.0;
  for (int t = 0; t < steps; ++t) {
    const double b = beta_start + (beta_end - beta_start) * static_cast<double>(t) / static_cast<double>(steps - 1);
    s.beta.push_back(b);
    s.alpha.push_back(1.0 - b);
    product *= 1.0 - b;
    s.alpha_bar.push_back(product);
  }
  return s;
}

NodeVector q_sample(const NodeVector& x0, int t, const NodeVector& eps, const NoiseSchedule& schedule) {
  check_step(schedule, t);
  const double a = std::sqrt(schedule.alpha_bar[static_cast<std::size_t>(t)]);
  const double b = std::sqrt(1.0 - schedule.alpha_bar[static_cast<std::size_t>(t)]);
  NodeVector out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

double posterior_variance(const NoiseSchedule& schedule, int t) {
  check_step(schedule, t);
  if (t == 0) return 0.0;
  const auto u = static_cast<std::size_t>(t);
  return (1.0 - schedule.alpha_bar[u - 1]) / (1.0 - schedule.alpha_bar[u]) * schedule.beta[u];
}

NodeVector posterior_mean(const NoiseSchedule& schedule, int t, const NodeVector& x0_hat, const NodeVector& x_t) {
  check_step(schedule, t);
  const auto u = static_cast<std::size_t>(t);
  const double prev = t == 0 ? 1.0 : schedule.alpha_bar[u - 1];
  const double denom = 1.0 - schedule.alpha_bar[u];
  const double c0 = std::sqrt(prev) * schedule.beta[u] / denom;
  const double ct = std::sqrt(schedule.alpha[u]) * (1.0 - prev) / denom;
  NodeVector out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c0 * x0_hat[i] + ct * x_t[i];
  return out;
}

DenoiserOutput DenoiserOutput::from_raw(std::span<const double> raw) {
  if (raw.size() != static_cast<std::size_t>(kRowWidth)) throw DimMismatch("denoiser output must have 24 entries");
  DenoiserOutput o;
  o.validity = raw[0];
  o.type = raw[1];
  o.position = {raw[2], raw[3]};
  std::copy(raw.begin() + kAdjOffset, raw.end(), o.adjacency.begin());
  return o;
}

NodeVector DenoiserOutput::raw() const {
  NodeVector r{};
  r[0] = validity;
  r[1] = type;
  r[2] = position.x;
  r[3] = position.y;
  std::copy(adjacency.begin(), adjacency.end(), r.begin() + kAdjOffset);
  return r;
}

FeatureRow discretize(const DenoiserOutput& out, int step) {
  if (!(out.validity > 0.0)) return pad_feature_row();
  FeatureRow row{};
  row[0] = 1.0;
  row[1] = out.type > 0.0 ? 1.0 : 0.0;
  row[2] = std::clamp(out.position.x, -1.0, 1.0);
  row[3] = std::clamp(out.position.y, -1.0, 1.0);
  for (int j = 0; j < kMaxNodes; ++j)
    row[static_cast<std::size_t>(kAdjOffset + j)] = j < step ? (out.adjacency[static_cast<std::size_t>(j)] > 0.0 ? 1.0 : 0.0) : -1.0;
  return row;
}

void ModelConfig::check() const {
  if (hidden < 1 || hidden_layers < 1 || encoder_hidden < 1 || context_size < 1)
    throw Error("model sizes must be positive");
  if (time_embedding < 2 || time_embedding % 2 != 0) throw Error("time_embedding must be a positive even number");
  make_schedule(diffusion_steps, beta_start, beta_end);
}

DenoiserModel DenoiserModel::create(const ModelConfig& config) {
  config.check();
  DenoiserModel m;
  m.config = config;
  m.schedule = make_schedule(config.diffusion_steps, config.beta_start, config.beta_end);
  Rng rng(derive_seed(config.init_seed, {stream_name("init")}));
  const std::array<int, 3> enc{kRowWidth, config.encoder_hidden, config.context_size};
  m.encoder = MlpParams::create(enc, rng);
  std::vector<int> trunk{layout(config).width};
  for (int l = 0; l < config.hidden_layers; ++l) trunk.push_back(config.hidden);
  m.trunk = MlpParams::create(trunk, rng, 0);
  m.trunk.layers.back().activation = Activation::Relu;
  const std::array<int, 2> head{config.hidden + skip_width(config), kRowWidth};
  m.head = MlpParams::create(head, rng);
  m.film = FilmParams::create(kEmbeddingSize, config.hidden, rng);
  return m;
}

int DenoiserModel::input_size() const { return layout(config).width; }

ParamViews DenoiserModel::views() {
  ParamViews v = encoder.views();
  for (auto s : trunk.views()) v.push_back(s);
  for (auto s : head.views()) v.push_back(s);
  for (auto s : film.views()) v.push_back(s);
  return v;
}

ConstParamViews DenoiserModel::views() const {
  ConstParamViews v = encoder.views();
  for (auto s : trunk.views()) v.push_back(s);
  for (auto s : head.views()) v.push_back(s);
  for (auto s : film.views()) v.push_back(s);
  return v;
}

DenoiserModel DenoiserModel::zeros_like() const {
  DenoiserModel z = *this;
  for (auto v : z.views()) std::fill(v.begin(), v.end(), 0.0);
  return z;
}

std::size_t DenoiserModel::parameter_count() const { return total_size(views()); }

std::vector<double> time_embedding(int timestep, int width) {
  const int half = width / 2;
  std::vector<double> e(static_cast<std::size_t>(width));
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
    e[static_cast<std::size_t>(k)] = std::sin(timestep * freq);
    e[static_cast<std::size_t>(half + k)] = std::cos(timestep * freq);
  }
  return e;
}

ConditioningContext context_encode(const DenoiserModel& model, std::span<const FeatureRow> prefix, int step,
                                   const CurveEmbedding& curve) {
  if (step < 0 || step >= kMaxNodes) throw DimMismatch("step " + std::to_string(step) + " out of range");
  if (prefix.size() < static_cast<std::size_t>(step)) throw DimMismatch("prefix shorter than step");
  ConditioningContext ctx;
  ctx.curve = curve;
  ctx.step = step;
  ctx.summary.assign(static_cast<std::size_t>(model.config.context_size), 0.0);
  if (step == 0) return ctx;
  Tensor2 rows(step, kRowWidth);
  for (int i = 0; i < step; ++i)
    std::copy(prefix[static_cast<std::size_t>(i)].begin(), prefix[static_cast<std::size_t>(i)].end(), rows.row(i).begin());
  const MlpForward f = mlp_forward(model.encoder, rows);
  for (int i = 0; i < step; ++i)
    for (int c = 0; c < model.config.context_size; ++c) ctx.summary[static_cast<std::size_t>(c)] += f.output(i, c);
  for (double& v : ctx.summary) v /= static_cast<double>(step);
  return ctx;
}

Tensor2 denoise(const DenoiserModel& model, std::span<const ConditioningContext> contexts, const Tensor2& x_t,
                std::span<const int> timesteps) {
  const int n = static_cast<int>(contexts.size());
  if (x_t.rows() != n || x_t.cols() != kRowWidth || static_cast<int>(timesteps.size()) != n)
    throw DimMismatch("denoise batch shapes disagree");
  for (int t : timesteps) check_step(model.schedule, t);
  Tensor2 input(n, model.input_size());
  fill_static_inputs(model, contexts, input);
  fill_dynamic_inputs(model, x_t, timesteps, input);
  const FilmValues film = film_forward(model.film, curve_matrix(contexts));
  return denoiser_forward(model, input, film).head.output;
}

LossTerms node_loss(std::span<const double> raw, const FeatureRow& clean, int step, const LossWeights& w,
                    std::span<double> d_raw) {
  if (raw.size() != static_cast<std::size_t>(kRowWidth)) throw DimMismatch("denoiser output must have 24 entries");
  const bool grad = !d_raw.empty();
  if (grad) {
    if (d_raw.size() != raw.size()) throw DimMismatch("gradient buffer size");
    std::fill(d_raw.begin(), d_raw.end(), 0.0);
  }
  LossTerms t;
  double dz = 0.0;
  const double valid = clean[0] == 1.0 ? 1.0 : 0.0;
  t.validity = weighted_bce(raw[0], valid, 1.0, &dz);
  if (grad) d_raw[0] = w.validity * dz;
  if (valid == 1.0) {
    t.type = weighted_bce(raw[1], clean[1] == 1.0 ? 1.0 : 0.0, 1.0, &dz);
    if (grad) d_raw[1] = w.type * dz;
    for (std::size_t k = 2; k < 4; ++k) {
      double de = 0.0;
      t.position += huber(raw[k] - clean[k], w.huber_delta, &de);
      if (grad) d_raw[k] = w.position * de;
    }
    // Mean over the active slots.
    const double inv = step > 0 ? 1.0 / static_cast<double>(step) : 0.0;
    for (int j = 0; j < step; ++j) {
      const auto k = static_cast<std::size_t>(kAdjOffset + j);
      t.adjacency += inv * weighted_bce(raw[k], clean[k] == 1.0 ? 1.0 : 0.0, w.edge_pos_weight, &dz);
      if (grad) d_raw[k] = w.adjacency * inv * dz;
    }
  }
  t.total = w.position * t.position + w.validity * t.validity + w.type * t.type + w.adjacency * t.adjacency;
  return t;
}

TrainingLoss training_loss(const DenoiserModel& model, std::span<const TrainingExample> batch,
                           const LossWeights& weights, Rng& rng, std::vector<bool>* relu_signs) {
  if (batch.empty()) throw EmptyBatch();
  const int n = static_cast<int>(batch.size());
  const int csize = model.config.context_size;

  // Noise draws, in example order.
  std::vector<int> timesteps(static_cast<std::size_t>(n));
  Tensor2 x_t(n, kRowWidth);
  int prefix_rows = 0;
  for (int i = 0; i < n; ++i) {
    const TrainingExample& ex = batch[static_cast<std::size_t>(i)];
    if (ex.step < 0 || ex.step >= kMaxNodes || !ex.rows || !ex.curve) throw DimMismatch("bad training example");
    const int s = static_cast<int>(rng.index(static_cast<std::size_t>(model.schedule.steps)));
    timesteps[static_cast<std::size_t>(i)] = s;
    NodeVector eps{};
    for (double& e : eps) e = rng.normal();
    const NodeVector xt = q_sample((*ex.rows)[static_cast<std::size_t>(ex.step)], s, eps, model.schedule);
    std::copy(xt.begin(), xt.end(), x_t.row(i).begin());
    prefix_rows += ex.step;
  }

  // Context encoder over every prefix row in the batch.
  Tensor2 prefix(prefix_rows, kRowWidth);
  std::vector<int> owner;
  owner.reserve(static_cast<std::size_t>(prefix_rows));
  for (int i = 0, r = 0; i < n; ++i) {
    const TrainingExample& ex = batch[static_cast<std::size_t>(i)];
    for (int k = 0; k < ex.step; ++k, ++r) {
      const FeatureRow& row = (*ex.rows)[static_cast<std::size_t>(k)];
      std::copy(row.begin(), row.end(), prefix.row(r).begin());
      owner.push_back(i);
    }
  }
  std::optional<MlpForward> enc;
  if (prefix_rows > 0) enc = mlp_forward(model.encoder, prefix);

  std::vector<ConditioningContext> contexts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ConditioningContext& ctx = contexts[static_cast<std::size_t>(i)];
    ctx.curve = *batch[static_cast<std::size_t>(i)].curve;
    ctx.step = batch[static_cast<std::size_t>(i)].step;
    ctx.summary.assign(static_cast<std::size_t>(csize), 0.0);
  }
  for (int r = 0; r < prefix_rows; ++r) {
    ConditioningContext& ctx = contexts[static_cast<std::size_t>(owner[static_cast<std::size_t>(r)])];
    for (int c = 0; c < csize; ++c) ctx.summary[static_cast<std::size_t>(c)] += enc->output(r, c);
  }
  for (auto& ctx : contexts)
    if (ctx.step > 0)
      for (double& v : ctx.summary) v /= static_cast<double>(ctx.step);

  Tensor2 input(n, model.input_size());
  fill_static_inputs(model, contexts, input);
  fill_dynamic_inputs(model, x_t, timesteps, input);
  const Tensor2 cond = curve_matrix(contexts);
  const FilmValues film = film_forward(model.film, cond);
  const DenoiserForward f = denoiser_forward(model, input, film);
  if (relu_signs) {
    if (enc) relu_pattern(model.encoder, enc->cache, *relu_signs);
    relu_pattern(model.trunk, f.trunk.cache, *relu_signs);
  }

  TrainingLoss result;
  Tensor2 d_out(n, kRowWidth);
  const double scale = 1.0 / static_cast<double>(n);
  for (int i = 0; i < n; ++i) {
    const TrainingExample& ex = batch[static_cast<std::size_t>(i)];
    const LossTerms t =
        node_loss(f.head.output.row(i), (*ex.rows)[static_cast<std::size_t>(ex.step)], ex.step, weights, d_out.row(i));
    result.terms.position += scale * t.position;
    result.terms.validity += scale * t.validity;
    result.terms.type += scale * t.type;
    result.terms.adjacency += scale * t.adjacency;
    result.terms.total += scale * t.total;
  }
  for (double& v : d_out.values()) v *= scale;
  result.loss = result.terms.total;

  result.gradients = model.zeros_like();
  const MlpGradients gh = mlp_backward(model.head, f.head.cache, d_out);
  result.gradients.head = gh.params;
  const int hidden = f.trunk.output.cols();
  Tensor2 d_trunk(n, hidden);
  for (int i = 0; i < n; ++i)
    std::copy(gh.input.row(i).begin(), gh.input.row(i).begin() + hidden, d_trunk.row(i).begin());
  const MlpGradients g = mlp_backward(model.trunk, f.trunk.cache, d_trunk);
  result.gradients.trunk = g.params;
  film_backward(model.film, cond, *g.film, result.gradients.film);
  if (prefix_rows > 0) {
    const int offset = layout(model.config).context;
    Tensor2 d_enc(prefix_rows, csize);
    for (int r = 0; r < prefix_rows; ++r) {
      const int i = owner[static_cast<std::size_t>(r)];
      const double inv = 1.0 / static_cast<double>(batch[static_cast<std::size_t>(i)].step);
      for (int c = 0; c < csize; ++c) d_enc(r, c) = g.input(i, offset + c) * inv;
    }
    result.gradients.encoder = mlp_backward(model.encoder, enc->cache, d_enc).params;
  }
  return result;
}

double edge_positive_weight(std::span<const FeatureMatrix> graphs) {
  double present = 0.0;
  double absent = 0.0;
  for (const FeatureMatrix& m : graphs)
    for (int i = 1; i < kMaxNodes; ++i) {
      const FeatureRow& row = m[static_cast<std::size_t>(i)];
      if (row[0] != 1.0) break;
      for (int j = 0; j < i; ++j) (row[static_cast<std::size_t>(kAdjOffset + j)] == 1.0 ? present : absent) += 1.0;
    }
  if (present == 0.0) return 1.0;
  return absent / present;
}

namespace {

void sample_range(const DenoiserModel& model, std::span<const ConditioningContext> contexts,
                  std::span<const std::uint64_t> seeds, std::span<NodeSample> out) {
  const int n = static_cast<int>(contexts.size());
  if (n == 0) return;
  std::vector<Rng> rngs;
  rngs.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t s : seeds) rngs.emplace_back(s);

  Tensor2 x(n, kRowWidth);
  for (int i = 0; i < n; ++i)
    for (double& v : x.row(i)) v = rngs[static_cast<std::size_t>(i)].normal();

  Tensor2 input(n, model.input_size());
  fill_static_inputs(model, contexts, input);
  const FilmValues film = film_forward(model.film, curve_matrix(contexts));
  std::vector<int> timesteps(static_cast<std::size_t>(n));
  Tensor2 last;
  for (int s = model.schedule.steps - 1; s >= 0; --s) {
    std::fill(timesteps.begin(), timesteps.end(), s);
    fill_dynamic_inputs(model, x, timesteps, input);
    last = denoiser_forward(model, input, film).head.output;
    const double sigma = std::sqrt(posterior_variance(model.schedule, s));
    for (int i = 0; i < n; ++i) {
      const int step = contexts[static_cast<std::size_t>(i)].step;
      const FeatureRow x0_hat = discretize(DenoiserOutput::from_raw(last.row(i)), step);
      NodeVector xt{};
      std::copy(x.row(i).begin(), x.row(i).end(), xt.begin());
      NodeVector mean = posterior_mean(model.schedule, s, x0_hat, xt);
      if (s > 0)
        for (double& v : mean) v += sigma * rngs[static_cast<std::size_t>(i)].normal();
      std::copy(mean.begin(), mean.end(), x.row(i).begin());
    }
  }
  for (int i = 0; i < n; ++i) {
    NodeSample& ns = out[static_cast<std::size_t>(i)];
    ns.raw = DenoiserOutput::from_raw(last.row(i));
    ns.row = discretize(ns.raw, contexts[static_cast<std::size_t>(i)].step);
  }
}

}  // namespace

std::vector<NodeSample> p_sample_nodes(const DenoiserModel& model, std::span<const ConditioningContext> contexts,
                                       std::span<const std::uint64_t> seeds, int workers) {
  if (contexts.size() != seeds.size()) throw DimMismatch("one seed per context required");
  std::vector<NodeSample> out(contexts.size());
  const std::size_t n = contexts.size();
  const std::size_t chunks = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, std::max<std::size_t>(n, 1));
  parallel_for(chunks, static_cast<int>(chunks), [&](std::size_t c) {
    const std::size_t lo = n * c / chunks;
    const std::size_t hi = n * (c + 1) / chunks;
    sample_range(model, contexts.subspan(lo, hi - lo), seeds.subspan(lo, hi - lo),
                 std::span<NodeSample>(out).subspan(lo, hi - lo));
  });
  return out;
}

NodeSample p_sample_node(const DenoiserModel& model, const ConditioningContext& context, std::uint64_t seed) {
  return p_sample_nodes(model, std::span<const ConditioningContext>(&context, 1), std::span<const std::uint64_t>(&seed, 1))
      .front();
}

}  // namespace linkdiff
