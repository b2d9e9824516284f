#include <cmath>
#include <numbers>

#include "doctest.h"
#include "linkdiff/diffusion.hpp"
#include "linkdiff/errors.hpp"
#include "oracles.hpp"

using namespace linkdiff;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.hidden = 12;
  c.encoder_hidden = 6;
  c.context_size = 4;
  c.time_embedding = 4;
  c.diffusion_steps = 12;
  c.init_seed = 3;
  return c;
}

CurveEmbedding random_embedding(Rng& rng) {
  CurveEmbedding e{};
  for (double& v : e) v = rng.uniform(-1.0, 1.0);
  return e;
}

/// Gaussian posterior q(x_{t-1} | x_t, x0) from the product of the two
/// Gaussian factors, written in precision form.
double posterior_mean_oracle(const NoiseSchedule& s, int t, double x0, double xt) {
  const double prev = t == 0 ? 1.0 : s.alpha_bar[static_cast<std::size_t>(t - 1)];
  const double beta = s.beta[static_cast<std::size_t>(t)];
  const double alpha = s.alpha[static_cast<std::size_t>(t)];
  if (t == 0) return x0;
  const double precision = 1.0 / (1.0 - prev) + alpha / beta;
  return (std::sqrt(prev) * x0 / (1.0 - prev) + std::sqrt(alpha) * xt / beta) / precision;
}

}  // namespace

TEST_CASE("schedule: two-step hand product") {
  const NoiseSchedule s = make_schedule(2, 0.1, 0.2);
  CHECK(s.beta[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(s.beta[1] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(std::abs(s.alpha_bar[0] - 0.9) < 1e-15);
  CHECK(std::abs(s.alpha_bar[1] - 0.72) < 1e-15);
}

TEST_CASE("schedule: constant beta has a closed form") {
  const double b = 0.03;
  const NoiseSchedule s = make_schedule(50, b, b);
  for (int t = 0; t < 50; ++t) CHECK(std::abs(s.alpha_bar[static_cast<std::size_t>(t)] - std::pow(1.0 - b, t + 1)) < 1e-13);
}

TEST_CASE("schedule: default endpoint and the 0.02 variant") {
  const ModelConfig c;
  const NoiseSchedule s = make_schedule(c.diffusion_steps, c.beta_start, c.beta_end);
  CHECK(s.alpha_bar.back() < 0.01);
  for (std::size_t t = 1; t < s.alpha_bar.size(); ++t) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);

  // Ending at 0.02 leaves about 13% of the signal variance after 200 steps.
  const NoiseSchedule weak = make_schedule(200, 1e-4, 0.02);
  double log_sum = 0.0;
  for (int t = 0; t < 200; ++t) log_sum += std::log1p(-(1e-4 + (0.02 - 1e-4) * t / 199.0));
  CHECK(std::abs(weak.alpha_bar.back() - std::exp(log_sum)) < 1e-12);
  CHECK(weak.alpha_bar.back() > 0.1);
}

TEST_CASE("schedule: bad parameters") {
  CHECK_THROWS_AS(make_schedule(1, 0.1, 0.2), BadSchedule);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.2), BadSchedule);
  CHECK_THROWS_AS(make_schedule(10, 0.3, 0.2), BadSchedule);
  CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), BadSchedule);
}

TEST_CASE("q_sample limits and range") {
  NoiseSchedule s;
  s.steps = 2;
  s.beta = {1e-9, 1.0 - 1e-9};
  s.alpha = {1.0, 0.0};
  s.alpha_bar = {1.0, 0.0};
  NodeVector x0{};
  NodeVector eps{};
  for (std::size_t i = 0; i < x0.size(); ++i) {
    x0[i] = 0.1 * static_cast<double>(i);
    eps[i] = -0.3 * static_cast<double>(i);
  }
  CHECK(q_sample(x0, 0, eps, s) == x0);
  CHECK(q_sample(x0, 1, eps, s) == eps);
  CHECK_THROWS_AS(q_sample(x0, 2, eps, s), StepOutOfRange);
  CHECK_THROWS_AS(q_sample(x0, -1, eps, s), StepOutOfRange);
}

TEST_CASE("q_sample marginal moments match the closed form") {
  const NoiseSchedule s = make_schedule(200, 1e-4, 0.05);
  NodeVector x0 = pad_feature_row();
  x0[0] = 1.0;
  x0[2] = 0.4;
  x0[3] = -0.7;
  const int n = 10000;
  for (int t : {0, 10, 50, 120, 199}) {
    CAPTURE(t);
    Rng rng(derive_seed(11, {static_cast<std::uint64_t>(t)}));
    std::vector<double> sum(24, 0.0);
    std::vector<double> sq(24, 0.0);
    for (int k = 0; k < n; ++k) {
      NodeVector eps{};
      for (double& e : eps) e = rng.normal();
      const NodeVector x = q_sample(x0, t, eps, s);
      for (std::size_t i = 0; i < 24; ++i) {
        sum[i] += x[i];
        sq[i] += x[i] * x[i];
      }
    }
    const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
    const double var = 1.0 - ab;
    for (std::size_t i = 0; i < 24; ++i) {
      const double mean = sum[i] / n;
      const double sample_var = (sq[i] - n * mean * mean) / (n - 1);
      CHECK(std::abs(mean - std::sqrt(ab) * x0[i]) < 4.0 * std::sqrt(var) / std::sqrt(n));
      CHECK(std::abs(sample_var - var) < 0.05 * var);
    }
  }
}

TEST_CASE("posterior mean matches the Gaussian product oracle") {
  const NoiseSchedule s = make_schedule(30, 1e-3, 0.2);
  Rng rng(12);
  for (int t = 0; t < 30; ++t) {
    NodeVector x0{};
    NodeVector xt{};
    for (std::size_t i = 0; i < 24; ++i) {
      x0[i] = rng.uniform(-1.0, 1.0);
      xt[i] = rng.normal();
    }
    const NodeVector mu = posterior_mean(s, t, x0, xt);
    for (std::size_t i = 0; i < 24; ++i) CHECK(std::abs(mu[i] - posterior_mean_oracle(s, t, x0[i], xt[i])) < 1e-12);
    if (t > 0) {
      const double prev = s.alpha_bar[static_cast<std::size_t>(t - 1)];
      const double oracle_var = 1.0 / (1.0 / (1.0 - prev) + s.alpha[static_cast<std::size_t>(t)] / s.beta[static_cast<std::size_t>(t)]);
      CHECK(std::abs(posterior_variance(s, t) - oracle_var) < 1e-14);
    } else {
      CHECK(posterior_variance(s, t) == 0.0);
    }
  }
}

TEST_CASE("discretize always yields a legal row") {
  Rng rng(13);
  for (int k = 0; k < 2000; ++k) {
    NodeVector raw{};
    for (double& v : raw) v = 3.0 * rng.normal();
    const int step = rng.integer(0, kMaxNodes - 1);
    const FeatureRow row = discretize(DenoiserOutput::from_raw(raw), step);
    if (raw[0] > 0.0) {
      const NodeRecord rec = decode_row(row, step);
      CHECK(rec.valid);
      CHECK(std::abs(rec.position.x) <= 1.0);
      for (int j = step; j < kMaxNodes; ++j) CHECK(row[static_cast<std::size_t>(kAdjOffset + j)] == -1.0);
    } else {
      CHECK(row == pad_feature_row());
    }
  }
}

TEST_CASE("node loss: saturated correct prediction is near zero") {
  const FeatureMatrix m = encode_mechanism(testing::unit_four_bar());
  LossWeights w;
  w.edge_pos_weight = 3.0;
  for (int step = 0; step < 5; ++step) {
    const FeatureRow& clean = m[static_cast<std::size_t>(step)];
    NodeVector raw{};
    raw[0] = clean[0] == 1.0 ? 20.0 : -20.0;
    raw[1] = clean[1] == 1.0 ? 20.0 : -20.0;
    raw[2] = clean[2];
    raw[3] = clean[3];
    for (int j = 0; j < kMaxNodes; ++j) raw[static_cast<std::size_t>(kAdjOffset + j)] = clean[static_cast<std::size_t>(kAdjOffset + j)] == 1.0 ? 20.0 : -20.0;
    const LossTerms t = node_loss(raw, clean, step, w);
    CHECK(t.total >= 0.0);
    CHECK(t.total < 1e-6);
  }
}

TEST_CASE("node loss: zero logits give ln 2 per active binary slot") {
  const FeatureMatrix m = encode_mechanism(testing::unit_four_bar());
  const LossWeights w;
  const NodeVector raw{};
  const double ln2 = std::numbers::ln2;
  const LossTerms t3 = node_loss(raw, m[3], 3, w);
  CHECK(std::abs(t3.validity - ln2) < 1e-15);
  CHECK(std::abs(t3.type - ln2) < 1e-15);
  CHECK(std::abs(t3.adjacency - ln2) < 1e-15);  // mean of three active slots
  // Stop row: only validity is supervised.
  const LossTerms stop = node_loss(raw, m[4], 4, w);
  CHECK(std::abs(stop.validity - ln2) < 1e-15);
  CHECK(stop.type == 0.0);
  CHECK(stop.adjacency == 0.0);
  CHECK(stop.position == 0.0);
}

TEST_CASE("node loss gradient matches central differences and masks slots") {
  const FeatureMatrix m = encode_mechanism(testing::unit_four_bar());
  LossWeights w;
  w.edge_pos_weight = 2.5;
  Rng rng(14);
  for (int step : {1, 2, 3, 4}) {
    NodeVector raw{};
    for (double& v : raw) v = rng.normal();
    NodeVector grad{};
    node_loss(raw, m[static_cast<std::size_t>(step)], step, w, grad);
    for (std::size_t k = 0; k < 24; ++k) {
      NodeVector up = raw;
      NodeVector down = raw;
      up[k] += 1e-6;
      down[k] -= 1e-6;
      const double fd = (node_loss(up, m[static_cast<std::size_t>(step)], step, w).total -
                         node_loss(down, m[static_cast<std::size_t>(step)], step, w).total) /
                        2e-6;
      CHECK(std::abs(fd - grad[k]) < 1e-7);
      if (k >= static_cast<std::size_t>(kAdjOffset + step)) CHECK(grad[k] == 0.0);
    }
  }
}

TEST_CASE("context encoding: empty prefix, causality and pooling collisions") {
  const DenoiserModel model = DenoiserModel::create(tiny_config());
  Rng rng(15);
  const CurveEmbedding curve = random_embedding(rng);
  FeatureMatrix m = encode_mechanism(testing::unit_four_bar());

  const ConditioningContext c0 = context_encode(model, {}, 0, curve);
  CHECK(c0.summary == std::vector<double>(4, 0.0));

  const ConditioningContext c2 = context_encode(model, m, 2, curve);
  FeatureMatrix mutated = m;
  mutated[2] = pad_feature_row();
  std::swap(mutated[3], mutated[5]);
  const ConditioningContext c2m = context_encode(model, mutated, 2, curve);
  CHECK(c2.summary == c2m.summary);

  FeatureMatrix swapped = m;
  std::swap(swapped[1], swapped[2]);
  const ConditioningContext a = context_encode(model, m, 3, curve);
  const ConditioningContext b = context_encode(model, swapped, 3, curve);
  for (std::size_t i = 0; i < a.summary.size(); ++i) CHECK(std::abs(a.summary[i] - b.summary[i]) < 1e-15);

  CHECK_THROWS_AS(context_encode(model, std::span<const FeatureRow>(m).first(1), 2, curve), DimMismatch);
  CHECK_THROWS_AS(context_encode(model, m, kMaxNodes, curve), DimMismatch);
}

TEST_CASE("training loss gradients match central differences") {
  ModelConfig cfg = tiny_config();
  cfg.hidden_layers = 2;
  DenoiserModel model = DenoiserModel::create(cfg);
  Rng data_rng(16);
  const FeatureMatrix four = encode_mechanism(testing::unit_four_bar());
  const FeatureMatrix ref = encode_mechanism(testing::locking_four_bar());
  const CurveEmbedding ca = random_embedding(data_rng);
  const CurveEmbedding cb = random_embedding(data_rng);
  const std::vector<TrainingExample> batch{{&four, 3, &ca}, {&ref, 0, &cb}, {&ref, 4, &ca}, {&four, 1, &cb}};
  LossWeights w;
  w.edge_pos_weight = 1.7;

  Rng rng(17);
  const TrainingLoss base = training_loss(model, batch, w, rng);
  CHECK(std::isfinite(base.loss));
  // Central differences entry by entry. Loss values near 2 put the difference
  // roundoff near 5e-11, so tiny gradients are compared absolutely.
  ParamViews views = model.views();
  const ConstParamViews analytic = base.gradients.views();
  const auto probe = [&](std::vector<bool>* pattern) {
    Rng again(17);
    return training_loss(model, batch, w, again, pattern).loss;
  };
  std::vector<bool> base_pattern;
  probe(&base_pattern);
  std::size_t checked = 0;
  std::size_t kinks = 0;
  double worst_rel = 0.0;
  double worst_abs = 0.0;
  for (std::size_t i = 0; i < views.size(); ++i)
    for (std::size_t j = 0; j < views[i].size(); ++j) {
      const double saved = views[i][j];
      std::vector<bool> p_up;
      std::vector<bool> p_down;
      views[i][j] = saved + 1e-5;
      const double up = probe(&p_up);
      views[i][j] = saved - 1e-5;
      const double down = probe(&p_down);
      views[i][j] = saved;
      if (p_up != base_pattern || p_down != base_pattern) {
        ++kinks;
        continue;
      }
      ++checked;
      const double fd = (up - down) / 2e-5;
      const double bp = analytic[i][j];
      if (std::abs(fd) + std::abs(bp) > 1e-6)
        worst_rel = std::max(worst_rel, std::abs(fd - bp) / (std::abs(fd) + std::abs(bp)));
      else
        worst_abs = std::max(worst_abs, std::abs(fd - bp));
    }
  CHECK(worst_rel < 1e-4);
  CHECK(worst_abs < 1e-10);
  CHECK(checked > 0);
  CHECK(kinks * 100 <= checked);
  Rng empty_rng(1);
  CHECK_THROWS_AS(training_loss(model, std::span<const TrainingExample>{}, w, empty_rng), EmptyBatch);
}

TEST_CASE("edge positive weight counts active slots") {
  const std::vector<FeatureMatrix> graphs{encode_mechanism(testing::unit_four_bar())};
  // Present: (1,0), (3,1), (3,2). Absent: (2,0), (2,1), (3,0).
  CHECK(edge_positive_weight(graphs) == 1.0);
}

TEST_CASE("sampling is deterministic, batch invariant and causal") {
  const DenoiserModel model = DenoiserModel::create(tiny_config());
  Rng rng(18);
  FeatureMatrix m = encode_mechanism(testing::unit_four_bar());
  std::vector<ConditioningContext> contexts;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < 7; ++i) {
    contexts.push_back(context_encode(model, m, i % 5, random_embedding(rng)));
    seeds.push_back(derive_seed(99, {static_cast<std::uint64_t>(i)}));
  }
  const auto batched = p_sample_nodes(model, contexts, seeds);
  const auto threaded = p_sample_nodes(model, contexts, seeds, 3);
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const NodeSample single = p_sample_node(model, contexts[i], seeds[i]);
    CHECK(single.row == batched[i].row);
    CHECK(single.raw.raw() == batched[i].raw.raw());
    CHECK(threaded[i].row == batched[i].row);
    CHECK(threaded[i].raw.raw() == batched[i].raw.raw());
    if (batched[i].row[0] == 1.0) CHECK_NOTHROW(decode_row(batched[i].row, contexts[i].step));
  }

  // Future rows never influence node 3.
  FeatureMatrix future = m;
  future[3][2] = 0.123;
  future[4] = m[1];
  const ConditioningContext a = context_encode(model, m, 3, contexts[0].curve);
  const ConditioningContext b = context_encode(model, future, 3, contexts[0].curve);
  CHECK(p_sample_node(model, a, 5).raw.raw() == p_sample_node(model, b, 5).raw.raw());
}
