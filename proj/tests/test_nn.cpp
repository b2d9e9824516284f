#include <cmath>

#include "doctest.h"
#include "linkdiff/errors.hpp"
#include "linkdiff/nn.hpp"

using namespace linkdiff;

namespace {

Tensor2 random_tensor(int rows, int cols, Rng& rng, double scale = 1.0) {
  Tensor2 t(rows, cols);
  for (double& v : t.values()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

/// Straightforward re-implementation: per-row loops, no caching.
std::vector<double> naive_forward(const MlpParams& p, std::span<const double> x, const std::vector<double>* gamma,
                                  const std::vector<double>* beta) {
  std::vector<double> cur(x.begin(), x.end());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const DenseLayer& layer = p.layers[l];
    std::vector<double> next(static_cast<std::size_t>(layer.weight.cols()));
    for (int j = 0; j < layer.weight.cols(); ++j) {
      double s = layer.bias[static_cast<std::size_t>(j)];
      for (int i = 0; i < layer.weight.rows(); ++i) s += cur[static_cast<std::size_t>(i)] * layer.weight(i, j);
      if (static_cast<int>(l) == p.film_layer) s = (*gamma)[static_cast<std::size_t>(j)] * s + (*beta)[static_cast<std::size_t>(j)];
      if (layer.activation == Activation::Relu && s < 0.0) s = 0.0;
      next[static_cast<std::size_t>(j)] = s;
    }
    cur = std::move(next);
  }
  return cur;
}

double mse_loss(const Tensor2& out, const Tensor2& target, Tensor2* d) {
  double loss = 0.0;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) {
      const double e = out(i, j) - target(i, j);
      loss += 0.5 * e * e / out.rows();
      if (d) (*d)(i, j) = e / out.rows();
    }
  return loss;
}

}  // namespace

TEST_CASE("zero network gives zero output") {
  Rng rng(1);
  const std::array<int, 3> sizes{5, 7, 3};
  MlpParams p = MlpParams::create(sizes, rng);
  for (auto v : p.views()) std::fill(v.begin(), v.end(), 0.0);
  const MlpForward f = mlp_forward(p, random_tensor(4, 5, rng));
  for (double v : f.output.values()) CHECK(v == 0.0);
}

TEST_CASE("forward matches a naive re-implementation and is row independent") {
  Rng rng(2);
  const std::array<int, 4> sizes{6, 9, 8, 4};
  const MlpParams p = MlpParams::create(sizes, rng);
  const Tensor2 x = random_tensor(5, 6, rng);
  const MlpForward f = mlp_forward(p, x);
  for (int i = 0; i < 5; ++i) {
    const auto ref = naive_forward(p, x.row(i), nullptr, nullptr);
    for (int j = 0; j < 4; ++j) CHECK(std::abs(f.output(i, j) - ref[static_cast<std::size_t>(j)]) < 1e-12);
    Tensor2 single(1, 6);
    std::copy(x.row(i).begin(), x.row(i).end(), single.row(0).begin());
    const MlpForward fs = mlp_forward(p, single);
    for (int j = 0; j < 4; ++j) CHECK(fs.output(0, j) == f.output(i, j));
  }
  CHECK(mlp_forward(p, x).output == f.output);
}

TEST_CASE("forward with FiLM matches the naive re-implementation") {
  Rng rng(3);
  const std::array<int, 4> sizes{6, 9, 8, 4};
  const MlpParams p = MlpParams::create(sizes, rng, 1);
  const Tensor2 x = random_tensor(3, 6, rng);
  const FilmValues film{random_tensor(3, 8, rng), random_tensor(3, 8, rng)};
  const MlpForward f = mlp_forward(p, x, &film);
  for (int i = 0; i < 3; ++i) {
    const std::vector<double> g(film.gamma.row(i).begin(), film.gamma.row(i).end());
    const std::vector<double> b(film.beta.row(i).begin(), film.beta.row(i).end());
    const auto ref = naive_forward(p, x.row(i), &g, &b);
    for (int j = 0; j < 4; ++j) CHECK(std::abs(f.output(i, j) - ref[static_cast<std::size_t>(j)]) < 1e-12);
  }
}

TEST_CASE("identity FiLM is a no-op on outputs and on non-FiLM gradients") {
  Rng rng(4);
  const std::array<int, 4> sizes{6, 9, 8, 4};
  MlpParams with = MlpParams::create(sizes, rng, 0);
  MlpParams without = with;
  without.film_layer = -1;
  const Tensor2 x = random_tensor(3, 6, rng);
  const FilmValues id{Tensor2(3, 9, 1.0), Tensor2(3, 9, 0.0)};
  const MlpForward a = mlp_forward(with, x, &id);
  const MlpForward b = mlp_forward(without, x);
  CHECK(a.output == b.output);
  const Tensor2 d = random_tensor(3, 4, rng);
  const MlpGradients ga = mlp_backward(with, a.cache, d);
  const MlpGradients gb = mlp_backward(without, b.cache, d);
  const auto va = ga.params.views();
  const auto vb = gb.params.views();
  for (std::size_t i = 0; i < va.size(); ++i)
    for (std::size_t j = 0; j < va[i].size(); ++j) CHECK(va[i][j] == vb[i][j]);
  CHECK(ga.input == gb.input);
}

TEST_CASE("shape errors raise DimMismatch") {
  Rng rng(5);
  const std::array<int, 3> sizes{4, 5, 2};
  const MlpParams p = MlpParams::create(sizes, rng, 0);
  CHECK_THROWS_AS(mlp_forward(p, Tensor2(2, 3)), DimMismatch);
  CHECK_THROWS_AS(mlp_forward(p, Tensor2(2, 4)), DimMismatch);  // FiLM missing
  const FilmValues bad{Tensor2(2, 4), Tensor2(2, 4)};
  CHECK_THROWS_AS(mlp_forward(p, Tensor2(2, 4), &bad), DimMismatch);
  const FilmValues ok{Tensor2(2, 5, 1.0), Tensor2(2, 5)};
  const MlpForward f = mlp_forward(p, Tensor2(2, 4), &ok);
  CHECK_THROWS_AS(mlp_backward(p, f.cache, Tensor2(2, 3)), DimMismatch);
}

TEST_CASE("linear layer with sum loss: weight gradient is the column sum of inputs") {
  Rng rng(6);
  const std::array<int, 2> sizes{3, 4};
  const MlpParams p = MlpParams::create(sizes, rng);
  const Tensor2 x = random_tensor(5, 3, rng);
  const MlpForward f = mlp_forward(p, x);
  const MlpGradients g = mlp_backward(p, f.cache, Tensor2(5, 4, 1.0));
  for (int i = 0; i < 3; ++i) {
    double col = 0.0;
    for (int r = 0; r < 5; ++r) col += x(r, i);
    for (int j = 0; j < 4; ++j) CHECK(std::abs(g.params.layers[0].weight(i, j) - col) < 1e-12);
  }
  for (double b : g.params.layers[0].bias) CHECK(b == 5.0);
  for (int r = 0; r < 5; ++r)
    for (int i = 0; i < 3; ++i) {
      double s = 0.0;
      for (int j = 0; j < 4; ++j) s += p.layers[0].weight(i, j);
      CHECK(std::abs(g.input(r, i) - s) < 1e-12);
    }
}

TEST_CASE("zero output gradient gives zero parameter gradients") {
  Rng rng(7);
  const std::array<int, 4> sizes{4, 6, 6, 3};
  const MlpParams p = MlpParams::create(sizes, rng);
  const MlpForward f = mlp_forward(p, random_tensor(2, 4, rng));
  const MlpGradients g = mlp_backward(p, f.cache, Tensor2(2, 3));
  for (auto v : g.params.views())
    for (double x : v) CHECK(x == 0.0);
}

TEST_CASE("identity loss on a linear net is exact") {
  Rng rng(8);
  const std::array<int, 2> sizes{5, 3};
  MlpParams p = MlpParams::create(sizes, rng);
  const Tensor2 x = random_tensor(4, 5, rng);
  const LossFn sum = [](const Tensor2& out, Tensor2* d) {
    double s = 0.0;
    for (double v : out.values()) s += v;
    if (d)
      for (double& v : d->values()) v = 1.0;
    return s;
  };
  const GradCheckResult r = grad_check(p, x, sum, 1e-5);
  CHECK(r.max_rel_error < 1e-10);
  CHECK(r.skipped_kinks == 0);
  CHECK(r.checked == 5 * 3 + 3);
}

TEST_CASE("grad_check over random net and FiLM configurations") {
  for (int config = 0; config < 24; ++config) {
    CAPTURE(config);
    Rng rng(derive_seed(100, {static_cast<std::uint64_t>(config)}));
    std::vector<int> sizes;
    if (config == 0 || config == 1) {
      sizes = {24, 64, 64, 24};
    } else {
      const int depth = rng.integer(1, 3);
      sizes.push_back(rng.integer(2, 12));
      for (int l = 0; l < depth; ++l) sizes.push_back(rng.integer(3, 16));
      sizes.push_back(rng.integer(1, 6));
    }
    const bool use_film = config % 2 == 1 && sizes.size() > 2;
    const int film_layer = use_film ? rng.integer(0, static_cast<int>(sizes.size()) - 3) : -1;
    MlpParams p = MlpParams::create(sizes, rng, film_layer);
    for (auto v : p.views())
      for (double& b : v) b += 0.05 * rng.uniform(-1.0, 1.0);
    const int batch = rng.integer(1, 3);
    const Tensor2 x = random_tensor(batch, sizes.front(), rng);
    const Tensor2 target = random_tensor(batch, sizes.back(), rng);
    const LossFn loss = [&](const Tensor2& out, Tensor2* d) { return mse_loss(out, target, d); };
    GradCheckResult r;
    if (use_film) {
      FilmParams film = FilmParams::create(7, p.film_width(), rng);
      const Tensor2 cond = random_tensor(batch, 7, rng);
      r = grad_check(p, x, loss, 1e-5, FilmInput{&film, &cond});
    } else {
      r = grad_check(p, x, loss, 1e-5);
    }
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.checked > 0);
    CHECK(r.skipped_kinks * 100 <= r.checked);
  }
}

TEST_CASE("grad_check detects a wrong gradient") {
  std::vector<double> theta{0.3, -0.7};
  const std::vector<double> wrong{2.0 * 0.3, 0.0};  // second entry should be -1.4
  const ParamViews views{theta};
  const ConstParamViews analytic{wrong};
  const GradCheckResult r = grad_check(
      views, analytic, [&](std::vector<bool>*) { return theta[0] * theta[0] + theta[1] * theta[1]; }, 1e-5);
  CHECK(r.max_rel_error > 0.5);
}

TEST_CASE("optimizer: zero gradients leave parameters unchanged") {
  std::vector<double> w{1.0, -2.0, 3.0};
  const std::vector<double> g(3, 0.0);
  AdamState s;
  for (int i = 0; i < 5; ++i) optimizer_step(s, {w}, {g}, 0.1);
  CHECK(w == std::vector<double>{1.0, -2.0, 3.0});
  CHECK(s.step == 5);
}

TEST_CASE("optimizer: constant gradient approaches lr * g / (|g| + eps)") {
  std::vector<double> w{0.0, 0.0};
  const std::vector<double> g{0.3, -2.5};
  AdamState s;
  const double lr = 1e-3;
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> before = w;
    optimizer_step(s, {w}, {g}, lr);
    for (std::size_t k = 0; k < 2; ++k) {
      const double expected = -lr * g[k] / (std::abs(g[k]) + 1e-8);
      CHECK(std::abs((w[k] - before[k]) - expected) < 1e-12);
    }
  }
}

TEST_CASE("optimizer matches a scalar reference recursion and is deterministic") {
  Rng rng(9);
  std::vector<double> w1{0.5, -0.25, 1.5};
  std::vector<double> w2 = w1;
  std::vector<double> ref = w1;
  std::vector<double> m(3, 0.0);
  std::vector<double> v(3, 0.0);
  AdamState s1;
  AdamState s2;
  for (int step = 1; step <= 20; ++step) {
    std::vector<double> g(3);
    for (double& x : g) x = rng.uniform(-1.0, 1.0);
    optimizer_step(s1, {w1}, {g}, 0.01);
    optimizer_step(s2, {w2}, {g}, 0.01);
    for (std::size_t k = 0; k < 3; ++k) {
      m[k] = 0.9 * m[k] + 0.1 * g[k];
      v[k] = 0.999 * v[k] + 0.001 * g[k] * g[k];
      const double mh = m[k] / (1.0 - std::pow(0.9, step));
      const double vh = v[k] / (1.0 - std::pow(0.999, step));
      ref[k] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(w1[k] - ref[k]) < 1e-12);
  CHECK(w1 == w2);
}

TEST_CASE("optimizer rejects mismatched shapes") {
  std::vector<double> w(3);
  const std::vector<double> g(2);
  AdamState s;
  CHECK_THROWS_AS(optimizer_step(s, {w}, {g}, 0.1), DimMismatch);
}
