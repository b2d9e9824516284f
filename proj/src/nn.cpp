#include "linkdiff/nn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>

#include "linkdiff/errors.hpp"

namespace linkdiff {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DimMismatch(what);
}

/// out = x W + b
Tensor2 affine(const Tensor2& x, const DenseLayer& layer) {
  const int n = x.rows();
  const int k = layer.weight.rows();
  const int m = layer.weight.cols();
  Tensor2 out(n, m);
  for (int i = 0; i < n; ++i) {
    auto o = out.row(i);
    std::copy(layer.bias.begin(), layer.bias.end(), o.begin());
    for (int p = 0; p < k; ++p) {
      const double a = x(i, p);
      if (a == 0.0) continue;
      const auto w = layer.weight.row(p);
      for (int j = 0; j < m; ++j) o[static_cast<std::size_t>(j)] += a * w[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

double activate(Activation a, double v) { return a == Activation::Relu ? std::max(v, 0.0) : v; }

}  // namespace

Tensor2::Tensor2(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {
  if (rows < 0 || cols < 0) throw DimMismatch("negative tensor shape");
}

ConstParamViews as_const(const ParamViews& views) {
  ConstParamViews out;
  out.reserve(views.size());
  for (auto v : views) out.emplace_back(v.data(), v.size());
  return out;
}

std::size_t total_size(const ConstParamViews& views) {
  std::size_t n = 0;
  for (auto v : views) n += v.size();
  return n;
}

MlpParams MlpParams::create(std::span<const int> sizes, Rng& rng, int film_layer) {
  if (sizes.size() < 2) throw DimMismatch("an MLP needs at least an input and an output size");
  for (int s : sizes)
    if (s <= 0) throw DimMismatch("layer sizes must be positive");
  MlpParams p;
  const int n_layers = static_cast<int>(sizes.size()) - 1;
  if (film_layer >= n_layers) throw DimMismatch("film layer out of range");
  p.film_layer = film_layer;
  for (int l = 0; l < n_layers; ++l) {
    const int in = sizes[static_cast<std::size_t>(l)];
    const int out = sizes[static_cast<std::size_t>(l) + 1];
    DenseLayer layer;
    layer.weight = Tensor2(in, out);
    layer.bias.assign(static_cast<std::size_t>(out), 0.0);
    layer.activation = l + 1 == n_layers ? Activation::Identity : Activation::Relu;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : layer.weight.values()) w = rng.uniform(-limit, limit);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

std::vector<int> MlpParams::sizes() const {
  std::vector<int> s;
  if (layers.empty()) return s;
  s.push_back(input_size());
  for (const auto& l : layers) s.push_back(l.weight.cols());
  return s;
}

ParamViews MlpParams::views() {
  ParamViews v;
  for (auto& l : layers) {
    v.push_back(l.weight.values());
    v.push_back(l.bias);
  }
  return v;
}

ConstParamViews MlpParams::views() const {
  ConstParamViews v;
  for (const auto& l : layers) {
    v.push_back(l.weight.values());
    v.emplace_back(l.bias);
  }
  return v;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z = *this;
  for (auto v : z.views()) std::fill(v.begin(), v.end(), 0.0);
  return z;
}

MlpForward mlp_forward(const MlpParams& params, const Tensor2& input, const FilmValues* film) {
  require(!params.layers.empty(), "empty MLP");
  require(input.cols() == params.input_size(), "input width " + std::to_string(input.cols()) + " != " +
                                                   std::to_string(params.input_size()));
  if (params.film_layer >= 0) {
    require(film != nullptr, "FiLM values required");
    const int w = params.film_width();
    require(film->gamma.rows() == input.rows() && film->gamma.cols() == w, "gamma shape");
    require(film->beta.rows() == input.rows() && film->beta.cols() == w, "beta shape");
  }
  MlpForward f;
  Tensor2 x = input;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const DenseLayer& layer = params.layers[l];
    Tensor2 a = affine(x, layer);
    Tensor2 h = a;
    if (static_cast<int>(l) == params.film_layer) {
      auto hv = h.values();
      auto g = film->gamma.values();
      auto b = film->beta.values();
      for (std::size_t i = 0; i < hv.size(); ++i) hv[i] = g[i] * hv[i] + b[i];
    }
    Tensor2 y = h;
    for (double& v : y.values()) v = activate(layer.activation, v);
    f.cache.inputs.push_back(std::move(x));
    f.cache.affine.push_back(std::move(a));
    f.cache.activated.push_back(std::move(h));
    x = std::move(y);
  }
  if (params.film_layer >= 0) f.cache.film = *film;
  f.output = std::move(x);
  return f;
}

MlpGradients mlp_backward(const MlpParams& params, const MlpCache& cache, const Tensor2& d_output) {
  require(cache.inputs.size() == params.layers.size(), "cache does not match parameters");
  require(d_output.rows() == cache.inputs.front().rows() && d_output.cols() == params.output_size(),
          "d_output shape");
  MlpGradients g;
  g.params = params.zeros_like();
  Tensor2 d = d_output;
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const DenseLayer& layer = params.layers[li];
    const Tensor2& h = cache.activated[li];
    if (layer.activation == Activation::Relu) {
      auto dv = d.values();
      auto hv = h.values();
      for (std::size_t i = 0; i < dv.size(); ++i)
        if (hv[i] <= 0.0) dv[i] = 0.0;
    }
    if (static_cast<int>(li) == params.film_layer) {
      const FilmValues& film = *cache.film;
      FilmValues df{Tensor2(d.rows(), d.cols()), Tensor2(d.rows(), d.cols())};
      auto dv = d.values();
      auto av = cache.affine[li].values();
      auto gv = film.gamma.values();
      auto dg = df.gamma.values();
      auto db = df.beta.values();
      for (std::size_t i = 0; i < dv.size(); ++i) {
        dg[i] = dv[i] * av[i];
        db[i] = dv[i];
        dv[i] *= gv[i];
      }
      g.film = std::move(df);
    }
    // d now holds dL/d(affine).
    DenseLayer& gl = g.params.layers[li];
    const Tensor2& x = cache.inputs[li];
    const int n = d.rows();
    const int k = layer.weight.rows();
    const int m = layer.weight.cols();
    for (int i = 0; i < n; ++i) {
      const auto dr = d.row(i);
      for (int j = 0; j < m; ++j) gl.bias[static_cast<std::size_t>(j)] += dr[static_cast<std::size_t>(j)];
      for (int p = 0; p < k; ++p) {
        const double a = x(i, p);
        if (a == 0.0) continue;
        auto w = gl.weight.row(p);
        for (int j = 0; j < m; ++j) w[static_cast<std::size_t>(j)] += a * dr[static_cast<std::size_t>(j)];
      }
    }
    Tensor2 dx(n, k);
    for (int i = 0; i < n; ++i) {
      const auto dr = d.row(i);
      for (int p = 0; p < k; ++p) {
        const auto w = layer.weight.row(p);
        double s = 0.0;
        for (int j = 0; j < m; ++j) s += dr[static_cast<std::size_t>(j)] * w[static_cast<std::size_t>(j)];
        dx(i, p) = s;
      }
    }
    d = std::move(dx);
  }
  g.input = std::move(d);
  return g;
}

void relu_pattern(const MlpParams& params, const MlpCache& cache, std::vector<bool>& out) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (params.layers[l].activation != Activation::Relu) continue;
    for (double v : cache.activated[l].values()) out.push_back(v > 0.0);
  }
}

FilmParams FilmParams::create(int conditioning_size, int width, Rng& rng) {
  const std::array<int, 2> sizes{conditioning_size, width};
  FilmParams f;
  f.gamma_map = MlpParams::create(sizes, rng);
  f.beta_map = MlpParams::create(sizes, rng);
  // Small weights keep a fresh modulation near gamma = 1, beta = 0.
  for (double& w : f.gamma_map.layers[0].weight.values()) w *= 0.1;
  for (double& w : f.beta_map.layers[0].weight.values()) w *= 0.1;
  std::fill(f.gamma_map.layers[0].bias.begin(), f.gamma_map.layers[0].bias.end(), 1.0);
  return f;
}

ParamViews FilmParams::views() {
  ParamViews v = gamma_map.views();
  for (auto s : beta_map.views()) v.push_back(s);
  return v;
}

ConstParamViews FilmParams::views() const {
  ConstParamViews v = gamma_map.views();
  for (auto s : beta_map.views()) v.push_back(s);
  return v;
}

FilmParams FilmParams::zeros_like() const { return {gamma_map.zeros_like(), beta_map.zeros_like()}; }

FilmValues film_forward(const FilmParams& film, const Tensor2& conditioning) {
  return {mlp_forward(film.gamma_map, conditioning).output, mlp_forward(film.beta_map, conditioning).output};
}

Tensor2 film_backward(const FilmParams& film, const Tensor2& conditioning, const FilmValues& d_film, FilmParams& grads) {
  Tensor2 d_cond(conditioning.rows(), conditioning.cols());
  const auto accumulate = [&](const MlpParams& map, const Tensor2& d_out, MlpParams& into) {
    const MlpForward f = mlp_forward(map, conditioning);
    const MlpGradients g = mlp_backward(map, f.cache, d_out);
    auto dst = into.views();
    auto src = g.params.views();
    for (std::size_t i = 0; i < dst.size(); ++i)
      for (std::size_t j = 0; j < dst[i].size(); ++j) dst[i][j] += src[i][j];
    auto dc = d_cond.values();
    auto gi = g.input.values();
    for (std::size_t i = 0; i < dc.size(); ++i) dc[i] += gi[i];
  };
  accumulate(film.gamma_map, d_film.gamma, grads.gamma_map);
  accumulate(film.beta_map, d_film.beta, grads.beta_map);
  return d_cond;
}

void optimizer_step(AdamState& state, const ParamViews& params, const ConstParamViews& grads, double lr) {
  require(params.size() == grads.size(), "parameter and gradient view counts differ");
  std::size_t total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].size() == grads[i].size(), "parameter and gradient sizes differ");
    total += params[i].size();
  }
  if (state.m.empty() && state.v.empty() && state.step == 0) {
    state.m.assign(total, 0.0);
    state.v.assign(total, 0.0);
  }
  require(state.m.size() == total && state.v.size() == total, "optimizer state size mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  std::size_t k = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].size(); ++j, ++k) {
      const double g = grads[i][j];
      state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
      state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g;
      const double m_hat = state.m[k] / c1;
      const double v_hat = state.v[k] / c2;
      params[i][j] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

GradCheckResult grad_check(const ParamViews& params, const ConstParamViews& analytic, const ProbeFn& loss,
                           double epsilon) {
  require(params.size() == analytic.size(), "parameter and gradient view counts differ");
  GradCheckResult r;
  std::vector<bool> base;
  loss(&base);
  std::vector<bool> probe;
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].size() == analytic[i].size(), "parameter and gradient sizes differ");
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      double& theta = params[i][j];
      const double saved = theta;
      theta = saved + epsilon;
      probe.clear();
      const double up = loss(&probe);
      bool kink = probe != base;
      theta = saved - epsilon;
      probe.clear();
      const double down = loss(&probe);
      kink = kink || probe != base;
      theta = saved;
      if (kink) {
        ++r.skipped_kinks;
        continue;
      }
      const double fd = (up - down) / (2.0 * epsilon);
      const double bp = analytic[i][j];
      const double rel = std::abs(fd - bp) / std::max(1e-8, std::abs(fd) + std::abs(bp));
      r.max_rel_error = std::max(r.max_rel_error, rel);
      ++r.checked;
    }
  }
  return r;
}

GradCheckResult grad_check(MlpParams& params, const Tensor2& input, const LossFn& loss, double epsilon,
                           std::optional<FilmInput> film) {
  const auto evaluate = [&](std::vector<bool>* pattern, Tensor2* d_out, MlpCache* cache_out) {
    std::optional<FilmValues> fv;
    if (film) fv = film_forward(*film->params, *film->conditioning);
    MlpForward f = mlp_forward(params, input, fv ? &*fv : nullptr);
    if (pattern) relu_pattern(params, f.cache, *pattern);
    const double l = loss(f.output, d_out);
    if (cache_out) *cache_out = std::move(f.cache);
    return l;
  };

  Tensor2 d_out(input.rows(), params.output_size());
  MlpCache cache;
  evaluate(nullptr, &d_out, &cache);
  const MlpGradients g = mlp_backward(params, cache, d_out);

  ParamViews views = params.views();
  ConstParamViews analytic = g.params.views();
  std::optional<FilmParams> film_grads;
  if (film) {
    film_grads = film->params->zeros_like();
    film_backward(*film->params, *film->conditioning, *g.film, *film_grads);
    for (auto v : film->params->views()) views.push_back(v);
    for (auto v : std::as_const(*film_grads).views()) analytic.push_back(v);
  }
  return grad_check(views, analytic, [&](std::vector<bool>* p) { return evaluate(p, nullptr, nullptr); }, epsilon);
}

}  // namespace linkdiff
