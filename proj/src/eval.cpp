#include "linkdiff/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "linkdiff/errors.hpp"
#include "linkdiff/kinematics.hpp"
#include "linkdiff/parallel.hpp"

namespace linkdiff {

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json optional_flag(const std::optional<bool>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json("N/A");
}

CellResult run_cell(std::span<const Curve> curves, std::span<const CurveEmbedding> embeddings, NodeSampler& sampler,
                    const ExperimentConfig& config, Strategy strategy, int run, bool with_chamfer) {
  SynthesisConfig sc;
  sc.strategy = strategy;
  sc.max_retries = config.max_retries;
  sc.n_angles = config.n_angles;
  sc.seed = config.run_seed(run);
  sc.workers = config.workers;
  const std::vector<SynthesisOutcome> outcomes = batch_generate(embeddings, sampler, sc);

  CellResult cell;
  cell.strategy = strategy;
  cell.run = run;
  cell.seed = sc.seed;
  cell.n_eval = static_cast<int>(outcomes.size());
  cell.chamfer.assign(outcomes.size(), std::nullopt);
  if (with_chamfer) {
    parallel_for(outcomes.size(), config.workers, [&](std::size_t i) {
      if (outcomes[i].valid) cell.chamfer[i] = outcome_chamfer(outcomes[i].graph, curves[i], config.n_angles);
    });
  }
  std::vector<double> distances;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const SynthesisOutcome& o = outcomes[i];
    cell.valid.push_back(o.valid);
    cell.node_counts.push_back(o.graph.node_count());
    cell.successes += o.valid ? 1 : 0;
    cell.node_draws += o.samples;
    if (cell.chamfer[i]) distances.push_back(*cell.chamfer[i]);
  }
  cell.success_rate = static_cast<double>(cell.successes) / static_cast<double>(cell.n_eval);
  cell.chamfer_n = static_cast<int>(distances.size());
  if (!distances.empty()) {
    cell.chamfer_mean = mean_of(distances);
    cell.chamfer_std = sample_std(distances);
  }
  return cell;
}

std::vector<DiversityReport> diversity_of(const std::vector<CellResult>& cells, const ExperimentConfig& config,
                                          std::size_t n_curves) {
  std::vector<DiversityReport> out;
  for (Strategy s : config.strategies) {
    DiversityReport d;
    d.strategy = s;
    d.counts.assign(n_curves, {});
    for (const CellResult& c : cells)
      if (c.strategy == s)
        for (std::size_t i = 0; i < n_curves; ++i) d.counts[i].push_back(c.node_counts[i]);
    for (const std::vector<int>& row : d.counts) {
      if (config.runs < 2) {
        d.varies.push_back(std::nullopt);
        continue;
      }
      const bool varies = std::adjacent_find(row.begin(), row.end(), std::not_equal_to<>()) != row.end();
      d.varies.push_back(varies);
      d.varying_curves += varies ? 1 : 0;
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<CurveEmbedding> embed(std::span<const Curve> curves) {
  std::vector<CurveEmbedding> e;
  e.reserve(curves.size());
  for (const Curve& c : curves) e.push_back(curve_features(c));
  return e;
}

std::span<const Curve> eval_curves(std::span<const Curve> curves, const ExperimentConfig& config) {
  config.check();
  if (curves.empty()) throw EmptyBatch();
  return curves.first(std::min(curves.size(), static_cast<std::size_t>(config.n_eval)));
}

ExperimentReport run_cells(std::span<const Curve> all_curves, NodeSampler& sampler, const ExperimentConfig& config,
                           bool with_chamfer, std::string model_label) {
  const std::span<const Curve> curves = eval_curves(all_curves, config);
  const std::vector<CurveEmbedding> embeddings = embed(curves);
  ExperimentReport report;
  report.config = config;
  report.model = std::move(model_label);
  for (int run = 0; run < config.runs; ++run)
    for (Strategy s : config.strategies)
      report.cells.push_back(run_cell(curves, embeddings, sampler, config, s, run, with_chamfer));

  for (Strategy s : config.strategies) {
    StrategySummary sum;
    sum.strategy = s;
    std::vector<double> rates;
    std::vector<double> chamfers;
    for (const CellResult& c : report.cells) {
      if (c.strategy != s) continue;
      rates.push_back(c.success_rate);
      if (c.chamfer_mean) chamfers.push_back(*c.chamfer_mean);
    }
    sum.success_mean = mean_of(rates);
    sum.success_std = sample_std(rates);
    if (!chamfers.empty()) {
      sum.chamfer_mean = mean_of(chamfers);
      sum.chamfer_std = sample_std(chamfers);
    }
    report.summaries.push_back(sum);
  }

  const auto has = [&](Strategy s) {
    return std::find(config.strategies.begin(), config.strategies.end(), s) != config.strategies.end();
  };
  for (int run = 0; run < config.runs; ++run) {
    if (!(has(Strategy::OneShot) && has(Strategy::GraphRetry) && has(Strategy::NodeRetry))) {
      report.ordering.push_back(std::nullopt);
      continue;
    }
    const double one = report.cell(Strategy::OneShot, run).success_rate;
    const double graph = report.cell(Strategy::GraphRetry, run).success_rate;
    const double node = report.cell(Strategy::NodeRetry, run).success_rate;
    report.ordering.push_back(node >= graph && graph >= one);
  }
  report.diversity = diversity_of(report.cells, config, curves.size());

  for (const CellResult& c : report.cells) {
    const std::string where = std::string(strategy_name(c.strategy)) + " run " + std::to_string(c.run);
    if (c.chamfer_n > c.n_eval || c.successes > c.n_eval)
      report.invariant_failures.push_back(where + ": sample count exceeds n_eval");
    if (with_chamfer && c.chamfer_n != c.successes)
      report.invariant_failures.push_back(where + ": Chamfer population differs from valid outcomes");
    for (std::size_t i = 0; i < c.chamfer.size(); ++i)
      if (c.chamfer[i] && !std::isfinite(*c.chamfer[i]))
        report.invariant_failures.push_back(where + ": non-finite Chamfer for curve " + std::to_string(i));
  }
  return report;
}

}  // namespace

void ExperimentConfig::check() const {
  if (runs < 1) throw Error("runs must be at least 1");
  if (strategies.empty()) throw Error("at least one strategy is required");
  if (n_eval < 1) throw Error("n_eval must be positive");
  if (!run_seeds.empty() && static_cast<int>(run_seeds.size()) != runs)
    throw Error("run_seeds must list one seed per run");
  SynthesisConfig sc;
  sc.max_retries = max_retries;
  sc.n_angles = n_angles;
  sc.check();
}

std::uint64_t ExperimentConfig::run_seed(int run) const {
  if (!run_seeds.empty()) return run_seeds.at(static_cast<std::size_t>(run));
  return derive_seed(seed, {stream_name("run"), static_cast<std::uint64_t>(run)});
}

const CellResult& ExperimentReport::cell(Strategy s, int run) const {
  for (const CellResult& c : cells)
    if (c.strategy == s && c.run == run) return c;
  throw Error(std::string("no cell for ") + strategy_name(s) + " run " + std::to_string(run));
}

double outcome_chamfer(const MechanismGraph& graph, const Curve& target, int n_angles) {
  const Curve target_norm = normalize_curve(target).curve;
  const Curve traced = trace_coupler_curve(graph, n_angles);
  try {
    return chamfer_distance(normalize_curve(traced).curve, target_norm);
  } catch (const DegenerateCurve&) {
    // A stationary end effector has no scale; it maps to the origin unscaled.
    const std::vector<Vec2> origin{Vec2{0.0, 0.0}};
    return chamfer_distance(origin, target_norm.points);
  }
}

ExperimentReport run_experiment(std::span<const Curve> curves, NodeSampler& sampler, const ExperimentConfig& config,
                                std::string model_label) {
  return run_cells(curves, sampler, config, true, std::move(model_label));
}

ExperimentReport run_success_experiment(std::span<const Curve> curves, NodeSampler& sampler,
                                        const ExperimentConfig& config) {
  return run_cells(curves, sampler, config, false, "");
}

ExperimentReport run_chamfer_experiment(std::span<const Curve> curves, NodeSampler& sampler,
                                        const ExperimentConfig& config) {
  return run_cells(curves, sampler, config, true, "");
}

std::vector<DiversityReport> run_diversity_report(std::span<const Curve> curves, NodeSampler& sampler,
                                                  const ExperimentConfig& config) {
  return run_cells(curves, sampler, config, false, "").diversity;
}

std::optional<double> sample_std(std::span<const double> values) {
  if (values.size() < 2) return std::nullopt;
  const double m = mean_of(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

nlohmann::ordered_json report_to_json(const ExperimentReport& report) {
  using nlohmann::ordered_json;
  const ExperimentConfig& c = report.config;
  ordered_json j;
  ordered_json cfg;
  cfg["dataset"] = c.dataset_path;
  cfg["checkpoint"] = c.checkpoint_path;
  cfg["model"] = report.model;
  ordered_json names = ordered_json::array();
  for (Strategy s : c.strategies) names.push_back(strategy_name(s));
  cfg["strategies"] = names;
  cfg["runs"] = c.runs;
  ordered_json seeds = ordered_json::array();
  for (int r = 0; r < c.runs; ++r) seeds.push_back(c.run_seed(r));
  cfg["run_seeds"] = seeds;
  cfg["n_eval"] = report.cells.empty() ? 0 : report.cells.front().n_eval;
  cfg["max_retries"] = c.max_retries;
  cfg["n_angles"] = c.n_angles;
  j["config"] = cfg;

  ordered_json cells = ordered_json::array();
  for (const CellResult& cell : report.cells) {
    ordered_json o;
    o["strategy"] = strategy_name(cell.strategy);
    o["run"] = cell.run;
    o["seed"] = cell.seed;
    o["n_eval"] = cell.n_eval;
    o["successes"] = cell.successes;
    o["success_rate"] = cell.success_rate;
    o["chamfer_n"] = cell.chamfer_n;
    o["chamfer_mean"] = optional_number(cell.chamfer_mean);
    o["chamfer_std"] = optional_number(cell.chamfer_std);
    o["node_draws"] = cell.node_draws;
    cells.push_back(o);
  }
  j["cells"] = cells;

  ordered_json sums = ordered_json::array();
  for (const StrategySummary& s : report.summaries) {
    ordered_json o;
    o["strategy"] = strategy_name(s.strategy);
    o["success_mean"] = s.success_mean;
    o["success_std"] = optional_number(s.success_std);
    o["chamfer_mean"] = optional_number(s.chamfer_mean);
    o["chamfer_std"] = optional_number(s.chamfer_std);
    sums.push_back(o);
  }
  j["summary"] = sums;

  ordered_json ordering = ordered_json::array();
  for (const std::optional<bool>& o : report.ordering) ordering.push_back(optional_flag(o));
  j["ordering"] = ordering;

  ordered_json div = ordered_json::array();
  for (const DiversityReport& d : report.diversity) {
    ordered_json o;
    o["strategy"] = strategy_name(d.strategy);
    o["counts"] = d.counts;
    ordered_json flags = ordered_json::array();
    for (const std::optional<bool>& v : d.varies) flags.push_back(optional_flag(v));
    o["varies"] = flags;
    o["varying_curves"] = report.config.runs < 2 ? ordered_json("N/A") : ordered_json(d.varying_curves);
    div.push_back(o);
  }
  j["diversity"] = div;
  j["invariant_failures"] = report.invariant_failures;
  return j;
}

ReplaySampler::ReplaySampler(std::vector<MechanismGraph> graphs) {
  rows_.reserve(graphs.size());
  for (const MechanismGraph& g : graphs) rows_.push_back(encode_mechanism(g));
}

std::vector<FeatureRow> ReplaySampler::sample(std::span<const SampleRequest> requests) {
  std::vector<FeatureRow> out;
  out.reserve(requests.size());
  for (const SampleRequest& r : requests)
    out.push_back(rows_.at(r.item)[static_cast<std::size_t>(r.step)]);
  return out;
}

std::vector<FeatureRow> InvalidSampler::sample(std::span<const SampleRequest> requests) {
  return std::vector<FeatureRow>(requests.size(), pad_feature_row());
}

FourBarSampler::FourBarSampler() {
  MechanismGraph g = MechanismGraph::motor({-0.5, 0.0}, {-0.3, 0.0});
  g.add_grounded({0.4, 0.0});
  g.add_revolute({0.0, 0.5}, 1, 2);
  rows_ = encode_mechanism(g);
}

std::vector<FeatureRow> FourBarSampler::sample(std::span<const SampleRequest> requests) {
  std::vector<FeatureRow> out;
  out.reserve(requests.size());
  for (const SampleRequest& r : requests) out.push_back(rows_[static_cast<std::size_t>(r.step)]);
  return out;
}

}  // namespace linkdiff
