#include "linkdiff/synthesis.hpp"

#include "json.hpp"
#include "linkdiff/errors.hpp"
#include "linkdiff/parallel.hpp"

namespace linkdiff {

namespace {

enum class Phase { Sampling, Finished };

struct ItemState {
  std::vector<FeatureRow> rows;
  int step = 0;
  int attempt = 0;
  int pass = 0;
  std::uint64_t stream = 0;
  Phase phase = Phase::Sampling;
  SynthesisOutcome outcome;
  std::vector<int> pass_attempts;
  std::vector<int> pass_warnings;
};

/// Rows that cannot be decoded (only possible with hand-written samplers) yield an
/// empty graph, which fails validation.
MechanismGraph graph_of(std::span<const FeatureRow> rows) {
  try {
    return decode_rows(rows);
  } catch (const Error&) {
    return MechanismGraph{};
  }
}

}  // namespace

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::OneShot:
      return "one-shot";
    case Strategy::GraphRetry:
      return "graph-retry";
    case Strategy::NodeRetry:
      return "node-retry";
  }
  return "unknown";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::OneShot, Strategy::GraphRetry, Strategy::NodeRetry})
    if (name == strategy_name(s)) return s;
  return std::nullopt;
}

void SynthesisConfig::check() const {
  if (max_retries < 1) throw Error("max_retries must be at least 1");
  if (n_max < 4 || n_max > kMaxNodes) throw Error("n_max must be in [4, 20]");
  if (n_angles < 3) throw Error("n_angles must be at least 3");
}

std::vector<FeatureRow> DiffusionSampler::sample(std::span<const SampleRequest> requests) {
  std::vector<ConditioningContext> contexts;
  std::vector<std::uint64_t> seeds;
  contexts.reserve(requests.size());
  seeds.reserve(requests.size());
  for (const SampleRequest& r : requests) {
    contexts.push_back(context_encode(model_, r.prefix, r.step, *r.curve));
    seeds.push_back(r.seed);
  }
  const std::vector<NodeSample> samples = p_sample_nodes(model_, contexts, seeds, workers_);
  std::vector<FeatureRow> rows;
  rows.reserve(samples.size());
  for (const NodeSample& s : samples) rows.push_back(s.row);
  return rows;
}

std::uint64_t item_stream(std::uint64_t seed, std::size_t item) {
  return derive_seed(seed, {stream_name("item"), static_cast<std::uint64_t>(item)});
}

std::uint64_t node_stream(std::uint64_t item_seed, int pass, int step, int attempt) {
  return derive_seed(item_seed, {static_cast<std::uint64_t>(pass), static_cast<std::uint64_t>(step),
                                 static_cast<std::uint64_t>(attempt)});
}

std::vector<SynthesisOutcome> batch_generate(std::span<const CurveEmbedding> embeddings, NodeSampler& sampler,
                                             const SynthesisConfig& config, std::size_t first_item) {
  config.check();
  if (embeddings.empty()) throw EmptyBatch();
  const std::size_t n = embeddings.size();
  std::vector<ItemState> items(n);
  for (std::size_t i = 0; i < n; ++i) items[i].stream = item_stream(config.seed, first_item + i);

  // Closes the current pass: validates the whole graph and decides whether another pass follows.
  const auto finish_pass = [&](ItemState& s) {
    SynthesisOutcome& o = s.outcome;
    o.graph = graph_of(s.rows);
    o.report = validate(o.graph, config.n_angles);
    o.valid = o.report.ok();
    o.attempts = s.pass_attempts;
    o.warnings = s.pass_warnings;
    o.passes = s.pass + 1;
    const bool again = config.strategy == Strategy::GraphRetry && !o.valid && s.pass + 1 < config.max_retries;
    if (!again) {
      s.phase = Phase::Finished;
      return;
    }
    ++s.pass;
    s.rows.clear();
    s.step = 0;
    s.attempt = 0;
    s.pass_attempts.clear();
    s.pass_warnings.clear();
  };

  std::vector<std::size_t> active;
  std::vector<SampleRequest> requests;
  std::vector<char> prefix_ok;
  for (;;) {
    active.clear();
    requests.clear();
    for (std::size_t i = 0; i < n; ++i) {
      ItemState& s = items[i];
      if (s.phase != Phase::Sampling) continue;
      active.push_back(i);
      requests.push_back({s.rows, s.step, &embeddings[i], first_item + i, s.pass, s.attempt,
                          node_stream(s.stream, s.pass, s.step, s.attempt)});
    }
    if (active.empty()) break;
    const std::vector<FeatureRow> rows = sampler.sample(requests);
    if (rows.size() != requests.size()) throw DimMismatch("sampler returned the wrong number of rows");

    // Candidate prefix validation (NodeRetry, node index >= 2) is independent per item.
    prefix_ok.assign(active.size(), 1);
    if (config.strategy == Strategy::NodeRetry) {
      parallel_for(active.size(), config.workers, [&](std::size_t k) {
        const ItemState& s = items[active[k]];
        if (rows[k][0] != 1.0 || s.step < 2) return;
        std::vector<FeatureRow> candidate = s.rows;
        candidate.push_back(rows[k]);
        prefix_ok[k] = validate(graph_of(candidate), config.n_angles).ok() ? 1 : 0;
      });
    }

    for (std::size_t k = 0; k < active.size(); ++k) {
      ItemState& s = items[active[k]];
      const FeatureRow& row = rows[k];
      ++s.outcome.samples;
      if (row[0] != 1.0) {
        // Stop token: the graph ends before this node.
        finish_pass(s);
        continue;
      }
      if (!prefix_ok[k] && s.attempt + 1 < config.max_retries) {
        ++s.attempt;
        continue;
      }
      if (!prefix_ok[k]) s.pass_warnings.push_back(s.step);
      s.pass_attempts.push_back(s.attempt + 1);
      s.rows.push_back(row);
      ++s.step;
      s.attempt = 0;
      if (s.step == config.n_max) finish_pass(s);
    }
  }

  std::vector<SynthesisOutcome> out;
  out.reserve(n);
  for (ItemState& s : items) out.push_back(std::move(s.outcome));
  return out;
}

std::vector<SynthesisOutcome> batch_generate(std::span<const Curve> curves, NodeSampler& sampler,
                                             const SynthesisConfig& config) {
  std::vector<CurveEmbedding> embeddings;
  embeddings.reserve(curves.size());
  for (const Curve& c : curves) embeddings.push_back(curve_features(c));
  return batch_generate(std::span<const CurveEmbedding>(embeddings), sampler, config);
}

namespace {

SynthesisOutcome generate_single(const Curve& curve, NodeSampler& sampler, SynthesisConfig config, Strategy s) {
  config.strategy = s;
  return batch_generate(std::span<const Curve>(&curve, 1), sampler, config).front();
}

}  // namespace

SynthesisOutcome generate_one_shot(const Curve& curve, NodeSampler& sampler, SynthesisConfig config) {
  return generate_single(curve, sampler, config, Strategy::OneShot);
}

SynthesisOutcome generate_graph_retry(const Curve& curve, NodeSampler& sampler, SynthesisConfig config) {
  return generate_single(curve, sampler, config, Strategy::GraphRetry);
}

SynthesisOutcome generate_node_retry(const Curve& curve, NodeSampler& sampler, SynthesisConfig config) {
  return generate_single(curve, sampler, config, Strategy::NodeRetry);
}

std::string format_outcome_sidecar(const SynthesisOutcome& outcome, std::size_t item) {
  nlohmann::ordered_json j;
  j["item"] = item;
  j["valid"] = outcome.valid;
  j["nodes"] = outcome.graph.node_count();
  j["passes"] = outcome.passes;
  j["samples"] = outcome.samples;
  j["attempts"] = outcome.attempts;
  j["warnings"] = outcome.warnings;
  j["reason"] = outcome.report.reason;
  return j.dump();
}

}  // namespace linkdiff
