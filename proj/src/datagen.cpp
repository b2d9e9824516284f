#include "linkdiff/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "linkdiff/errors.hpp"
#include "linkdiff/mechanism_io.hpp"
#include "linkdiff/parallel.hpp"

namespace linkdiff {

namespace {

constexpr int kMaxRecordRetries = 16;
constexpr int kLensDraws = 64;
/// End-effector paths tighter than this are treated as stationary.
constexpr double kMinPathRadius = 1e-3;

Vec2 uniform_box(Rng& rng, double half) { return {rng.uniform(-half, half), rng.uniform(-half, half)}; }

/// Uniform point in the intersection of the two parent disks, inside the unit
/// box, on the positive (left) side of i -> j and not too close to either parent.
std::optional<Vec2> sample_dyad_joint(Rng& rng, Vec2 xi, Vec2 xj, const DataGenConfig& cfg) {
  const double r = cfg.max_link;
  const double lo_x = std::max({xi.x - r, xj.x - r, -1.0});
  const double hi_x = std::min({xi.x + r, xj.x + r, 1.0});
  const double lo_y = std::max({xi.y - r, xj.y - r, -1.0});
  const double hi_y = std::min({xi.y + r, xj.y + r, 1.0});
  if (lo_x >= hi_x || lo_y >= hi_y) return std::nullopt;
  for (int draw = 0; draw < kLensDraws; ++draw) {
    const Vec2 p{rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)};
    const double di = distance(p, xi);
    const double dj = distance(p, xj);
    if (di > r || dj > r || di < cfg.min_link || dj < cfg.min_link) continue;
    if ((xj - xi).cross(p - xi) <= 0.0) continue;
    return p;
  }
  return std::nullopt;
}

bool end_effector_moves(const MechanismGraph& g, int n_angles) {
  const Curve c = trace_coupler_curve(g, n_angles);
  Vec2 center{};
  for (const Vec2& p : c.points) center = center + p;
  center = center / static_cast<double>(c.size());
  double radius = 0.0;
  for (const Vec2& p : c.points) radius = std::max(radius, distance(p, center));
  return radius >= kMinPathRadius;
}

}  // namespace

void DataGenConfig::check() const {
  if (count < 0) throw Error("count must be non-negative");
  if (min_nodes < 4) throw Error("min_nodes must be at least 4");
  if (max_nodes > kMaxNodes) throw Error("max_nodes must be at most 20");
  if (min_nodes > max_nodes) throw Error("min_nodes exceeds max_nodes");
  if (!(extra_ground_prob >= 0.0 && extra_ground_prob <= 1.0)) throw Error("extra_ground_prob must be in [0, 1]");
  if (n_angles < 3) throw Error("n_angles must be at least 3");
  if (max_node_attempts < 1) throw Error("max_node_attempts must be positive");
  if (!(min_link > 0.0 && min_link < max_link)) throw Error("need 0 < min_link < max_link");
}

MechanismGraph sample_random_mechanism(const DataGenConfig& config, Rng& rng) {
  config.check();
  const int target = rng.integer(config.min_nodes, config.max_nodes);

  MechanismGraph g;
  g.add_grounded(uniform_box(rng, 0.9));
  {
    const Vec2 pivot = g[kMotorPivot].position;
    bool placed = false;
    for (int attempt = 0; attempt < config.max_node_attempts && !placed; ++attempt) {
      const double radius = rng.uniform(0.1, 0.5);
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const Vec2 p = pivot + Vec2{radius * std::cos(angle), radius * std::sin(angle)};
      if (std::abs(p.x) > 1.0 || std::abs(p.y) > 1.0) continue;
      const std::array<int, 1> parent{kMotorPivot};
      g.add_node(NodeType::Revolute, p, parent);
      placed = true;
    }
    if (!placed) throw GenerationExhausted(kMotorNode);
  }

  for (int k = 2; k < target; ++k) {
    const bool last = k == target - 1;
    bool placed = false;
    for (int attempt = 0; attempt < config.max_node_attempts && !placed; ++attempt) {
      MechanismGraph candidate = g;
      const bool ground_room = 2 * (g.grounded_count() + 1) <= target;
      if (!last && ground_room && rng.bernoulli(config.extra_ground_prob)) {
        candidate.add_grounded(uniform_box(rng, 0.9));
      } else {
        const int a = static_cast<int>(rng.index(static_cast<std::size_t>(k)));
        int b = static_cast<int>(rng.index(static_cast<std::size_t>(k - 1)));
        if (b >= a) ++b;
        const int i = std::min(a, b);
        const int j = std::max(a, b);
        const Vec2 xi = g[i].position;
        const Vec2 xj = g[j].position;
        if (distance(xi, xj) < kDegenerateBaseTol) continue;
        const auto p = sample_dyad_joint(rng, xi, xj, config);
        if (!p) continue;
        candidate.add_revolute(*p, i, j);
      }
      if (!validate(candidate, config.n_angles).ok()) continue;
      if (last && !end_effector_moves(candidate, config.n_angles)) continue;
      g = candidate;
      placed = true;
    }
    if (!placed) throw GenerationExhausted(k);
  }
  return g;
}

DatasetRecord make_record(const MechanismGraph& graph, std::uint64_t seed, int n_angles) {
  return DatasetRecord{graph, normalize_curve(trace_coupler_curve(graph, n_angles)).curve, seed};
}

std::vector<DatasetRecord> generate_records(const DataGenConfig& config, DatasetSummary* summary) {
  config.check();
  const auto n = static_cast<std::size_t>(config.count);
  std::vector<std::optional<DatasetRecord>> slots(n);
  std::vector<int> exhausted(n, 0);
  parallel_for(n, config.workers, [&](std::size_t i) {
    for (int retry = 0; retry < kMaxRecordRetries; ++retry) {
      const std::uint64_t seed = derive_seed(config.seed, {i, static_cast<std::uint64_t>(retry)});
      Rng rng(seed);
      try {
        slots[i] = make_record(sample_random_mechanism(config, rng), seed, config.n_angles);
        return;
      } catch (const GenerationExhausted&) {
        ++exhausted[i];
      }
    }
  });

  std::vector<DatasetRecord> out;
  out.reserve(n);
  DatasetSummary s;
  for (std::size_t i = 0; i < n; ++i) {
    s.exhausted_events += exhausted[i];
    if (slots[i]) {
      out.push_back(std::move(*slots[i]));
      ++s.written;
    } else {
      ++s.skipped;
    }
  }
  if (summary) *summary = s;
  return out;
}

void write_dataset(const std::string& path, const std::vector<DatasetRecord>& records) {
  std::vector<MechanismFileRecord> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back({r.graph, r.seed, r.curve});
  write_mechanism_file(path, lines);
}

DatasetSummary generate_dataset(const DataGenConfig& config, const std::string& path) {
  DatasetSummary summary;
  write_dataset(path, generate_records(config, &summary));
  return summary;
}

std::vector<DatasetRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    MechanismFileRecord rec = parse_mechanism_line(line, line_no);
    if (!rec.curve) throw ParseError(line_no, "curve", "missing");
    const std::size_t index = out.size();
    const ValidationReport report = validate(rec.graph);
    if (!report.ok()) throw InvariantViolation(index, "mechanism fails validation: " + report.reason);
    if (rec.curve->size() < 3) throw InvariantViolation(index, "curve has fewer than 3 points");
    const Curve expected =
        normalize_curve(trace_coupler_curve(rec.graph, static_cast<int>(rec.curve->size()))).curve;
    for (std::size_t p = 0; p < expected.size(); ++p)
      if (distance(expected.points[p], rec.curve->points[p]) > 1e-9)
        throw InvariantViolation(index, "curve differs from the re-simulated trace at point " + std::to_string(p));
    out.push_back(DatasetRecord{rec.graph, std::move(*rec.curve), rec.seed});
  }
  return out;
}

DatasetSplit split_dataset(std::vector<DatasetRecord> records) {
  const std::size_t cut = records.size() * 9 / 10;
  DatasetSplit split;
  split.eval.assign(std::make_move_iterator(records.begin() + static_cast<std::ptrdiff_t>(cut)),
                    std::make_move_iterator(records.end()));
  records.resize(cut);
  split.train = std::move(records);
  return split;
}

}  // namespace linkdiff
