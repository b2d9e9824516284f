#include "linkdiff/train.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "linkdiff/errors.hpp"
#include "linkdiff/format.hpp"

namespace linkdiff {

namespace {

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<bool(TrainConfig&, const std::string&)> set;
};

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

template <typename T>
Field number_field(const char* key, T TrainConfig::*outer) {
  return {key,
          [outer](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.*outer);
            else return std::to_string(c.*outer);
          },
          [outer](TrainConfig& c, const std::string& v) { return parse_number(v, c.*outer); }};
}

template <typename S, typename T>
Field nested_field(const char* key, S TrainConfig::*outer, T S::*inner) {
  return {key,
          [outer, inner](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.*outer.*inner);
            else return std::to_string(c.*outer.*inner);
          },
          [outer, inner](TrainConfig& c, const std::string& v) { return parse_number(v, c.*outer.*inner); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      number_field("steps", &TrainConfig::steps),
      number_field("batch_size", &TrainConfig::batch_size),
      number_field("learning_rate", &TrainConfig::learning_rate),
      number_field("seed", &TrainConfig::seed),
      {"auto_edge_weight", [](const TrainConfig& c) { return std::string(c.auto_edge_weight ? "true" : "false"); },
       [](TrainConfig& c, const std::string& v) {
         if (v != "true" && v != "false") return false;
         c.auto_edge_weight = v == "true";
         return true;
       }},
      nested_field("weight_position", &TrainConfig::weights, &LossWeights::position),
      nested_field("weight_validity", &TrainConfig::weights, &LossWeights::validity),
      nested_field("weight_type", &TrainConfig::weights, &LossWeights::type),
      nested_field("weight_adjacency", &TrainConfig::weights, &LossWeights::adjacency),
      nested_field("edge_pos_weight", &TrainConfig::weights, &LossWeights::edge_pos_weight),
      nested_field("huber_delta", &TrainConfig::weights, &LossWeights::huber_delta),
      nested_field("hidden", &TrainConfig::model, &ModelConfig::hidden),
      nested_field("hidden_layers", &TrainConfig::model, &ModelConfig::hidden_layers),
      nested_field("encoder_hidden", &TrainConfig::model, &ModelConfig::encoder_hidden),
      nested_field("context_size", &TrainConfig::model, &ModelConfig::context_size),
      nested_field("time_embedding", &TrainConfig::model, &ModelConfig::time_embedding),
      nested_field("diffusion_steps", &TrainConfig::model, &ModelConfig::diffusion_steps),
      nested_field("beta_start", &TrainConfig::model, &ModelConfig::beta_start),
      nested_field("beta_end", &TrainConfig::model, &ModelConfig::beta_end),
      nested_field("init_seed", &TrainConfig::model, &ModelConfig::init_seed),
  };
  return f;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::check() const {
  if (steps < 0) throw Error("steps must be non-negative");
  if (batch_size < 1) throw Error("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
  if (!(weights.huber_delta > 0.0)) throw Error("huber_delta must be positive");
  if (!(weights.edge_pos_weight > 0.0)) throw Error("edge_pos_weight must be positive");
  for (double w : {weights.position, weights.validity, weights.type, weights.adjacency})
    if (!(w >= 0.0)) throw Error("loss weights must be non-negative");
  model.check();
}

std::string format_train_config(const TrainConfig& config) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + "=" + f.get(config) + "\n";
  return out;
}

TrainConfig parse_train_config(std::istream& in) {
  TrainConfig c;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, t, "expected key=value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) { return key == f.key; });
    if (it == fields().end()) throw ParseError(line_no, key, "unknown key");
    if (!it->set(c, value)) throw ParseError(line_no, key, "bad value '" + value + "'");
  }
  try {
    c.check();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(line_no, "config", e.what());
  }
  return c;
}

TrainConfig read_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_train_config(in);
}

TrainingSet TrainingSet::from_records(const std::vector<DatasetRecord>& records) {
  TrainingSet s;
  for (const DatasetRecord& r : records) {
    s.graphs.push_back(encode_mechanism(r.graph));
    s.node_counts.push_back(r.graph.node_count());
    s.curves.push_back(curve_features(r.curve));
  }
  return s;
}

Trainer::Trainer(const TrainConfig& config, TrainingSet data) : data_(std::move(data)) {
  config.check();
  if (data_.size() == 0) throw EmptyBatch();
  state_.config = config;
  if (config.auto_edge_weight) state_.config.weights.edge_pos_weight = edge_positive_weight(data_.graphs);
  state_.model = DenoiserModel::create(config.model);
}

Trainer::Trainer(Checkpoint checkpoint, TrainingSet data) : state_(std::move(checkpoint)), data_(std::move(data)) {
  if (data_.size() == 0) throw EmptyBatch();
}

double Trainer::step() {
  const TrainConfig& c = state_.config;
  Rng rng(derive_seed(c.seed, {stream_name("batch"), static_cast<std::uint64_t>(state_.step)}));
  std::vector<TrainingExample> batch;
  batch.reserve(static_cast<std::size_t>(c.batch_size));
  for (int b = 0; b < c.batch_size; ++b) {
    const std::size_t r = rng.index(data_.size());
    // Node index in [0, n]; n is the stop row when the graph is not full.
    const int last = std::min(data_.node_counts[r], kMaxNodes - 1);
    batch.push_back({&data_.graphs[r], rng.integer(0, last), &data_.curves[r]});
  }
  const TrainingLoss loss = training_loss(state_.model, batch, c.weights, rng);
  optimizer_step(state_.optimizer, state_.model.views(), loss.gradients.views(), c.learning_rate);
  ++state_.step;
  return loss.loss;
}

std::vector<double> Trainer::run(int steps, const std::function<void(std::int64_t, double)>& on_step) {
  std::vector<double> losses;
  while (state_.step < steps) {
    const double l = step();
    losses.push_back(l);
    if (on_step) on_step(state_.step, l);
  }
  return losses;
}

std::vector<double> moving_average(const std::vector<double>& values, int window) {
  std::vector<double> out;
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= static_cast<std::size_t>(window)) sum -= values[i - static_cast<std::size_t>(window)];
    out.push_back(sum / static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window))));
  }
  return out;
}

}  // namespace linkdiff
