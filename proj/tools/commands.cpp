#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "linkdiff/datagen.hpp"
#include "linkdiff/errors.hpp"
#include "linkdiff/eval.hpp"
#include "linkdiff/format.hpp"
#include "linkdiff/kinematics.hpp"
#include "linkdiff/mechanism_io.hpp"
#include "linkdiff/svg.hpp"
#include "linkdiff/synthesis.hpp"
#include "linkdiff/train.hpp"

namespace linkdiff::cli {

namespace {

/// Raised for flag combinations or values that CLI11 cannot check by itself.
class UsageFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Pairs = std::vector<std::pair<std::string, std::string>>;

void echo_config(std::ostream& err, const std::string& command, const Pairs& pairs) {
  err << "config command=" << command;
  for (const auto& [k, v] : pairs) err << ' ' << k << '=' << (v.empty() ? "-" : v);
  err << '\n';
}

/// Turns a library precondition failure into a usage error.
template <typename Fn>
void usage_check(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    throw UsageFailure(e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

std::string str(bool b) { return b ? "true" : "false"; }
std::string str(double v) { return format_double(v); }
template <typename T>
std::string str(T v) {
  return std::to_string(v);
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string file;
  int angles = kDefaultAngles;
  std::string out;
  std::size_t index = 0;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  echo_config(err, "simulate", {{"file", a.file}, {"angles", str(a.angles)}, {"index", str(a.index)}, {"out", a.out}});
  const std::vector<MechanismFileRecord> records = read_mechanism_file(a.file);
  if (a.index >= records.size())
    throw UsageFailure("--index " + std::to_string(a.index) + " but the file holds " +
                       std::to_string(records.size()) + " record(s)");
  const MechanismGraph& g = records[a.index].graph;
  try {
    const Trajectory traj = simulate(g, a.angles);
    if (!a.out.empty()) {
      std::ostringstream csv;
      write_trajectory_csv(csv, traj);
      write_text(a.out, csv.str());
    }
    out << "simulate: ok nodes=" << g.node_count() << " angles=" << a.angles << " rows=" << a.angles * g.node_count()
        << '\n';
    return kOk;
  } catch (const KinematicError& e) {
    out << "simulate: branch defect at node " << e.node() << ", angle index " << e.angle_index() << " (theta "
        << format_double(e.angle()) << "): " << e.what() << '\n';
    return kDomainFailure;
  } catch (const TopologyError& e) {
    out << "simulate: topology failure at node " << e.node() << ": " << e.what() << '\n';
    return kDomainFailure;
  }
}

// ---------------------------------------------------------------- validate

struct ValidateArgs {
  std::string file;
  int angles = kDefaultAngles;
};

int cmd_validate(const ValidateArgs& a, std::ostream& out, std::ostream& err) {
  echo_config(err, "validate", {{"file", a.file}, {"angles", str(a.angles)}});
  const std::vector<MechanismFileRecord> records = read_mechanism_file(a.file);
  bool all_ok = true;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ValidationReport r = validate(records[i].graph, a.angles);
    all_ok = all_ok && r.ok();
    out << "record=" << i << " topology_ok=" << str(r.topology_ok) << " kinematics_ok=" << str(r.kinematics_ok);
    if (r.failing_node) out << " node=" << *r.failing_node;
    if (r.failing_angle_index) out << " angle_index=" << *r.failing_angle_index;
    if (!r.reason.empty()) out << " reason=\"" << r.reason << '"';
    out << '\n';
  }
  return all_ok ? kOk : kDomainFailure;
}

// ---------------------------------------------------------------- dataset-gen

struct DatasetArgs {
  DataGenConfig config;
  std::string out;
};

int cmd_dataset_gen(const DatasetArgs& a, std::ostream& out, std::ostream& err) {
  const DataGenConfig& c = a.config;
  echo_config(err, "dataset-gen",
              {{"count", str(c.count)},
               {"min_nodes", str(c.min_nodes)},
               {"max_nodes", str(c.max_nodes)},
               {"extra_ground_prob", str(c.extra_ground_prob)},
               {"angles", str(c.n_angles)},
               {"max_node_attempts", str(c.max_node_attempts)},
               {"min_link", str(c.min_link)},
               {"max_link", str(c.max_link)},
               {"seed", str(c.seed)},
               {"workers", str(c.workers)},
               {"out", a.out}});
  usage_check([&] { c.check(); });
  const DatasetSummary s = generate_dataset(c, a.out);
  out << "dataset-gen: written=" << s.written << " skipped=" << s.skipped << " exhausted_events=" << s.exhausted_events
      << " out=" << a.out << '\n';
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string dataset;
  std::string out_checkpoint;
  std::string config_path;
  std::string resume;
  std::string loss_log;
  int log_every = 50;
  std::optional<int> steps;
  std::optional<int> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig config = a.config_path.empty() ? TrainConfig{} : read_train_config(a.config_path);
  if (a.steps) config.steps = *a.steps;
  if (a.batch_size) config.batch_size = *a.batch_size;
  if (a.learning_rate) config.learning_rate = *a.learning_rate;
  if (a.seed) config.seed = *a.seed;
  usage_check([&] { config.check(); });

  const std::vector<DatasetRecord> records = load_dataset(a.dataset);
  if (records.empty()) throw ParseError(0, "dataset", "no records in " + a.dataset);
  TrainingSet set = TrainingSet::from_records(split_dataset(records).train);

  std::unique_ptr<Trainer> trainer;
  if (a.resume.empty()) {
    trainer = std::make_unique<Trainer>(config, std::move(set));
  } else {
    Checkpoint ck = load_checkpoint(a.resume);
    config = ck.config;
    if (a.steps) config.steps = *a.steps;
    ck.config.steps = config.steps;
    trainer = std::make_unique<Trainer>(std::move(ck), std::move(set));
  }

  Pairs pairs{{"dataset", a.dataset}, {"out_checkpoint", a.out_checkpoint}, {"resume", a.resume},
              {"config_file", a.config_path}};
  std::istringstream lines(format_train_config(trainer->state().config));
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    pairs.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  echo_config(err, "train", pairs);

  const std::int64_t start = trainer->steps_taken();
  std::ostringstream log;
  log << "step,loss\n";
  const std::vector<double> losses = trainer->run(config.steps, [&](std::int64_t step, double loss) {
    log << step << ',' << format_double(loss) << '\n';
    if (a.log_every > 0 && (step % a.log_every == 0 || step == config.steps))
      out << "step=" << step << " loss=" << format_double(loss) << '\n';
  });
  save_checkpoint(a.out_checkpoint, trainer->state());
  if (!a.loss_log.empty()) write_text(a.loss_log, log.str());

  if (losses.size() >= 10) {
    const std::vector<double> ma = moving_average(losses, 5);
    const double initial = ma[4];
    const double final_value = ma.back();
    out << "train: steps=" << losses.size() << " from_step=" << start << " ma5_initial=" << format_double(initial)
        << " ma5_final=" << format_double(final_value) << " ratio=" << format_double(final_value / initial) << '\n';
  } else {
    out << "train: steps=" << losses.size() << " from_step=" << start << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------- model selection

struct ModelChoice {
  std::string checkpoint;
  std::string stub;
};

/// Owns whichever sampler the flags select.
struct LoadedSampler {
  std::optional<DenoiserModel> model;
  std::unique_ptr<NodeSampler> sampler;
  std::string label;
};

LoadedSampler load_sampler(const ModelChoice& m, int workers, const std::vector<DatasetRecord>* replay) {
  if (m.checkpoint.empty() == m.stub.empty()) throw UsageFailure("give exactly one of --checkpoint or --stub-model");
  LoadedSampler s;
  if (!m.checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(m.checkpoint);
    s.model = std::move(ck.model);
    s.sampler = std::make_unique<DiffusionSampler>(*s.model, workers);
    s.label = "checkpoint:" + m.checkpoint + "@" + std::to_string(ck.step);
    return s;
  }
  s.label = "stub:" + m.stub;
  if (m.stub == "four-bar") {
    s.sampler = std::make_unique<FourBarSampler>();
  } else if (m.stub == "invalid") {
    s.sampler = std::make_unique<InvalidSampler>();
  } else {
    if (!replay) throw UsageFailure("--stub-model replay needs a dataset");
    std::vector<MechanismGraph> graphs;
    for (const DatasetRecord& r : *replay) graphs.push_back(r.graph);
    s.sampler = std::make_unique<ReplaySampler>(std::move(graphs));
  }
  return s;
}

// ---------------------------------------------------------------- synthesize

struct SynthesizeArgs {
  std::string curve;
  ModelChoice model;
  std::string strategy = "node-retry";
  int k = 25;
  int n_max = kMaxNodes;
  int angles = kDefaultAngles;
  std::uint64_t seed = 0;
  std::string out;
  std::string sidecar;
  std::string emit_svg;
  int workers = 1;
};

int cmd_synthesize(const SynthesizeArgs& a, std::ostream& out, std::ostream& err) {
  const std::string sidecar = a.sidecar.empty() ? a.out + ".attempts.jsonl" : a.sidecar;
  echo_config(err, "synthesize",
              {{"curve", a.curve},
               {"checkpoint", a.model.checkpoint},
               {"stub_model", a.model.stub},
               {"strategy", a.strategy},
               {"k", str(a.k)},
               {"n_max", str(a.n_max)},
               {"angles", str(a.angles)},
               {"seed", str(a.seed)},
               {"workers", str(a.workers)},
               {"out", a.out},
               {"sidecar", sidecar},
               {"emit_svg", a.emit_svg}});
  SynthesisConfig config;
  config.strategy = *parse_strategy(a.strategy);
  config.max_retries = a.k;
  config.n_max = a.n_max;
  config.n_angles = a.angles;
  config.seed = a.seed;
  config.workers = a.workers;
  usage_check([&] { config.check(); });

  const Curve target = read_curve_csv(a.curve);
  try {
    check_curve(target);
  } catch (const DegenerateCurve& e) {
    throw ParseError(0, "curve", e.what());
  }
  LoadedSampler loaded = load_sampler(a.model, a.workers, nullptr);
  const SynthesisOutcome o = batch_generate(std::span<const Curve>(&target, 1), *loaded.sampler, config).front();

  MechanismFileRecord record;
  record.graph = o.graph;
  record.seed = a.seed;
  std::optional<double> chamfer;
  if (o.valid) {
    chamfer = outcome_chamfer(o.graph, target, a.angles);
    try {
      record.curve = normalize_curve(trace_coupler_curve(o.graph, a.angles)).curve;
    } catch (const DegenerateCurve&) {
      // Stationary end effector: the file carries no curve.
    }
  }
  write_text(a.out, format_mechanism_line(record) + "\n");
  write_text(sidecar, format_outcome_sidecar(o, 0) + "\n");
  if (!a.emit_svg.empty())
    write_text(a.emit_svg, curve_overlay_svg(normalize_curve(target).curve, record.curve.value_or(Curve{})));

  out << "synthesize: valid=" << str(o.valid) << " nodes=" << o.graph.node_count() << " samples=" << o.samples
      << " passes=" << o.passes << " warnings=" << o.warnings.size();
  if (chamfer) out << " chamfer=" << format_double(*chamfer);
  if (!o.valid) out << " reason=\"" << o.report.reason << '"';
  out << '\n';
  return o.valid ? kOk : kDomainFailure;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string dataset;
  ModelChoice model;
  std::vector<std::string> strategies{"one-shot", "graph-retry", "node-retry"};
  int runs = 3;
  int n_eval = 200;
  int k = 25;
  int angles = kDefaultAngles;
  std::uint64_t seed = 0;
  std::string emit_svg;
  std::string out;
  int workers = 1;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  std::string names;
  for (const std::string& s : a.strategies) names += (names.empty() ? "" : ",") + s;
  echo_config(err, "evaluate",
              {{"dataset", a.dataset},
               {"checkpoint", a.model.checkpoint},
               {"stub_model", a.model.stub},
               {"strategies", names},
               {"runs", str(a.runs)},
               {"n_eval", str(a.n_eval)},
               {"k", str(a.k)},
               {"angles", str(a.angles)},
               {"seed", str(a.seed)},
               {"workers", str(a.workers)},
               {"emit_svg", a.emit_svg},
               {"out", a.out}});
  ExperimentConfig config;
  config.dataset_path = a.dataset;
  config.checkpoint_path = a.model.checkpoint;
  config.strategies.clear();
  for (const std::string& s : a.strategies) config.strategies.push_back(*parse_strategy(s));
  config.runs = a.runs;
  config.n_eval = a.n_eval;
  config.max_retries = a.k;
  config.n_angles = a.angles;
  config.seed = a.seed;
  config.workers = a.workers;
  usage_check([&] { config.check(); });

  std::vector<DatasetRecord> eval = split_dataset(load_dataset(a.dataset)).eval;
  if (eval.empty()) throw ParseError(0, "dataset", "no held-out records in " + a.dataset);
  if (eval.size() > static_cast<std::size_t>(a.n_eval)) eval.resize(static_cast<std::size_t>(a.n_eval));
  std::vector<Curve> curves;
  for (const DatasetRecord& r : eval) curves.push_back(r.curve);
  LoadedSampler loaded = load_sampler(a.model, a.workers, &eval);

  const ExperimentReport report = run_experiment(curves, *loaded.sampler, config, loaded.label);
  if (!a.out.empty()) write_text(a.out, report_to_json(report).dump(2) + "\n");
  if (!a.emit_svg.empty()) {
    std::filesystem::create_directories(a.emit_svg);
    write_text((std::filesystem::path(a.emit_svg) / "success.svg").string(), success_chart_svg(report));
    write_text((std::filesystem::path(a.emit_svg) / "chamfer.svg").string(), chamfer_chart_svg(report));
  }

  for (const CellResult& c : report.cells) {
    out << "evaluate: strategy=" << strategy_name(c.strategy) << " run=" << c.run << " success=" << c.successes << '/'
        << c.n_eval << " rate=" << format_double(c.success_rate) << " chamfer_n=" << c.chamfer_n;
    if (c.chamfer_mean) out << " chamfer_mean=" << format_double(*c.chamfer_mean);
    out << " node_draws=" << c.node_draws << '\n';
  }
  for (std::size_t r = 0; r < report.ordering.size(); ++r)
    if (report.ordering[r]) out << "evaluate: run=" << r << " ordering_holds=" << str(*report.ordering[r]) << '\n';
  for (const std::string& f : report.invariant_failures) err << "invariant failure: " << f << '\n';
  return report.invariant_failures.empty() ? kOk : kDomainFailure;
}

void add_model_flags(CLI::App* app, ModelChoice& m, bool allow_replay) {
  app->add_option("--checkpoint", m.checkpoint, "Trained model checkpoint");
  std::vector<std::string> stubs{"four-bar", "invalid"};
  if (allow_replay) stubs.emplace_back("replay");
  app->add_option("--stub-model", m.stub, "Use a built-in stub sampler instead of a checkpoint")
      ->check(CLI::IsMember(stubs));
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Planar linkage simulation, dataset generation, training and curve-conditioned synthesis", "linkdiff"};
  app.require_subcommand(1);
  int workers = 1;
  app.add_option("--workers", workers, "Worker threads (outputs do not depend on it)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  SimulateArgs sim;
  CLI::App* simulate_cmd = app.add_subcommand("simulate", "Simulate a mechanism over one motor revolution");
  simulate_cmd->add_option("file", sim.file, "Mechanism file")->required();
  simulate_cmd->add_option("--angles", sim.angles, "Motor angle samples")->check(CLI::Range(3, 100000))->capture_default_str();
  simulate_cmd->add_option("--index", sim.index, "Record index within the file")->capture_default_str();
  simulate_cmd->add_option("--out", sim.out, "Trajectory CSV output (theta,node,x,y)");

  ValidateArgs val;
  CLI::App* validate_cmd = app.add_subcommand("validate", "Topological and kinematic validation of every record");
  validate_cmd->add_option("file", val.file, "Mechanism file")->required();
  validate_cmd->add_option("--angles", val.angles, "Motor angle samples")->check(CLI::Range(3, 100000))->capture_default_str();

  DatasetArgs ds;
  CLI::App* dataset_cmd = app.add_subcommand("dataset-gen", "Generate a random mechanism dataset");
  dataset_cmd->add_option("--count", ds.config.count, "Number of records")->capture_default_str();
  dataset_cmd->add_option("--min-nodes", ds.config.min_nodes, "Minimum node count")->capture_default_str();
  dataset_cmd->add_option("--max-nodes", ds.config.max_nodes, "Maximum node count")->capture_default_str();
  dataset_cmd->add_option("--extra-ground-prob", ds.config.extra_ground_prob, "Chance of an extra grounded joint")
      ->capture_default_str();
  dataset_cmd->add_option("--angles", ds.config.n_angles, "Motor angle samples")->capture_default_str();
  dataset_cmd->add_option("--seed", ds.config.seed, "Random seed")->capture_default_str();
  dataset_cmd->add_option("--out", ds.out, "Output JSON-lines file")->required();

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the denoiser on a dataset (90% training split)");
  train_cmd->add_option("--dataset", tr.dataset, "Dataset file")->required();
  train_cmd->add_option("--out-checkpoint", tr.out_checkpoint, "Checkpoint to write")->required();
  train_cmd->add_option("--config", tr.config_path, "key=value training config file");
  train_cmd->add_option("--resume", tr.resume, "Continue from this checkpoint");
  train_cmd->add_option("--steps", tr.steps, "Total optimizer steps (default 500)")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--batch-size", tr.batch_size, "Batch size (default 128)")->check(CLI::PositiveNumber);
  train_cmd->add_option("--learning-rate", tr.learning_rate, "Adam learning rate (default 1e-3)")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tr.seed, "Training seed (default 0)");
  train_cmd->add_option("--loss-log", tr.loss_log, "Write per-step losses as CSV");
  train_cmd->add_option("--log-every", tr.log_every, "Print the loss every N steps (0 disables)")->capture_default_str();

  SynthesizeArgs sy;
  CLI::App* synth_cmd = app.add_subcommand("synthesize", "Generate a mechanism for a target curve");
  synth_cmd->add_option("--curve", sy.curve, "Target curve CSV (x,y)")->required();
  add_model_flags(synth_cmd, sy.model, false);
  synth_cmd->add_option("--strategy", sy.strategy, "one-shot, graph-retry or node-retry")
      ->check(CLI::IsMember({"one-shot", "graph-retry", "node-retry"}))
      ->capture_default_str();
  synth_cmd->add_option("--k", sy.k, "Retry budget")->check(CLI::PositiveNumber)->capture_default_str();
  synth_cmd->add_option("--n-max", sy.n_max, "Maximum node count")->check(CLI::Range(4, kMaxNodes))->capture_default_str();
  synth_cmd->add_option("--angles", sy.angles, "Motor angle samples for validation")->capture_default_str();
  synth_cmd->add_option("--seed", sy.seed, "Synthesis seed")->capture_default_str();
  synth_cmd->add_option("--out", sy.out, "Mechanism file to write")->required();
  synth_cmd->add_option("--sidecar", sy.sidecar, "Attempts/warnings JSON-lines file (default <out>.attempts.jsonl)");
  synth_cmd->add_option("--emit-svg", sy.emit_svg, "Write an SVG overlay of target and generated curves");

  EvaluateArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Success, Chamfer and diversity experiment on held-out curves");
  eval_cmd->add_option("--dataset", ev.dataset, "Dataset file (the last 10% is held out)")->required();
  add_model_flags(eval_cmd, ev.model, true);
  eval_cmd->add_option("--strategies", ev.strategies, "Comma-separated strategies")
      ->delimiter(',')
      ->check(CLI::IsMember({"one-shot", "graph-retry", "node-retry"}))
      ->capture_default_str();
  eval_cmd->add_option("--runs", ev.runs, "Independent runs")->check(CLI::PositiveNumber)->capture_default_str();
  eval_cmd->add_option("--n-eval", ev.n_eval, "Held-out curves per run")->check(CLI::PositiveNumber)->capture_default_str();
  eval_cmd->add_option("--k", ev.k, "Retry budget")->check(CLI::PositiveNumber)->capture_default_str();
  eval_cmd->add_option("--angles", ev.angles, "Motor angle samples")->capture_default_str();
  eval_cmd->add_option("--seed", ev.seed, "Base seed for run seeds")->capture_default_str();
  eval_cmd->add_option("--emit-svg", ev.emit_svg, "Directory for success.svg and chamfer.svg");
  eval_cmd->add_option("--out", ev.out, "JSON report to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*simulate_cmd) return cmd_simulate(sim, out, err);
    if (*validate_cmd) return cmd_validate(val, out, err);
    if (*dataset_cmd) {
      ds.config.workers = workers;
      return cmd_dataset_gen(ds, out, err);
    }
    if (*train_cmd) return cmd_train(tr, out, err);
    if (*synth_cmd) {
      sy.workers = workers;
      return cmd_synthesize(sy, out, err);
    }
    if (*eval_cmd) {
      ev.workers = workers;
      return cmd_evaluate(ev, out, err);
    }
  } catch (const UsageFailure& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const TopologyError& e) {
    err << "error: " << e.what() << '\n';
    return kDomainFailure;
  } catch (const KinematicError& e) {
    err << "error: " << e.what() << '\n';
    return kDomainFailure;
  } catch (const std::exception& e) {
    // Unreadable, unparsable or inconsistent inputs.
    err << "input error: " << e.what() << '\n';
    return kInputError;
  }
  return kUsageError;
}

}  // namespace linkdiff::cli
