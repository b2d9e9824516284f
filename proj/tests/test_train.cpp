#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"
#include "linkdiff/errors.hpp"
#include "linkdiff/train.hpp"

using namespace linkdiff;

namespace {

TrainConfig small_train_config() {
  TrainConfig c;
  c.steps = 6;
  c.batch_size = 8;
  c.seed = 12;
  c.model.hidden = 16;
  c.model.encoder_hidden = 8;
  c.model.context_size = 6;
  c.model.time_embedding = 4;
  c.model.diffusion_steps = 20;
  c.model.init_seed = 4;
  return c;
}

const TrainingSet& small_set() {
  static const TrainingSet set = [] {
    DataGenConfig c;
    c.count = 24;
    c.seed = 8;
    return TrainingSet::from_records(generate_records(c));
  }();
  return set;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("linkdiff_test_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
}

TrainConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_train_config(in);
}

}  // namespace

TEST_CASE("train config text round trips") {
  TrainConfig c = small_train_config();
  c.learning_rate = 3.25e-4;
  c.auto_edge_weight = false;
  c.weights.adjacency = 1.5;
  c.model.beta_end = 0.04;
  const std::string text = format_train_config(c);
  const TrainConfig back = parse(text);
  CHECK(format_train_config(back) == text);
  CHECK(back.learning_rate == c.learning_rate);
  CHECK_FALSE(back.auto_edge_weight);
  CHECK(back.model.hidden == 16);
  CHECK(text.rfind("steps=6\nbatch_size=8\n", 0) == 0);
}

TEST_CASE("train config defaults, comments and errors") {
  const TrainConfig d = parse("# only comments\n\n  steps = 7  \n");
  CHECK(d.steps == 7);
  CHECK(d.batch_size == 128);
  CHECK(d.model.beta_end == 0.05);

  const auto line_of = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  CHECK(line_of("steps=1\nbogus=3\n") == 2);
  CHECK(line_of("steps=abc\n") == 1);
  CHECK(line_of("steps=5x\n") == 1);
  CHECK(line_of("no equals sign\n") == 1);
  CHECK(line_of("auto_edge_weight=yes\n") == 1);
  CHECK_THROWS_AS(parse("batch_size=0\n"), ParseError);
  CHECK_THROWS_AS(parse("time_embedding=3\n"), ParseError);
  CHECK_THROWS_AS(read_train_config(temp_path("does_not_exist.cfg")), IoError);
}

TEST_CASE("moving average matches a direct window sum") {
  const std::vector<double> v{5, 1, 4, 2, 8, 3, 6};
  const std::vector<double> m = moving_average(v, 3);
  REQUIRE(m.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = i >= 2 ? i - 2 : 0;
    double s = 0.0;
    for (std::size_t k = lo; k <= i; ++k) s += v[k];
    CHECK(m[i] == doctest::Approx(s / static_cast<double>(i - lo + 1)).epsilon(1e-14));
  }
}

TEST_CASE("training is deterministic and measures the edge weight") {
  Trainer a(small_train_config(), small_set());
  Trainer b(small_train_config(), small_set());
  CHECK(a.run(6) == b.run(6));
  CHECK(a.state().config.weights.edge_pos_weight == edge_positive_weight(small_set().graphs));

  TrainConfig fixed = small_train_config();
  fixed.auto_edge_weight = false;
  fixed.weights.edge_pos_weight = 2.5;
  CHECK(Trainer(fixed, small_set()).state().config.weights.edge_pos_weight == 2.5);

  TrainConfig other = small_train_config();
  other.seed = 13;
  Trainer c(other, small_set());
  CHECK(c.run(6) != Trainer(small_train_config(), small_set()).run(6));
}

TEST_CASE("checkpoint round trip is byte exact") {
  Trainer t(small_train_config(), small_set());
  t.run(3);
  const std::string p1 = temp_path("ck1.bin");
  const std::string p2 = temp_path("ck2.bin");
  save_checkpoint(p1, t.state());
  const Checkpoint loaded = load_checkpoint(p1);
  save_checkpoint(p2, loaded);
  CHECK(slurp(p1) == slurp(p2));
  CHECK(loaded.step == 3);
  CHECK(loaded.optimizer.step == t.state().optimizer.step);
  CHECK(loaded.optimizer.m == t.state().optimizer.m);
  CHECK(loaded.optimizer.v == t.state().optimizer.v);
  CHECK(format_train_config(loaded.config) == format_train_config(t.state().config));
  const ConstParamViews a = loaded.model.views();
  const ConstParamViews b = t.state().model.views();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(std::equal(a[i].begin(), a[i].end(), b[i].begin(), b[i].end()));
  CHECK(slurp(p1).compare(0, 8, "LKDFCKPT") == 0);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("resuming from a checkpoint continues the loss curve exactly") {
  Trainer full(small_train_config(), small_set());
  const std::vector<double> reference = full.run(6);

  Trainer first(small_train_config(), small_set());
  const std::vector<double> head = first.run(3);
  const std::string path = temp_path("resume.bin");
  save_checkpoint(path, first.state());
  Trainer resumed(load_checkpoint(path), small_set());
  CHECK(resumed.steps_taken() == 3);
  const std::vector<double> tail = resumed.run(6);
  REQUIRE(tail.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(head[i] == reference[i]);
    CHECK(tail[i] == reference[i + 3]);
  }
  std::remove(path.c_str());
}

TEST_CASE("corrupt checkpoints are rejected") {
  Trainer t(small_train_config(), small_set());
  const std::string good = temp_path("good.bin");
  const std::string bad = temp_path("bad.bin");
  save_checkpoint(good, t.state());
  const std::string bytes = slurp(good);

  CHECK_THROWS_AS(load_checkpoint(temp_path("missing.bin")), IoError);
  spit(bad, "NOTACKPT" + bytes.substr(8));
  CHECK_THROWS_AS(load_checkpoint(bad), IoError);
  spit(bad, bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(bad), IoError);
  spit(bad, bytes + "x");
  CHECK_THROWS_AS(load_checkpoint(bad), IoError);
  std::string wrong_version = bytes;
  wrong_version[8] = 9;
  spit(bad, wrong_version);
  CHECK_THROWS_AS(load_checkpoint(bad), IoError);
  std::remove(good.c_str());
  std::remove(bad.c_str());
}
