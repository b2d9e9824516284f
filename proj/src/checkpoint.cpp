#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "linkdiff/errors.hpp"
#include "linkdiff/train.hpp"

namespace linkdiff {

namespace {

constexpr char kMagic[8] = {'L', 'K', 'D', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out_.write(reinterpret_cast<const char*>(bytes), sizeof(T));
  }
  void raw(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <typename T>
  T get() {
    unsigned char bytes[sizeof(T)];
    if (!in_.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw IoError(path_ + ": truncated checkpoint");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
  void raw(char* data, std::size_t n) {
    if (!in_.read(data, static_cast<std::streamsize>(n))) throw IoError(path_ + ": truncated checkpoint");
  }
  const std::string& path() const { return path_; }

 private:
  std::istream& in_;
  std::string path_;
};

struct Shape {
  std::uint32_t rows;
  std::uint32_t cols;
};

std::vector<Shape> shapes(const DenoiserModel& model) {
  std::vector<Shape> s;
  const auto add = [&](const MlpParams& p) {
    for (const DenseLayer& l : p.layers) {
      s.push_back({static_cast<std::uint32_t>(l.weight.rows()), static_cast<std::uint32_t>(l.weight.cols())});
      s.push_back({1, static_cast<std::uint32_t>(l.bias.size())});
    }
  };
  add(model.encoder);
  add(model.trunk);
  add(model.head);
  add(model.film.gamma_map);
  add(model.film.beta_map);
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  Writer w(out);
  const TrainConfig& c = ck.config;
  const ModelConfig& m = c.model;
  w.raw(kMagic, sizeof(kMagic));
  w.put(kVersion);
  for (std::int64_t v : {std::int64_t{m.hidden}, std::int64_t{m.hidden_layers}, std::int64_t{m.encoder_hidden},
                         std::int64_t{m.context_size}, std::int64_t{m.time_embedding}, std::int64_t{m.diffusion_steps},
                         std::int64_t{c.batch_size}, std::int64_t{c.steps}, ck.step, ck.optimizer.step})
    w.put(v);
  w.put(m.init_seed);
  w.put(c.seed);
  w.put(static_cast<std::uint8_t>(c.auto_edge_weight ? 1 : 0));
  for (double v : {m.beta_start, m.beta_end, c.learning_rate, c.weights.position, c.weights.validity, c.weights.type,
                   c.weights.adjacency, c.weights.edge_pos_weight, c.weights.huber_delta, ck.optimizer.beta1,
                   ck.optimizer.beta2, ck.optimizer.epsilon})
    w.put(v);

  const std::vector<Shape> s = shapes(ck.model);
  const ConstParamViews views = ck.model.views();
  w.put(static_cast<std::uint32_t>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    w.put(s[i].rows);
    w.put(s[i].cols);
    for (double v : views[i]) w.put(v);
  }
  w.put(static_cast<std::uint64_t>(ck.optimizer.m.size()));
  for (double v : ck.optimizer.m) w.put(v);
  for (double v : ck.optimizer.v) w.put(v);
  if (!out) throw IoError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  Reader r(in, path);
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw IoError(path + ": not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  TrainConfig& c = ck.config;
  ModelConfig& m = c.model;
  const auto narrow = [&](std::int64_t v) {
    if (v < 0 || v > (1LL << 30)) throw IoError(path + ": implausible size field");
    return static_cast<int>(v);
  };
  m.hidden = narrow(r.get<std::int64_t>());
  m.hidden_layers = narrow(r.get<std::int64_t>());
  m.encoder_hidden = narrow(r.get<std::int64_t>());
  m.context_size = narrow(r.get<std::int64_t>());
  m.time_embedding = narrow(r.get<std::int64_t>());
  m.diffusion_steps = narrow(r.get<std::int64_t>());
  c.batch_size = narrow(r.get<std::int64_t>());
  c.steps = narrow(r.get<std::int64_t>());
  ck.step = r.get<std::int64_t>();
  ck.optimizer.step = r.get<std::int64_t>();
  m.init_seed = r.get<std::uint64_t>();
  c.seed = r.get<std::uint64_t>();
  c.auto_edge_weight = r.get<std::uint8_t>() != 0;
  m.beta_start = r.get<double>();
  m.beta_end = r.get<double>();
  c.learning_rate = r.get<double>();
  c.weights.position = r.get<double>();
  c.weights.validity = r.get<double>();
  c.weights.type = r.get<double>();
  c.weights.adjacency = r.get<double>();
  c.weights.edge_pos_weight = r.get<double>();
  c.weights.huber_delta = r.get<double>();
  ck.optimizer.beta1 = r.get<double>();
  ck.optimizer.beta2 = r.get<double>();
  ck.optimizer.epsilon = r.get<double>();
  try {
    c.check();
    ck.model = DenoiserModel::create(m);
  } catch (const Error& e) {
    throw IoError(path + ": bad configuration: " + e.what());
  }

  const std::vector<Shape> expected = shapes(ck.model);
  if (r.get<std::uint32_t>() != expected.size()) throw IoError(path + ": parameter array count mismatch");
  ParamViews views = ck.model.views();
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (rows != expected[i].rows || cols != expected[i].cols)
      throw IoError(path + ": shape mismatch in parameter array " + std::to_string(i));
    for (double& v : views[i]) v = r.get<double>();
  }
  const auto moments = r.get<std::uint64_t>();
  if (moments != 0 && moments != ck.model.parameter_count()) throw IoError(path + ": optimizer state size mismatch");
  ck.optimizer.m.resize(moments);
  ck.optimizer.v.resize(moments);
  for (double& v : ck.optimizer.m) v = r.get<double>();
  for (double& v : ck.optimizer.v) v = r.get<double>();
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(path + ": trailing bytes after checkpoint");
  return ck;
}

}  // namespace linkdiff
