#include "linkdiff/mechanism_io.hpp"

#include <fstream>
#include <ostream>

#include "linkdiff/errors.hpp"
#include "linkdiff/format.hpp"
#include "linkdiff/kinematics.hpp"

namespace linkdiff {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json mechanism_to_json(const MechanismFileRecord& record) {
  ordered_json nodes = ordered_json::array();
  for (int i = 0; i < kMaxNodes; ++i) {
    const NodeRecord& n = record.graph[i];
    if (!n.valid) continue;
    ordered_json adj = ordered_json::array();
    for (Edge e : n.adjacency) adj.push_back(static_cast<int>(e));
    ordered_json node;
    node["valid"] = true;
    node["type"] = type_name(n.type);
    node["x"] = n.position.x;
    node["y"] = n.position.y;
    node["adj"] = std::move(adj);
    nodes.push_back(std::move(node));
  }
  ordered_json out;
  out["nodes"] = std::move(nodes);
  out["seed"] = record.seed;
  if (record.curve) {
    ordered_json pts = ordered_json::array();
    for (const Vec2& p : record.curve->points) pts.push_back(ordered_json::array({p.x, p.y}));
    out["curve"] = std::move(pts);
  }
  return out;
}

namespace {

const json& field(const json& obj, const char* name, std::size_t line) {
  auto it = obj.find(name);
  if (it == obj.end()) throw ParseError(line, name, "missing");
  return *it;
}

double number(const json& v, const char* name, std::size_t line) {
  if (!v.is_number()) throw ParseError(line, name, "expected a number");
  return v.get<double>();
}

NodeType parse_type(const json& v, std::size_t line) {
  if (!v.is_string()) throw ParseError(line, "type", "expected a string");
  const auto& s = v.get_ref<const std::string&>();
  if (s == "grounded") return NodeType::Grounded;
  if (s == "revolute") return NodeType::Revolute;
  if (s == "pad") return NodeType::Pad;
  throw ParseError(line, "type", "unknown node type '" + s + "'");
}

}  // namespace

MechanismFileRecord mechanism_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw ParseError(line, "<record>", "expected a JSON object");
  const json& nodes = field(j, "nodes", line);
  if (!nodes.is_array()) throw ParseError(line, "nodes", "expected an array");
  if (nodes.size() > static_cast<std::size_t>(kMaxNodes)) throw ParseError(line, "nodes", "more than 20 nodes");

  FeatureMatrix rows;
  rows.fill(pad_feature_row());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const json& n = nodes[i];
    if (!n.is_object()) throw ParseError(line, "nodes", "node " + std::to_string(i) + " is not an object");
    const json& valid = field(n, "valid", line);
    if (!valid.is_boolean()) throw ParseError(line, "valid", "expected a boolean");
    NodeRecord rec;
    rec.valid = valid.get<bool>();
    rec.type = parse_type(field(n, "type", line), line);
    rec.position = {number(field(n, "x", line), "x", line), number(field(n, "y", line), "y", line)};
    const json& adj = field(n, "adj", line);
    if (!adj.is_array() || adj.size() != static_cast<std::size_t>(kMaxNodes))
      throw ParseError(line, "adj", "expected 20 entries");
    FeatureRow row = encode_node(rec);
    for (int s = 0; s < kMaxNodes; ++s) {
      const json& e = adj[static_cast<std::size_t>(s)];
      if (!e.is_number_integer()) throw ParseError(line, "adj", "expected integers");
      row[static_cast<std::size_t>(kAdjOffset + s)] = static_cast<double>(e.get<int>());
    }
    rows[i] = row;
  }

  MechanismFileRecord record;
  try {
    record.graph = decode_feature_matrix(rows);
  } catch (const Error& e) {
    throw ParseError(line, "nodes", e.what());
  }

  const json& seed = field(j, "seed", line);
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0))
    throw ParseError(line, "seed", "expected a non-negative integer");
  record.seed = seed.get<std::uint64_t>();

  if (auto it = j.find("curve"); it != j.end()) {
    if (!it->is_array()) throw ParseError(line, "curve", "expected an array of [x, y]");
    Curve curve;
    for (const json& p : *it) {
      if (!p.is_array() || p.size() != 2) throw ParseError(line, "curve", "expected [x, y] pairs");
      curve.points.push_back({number(p[0], "curve", line), number(p[1], "curve", line)});
    }
    record.curve = std::move(curve);
  }
  return record;
}

std::string format_mechanism_line(const MechanismFileRecord& record) { return mechanism_to_json(record).dump(); }

MechanismFileRecord parse_mechanism_line(std::string_view line, std::size_t line_no) {
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded()) throw ParseError(line_no, "<record>", "malformed JSON");
  return mechanism_from_json(j, line_no);
}

std::vector<MechanismFileRecord> read_mechanism_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<MechanismFileRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_mechanism_line(line, line_no));
  }
  if (out.empty()) throw ParseError(line_no, "<file>", "no mechanism records");
  return out;
}

void write_mechanism_file(const std::string& path, const std::vector<MechanismFileRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : records) out << format_mechanism_line(r) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "theta,node,x,y\n";
  for (std::size_t a = 0; a < traj.angles.size(); ++a)
    for (int n = 0; n < traj.node_count; ++n) {
      const Vec2 p = traj.at(static_cast<int>(a), n);
      out << format_double(traj.angles[a]) << ',' << n << ',' << format_double(p.x) << ',' << format_double(p.y)
          << '\n';
    }
}

}  // namespace linkdiff
