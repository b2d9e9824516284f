#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "linkdiff/curve.hpp"
#include "linkdiff/graph.hpp"

namespace linkdiff {

/// One line of a mechanism file:
///   {"nodes":[{"valid":true,"type":"grounded","x":0,"y":0,"adj":[-1,...]},...],
///    "seed":42,"curve":[[x,y],...]}
/// Only valid nodes are listed; `adj` always holds all 20 slots.
struct MechanismFileRecord {
  MechanismGraph graph;
  std::uint64_t seed = 0;
  std::optional<Curve> curve;

  bool operator==(const MechanismFileRecord&) const = default;
};

nlohmann::ordered_json mechanism_to_json(const MechanismFileRecord& record);
/// Throws ParseError (field named, line = `line`).
MechanismFileRecord mechanism_from_json(const nlohmann::json& j, std::size_t line);

/// Single line, no trailing newline.
std::string format_mechanism_line(const MechanismFileRecord& record);
MechanismFileRecord parse_mechanism_line(std::string_view line, std::size_t line_no);

/// Blank lines are skipped. An empty file is a ParseError.
std::vector<MechanismFileRecord> read_mechanism_file(const std::string& path);
void write_mechanism_file(const std::string& path, const std::vector<MechanismFileRecord>& records);

/// Trajectory CSV with header `theta,node,x,y`.
struct Trajectory;
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace linkdiff
