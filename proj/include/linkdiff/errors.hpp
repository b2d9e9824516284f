#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace linkdiff {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A MechanismGraph invariant does not hold.
class MalformedGraph : public Error {
 public:
  MalformedGraph(int node, const std::string& what)
      : Error("malformed graph at node " + std::to_string(node) + ": " + what), node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

/// A feature-matrix entry lies outside the alphabet of its slot.
class IllegalAlphabet : public Error {
 public:
  IllegalAlphabet(int row, int col, double value)
      : Error("illegal value " + std::to_string(value) + " at row " + std::to_string(row) +
              ", column " + std::to_string(col)),
        row_(row),
        col_(col) {}
  int row() const { return row_; }
  int col() const { return col_; }

 private:
  int row_;
  int col_;
};

class NonPrefixValidity : public Error {
 public:
  explicit NonPrefixValidity(int row)
      : Error("valid row " + std::to_string(row) + " follows an invalid row"), row_(row) {}
  int row() const { return row_; }

 private:
  int row_;
};

class PrefixTooShort : public Error {
 public:
  explicit PrefixTooShort(int k)
      : Error("prefix length " + std::to_string(k) + " is out of range") {}
};

enum class TopologyFailure { Overconstrained, NonDyadic };

/// Dyadic solvability failed.
class TopologyError : public Error {
 public:
  TopologyError(TopologyFailure kind, int node, const std::string& what)
      : Error(what), kind_(kind), node_(node) {}
  TopologyFailure kind() const { return kind_; }
  /// Offending node, or -1 when the failure is not tied to a single node.
  int node() const { return node_; }

 private:
  TopologyFailure kind_;
  int node_;
};

enum class KinematicFailure { BranchDefect, DegenerateBase, DegenerateLink };

/// Forward kinematics failed. Node and angle are set when raised from a simulation.
class KinematicError : public Error {
 public:
  KinematicError(KinematicFailure kind, const std::string& what, int node = -1,
                 int angle_index = -1, double angle = 0.0)
      : Error(what), kind_(kind), node_(node), angle_index_(angle_index), angle_(angle) {}
  KinematicFailure kind() const { return kind_; }
  int node() const { return node_; }
  int angle_index() const { return angle_index_; }
  double angle() const { return angle_; }

 private:
  KinematicFailure kind_;
  int node_;
  int angle_index_;
  double angle_;
};

class DegenerateCurve : public Error {
 public:
  using Error::Error;
};

class GenerationExhausted : public Error {
 public:
  explicit GenerationExhausted(int node)
      : Error("could not place node " + std::to_string(node)), node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& field, const std::string& what)
      : Error("line " + std::to_string(line) + ", field '" + field + "': " + what),
        line_(line),
        field_(field) {}
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class InvariantViolation : public Error {
 public:
  InvariantViolation(std::size_t record, const std::string& what)
      : Error("record " + std::to_string(record) + ": " + what), record_(record) {}
  std::size_t record() const { return record_; }

 private:
  std::size_t record_;
};

class DimMismatch : public Error {
 public:
  using Error::Error;
};

class BadSchedule : public Error {
 public:
  using Error::Error;
};

class StepOutOfRange : public Error {
 public:
  using Error::Error;
};

class EmptyBatch : public Error {
 public:
  EmptyBatch() : Error("empty batch") {}
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace linkdiff
