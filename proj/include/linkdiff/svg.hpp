#pragma once

#include <optional>
#include <string>
#include <vector>

#include "linkdiff/curve.hpp"
#include "linkdiff/eval.hpp"

namespace linkdiff {

struct BarGroup {
  std::string label;
  std::vector<double> values;
  /// Optional symmetric error bar per value.
  std::vector<std::optional<double>> errors;
};

/// Grouped vertical bar chart. Output depends only on the arguments.
std::string bar_chart_svg(const std::string& title, const std::string& y_label, const std::vector<BarGroup>& groups,
                          const std::vector<std::string>& series);

/// Success rate per strategy, one bar per run.
std::string success_chart_svg(const ExperimentReport& report);
/// Cross-run mean Chamfer per strategy with sample-std error bars.
std::string chamfer_chart_svg(const ExperimentReport& report);

/// Target curve and produced curve drawn as closed polylines in a shared frame.
std::string curve_overlay_svg(const Curve& target, const Curve& produced);

}  // namespace linkdiff
