#include "linkdiff/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace linkdiff {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

const char* const kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string polyline(const Curve& c, double cx, double cy, double scale, const char* color) {
  std::string pts;
  for (const Vec2& p : c.points) pts += num(cx + p.x * scale) + "," + num(cy - p.y * scale) + " ";
  if (!c.points.empty()) pts += num(cx + c.points.front().x * scale) + "," + num(cy - c.points.front().y * scale);
  return "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts +
         "\"/>\n";
}

}  // namespace

std::string bar_chart_svg(const std::string& title, const std::string& y_label, const std::vector<BarGroup>& groups,
                          const std::vector<std::string>& series) {
  double top = 0.0;
  for (const BarGroup& g : groups)
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      const double err = i < g.errors.size() && g.errors[i] ? *g.errors[i] : 0.0;
      top = std::max(top, g.values[i] + err);
    }
  if (!(top > 0.0)) top = 1.0;
  top *= 1.1;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double base = kTop + plot_h;
  std::string s = header(kWidth, kHeight);
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) +
       "</text>\n";
  s += "<text x=\"16\" y=\"" + num(kTop + plot_h / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       num(kTop + plot_h / 2) + ")\">" + escape(y_label) + "</text>\n";
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(base) + "\" x2=\"" + num(kLeft + plot_w) + "\" y2=\"" +
       num(base) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(base) +
       "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = top * t / 4.0;
    const double y = base - plot_h * t / 4.0;
    s += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" + num(v) + "</text>\n";
  }

  const double group_w = groups.empty() ? plot_w : plot_w / static_cast<double>(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const BarGroup& g = groups[gi];
    const double x0 = kLeft + group_w * static_cast<double>(gi);
    const double n = static_cast<double>(std::max<std::size_t>(g.values.size(), 1));
    const double bar_w = group_w * 0.8 / n;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      const double h = plot_h * g.values[i] / top;
      const double x = x0 + group_w * 0.1 + bar_w * static_cast<double>(i);
      s += "<rect x=\"" + num(x) + "\" y=\"" + num(base - h) + "\" width=\"" + num(bar_w) + "\" height=\"" + num(h) +
           "\" fill=\"" + kPalette[i % 6] + "\"/>\n";
      if (i < g.errors.size() && g.errors[i]) {
        const double cx = x + bar_w / 2;
        const double lo = base - plot_h * std::max(0.0, g.values[i] - *g.errors[i]) / top;
        const double hi = base - plot_h * (g.values[i] + *g.errors[i]) / top;
        s += "<line x1=\"" + num(cx) + "\" y1=\"" + num(lo) + "\" x2=\"" + num(cx) + "\" y2=\"" + num(hi) +
             "\" stroke=\"black\"/>\n";
      }
    }
    s += "<text x=\"" + num(x0 + group_w / 2) + "\" y=\"" + num(base + 18) + "\" text-anchor=\"middle\">" +
         escape(g.label) + "</text>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double x = kLeft + 10 + 110 * static_cast<double>(i);
    const double y = kHeight - 18;
    s += "<rect x=\"" + num(x) + "\" y=\"" + num(y - 10) + "\" width=\"10\" height=\"10\" fill=\"" + kPalette[i % 6] +
         "\"/>\n";
    s += "<text x=\"" + num(x + 14) + "\" y=\"" + num(y) + "\">" + escape(series[i]) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string success_chart_svg(const ExperimentReport& report) {
  std::vector<BarGroup> groups;
  for (Strategy st : report.config.strategies) {
    BarGroup g{strategy_name(st), {}, {}};
    for (int r = 0; r < report.config.runs; ++r) g.values.push_back(report.cell(st, r).success_rate);
    groups.push_back(std::move(g));
  }
  std::vector<std::string> series;
  for (int r = 0; r < report.config.runs; ++r) series.push_back("run " + std::to_string(r));
  return bar_chart_svg("Generation success rate", "success rate", groups, series);
}

std::string chamfer_chart_svg(const ExperimentReport& report) {
  std::vector<BarGroup> groups;
  for (const StrategySummary& s : report.summaries)
    groups.push_back({strategy_name(s.strategy), {s.chamfer_mean.value_or(0.0)}, {s.chamfer_std}});
  return bar_chart_svg("Mean Chamfer distance over valid outcomes", "Chamfer distance", groups, {"mean over runs"});
}

std::string curve_overlay_svg(const Curve& target, const Curve& produced) {
  constexpr double size = 400.0;
  double extent = 1e-12;
  for (const Curve* c : {&target, &produced})
    for (const Vec2& p : c->points) extent = std::max({extent, std::abs(p.x), std::abs(p.y)});
  const double scale = (size / 2 - 20) / extent;
  std::string s = header(size, size);
  s += polyline(target, size / 2, size / 2, scale, "#4c72b0");
  s += polyline(produced, size / 2, size / 2, scale, "#dd8452");
  s += "<text x=\"10\" y=\"18\" fill=\"#4c72b0\">target</text>\n";
  s += "<text x=\"10\" y=\"34\" fill=\"#dd8452\">generated</text>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace linkdiff
