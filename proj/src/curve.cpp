#include "linkdiff/curve.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "linkdiff/errors.hpp"
#include "linkdiff/format.hpp"

namespace linkdiff {

void check_curve(const Curve& curve) {
  if (curve.points.size() < 3) throw DegenerateCurve("curve needs at least 3 points");
  for (const Vec2& p : curve.points)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw DegenerateCurve("curve has a non-finite point");
}

NormalizedCurve normalize_curve(const Curve& curve) {
  check_curve(curve);
  Vec2 center{};
  for (const Vec2& p : curve.points) center = center + p;
  center = center / static_cast<double>(curve.points.size());

  double scale = 0.0;
  for (const Vec2& p : curve.points) scale = std::max(scale, distance(p, center));
  if (scale < 1e-12) throw DegenerateCurve("curve collapses to a point");

  NormalizedCurve out{Curve{{}, curve.closed}, center, scale};
  out.curve.points.reserve(curve.points.size());
  for (const Vec2& p : curve.points) out.curve.points.push_back((p - center) / scale);
  return out;
}

Curve resample_curve(const Curve& curve, int m) {
  if (m < 3) throw DegenerateCurve("resample count must be at least 3");
  check_curve(curve);
  const auto& pts = curve.points;
  const std::size_t n = pts.size();

  // cumulative[i] = arc length from pts[0] to pts[i]; the last segment closes the loop.
  std::vector<double> cumulative(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) cumulative[i + 1] = cumulative[i] + distance(pts[i], pts[(i + 1) % n]);
  const double total = cumulative[n];
  if (!(total > 1e-12)) throw DegenerateCurve("curve has zero length");

  Curve out{{}, curve.closed};
  out.points.reserve(static_cast<std::size_t>(m));
  std::size_t seg = 0;
  for (int k = 0; k < m; ++k) {
    const double target = total * k / m;
    while (seg + 1 < n && cumulative[seg + 1] <= target) ++seg;
    const double len = cumulative[seg + 1] - cumulative[seg];
    const double t = len > 0.0 ? (target - cumulative[seg]) / len : 0.0;
    const Vec2 a = pts[seg];
    const Vec2 b = pts[(seg + 1) % n];
    out.points.push_back(a + (b - a) * t);
  }
  return out;
}

namespace {

double mean_nearest(std::span<const Vec2> from, std::span<const Vec2> to) {
  double sum = 0.0;
  for (const Vec2& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& q : to) {
      const Vec2 d = p - q;
      best = std::min(best, d.dot(d));
    }
    sum += std::sqrt(best);
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

double chamfer_distance(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (a.empty() || b.empty()) throw Error("chamfer distance of an empty point set");
  return mean_nearest(a, b) + mean_nearest(b, a);
}

CurveEmbedding curve_features(const Curve& curve) {
  const Curve resampled = resample_curve(normalize_curve(curve).curve, kFeaturePoints);
  CurveEmbedding out{};
  for (int i = 0; i < kFeaturePoints; ++i) {
    out[static_cast<std::size_t>(2 * i)] = resampled.points[static_cast<std::size_t>(i)].x;
    out[static_cast<std::size_t>(2 * i + 1)] = resampled.points[static_cast<std::size_t>(i)].y;
  }
  return out;
}

void write_curve_csv(std::ostream& out, const Curve& curve) {
  out << "x,y\n";
  for (const Vec2& p : curve.points) out << format_double(p.x) << ',' << format_double(p.y) << '\n';
}

Curve read_curve_csv(std::istream& in) {
  Curve curve;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == "x,y") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(line_no, "x,y", "expected two comma-separated values");
    try {
      std::size_t used_x = 0;
      std::size_t used_y = 0;
      const std::string xs = line.substr(0, comma);
      const std::string ys = line.substr(comma + 1);
      const double x = std::stod(xs, &used_x);
      const double y = std::stod(ys, &used_y);
      if (used_x != xs.size() || used_y != ys.size()) throw std::invalid_argument("trailing characters");
      curve.points.push_back({x, y});
    } catch (const std::exception&) {
      throw ParseError(line_no, "x,y", "not a number");
    }
  }
  return curve;
}

Curve read_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_curve_csv(in);
}

}  // namespace linkdiff
