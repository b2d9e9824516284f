#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "linkdiff/geometry.hpp"

namespace linkdiff {

/// Ordered planar path. Operations that need a proper curve require at least
/// three finite points.
struct Curve {
  std::vector<Vec2> points;
  bool closed = true;

  std::size_t size() const { return points.size(); }
  bool operator==(const Curve&) const = default;
};

/// Throws DegenerateCurve when the curve has fewer than 3 points or a non-finite coordinate.
void check_curve(const Curve& curve);

struct NormalizedCurve {
  Curve curve;
  Vec2 center;
  double scale;  ///< max distance from the centroid before normalization
};

/// Centroid to the origin, max radial distance to 1.
NormalizedCurve normalize_curve(const Curve& curve);

/// `m` points equally spaced in arc length along the closed polyline,
/// starting at the first input point.
Curve resample_curve(const Curve& curve, int m);

/// Mean nearest-neighbour distance from a to b plus that from b to a.
double chamfer_distance(std::span<const Vec2> a, std::span<const Vec2> b);
inline double chamfer_distance(const Curve& a, const Curve& b) { return chamfer_distance(a.points, b.points); }

inline constexpr int kFeaturePoints = 64;
inline constexpr int kEmbeddingSize = 2 * kFeaturePoints;
using CurveEmbedding = std::array<double, kEmbeddingSize>;

/// normalize -> resample to 64 points -> interleaved (x, y).
CurveEmbedding curve_features(const Curve& curve);

/// `x,y` CSV with header.
void write_curve_csv(std::ostream& out, const Curve& curve);
Curve read_curve_csv(std::istream& in);
Curve read_curve_csv(const std::string& path);

}  // namespace linkdiff
