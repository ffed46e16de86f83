#pragma once

#include <Eigen/Dense>
#include <vector>

#include "poigp/common.hpp"

namespace poigp {

// Planar points are rows of an Nx2 matrix: km east / km north of the
// dataset reference.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 2>;

struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;
};

namespace geo {

// WGS84 degree lengths at the equator; the planar frame is an
// equirectangular projection around the reference point.
inline constexpr double kKmPerDegLat = 110.574;
inline constexpr double kKmPerDegLon = 111.320;

// Points must lie within this many degrees of the reference (city scale).
inline constexpr double kMaxDegFromReference = 2.0;

inline void validate_geo(const GeoPoint& p) {
  if (!(p.lat >= -90.0 && p.lat <= 90.0) ||
      !(p.lon >= -180.0 && p.lon <= 180.0) || !std::isfinite(p.lon) ||
      !std::isfinite(p.lat)) {
    throw input_error("coordinate out of range: lon=" + format_double(p.lon) +
                      " lat=" + format_double(p.lat));
  }
}

inline Eigen::Vector2d project_one(const GeoPoint& p, const GeoPoint& ref) {
  validate_geo(p);
  if (std::abs(p.lon - ref.lon) > kMaxDegFromReference ||
      std::abs(p.lat - ref.lat) > kMaxDegFromReference) {
    throw input_error("point too far from reference for planar projection: "
                      "lon=" + format_double(p.lon) +
                      " lat=" + format_double(p.lat));
  }
  const double deg_to_rad = M_PI / 180.0;
  const double east =
      (p.lon - ref.lon) * std::cos(ref.lat * deg_to_rad) * kKmPerDegLon;
  const double north = (p.lat - ref.lat) * kKmPerDegLat;
  return {east, north};
}

inline PointMatrix project_coords(const std::vector<GeoPoint>& points,
                                  const GeoPoint& reference) {
  validate_geo(reference);
  PointMatrix out(static_cast<Eigen::Index>(points.size()), 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = project_one(points[i], reference);
  }
  return out;
}

inline GeoPoint unproject_one(const Eigen::Vector2d& p, const GeoPoint& ref) {
  const double deg_to_rad = M_PI / 180.0;
  GeoPoint g;
  g.lat = ref.lat + p.y() / kKmPerDegLat;
  g.lon = ref.lon + p.x() / (std::cos(ref.lat * deg_to_rad) * kKmPerDegLon);
  return g;
}

inline std::vector<GeoPoint> unproject_coords(const PointMatrix& points,
                                              const GeoPoint& reference) {
  std::vector<GeoPoint> out(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    out[static_cast<std::size_t>(i)] =
        unproject_one(points.row(i).transpose(), reference);
  }
  return out;
}

// |A| x |B| Euclidean distances in km. Computed from coordinate
// differences directly so identical points give an exact zero and the
// matrix is exactly symmetric when A = B.
inline Eigen::MatrixXd pairwise_distances(const PointMatrix& a,
                                          const PointMatrix& b) {
  Eigen::MatrixXd d(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    const double bx = b(j, 0);
    const double by = b(j, 1);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double dx = a(i, 0) - bx;
      const double dy = a(i, 1) - by;
      d(i, j) = std::sqrt(dx * dx + dy * dy);
    }
  }
  return d;
}

}  // namespace geo
}  // namespace poigp
