#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace skyplan {

using Vec3 = Eigen::Vector3d;

/// Bad input or configuration. The CLI maps this to exit status 1.
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void expand(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  [[nodiscard]] bool empty() const { return (hi.array() < lo.array()).any(); }
  [[nodiscard]] Vec3 center() const { return 0.5 * (lo + hi); }
  [[nodiscard]] Vec3 extent() const { return hi - lo; }
  [[nodiscard]] bool contains(const Vec3& p, double tol = 0.0) const {
    return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
  }
  [[nodiscard]] double surface_area() const {
    if (empty()) {
      return 0.0;
    }
    const Vec3 e = extent();
    return 2.0 * (e.x() * e.y() + e.y() * e.z() + e.z() * e.x());
  }
  /// Squared distance from p to the box (0 inside).
  [[nodiscard]] double squared_distance(const Vec3& p) const {
    const Vec3 d = (lo - p).cwiseMax(Vec3::Zero()).cwiseMax(p - hi);
    return d.squaredNorm();
  }
};

/// Slab test; returns the entry parameter if the ray hits the box within [tmin, tmax].
inline std::optional<double> intersect_aabb(const Aabb& box, const Vec3& origin, const Vec3& inv_dir,
                                            double tmin, double tmax) {
  for (int a = 0; a < 3; ++a) {
    double t0 = (box.lo[a] - origin[a]) * inv_dir[a];
    double t1 = (box.hi[a] - origin[a]) * inv_dir[a];
    if (std::isnan(t0) || std::isnan(t1)) {
      // origin on the slab plane with a zero direction component
      if (origin[a] < box.lo[a] || origin[a] > box.hi[a]) {
        return std::nullopt;
      }
      continue;
    }
    if (t0 > t1) {
      std::swap(t0, t1);
    }
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmax < tmin) {
      return std::nullopt;
    }
  }
  return tmin;
}

/// Moller-Trumbore. Returns t when the ray hits the triangle with t in [tmin, tmax].
inline std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                                                const Vec3& b, const Vec3& c, double tmin, double tmax) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-18) {
    return std::nullopt;
  }
  const double inv_det = 1.0 / det;
  const Vec3 s = origin - a;
  const double u = s.dot(p) * inv_det;
  if (u < 0.0 || u > 1.0) {
    return std::nullopt;
  }
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) * inv_det;
  if (v < 0.0 || u + v > 1.0) {
    return std::nullopt;
  }
  const double t = e2.dot(q) * inv_det;
  if (t < tmin || t > tmax) {
    return std::nullopt;
  }
  return t;
}

/// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) {
    return a;
  }
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) {
    return b;
  }
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    return a + ab * (d1 / (d1 - d3));
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) {
    return c;
  }
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    return a + ac * (d2 / (d2 - d6));
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

inline double angle_between(const Vec3& u, const Vec3& v) {
  const double c = u.normalized().dot(v.normalized());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

inline double deg2rad(double deg) { return deg * (3.14159265358979323846 / 180.0); }
inline double rad2deg(double rad) { return rad * (180.0 / 3.14159265358979323846); }

} // namespace skyplan
