#include "support.hpp"

#include <cmath>

namespace skytest {

ProxyMesh box_mesh(const Vec3& lo, const Vec3& hi) {
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i) {
    v.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
  }
  std::vector<skyplan::Triangle> t = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                                      {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return {std::move(v), std::move(t)};
}

ProxyMesh unit_cube() { return box_mesh(Vec3::Zero(), Vec3::Ones()); }

ProxyMesh plane_mesh(double size, double height) {
  const double h = 0.5 * size;
  std::vector<Vec3> v = {{-h, -h, height}, {h, -h, height}, {h, h, height}, {-h, h, height}};
  return {std::move(v), {{0, 1, 2}, {0, 2, 3}}};
}

double brute_force_raycast(const ProxyMesh& mesh, const Vec3& origin, const Vec3& dir, double tmin, double tmax) {
  double best = -1.0;
  for (std::uint32_t i = 0; i < mesh.triangle_count(); ++i) {
    const Vec3& a = mesh.vertex(i, 0);
    const Vec3& b = mesh.vertex(i, 1);
    const Vec3& c = mesh.vertex(i, 2);
    const Vec3 n = (b - a).cross(c - a);
    const double denom = n.dot(dir);
    if (std::abs(denom) < 1e-15) {
      continue;
    }
    const double t = n.dot(a - origin) / denom;
    if (t < tmin || t > tmax) {
      continue;
    }
    // inside test by same-side edge checks
    const Vec3 p = origin + t * dir;
    const double s0 = (b - a).cross(p - a).dot(n);
    const double s1 = (c - b).cross(p - b).dot(n);
    const double s2 = (a - c).cross(p - c).dot(n);
    if (s0 >= 0.0 && s1 >= 0.0 && s2 >= 0.0 && (best < 0.0 || t < best)) {
      best = t;
    }
  }
  return best;
}

bool brute_force_visible(const ProxyMesh& mesh, const Viewpoint& view, const SurfaceSample& sample) {
  const Vec3 to_view = view.position - sample.position;
  const double dist = to_view.norm();
  if (dist > view.max_range || dist <= 0.0) {
    return false;
  }
  if (sample.normal.dot(to_view) <= 0.0) {
    return false;
  }
  const double cone = std::acos(std::clamp(-view.direction.dot(to_view / dist), -1.0, 1.0));
  if (cone > 0.5 * view.fov) {
    return false;
  }
  const Vec3 dir = -to_view / dist;
  return brute_force_raycast(mesh, view.position, dir, skyplan::kOcclusionEpsilon,
                             dist - skyplan::kOcclusionEpsilon) < 0.0;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("skyplan_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace skytest
