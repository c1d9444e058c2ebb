#include "skyplan/view_sets.hpp"

#include "skyplan/rng.hpp"

#include <numbers>

namespace skyplan {

namespace {

std::pair<std::size_t, std::size_t> grid_shape(const Aabb& area, std::size_t count) {
  const Vec3 ext = area.extent();
  const double aspect = ext.x() > 0 && ext.y() > 0 ? ext.x() / ext.y() : 1.0;
  std::size_t cols = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(std::sqrt(count * aspect))));
  cols = std::min(cols, count);
  const std::size_t rows = (count + cols - 1) / cols;
  return {rows, cols};
}

std::vector<Vec3> grid_positions(const Aabb& area, std::size_t count, double z) {
  const auto [rows, cols] = grid_shape(area, count);
  std::vector<Vec3> out;
  for (std::size_t r = 0; r < rows && out.size() < count; ++r) {
    for (std::size_t c = 0; c < cols && out.size() < count; ++c) {
      const double fx = (c + 0.5) / static_cast<double>(cols);
      const double fy = (r + 0.5) / static_cast<double>(rows);
      out.emplace_back(area.lo.x() + fx * area.extent().x(), area.lo.y() + fy * area.extent().y(), z);
    }
  }
  return out;
}

} // namespace

std::vector<Viewpoint> nadir_grid(const Aabb& area, std::size_t count, double altitude, const CameraModel& cam) {
  std::vector<Viewpoint> views;
  for (const Vec3& p : grid_positions(area, count, area.hi.z() + altitude)) {
    views.push_back({p, Vec3(0, 0, -1), cam.fov, cam.max_range});
  }
  return views;
}

std::vector<Viewpoint> oblique_grid(const Aabb& area, std::size_t positions, double altitude, double tilt,
                                    const CameraModel& cam) {
  std::vector<Viewpoint> views;
  for (const Vec3& p : grid_positions(area, positions, area.hi.z() + altitude)) {
    views.push_back({p, Vec3(0, 0, -1), cam.fov, cam.max_range});
    for (int k = 0; k < 4; ++k) {
      const double yaw = k * 0.5 * std::numbers::pi;
      views.push_back({p, Viewpoint::direction_from(yaw, -(0.5 * std::numbers::pi - tilt)), cam.fov,
                       cam.max_range});
    }
  }
  return views;
}

std::vector<Viewpoint> orbit_ring(const Vec3& center, double radius, double height, std::size_t count,
                                  const CameraModel& cam) {
  std::vector<Viewpoint> views;
  for (std::size_t i = 0; i < count; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count);
    const Vec3 p(center.x() + radius * std::cos(a), center.y() + radius * std::sin(a), height);
    views.push_back({p, (center - p).normalized(), cam.fov, cam.max_range});
  }
  return views;
}

std::vector<Viewpoint> perturb_views(const std::vector<Viewpoint>& base, double keep, double position_sigma,
                                     double angle_sigma, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Viewpoint> out;
  for (const Viewpoint& v : base) {
    const bool kept = rng.uniform() < keep;
    const Vec3 jitter(rng.normal(), rng.normal(), rng.normal());
    const double dyaw = rng.normal(0.0, angle_sigma);
    const double dpitch = rng.normal(0.0, angle_sigma);
    if (!kept) {
      continue;
    }
    Viewpoint p = v;
    p.position += position_sigma * jitter;
    const double pitch = std::clamp(v.pitch() + dpitch, -0.5 * std::numbers::pi + 1e-6, 0.5 * std::numbers::pi - 1e-6);
    p.direction = Viewpoint::direction_from(v.yaw() + dyaw, pitch);
    out.push_back(p);
  }
  return out;
}

std::vector<Viewpoint> make_view_set(const ViewSetRecipe& recipe, const ProxyMesh& proxy, const CameraModel& cam) {
  const Aabb& b = proxy.bounds();
  if (recipe.kind == "nadir") {
    return nadir_grid(b, recipe.count, recipe.altitude, cam);
  }
  if (recipe.kind == "oblique") {
    return oblique_grid(b, recipe.count, recipe.altitude, deg2rad(45.0), cam);
  }
  if (recipe.kind == "orbit") {
    const Vec3 c = b.center();
    const double radius = 0.5 * std::max(b.extent().x(), b.extent().y()) + 10.0;
    return orbit_ring(Vec3(c.x(), c.y(), 0.5 * b.hi.z()), radius, recipe.altitude, recipe.count, cam);
  }
  if (recipe.kind == "perturbed") {
    const auto base = oblique_grid(b, recipe.count, recipe.altitude, deg2rad(45.0), cam);
    return perturb_views(base, recipe.keep, 3.0, deg2rad(10.0), recipe.seed);
  }
  throw InputError("unknown view-set kind '" + recipe.kind + "'");
}

std::vector<ViewSetRecipe> default_view_mix(std::uint64_t seed) {
  return {
      {"oblique", 16, 25.0, 1.0, seed},
      {"nadir", 36, 30.0, 1.0, seed},
      {"orbit", 24, 25.0, 1.0, seed},
      {"perturbed", 25, 30.0, 0.5, derive_seed(seed, 7)},
      {"oblique", 9, 35.0, 1.0, seed},
  };
}

} // namespace skyplan
