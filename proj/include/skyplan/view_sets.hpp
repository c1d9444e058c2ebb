#pragma once

#include "skyplan/scene.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace skyplan {

struct CameraModel {
  double fov = deg2rad(60.0);
  double max_range = 100.0;
};

/// Regular grid of nadir views `altitude` meters above the top of `area`
/// with exactly `count` views (rows x cols chosen to match the aspect ratio).
std::vector<Viewpoint> nadir_grid(const Aabb& area, std::size_t count, double altitude, const CameraModel& cam);

/// Grid positions each carrying one nadir and four oblique views pitched down by
/// `tilt` radians, the usual oblique-photography pattern.
std::vector<Viewpoint> oblique_grid(const Aabb& area, std::size_t positions, double altitude, double tilt,
                                    const CameraModel& cam);

/// `count` views on a horizontal circle around `center`, all aimed at `center`.
std::vector<Viewpoint> orbit_ring(const Vec3& center, double radius, double height, std::size_t count,
                                  const CameraModel& cam);

/// Random subset (keep fraction) of `base` with position and heading jitter.
std::vector<Viewpoint> perturb_views(const std::vector<Viewpoint>& base, double keep, double position_sigma,
                                     double angle_sigma, std::uint64_t seed);

/// A named view-set recipe used by dataset building and the benchmarks.
struct ViewSetRecipe {
  std::string kind = "oblique"; // nadir | oblique | orbit | perturbed
  std::size_t count = 25;       // views, or positions for oblique
  double altitude = 30.0;       // above the scene top (nadir/oblique) or absolute (orbit)
  double keep = 0.7;            // perturbed only
  std::uint64_t seed = 0;
};

std::vector<Viewpoint> make_view_set(const ViewSetRecipe& recipe, const ProxyMesh& proxy, const CameraModel& cam);

/// The default mix of view sets used to build training data for one scene.
std::vector<ViewSetRecipe> default_view_mix(std::uint64_t seed);

} // namespace skyplan
