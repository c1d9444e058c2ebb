#pragma once

#include "skyplan/mesh.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace skyplan {

/// Camera pose plus intrinsics. fov is the full cone angle.
struct Viewpoint {
  Vec3 position = Vec3::Zero();
  Vec3 direction = Vec3(0.0, 0.0, -1.0);
  double fov = 1.0471975511965976; // 60 deg
  double max_range = 100.0;

  /// Throws InputError when an invariant does not hold.
  void validate() const;

  [[nodiscard]] double yaw() const { return std::atan2(direction.y(), direction.x()); }
  [[nodiscard]] double pitch() const { return std::asin(std::clamp(direction.z(), -1.0, 1.0)); }
  static Vec3 direction_from(double yaw, double pitch) {
    return {std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch)};
  }
};

struct SurfaceSample {
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  std::uint32_t source_triangle = 0;
};

constexpr double kOcclusionEpsilon = 1e-4;

/// Range, frustum cone, back-face and occlusion test of a surface sample from a view.
bool visible(const ProxyMesh& mesh, const Viewpoint& view, const SurfaceSample& sample);
/// The non-occlusion part of visible(): range, cone and facing.
bool in_view_cone(const Viewpoint& view, const SurfaceSample& sample);
/// Indices of the views that see the sample.
std::vector<std::uint32_t> visible_views(const ProxyMesh& mesh, std::span<const Viewpoint> views,
                                         const SurfaceSample& sample);

/// Area-weighted sampling followed by blue-noise thinning; returns exactly `count` samples.
std::vector<SurfaceSample> sample_surface(const ProxyMesh& mesh, std::size_t count, std::uint64_t seed);
/// Plain area-weighted uniform sampling (no thinning), used for dense reference clouds.
std::vector<SurfaceSample> sample_uniform(const ProxyMesh& mesh, std::size_t count, std::uint64_t seed);

enum class ProxyLevel { box, coarse, inter, fine };

std::string to_string(ProxyLevel level);
ProxyLevel proxy_level_from_string(const std::string& name);

struct SceneSpec {
  std::uint64_t seed = 1;
  double footprint_x = 60.0;
  double footprint_y = 60.0;
  int buildings = 4;
  double height_min = 10.0;
  double height_max = 24.0;
  ProxyLevel proxy_level = ProxyLevel::fine;

  void validate() const;
};

void to_json(nlohmann::json& j, const SceneSpec& spec);
void from_json(const nlohmann::json& j, SceneSpec& spec);

struct Scene {
  ProxyMesh ground_truth;
  ProxyMesh proxy;
  /// Axis-aligned footprint rectangles (x0, y0, x1, y1) of every building part.
  std::vector<Eigen::Vector4d> footprints;
};

/// Procedural city block: extruded rectangular and L-shaped buildings on a ground
/// plane, plus a degraded proxy at the requested level.
Scene generate_scene(const SceneSpec& spec);

/// Degrades a ground-truth mesh to the given proxy level (fine and inter only;
/// the box-style levels need the building layout and go through generate_scene).
ProxyMesh jitter_mesh(const ProxyMesh& mesh, double sigma, std::uint64_t seed);
ProxyMesh decimate_mesh(const ProxyMesh& mesh, double keep_fraction);

/// Triangles of the largest vertical planar face (coplanar and facing the
/// same way), by total area.
std::vector<std::uint32_t> largest_facade(const ProxyMesh& mesh);
/// Copy of `mesh` in which the listed triangles get their own vertices, moved
/// by `offset` meters along each triangle's normal. Triangle order is kept.
ProxyMesh displace_triangles(const ProxyMesh& mesh, std::span<const std::uint32_t> triangles, double offset);

struct ReconCloud {
  std::vector<Vec3> points;
  std::vector<double> accuracy; // acc_q per point, meters
};

struct OracleTerms {
  int visible_count = 0;
  double coverage = 0.0;
  double triangulation = 0.0;
  double resolution = 0.0;
  double grazing = 0.0;
  [[nodiscard]] double quality() const { return coverage * triangulation * resolution * grazing; }
};

/// Simulated MVS outcome for a point seen from the given camera centres.
OracleTerms oracle_terms(const SurfaceSample& sample, std::span<const Vec3> visible_positions);
double oracle_quality(const ProxyMesh& gt, std::span<const Viewpoint> views, const SurfaceSample& sample);

/// Displacement scale of a reconstructed point given its oracle quality.
double reconstruction_sigma(double quality);

ReconCloud simulate_reconstruction(const ProxyMesh& gt, std::span<const Viewpoint> views, double density,
                                   std::uint64_t seed);

} // namespace skyplan
