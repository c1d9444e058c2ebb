#pragma once

#include "skyplan/geometry.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace skyplan {

using Triangle = std::array<std::uint32_t, 3>;

struct RayHit {
  double t = 0.0;
  std::uint32_t triangle = 0;
};

struct ClosestPoint {
  Vec3 point = Vec3::Zero();
  double distance = 0.0;
  std::uint32_t triangle = 0;
};

/// Bounding volume hierarchy over the triangles of a mesh. Binned SAH build,
/// flattened depth-first layout with the left child stored next to its parent.
class Bvh {
public:
  struct Node {
    Aabb box;
    std::uint32_t first = 0; // leaf: first primitive index; inner: right child
    std::uint32_t count = 0; // 0 for inner nodes
  };

  Bvh() = default;
  Bvh(std::span<const Vec3> vertices, std::span<const Triangle> triangles);

  [[nodiscard]] std::span<const Node> nodes() const { return nodes_; }
  [[nodiscard]] std::span<const std::uint32_t> primitives() const { return prims_; }

private:
  std::uint32_t build(std::vector<Aabb>& boxes, std::vector<Vec3>& centroids, std::uint32_t begin,
                      std::uint32_t end);

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> prims_;
};

/// Triangle mesh with per-triangle normals, bounds and a BVH. Used both as a
/// ground-truth scene and as a degraded planning proxy. Immutable after
/// construction, so queries are safe from multiple threads.
class ProxyMesh {
public:
  ProxyMesh() = default;

  /// Validates indices, drops zero-area triangles (see dropped_degenerate())
  /// and builds the acceleration index.
  ProxyMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles);

  [[nodiscard]] std::span<const Vec3> vertices() const { return vertices_; }
  [[nodiscard]] std::span<const Triangle> triangles() const { return triangles_; }
  [[nodiscard]] std::span<const Vec3> normals() const { return normals_; }
  [[nodiscard]] const Aabb& bounds() const { return bounds_; }
  [[nodiscard]] std::size_t triangle_count() const { return triangles_.size(); }
  [[nodiscard]] bool empty() const { return triangles_.empty(); }
  [[nodiscard]] std::size_t dropped_degenerate() const { return dropped_; }

  [[nodiscard]] const Vec3& vertex(std::uint32_t tri, int corner) const {
    return vertices_[triangles_[tri][corner]];
  }
  [[nodiscard]] double triangle_area(std::uint32_t tri) const;
  [[nodiscard]] double surface_area() const;

  /// Closest hit along origin + t * dir for t in [tmin, tmax]; dir need not be unit.
  [[nodiscard]] std::optional<RayHit> raycast(const Vec3& origin, const Vec3& dir, double tmin,
                                              double tmax) const;
  /// True if any triangle is hit for t in [tmin, tmax].
  [[nodiscard]] bool occluded(const Vec3& origin, const Vec3& dir, double tmin, double tmax) const;
  [[nodiscard]] ClosestPoint closest_point(const Vec3& p) const;
  /// True when p is enclosed by the surface: the first surface hit straight up is
  /// seen from its back side. Valid for the 2.5-D scenes generated here.
  [[nodiscard]] bool inside(const Vec3& p) const;

  [[nodiscard]] const Bvh& bvh() const { return *bvh_; }

private:
  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Vec3> normals_;
  Aabb bounds_;
  std::size_t dropped_ = 0;
  std::shared_ptr<const Bvh> bvh_;
};

/// ASCII OBJ (polygons fan-triangulated) or binary little-endian PLY.
ProxyMesh load_mesh(const std::filesystem::path& path);
void save_obj(const ProxyMesh& mesh, const std::filesystem::path& path);
void save_ply(const ProxyMesh& mesh, const std::filesystem::path& path);

/// Merges two meshes into one (indices of b shifted).
ProxyMesh merge_meshes(const ProxyMesh& a, const ProxyMesh& b);

} // namespace skyplan
