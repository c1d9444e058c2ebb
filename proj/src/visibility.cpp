#include "skyplan/parallel.hpp"
#include "skyplan/scene.hpp"

#include <numbers>

namespace skyplan {

namespace {
std::atomic<unsigned> g_threads{0};
}

void set_thread_count(unsigned count) { g_threads = count; }

unsigned thread_count() {
  const unsigned n = g_threads.load();
  if (n == 0) {
    return std::max(1u, std::thread::hardware_concurrency());
  }
  return n;
}

void Viewpoint::validate() const {
  if (!position.allFinite()) {
    throw InputError("viewpoint position is not finite");
  }
  if (std::abs(direction.norm() - 1.0) > 1e-6) {
    throw InputError("viewpoint direction must be unit length");
  }
  if (!(fov > 0.0 && fov < std::numbers::pi)) {
    throw InputError("viewpoint fov must lie in (0, pi)");
  }
  if (!(max_range > 0.0)) {
    throw InputError("viewpoint max_range must be positive");
  }
}

bool in_view_cone(const Viewpoint& view, const SurfaceSample& sample) {
  const Vec3 to_view = view.position - sample.position;
  const double dist = to_view.norm();
  if (dist > view.max_range || dist <= 0.0) {
    return false;
  }
  if (sample.normal.dot(to_view) <= 0.0) {
    return false;
  }
  // sample inside the cone of half-angle fov/2 around the viewing direction
  return -view.direction.dot(to_view) >= std::cos(0.5 * view.fov) * dist;
}

bool visible(const ProxyMesh& mesh, const Viewpoint& view, const SurfaceSample& sample) {
  if (!in_view_cone(view, sample)) {
    return false;
  }
  const Vec3 seg = sample.position - view.position;
  const double dist = seg.norm();
  const Vec3 dir = seg / dist;
  return !mesh.occluded(view.position, dir, kOcclusionEpsilon, dist - kOcclusionEpsilon);
}

std::vector<std::uint32_t> visible_views(const ProxyMesh& mesh, std::span<const Viewpoint> views,
                                         const SurfaceSample& sample) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < views.size(); ++i) {
    if (visible(mesh, views[i], sample)) {
      out.push_back(i);
    }
  }
  return out;
}

} // namespace skyplan
