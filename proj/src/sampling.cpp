#include "skyplan/rng.hpp"
#include "skyplan/scene.hpp"
#include "skyplan/spatial_index.hpp"

#include <numbers>
#include <numeric>

namespace skyplan {

namespace {

constexpr std::size_t kPoolFactor = 4;

std::vector<double> cumulative_areas(const ProxyMesh& mesh) {
  std::vector<double> cdf(mesh.triangle_count());
  double acc = 0.0;
  for (std::uint32_t i = 0; i < mesh.triangle_count(); ++i) {
    acc += mesh.triangle_area(i);
    cdf[i] = acc;
  }
  return cdf;
}

SurfaceSample draw(const ProxyMesh& mesh, const std::vector<double>& cdf, Rng& rng) {
  const double pick = rng.uniform() * cdf.back();
  auto tri = static_cast<std::uint32_t>(std::upper_bound(cdf.begin(), cdf.end(), pick) - cdf.begin());
  tri = std::min<std::uint32_t>(tri, static_cast<std::uint32_t>(cdf.size() - 1));
  double u = rng.uniform();
  double v = rng.uniform();
  if (u + v > 1.0) {
    u = 1.0 - u;
    v = 1.0 - v;
  }
  SurfaceSample s;
  s.position = mesh.vertex(tri, 0) + u * (mesh.vertex(tri, 1) - mesh.vertex(tri, 0)) +
               v * (mesh.vertex(tri, 2) - mesh.vertex(tri, 0));
  s.normal = mesh.normals()[tri];
  s.source_triangle = tri;
  return s;
}

} // namespace

std::vector<SurfaceSample> sample_uniform(const ProxyMesh& mesh, std::size_t count, std::uint64_t seed) {
  if (mesh.empty()) {
    throw InputError("cannot sample an empty mesh");
  }
  const auto cdf = cumulative_areas(mesh);
  Rng rng(seed);
  std::vector<SurfaceSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(draw(mesh, cdf, rng));
  }
  return out;
}

std::vector<SurfaceSample> sample_surface(const ProxyMesh& mesh, std::size_t count, std::uint64_t seed) {
  if (mesh.empty()) {
    throw InputError("cannot sample an empty mesh");
  }
  if (count == 0) {
    throw InputError("sample count must be at least 1");
  }
  const auto pool = sample_uniform(mesh, kPoolFactor * count, seed);
  const double radius = std::sqrt(mesh.surface_area() / (std::numbers::pi * static_cast<double>(count)));

  // greedy dart thinning over the (already random) pool order
  std::vector<Vec3> accepted_pos;
  std::vector<std::size_t> accepted;
  std::vector<std::size_t> rejected;
  accepted_pos.reserve(count);
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> grid;
  auto cell = [radius](double v) { return static_cast<long>(std::floor(v / radius)); };
  auto key = [](long x, long y, long z) {
    return (static_cast<std::uint64_t>(x + (1L << 20)) << 42) ^
           (static_cast<std::uint64_t>(y + (1L << 20)) << 21) ^ static_cast<std::uint64_t>(z + (1L << 20));
  };
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < pool.size() && accepted.size() < count; ++i) {
    const Vec3& p = pool[i].position;
    const long cx = cell(p.x());
    const long cy = cell(p.y());
    const long cz = cell(p.z());
    bool ok = true;
    for (long x = cx - 1; x <= cx + 1 && ok; ++x) {
      for (long y = cy - 1; y <= cy + 1 && ok; ++y) {
        for (long z = cz - 1; z <= cz + 1 && ok; ++z) {
          const auto it = grid.find(key(x, y, z));
          if (it == grid.end()) {
            continue;
          }
          for (std::uint32_t j : it->second) {
            if ((accepted_pos[j] - p).squaredNorm() < r2) {
              ok = false;
              break;
            }
          }
        }
      }
    }
    if (ok) {
      grid[key(cx, cy, cz)].push_back(static_cast<std::uint32_t>(accepted.size()));
      accepted_pos.push_back(p);
      accepted.push_back(i);
    } else {
      rejected.push_back(i);
    }
  }
  // top up from the rejected candidates when the thinning radius was too greedy
  for (std::size_t k = 0; accepted.size() < count && k < rejected.size(); ++k) {
    accepted.push_back(rejected[k]);
  }
  std::vector<SurfaceSample> out;
  out.reserve(count);
  for (std::size_t i : accepted) {
    out.push_back(pool[i]);
  }
  return out;
}

} // namespace skyplan
