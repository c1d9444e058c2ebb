#include "skyplan/rng.hpp"
#include "skyplan/scene.hpp"

#include <map>
#include <set>

namespace skyplan {

namespace {

constexpr double kGrid = 2.0;     // layout and tessellation step, meters
constexpr int kGapCells = 2;      // free cells between buildings and to the border
constexpr int kPlacementTries = 4000;

/// Collects triangles while welding vertices that coincide.
class MeshBuilder {
public:
  std::uint32_t vertex(const Vec3& p) {
    const auto q = [](double v) { return static_cast<long long>(std::llround(v * 1e6)); };
    const std::array<long long, 3> key{q(p.x()), q(p.y()), q(p.z())};
    auto [it, inserted] = index_.try_emplace(key, static_cast<std::uint32_t>(vertices_.size()));
    if (inserted) {
      vertices_.push_back(p);
    }
    return it->second;
  }

  void triangle(const Vec3& a, const Vec3& b, const Vec3& c) {
    triangles_.push_back({vertex(a), vertex(b), vertex(c)});
  }

  /// Planar grid spanned by u and v from origin; faces point along u x v.
  void quad_grid(const Vec3& origin, const Vec3& u, const Vec3& v) {
    const int nu = std::max(1, static_cast<int>(std::ceil(u.norm() / kGrid - 1e-9)));
    const int nv = std::max(1, static_cast<int>(std::ceil(v.norm() / kGrid - 1e-9)));
    auto at = [&](int i, int j) { return origin + u * (double(i) / nu) + v * (double(j) / nv); };
    for (int i = 0; i < nu; ++i) {
      for (int j = 0; j < nv; ++j) {
        triangle(at(i, j), at(i + 1, j), at(i + 1, j + 1));
        triangle(at(i, j), at(i + 1, j + 1), at(i, j + 1));
      }
    }
  }

  /// Triangle fan from apex onto a base edge subdivided like quad_grid would.
  void gable(const Vec3& a, const Vec3& b, const Vec3& apex) {
    const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / kGrid - 1e-9)));
    for (int i = 0; i < n; ++i) {
      triangle(a + (b - a) * (double(i) / n), a + (b - a) * (double(i + 1) / n), apex);
    }
  }

  ProxyMesh build() && { return {std::move(vertices_), std::move(triangles_)}; }

private:
  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  std::map<std::array<long long, 3>, std::uint32_t> index_;
};

struct Rect {
  int i0, j0, i1, j1; // half-open cell ranges
};

struct Building {
  std::vector<Rect> parts;   // one rect, or two for an L
  std::vector<Vec3> outline; // CCW footprint polygon at z = 0
  double eave = 0.0;
  bool gabled = false;
  bool ridge_along_x = true;
  double rise = 0.0;
  Rect bbox{};
};

Vec3 grid_point(int i, int j, double z = 0.0) { return {i * kGrid, j * kGrid, z}; }

void add_box(MeshBuilder& mb, const Vec3& lo, const Vec3& hi) {
  const Vec3 c00(lo.x(), lo.y(), 0.0), c10(hi.x(), lo.y(), 0.0), c11(hi.x(), hi.y(), 0.0),
      c01(lo.x(), hi.y(), 0.0);
  const Vec3 up(0.0, 0.0, hi.z());
  const std::array<Vec3, 4> ring{c00, c10, c11, c01};
  for (int k = 0; k < 4; ++k) {
    const Vec3& a = ring[k];
    const Vec3& b = ring[(k + 1) % 4];
    mb.triangle(a, b, b + up);
    mb.triangle(a, b + up, a + up);
  }
  mb.triangle(c00 + up, c10 + up, c11 + up);
  mb.triangle(c00 + up, c11 + up, c01 + up);
}

void add_ground(MeshBuilder& mb, int nx, int ny, const std::function<bool(int, int)>& blocked) {
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      if (!blocked(i, j)) {
        mb.quad_grid(grid_point(i, j), Vec3(kGrid, 0, 0), Vec3(0, kGrid, 0));
      }
    }
  }
}

void add_building(MeshBuilder& mb, const Building& b) {
  const Vec3 up(0.0, 0.0, b.eave);
  const std::size_t n = b.outline.size();
  for (std::size_t k = 0; k < n; ++k) {
    mb.quad_grid(b.outline[k], b.outline[(k + 1) % n] - b.outline[k], up);
  }
  if (!b.gabled) {
    for (const Rect& r : b.parts) {
      mb.quad_grid(grid_point(r.i0, r.j0, b.eave), Vec3((r.i1 - r.i0) * kGrid, 0, 0),
                   Vec3(0, (r.j1 - r.j0) * kGrid, 0));
    }
    return;
  }
  const Rect& r = b.parts.front();
  const double x0 = r.i0 * kGrid, x1 = r.i1 * kGrid, y0 = r.j0 * kGrid, y1 = r.j1 * kGrid;
  const double z = b.eave;
  const double zr = b.eave + b.rise;
  if (b.ridge_along_x) {
    const double ym = 0.5 * (y0 + y1);
    mb.quad_grid(Vec3(x0, y0, z), Vec3(x1 - x0, 0, 0), Vec3(0, ym - y0, zr - z));
    mb.quad_grid(Vec3(x1, y1, z), Vec3(x0 - x1, 0, 0), Vec3(0, ym - y1, zr - z));
    mb.gable(Vec3(x1, y0, z), Vec3(x1, y1, z), Vec3(x1, ym, zr));
    mb.gable(Vec3(x0, y1, z), Vec3(x0, y0, z), Vec3(x0, ym, zr));
  } else {
    const double xm = 0.5 * (x0 + x1);
    mb.quad_grid(Vec3(x1, y0, z), Vec3(0, y1 - y0, 0), Vec3(xm - x1, 0, zr - z));
    mb.quad_grid(Vec3(x0, y1, z), Vec3(0, y0 - y1, 0), Vec3(xm - x0, 0, zr - z));
    mb.gable(Vec3(x0, y0, z), Vec3(x1, y0, z), Vec3(xm, y0, zr));
    mb.gable(Vec3(x1, y1, z), Vec3(x0, y1, z), Vec3(xm, y1, zr));
  }
}

std::vector<Building> layout_buildings(const SceneSpec& spec, int nx, int ny, Rng& rng) {
  std::vector<int> owner(static_cast<std::size_t>(nx * ny), -1);
  std::vector<Building> out;
  int tries = 0;
  while (static_cast<int>(out.size()) < spec.buildings) {
    if (++tries > kPlacementTries) {
      throw InputError("footprint " + std::to_string(spec.footprint_x) + " x " + std::to_string(spec.footprint_y) +
                       " m is too small to place " + std::to_string(spec.buildings) + " buildings");
    }
    const int w = 4 + static_cast<int>(rng.below(6)); // 8..18 m
    const int d = 4 + static_cast<int>(rng.below(6));
    const int lo_i = kGapCells, lo_j = kGapCells;
    const int hi_i = nx - kGapCells - w, hi_j = ny - kGapCells - d;
    if (hi_i < lo_i || hi_j < lo_j) {
      continue;
    }
    const int i0 = lo_i + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi_i - lo_i + 1)));
    const int j0 = lo_j + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi_j - lo_j + 1)));
    const Rect box{i0, j0, i0 + w, j0 + d};
    bool free = true;
    for (int i = box.i0 - kGapCells; i < box.i1 + kGapCells && free; ++i) {
      for (int j = box.j0 - kGapCells; j < box.j1 + kGapCells && free; ++j) {
        if (i >= 0 && j >= 0 && i < nx && j < ny && owner[i * ny + j] >= 0) {
          free = false;
        }
      }
    }
    const double eave = rng.uniform(spec.height_min, spec.height_max);
    const bool l_shape = rng.uniform() < 0.4;
    const bool gabled = !l_shape && rng.uniform() < 0.5;
    if (!free) {
      continue;
    }
    Building b;
    b.bbox = box;
    b.eave = eave;
    if (l_shape) {
      // remove the top-right quadrant of the bounding rectangle
      const int ia = box.i0 + std::max(2, w / 2);
      const int ja = box.j0 + std::max(2, d / 2);
      b.parts = {Rect{box.i0, box.j0, box.i1, ja}, Rect{box.i0, ja, ia, box.j1}};
      b.outline = {grid_point(box.i0, box.j0), grid_point(box.i1, box.j0), grid_point(box.i1, ja),
                   grid_point(ia, ja),         grid_point(ia, box.j1),     grid_point(box.i0, box.j1)};
    } else {
      b.parts = {box};
      b.outline = {grid_point(box.i0, box.j0), grid_point(box.i1, box.j0), grid_point(box.i1, box.j1),
                   grid_point(box.i0, box.j1)};
      b.gabled = gabled;
      b.ridge_along_x = w >= d;
      b.rise = std::min(4.0, 0.25 * std::min(w, d) * kGrid);
    }
    for (const Rect& r : b.parts) {
      for (int i = r.i0; i < r.i1; ++i) {
        for (int j = r.j0; j < r.j1; ++j) {
          owner[i * ny + j] = static_cast<int>(out.size());
        }
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

ProxyMesh box_proxy(const std::vector<std::pair<Vec3, Vec3>>& boxes, int nx, int ny) {
  MeshBuilder mb;
  add_ground(mb, nx, ny, [&](int i, int j) {
    const Vec3 c = grid_point(i, j) + Vec3(0.5 * kGrid, 0.5 * kGrid, 0.0);
    for (const auto& [lo, hi] : boxes) {
      if (c.x() > lo.x() && c.x() < hi.x() && c.y() > lo.y() && c.y() < hi.y()) {
        return true;
      }
    }
    return false;
  });
  for (const auto& [lo, hi] : boxes) {
    add_box(mb, lo, hi);
  }
  return std::move(mb).build();
}

} // namespace

std::string to_string(ProxyLevel level) {
  switch (level) {
  case ProxyLevel::box:
    return "box";
  case ProxyLevel::coarse:
    return "coarse";
  case ProxyLevel::inter:
    return "inter";
  case ProxyLevel::fine:
    return "fine";
  }
  return "fine";
}

ProxyLevel proxy_level_from_string(const std::string& name) {
  if (name == "box") return ProxyLevel::box;
  if (name == "coarse") return ProxyLevel::coarse;
  if (name == "inter") return ProxyLevel::inter;
  if (name == "fine") return ProxyLevel::fine;
  throw InputError("unknown proxy level '" + name + "' (expected box, coarse, inter or fine)");
}

void SceneSpec::validate() const {
  if (!(footprint_x >= 4 * kGrid && footprint_y >= 4 * kGrid)) {
    throw InputError("footprint must be at least 8 m on each side");
  }
  if (buildings < 0) {
    throw InputError("building count must be non-negative");
  }
  if (!(height_min > 0.0 && height_max >= height_min)) {
    throw InputError("height range must be positive with height_max >= height_min");
  }
}

void to_json(nlohmann::json& j, const SceneSpec& spec) {
  j = nlohmann::json{{"seed", spec.seed},
                     {"footprint_m", {spec.footprint_x, spec.footprint_y}},
                     {"buildings", spec.buildings},
                     {"height_min_m", spec.height_min},
                     {"height_max_m", spec.height_max},
                     {"proxy_level", to_string(spec.proxy_level)}};
}

void from_json(const nlohmann::json& j, SceneSpec& spec) {
  try {
    spec.seed = j.value("seed", spec.seed);
    if (j.contains("footprint_m")) {
      const auto& f = j.at("footprint_m");
      if (f.is_number()) {
        spec.footprint_x = spec.footprint_y = f.get<double>();
      } else {
        spec.footprint_x = f.at(0).get<double>();
        spec.footprint_y = f.at(1).get<double>();
      }
    }
    spec.buildings = j.value("buildings", spec.buildings);
    spec.height_min = j.value("height_min_m", spec.height_min);
    spec.height_max = j.value("height_max_m", spec.height_max);
    if (j.contains("proxy_level")) {
      spec.proxy_level = proxy_level_from_string(j.at("proxy_level").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid scene spec: ") + e.what());
  }
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 0x5CE7E));
  const int nx = static_cast<int>(std::floor(spec.footprint_x / kGrid));
  const int ny = static_cast<int>(std::floor(spec.footprint_y / kGrid));
  const auto buildings = layout_buildings(spec, nx, ny, rng);

  std::vector<int> occupied(static_cast<std::size_t>(nx * ny), 0);
  for (const Building& b : buildings) {
    for (const Rect& r : b.parts) {
      for (int i = r.i0; i < r.i1; ++i) {
        for (int j = r.j0; j < r.j1; ++j) {
          occupied[i * ny + j] = 1;
        }
      }
    }
  }
  MeshBuilder mb;
  add_ground(mb, nx, ny, [&](int i, int j) { return occupied[i * ny + j] != 0; });
  for (const Building& b : buildings) {
    add_building(mb, b);
  }
  Scene scene;
  scene.ground_truth = std::move(mb).build();
  for (const Building& b : buildings) {
    for (const Rect& r : b.parts) {
      scene.footprints.emplace_back(r.i0 * kGrid, r.j0 * kGrid, r.i1 * kGrid, r.j1 * kGrid);
    }
  }

  const std::uint64_t proxy_seed = derive_seed(spec.seed, 0x9E0C7);
  switch (spec.proxy_level) {
  case ProxyLevel::fine:
    scene.proxy = jitter_mesh(scene.ground_truth, 0.1, proxy_seed);
    break;
  case ProxyLevel::inter:
    scene.proxy = jitter_mesh(decimate_mesh(scene.ground_truth, 0.5), 0.5, proxy_seed);
    break;
  case ProxyLevel::coarse: {
    Rng prng(proxy_seed);
    std::vector<std::pair<Vec3, Vec3>> boxes;
    for (const Building& b : buildings) {
      const Vec3 lo = grid_point(b.bbox.i0, b.bbox.j0);
      const Vec3 hi = grid_point(b.bbox.i1, b.bbox.j1, b.eave + (b.gabled ? b.rise : 0.0));
      const Vec3 center = 0.5 * (lo + hi);
      Vec3 size = hi - lo;
      for (int a = 0; a < 3; ++a) {
        size[a] = std::max(1.0, size[a] + prng.uniform(-1.0, 1.0));
      }
      Vec3 blo = center - 0.5 * size;
      Vec3 bhi = center + 0.5 * size;
      blo.z() = 0.0;
      bhi.z() = size.z();
      boxes.emplace_back(blo, bhi);
    }
    scene.proxy = box_proxy(boxes, nx, ny);
    break;
  }
  case ProxyLevel::box: {
    std::vector<std::pair<Vec3, Vec3>> boxes;
    for (const Building& b : buildings) {
      boxes.emplace_back(grid_point(b.bbox.i0, b.bbox.j0), grid_point(b.bbox.i1, b.bbox.j1, b.eave));
    }
    scene.proxy = box_proxy(boxes, nx, ny);
    break;
  }
  }
  return scene;
}

ProxyMesh jitter_mesh(const ProxyMesh& mesh, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> vertices(mesh.vertices().begin(), mesh.vertices().end());
  for (Vec3& v : vertices) {
    const double dx = rng.normal(0.0, sigma);
    const double dy = rng.normal(0.0, sigma);
    const double dz = rng.normal(0.0, sigma);
    v += Vec3(dx, dy, dz);
  }
  return {std::move(vertices), std::vector<Triangle>(mesh.triangles().begin(), mesh.triangles().end())};
}

ProxyMesh decimate_mesh(const ProxyMesh& mesh, double keep_fraction) {
  std::vector<Vec3> pos(mesh.vertices().begin(), mesh.vertices().end());
  std::vector<Triangle> tris(mesh.triangles().begin(), mesh.triangles().end());
  std::vector<char> alive(tris.size(), 1);
  std::vector<std::vector<std::uint32_t>> incident(pos.size());
  for (std::uint32_t t = 0; t < tris.size(); ++t) {
    for (std::uint32_t v : tris[t]) {
      incident[v].push_back(t);
    }
  }
  auto normal_of = [&](const Triangle& t) {
    return (pos[t[1]] - pos[t[0]]).cross(pos[t[2]] - pos[t[0]]);
  };
  const auto target = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(tris.size())));
  std::size_t live = tris.size();

  while (live > target) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> edge_set;
    for (std::uint32_t t = 0; t < tris.size(); ++t) {
      if (!alive[t]) continue;
      for (int k = 0; k < 3; ++k) {
        const std::uint32_t a = tris[t][k];
        const std::uint32_t b = tris[t][(k + 1) % 3];
        edge_set.emplace(std::min(a, b), std::max(a, b));
      }
    }
    std::vector<std::tuple<double, std::uint32_t, std::uint32_t>> edges;
    edges.reserve(edge_set.size());
    for (const auto& [a, b] : edge_set) {
      edges.emplace_back((pos[a] - pos[b]).squaredNorm(), a, b);
    }
    std::sort(edges.begin(), edges.end());
    std::vector<char> locked(pos.size(), 0);
    bool progress = false;
    for (const auto& [len, a, b] : edges) {
      if (live <= target) break;
      if (locked[a] || locked[b]) continue;
      const Vec3 mid = 0.5 * (pos[a] + pos[b]);
      // reject collapses that flip or squash any surviving neighbour face
      bool ok = true;
      for (std::uint32_t v : {a, b}) {
        for (std::uint32_t t : incident[v]) {
          if (!alive[t]) continue;
          const Triangle& tri = tris[t];
          const bool has_a = tri[0] == a || tri[1] == a || tri[2] == a;
          const bool has_b = tri[0] == b || tri[1] == b || tri[2] == b;
          if (has_a && has_b) continue;
          const Vec3 before = normal_of(tri);
          const Vec3 saved = pos[v];
          pos[v] = mid;
          const Vec3 after = normal_of(tri);
          pos[v] = saved;
          if (after.norm() < 1e-9 || before.normalized().dot(after.normalized()) < 0.5) {
            ok = false;
          }
        }
      }
      if (!ok) continue;
      pos[a] = mid;
      for (std::uint32_t t : incident[b]) {
        if (!alive[t]) continue;
        Triangle& tri = tris[t];
        const bool has_a = tri[0] == a || tri[1] == a || tri[2] == a;
        if (has_a) {
          alive[t] = 0;
          --live;
          continue;
        }
        for (auto& v : tri) {
          if (v == b) v = a;
        }
        incident[a].push_back(t);
      }
      incident[b].clear();
      for (std::uint32_t t : incident[a]) {
        if (!alive[t]) continue;
        for (std::uint32_t v : tris[t]) locked[v] = 1;
      }
      progress = true;
    }
    if (!progress) break;
  }

  std::vector<std::uint32_t> remap(pos.size(), ~0u);
  std::vector<Vec3> out_pos;
  std::vector<Triangle> out_tris;
  for (std::uint32_t t = 0; t < tris.size(); ++t) {
    if (!alive[t]) continue;
    Triangle nt{};
    for (int k = 0; k < 3; ++k) {
      const std::uint32_t v = tris[t][k];
      if (remap[v] == ~0u) {
        remap[v] = static_cast<std::uint32_t>(out_pos.size());
        out_pos.push_back(pos[v]);
      }
      nt[k] = remap[v];
    }
    out_tris.push_back(nt);
  }
  return {std::move(out_pos), std::move(out_tris)};
}

std::vector<std::uint32_t> largest_facade(const ProxyMesh& mesh) {
  // plane key: rounded normal and offset
  std::map<std::array<long long, 4>, std::pair<double, std::vector<std::uint32_t>>> planes;
  const auto q = [](double v) { return static_cast<long long>(std::llround(v * 1e3)); };
  for (std::uint32_t t = 0; t < mesh.triangle_count(); ++t) {
    const Vec3& n = mesh.normals()[t];
    if (std::abs(n.z()) > 0.1) {
      continue;
    }
    auto& entry = planes[{q(n.x()), q(n.y()), q(n.z()), q(n.dot(mesh.vertex(t, 0)))}];
    entry.first += mesh.triangle_area(t);
    entry.second.push_back(t);
  }
  const std::vector<std::uint32_t>* best = nullptr;
  double best_area = 0.0;
  for (const auto& [key, entry] : planes) {
    if (entry.first > best_area) {
      best_area = entry.first;
      best = &entry.second;
    }
  }
  if (best == nullptr) {
    throw InputError("mesh has no vertical face");
  }
  return *best;
}

ProxyMesh displace_triangles(const ProxyMesh& mesh, std::span<const std::uint32_t> triangles, double offset) {
  std::vector<Vec3> vertices(mesh.vertices().begin(), mesh.vertices().end());
  std::vector<Triangle> tris(mesh.triangles().begin(), mesh.triangles().end());
  std::map<std::uint32_t, std::uint32_t> moved; // original vertex -> displaced copy
  for (std::uint32_t t : triangles) {
    if (t >= tris.size()) {
      throw InputError("displace_triangles: triangle index " + std::to_string(t) + " out of range");
    }
    const Vec3 shift = offset * mesh.normals()[t];
    for (auto& v : tris[t]) {
      auto [it, inserted] = moved.try_emplace(v, static_cast<std::uint32_t>(vertices.size()));
      if (inserted) {
        vertices.push_back(mesh.vertices()[v] + shift);
      }
      v = it->second;
    }
  }
  return {std::move(vertices), std::move(tris)};
}

} // namespace skyplan
