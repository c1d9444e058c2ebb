#include "support.hpp"

#include "skyplan/binary_io.hpp"
#include "skyplan/rng.hpp"

#include <doctest.h>

#include <fstream>

using namespace skyplan;
using skytest::scratch_dir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

const char* kCubeObj = R"(# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 3 4 8 7
f 1 5 8 4
f 2 3 7 6
)";

} // namespace

TEST_CASE("unit cube OBJ loads with twelve triangles and unit bounds") {
  const auto dir = scratch_dir("mesh_cube");
  write_text(dir / "cube.obj", kCubeObj);
  const ProxyMesh m = load_mesh(dir / "cube.obj");
  CHECK(m.triangle_count() == 12);
  CHECK(m.vertices().size() == 8);
  CHECK(m.bounds().lo.isApprox(Vec3::Zero()));
  CHECK(m.bounds().hi.isApprox(Vec3::Ones()));
  CHECK(m.dropped_degenerate() == 0);
}

TEST_CASE("zero-area triangles are dropped and counted") {
  const auto dir = scratch_dir("mesh_degenerate");
  write_text(dir / "deg.obj", std::string(kCubeObj) + "f 1 2 2\n");
  const ProxyMesh m = load_mesh(dir / "deg.obj");
  CHECK(m.triangle_count() == 12);
  CHECK(m.dropped_degenerate() == 1);
}

TEST_CASE("malformed and missing mesh files are input errors") {
  const auto dir = scratch_dir("mesh_bad");
  write_text(dir / "bad.obj", "v 0 0 0\nf 1 2 3\n");
  CHECK_THROWS_AS(load_mesh(dir / "bad.obj"), InputError);
  CHECK_THROWS_AS(load_mesh(dir / "missing.obj"), InputError);
  write_text(dir / "mesh.stl", "solid\n");
  CHECK_THROWS_AS(load_mesh(dir / "mesh.stl"), InputError);
}

TEST_CASE("OBJ and PLY round trips keep geometry") {
  const auto dir = scratch_dir("mesh_roundtrip");
  SceneSpec spec;
  spec.seed = 2;
  const Scene scene = generate_scene(spec);
  save_obj(scene.proxy, dir / "p.obj");
  save_ply(scene.proxy, dir / "p.ply");
  for (const char* name : {"p.obj", "p.ply"}) {
    const ProxyMesh back = load_mesh(dir / name);
    REQUIRE(back.triangle_count() == scene.proxy.triangle_count());
    for (std::size_t i = 0; i < back.vertices().size(); ++i) {
      CHECK((back.vertices()[i] - scene.proxy.vertices()[i]).norm() < 1e-4);
    }
  }
}

TEST_CASE("mesh invariants hold on generated scenes") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SceneSpec spec;
    spec.seed = seed;
    const Scene scene = generate_scene(spec);
    for (const ProxyMesh* m : {&scene.ground_truth, &scene.proxy}) {
      for (const Triangle& t : m->triangles()) {
        for (auto idx : t) {
          CHECK(idx < m->vertices().size());
        }
      }
      for (const Vec3& n : m->normals()) {
        CHECK(std::abs(n.norm() - 1.0) < 1e-6);
      }
      for (const Vec3& v : m->vertices()) {
        CHECK(m->bounds().contains(v, 1e-12));
      }
    }
  }
}

TEST_CASE("BVH ray casts match the all-triangle scan on 1000 random rays") {
  SceneSpec spec;
  spec.seed = 5;
  const Scene scene = generate_scene(spec);
  const ProxyMesh& m = scene.ground_truth;
  Rng rng(99);
  const Aabb& b = m.bounds();
  int hits = 0;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 o(rng.uniform(b.lo.x() - 10, b.hi.x() + 10), rng.uniform(b.lo.y() - 10, b.hi.y() + 10),
                 rng.uniform(0.5, b.hi.z() + 20));
    const Vec3 target(rng.uniform(b.lo.x(), b.hi.x()), rng.uniform(b.lo.y(), b.hi.y()), rng.uniform(b.lo.z(), b.hi.z()));
    const Vec3 dir = (target - o).normalized();
    const auto hit = m.raycast(o, dir, 0.0, 500.0);
    const double ref = skytest::brute_force_raycast(m, o, dir, 0.0, 500.0);
    REQUIRE(hit.has_value() == (ref >= 0.0));
    if (hit) {
      ++hits;
      CHECK(hit->t == doctest::Approx(ref).epsilon(1e-9));
      CHECK(m.occluded(o, dir, 0.0, 500.0));
    }
  }
  CHECK(hits > 100);
}

TEST_CASE("closest point agrees with a scan over every triangle") {
  SceneSpec spec;
  spec.seed = 4;
  const ProxyMesh m = generate_scene(spec).proxy;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p(rng.uniform(-5, 65), rng.uniform(-5, 65), rng.uniform(-2, 30));
    double best = 1e300;
    for (std::uint32_t t = 0; t < m.triangle_count(); ++t) {
      best = std::min(best, (closest_point_on_triangle(p, m.vertex(t, 0), m.vertex(t, 1), m.vertex(t, 2)) - p).norm());
    }
    CHECK(m.closest_point(p).distance == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("crc32 matches the standard check value") {
  CHECK(crc32_of("123456789") == 0xCBF43926u);
}
