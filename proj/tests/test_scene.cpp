#include "support.hpp"

#include "skyplan/rng.hpp"
#include "skyplan/view_sets.hpp"

#include <doctest.h>

#include <numbers>

using namespace skyplan;

namespace {

// Straight transcription of the simulated-reconstruction quality: coverage,
// best-pair parallax, two-nearest range and best grazing cosine.
double reference_quality(const SurfaceSample& s, const std::vector<Vec3>& cams) {
  const double n = static_cast<double>(cams.size());
  if (cams.size() < 2) {
    return 0.0;
  }
  const double cov = 1.0 - std::exp(-n / 4.0);
  double tri = 0.0;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    for (std::size_t j = i + 1; j < cams.size(); ++j) {
      const double psi = std::acos(std::clamp((cams[i] - s.position).normalized().dot((cams[j] - s.position).normalized()), -1.0, 1.0));
      const double dev = psi * 180.0 / std::numbers::pi - 20.0;
      tri = std::max(tri, std::exp(-dev * dev / (2.0 * 15.0 * 15.0)));
    }
  }
  std::vector<double> d;
  double graze = 0.0;
  for (const Vec3& c : cams) {
    d.push_back((c - s.position).norm());
    graze = std::max(graze, s.normal.dot((c - s.position).normalized()));
  }
  std::sort(d.begin(), d.end());
  const double res = std::exp(-0.5 * (d[0] + d[1]) / 40.0);
  return cov * tri * res * graze;
}

Viewpoint look_at(const Vec3& from, const Vec3& at) {
  Viewpoint v;
  v.position = from;
  v.direction = (at - from).normalized();
  return v;
}

Vec3 random_unit(Rng& rng) {
  Vec3 v;
  do {
    v = Vec3(rng.normal(), rng.normal(), rng.normal());
  } while (v.norm() < 1e-6);
  return v.normalized();
}

} // namespace

TEST_CASE("sampling a single triangle keeps every sample on it") {
  const ProxyMesh tri({{0, 0, 0}, {2, 0, 0}, {0, 2, 0}}, {{0, 1, 2}});
  const auto s = sample_surface(tri, 3, 7);
  REQUIRE(s.size() == 3);
  for (const auto& p : s) {
    CHECK(p.source_triangle == 0);
    CHECK(p.normal.isApprox(Vec3::UnitZ()));
    CHECK(std::abs(p.position.z()) < 1e-12);
    CHECK(p.position.x() >= -1e-12);
    CHECK(p.position.y() >= -1e-12);
    CHECK(p.position.x() + p.position.y() <= 2.0 + 1e-12);
  }
}

TEST_CASE("cube samples are spread by area over the six faces") {
  const ProxyMesh cube = skytest::unit_cube();
  const auto s = sample_surface(cube, 600, 11);
  REQUIRE(s.size() == 600);
  std::map<std::tuple<int, int, int>, int> per_face;
  for (const auto& p : s) {
    per_face[{int(std::lround(p.normal.x())), int(std::lround(p.normal.y())), int(std::lround(p.normal.z()))}]++;
  }
  REQUIRE(per_face.size() == 6);
  for (const auto& [face, n] : per_face) {
    CHECK(n >= 80);
    CHECK(n <= 120);
  }
}

TEST_CASE("surface sampling is deterministic and lies on the mesh") {
  SceneSpec spec;
  spec.seed = 6;
  const ProxyMesh m = generate_scene(spec).proxy;
  for (auto sampler : {&sample_surface, &sample_uniform}) {
    const auto a = sampler(m, 500, 42);
    const auto b = sampler(m, 500, 42);
    REQUIRE(a.size() == 500);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].position == b[i].position);
      CHECK(m.closest_point(a[i].position).distance < 1e-6);
      CHECK(std::abs(a[i].normal.norm() - 1.0) < 1e-6);
    }
  }
  CHECK_THROWS_AS(sample_surface(ProxyMesh{}, 10, 1), InputError);
}

TEST_CASE("an unobstructed nadir view sees the sample and a box in between hides it") {
  SurfaceSample s;
  Viewpoint v;
  v.position = {0, 0, 10};
  v.direction = {0, 0, -1};
  v.fov = std::numbers::pi / 2;
  v.max_range = 100;
  const ProxyMesh ground = skytest::plane_mesh(4.0);
  CHECK(visible(ground, v, s));
  const ProxyMesh occluder = merge_meshes(ground, skytest::box_mesh({-0.5, -0.5, 4.5}, {0.5, 0.5, 5.5}));
  CHECK_FALSE(visible(occluder, v, s));
}

TEST_CASE("visibility conditions: range, cone and facing") {
  const ProxyMesh ground = skytest::plane_mesh(4.0);
  SurfaceSample s;
  Viewpoint v = look_at({0, 0, 10}, Vec3::Zero());
  v.max_range = 9.0;
  CHECK_FALSE(visible(ground, v, s));
  v.max_range = 100.0;
  v.direction = Vec3(1, 0, -1).normalized(); // 45 deg off, outside a 60 deg cone
  CHECK_FALSE(visible(ground, v, s));
  Viewpoint below = look_at({0, 0, -10}, Vec3::Zero());
  CHECK_FALSE(visible(ground, below, s));
}

TEST_CASE("visibility agrees with the brute-force oracle on random pairs") {
  SceneSpec spec;
  spec.seed = 8;
  const Scene scene = generate_scene(spec);
  const auto samples = sample_uniform(scene.ground_truth, 400, 3);
  Rng rng(17);
  int seen = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto& s = samples[rng.below(samples.size())];
    Viewpoint v;
    v.position = Vec3(rng.uniform(-20, 80), rng.uniform(-20, 80), rng.uniform(1, 60));
    v.direction = (s.position + 5.0 * random_unit(rng) - v.position).normalized();
    v.max_range = 70.0;
    const bool fast = visible(scene.ground_truth, v, s);
    CHECK(fast == skytest::brute_force_visible(scene.ground_truth, v, s));
    seen += fast;
  }
  CHECK(seen > 50);
}

TEST_CASE("visibility is unchanged by a rigid motion of mesh, view and sample") {
  SceneSpec spec;
  spec.seed = 9;
  const Scene scene = generate_scene(spec);
  const ProxyMesh& m = scene.proxy;
  Rng rng(5);
  const Eigen::Matrix3d R = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  const Vec3 t(13.0, -4.0, 2.5);
  std::vector<Vec3> moved;
  for (const Vec3& p : m.vertices()) {
    moved.push_back(R * p + t);
  }
  const ProxyMesh mm(moved, std::vector<Triangle>(m.triangles().begin(), m.triangles().end()));
  const auto samples = sample_surface(m, 300, 4);
  int agree = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto& s = samples[rng.below(samples.size())];
    Viewpoint v;
    v.position = Vec3(rng.uniform(-10, 70), rng.uniform(-10, 70), rng.uniform(2, 50));
    v.direction = (s.position - v.position).normalized();
    SurfaceSample s2 = s;
    s2.position = R * s.position + t;
    s2.normal = R * s.normal;
    Viewpoint v2 = v;
    v2.position = R * v.position + t;
    v2.direction = R * v.direction;
    agree += visible(m, v, s) == visible(mm, v2, s2);
  }
  // rounding can flip pairs whose ray grazes an edge; allow a handful
  CHECK(agree >= 995);
}

TEST_CASE("generated scenes are deterministic") {
  SceneSpec spec;
  spec.seed = 12;
  const Scene a = generate_scene(spec);
  const Scene b = generate_scene(spec);
  REQUIRE(a.ground_truth.vertices().size() == b.ground_truth.vertices().size());
  CHECK(std::equal(a.ground_truth.vertices().begin(), a.ground_truth.vertices().end(), b.ground_truth.vertices().begin()));
  CHECK(std::equal(a.proxy.vertices().begin(), a.proxy.vertices().end(), b.proxy.vertices().begin()));
  CHECK(std::equal(a.proxy.triangles().begin(), a.proxy.triangles().end(), b.proxy.triangles().begin()));
}

TEST_CASE("fine proxy stays within half a meter of the ground truth") {
  SceneSpec spec;
  spec.seed = 3;
  const Scene scene = generate_scene(spec);
  double worst = 0.0;
  for (const auto& s : sample_uniform(scene.ground_truth, 5000, 1)) {
    worst = std::max(worst, scene.proxy.closest_point(s.position).distance);
  }
  for (const auto& s : sample_uniform(scene.proxy, 5000, 2)) {
    worst = std::max(worst, scene.ground_truth.closest_point(s.position).distance);
  }
  CHECK(worst <= 0.5);
}

TEST_CASE("box proxy has at most twelve triangles per building besides the ground") {
  SceneSpec spec;
  spec.seed = 4;
  spec.proxy_level = ProxyLevel::box;
  const Scene scene = generate_scene(spec);
  std::size_t above_ground = 0;
  for (std::uint32_t t = 0; t < scene.proxy.triangle_count(); ++t) {
    const bool ground = scene.proxy.vertex(t, 0).z() == 0.0 && scene.proxy.vertex(t, 1).z() == 0.0 &&
                        scene.proxy.vertex(t, 2).z() == 0.0;
    above_ground += ground ? 0 : 1;
  }
  CHECK(above_ground <= 12u * static_cast<std::size_t>(spec.buildings));
}

TEST_CASE("scene spec validation") {
  SceneSpec bad;
  bad.height_min = 20;
  bad.height_max = 10;
  CHECK_THROWS_AS(bad.validate(), InputError);
  SceneSpec crowded;
  crowded.footprint_x = 12;
  crowded.footprint_y = 12;
  crowded.buildings = 30;
  CHECK_THROWS_AS(generate_scene(crowded), InputError);
  CHECK_THROWS_AS(proxy_level_from_string("medium"), InputError);
  for (const char* name : {"box", "coarse", "inter", "fine"}) {
    CHECK(to_string(proxy_level_from_string(name)) == name);
  }
}

TEST_CASE("oracle quality of zero or one visible view is zero") {
  const ProxyMesh ground = skytest::plane_mesh(200.0);
  SurfaceSample s;
  std::vector<Viewpoint> views;
  CHECK(oracle_quality(ground, views, s) == 0.0);
  views.push_back(look_at({0, 0, 30}, Vec3::Zero()));
  CHECK(oracle_quality(ground, views, s) == 0.0);
}

TEST_CASE("two views at plus and minus ten degrees match the closed form") {
  const ProxyMesh ground = skytest::plane_mesh(200.0);
  SurfaceSample s;
  const double a = 10.0 * std::numbers::pi / 180.0;
  const Vec3 c1(40 * std::sin(a), 0, 40 * std::cos(a));
  const Vec3 c2(-40 * std::sin(a), 0, 40 * std::cos(a));
  const std::vector<Viewpoint> views = {look_at(c1, Vec3::Zero()), look_at(c2, Vec3::Zero())};
  // coverage 1 - e^-0.5, parallax exactly 20 deg, range e^-1, grazing cos 10 deg
  const double expected = (1.0 - std::exp(-0.5)) * 1.0 * std::exp(-1.0) * std::cos(a);
  CHECK(oracle_quality(ground, views, s) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(reference_quality(s, {c1, c2}) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("oracle quality stays in [0,1], matches the reference and never drops when a view is added") {
  const ProxyMesh ground = skytest::plane_mesh(400.0);
  Rng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    SurfaceSample s;
    s.position = Vec3(rng.uniform(-20, 20), rng.uniform(-20, 20), 0.0);
    std::vector<Viewpoint> views;
    std::vector<Vec3> cams;
    const int n = 1 + static_cast<int>(rng.below(8));
    double prev = 0.0;
    for (int i = 0; i < n; ++i) {
      Vec3 u = random_unit(rng);
      u.z() = std::abs(u.z()) + 0.05;
      const Vec3 c = s.position + rng.uniform(5, 90) * u.normalized();
      views.push_back(look_at(c, s.position));
      if (visible(ground, views.back(), s)) {
        cams.push_back(c);
      }
      const double q = oracle_quality(ground, views, s);
      CHECK(q >= 0.0);
      CHECK(q <= 1.0);
      CHECK(q >= prev - 1e-12);
      CHECK(q == doctest::Approx(reference_quality(s, cams)).epsilon(1e-9));
      prev = q;
    }
  }
}

TEST_CASE("reconstruction with no views is empty and is deterministic otherwise") {
  SceneSpec spec;
  spec.seed = 2;
  const Scene scene = generate_scene(spec);
  CHECK(simulate_reconstruction(scene.ground_truth, {}, 20.0, 1).points.empty());
  const auto views = make_view_set({"nadir", 16, 30.0, 1.0, 1}, scene.proxy, {});
  const auto a = simulate_reconstruction(scene.ground_truth, views, 5.0, 9);
  const auto b = simulate_reconstruction(scene.ground_truth, views, 5.0, 9);
  REQUIRE(!a.points.empty());
  REQUIRE(a.points.size() == b.points.size());
  CHECK(std::equal(a.points.begin(), a.points.end(), b.points.begin()));
  for (double acc : a.accuracy) {
    CHECK(acc >= 0.0);
  }
  CHECK_THROWS_AS(simulate_reconstruction(scene.ground_truth, views, 0.0, 1), InputError);
}

TEST_CASE("a dense ring around a cube retains most vertical-face candidates") {
  const ProxyMesh cube = skytest::box_mesh({-5, -5, 0}, {5, 5, 10});
  const auto ring = orbit_ring({0, 0, 5}, 30.0, 5.0, 16, {});
  // expected retention from the stated rule, by Monte Carlo over the faces
  double expected = 0.0;
  int n = 0;
  for (const auto& s : sample_uniform(cube, 4000, 3)) {
    if (std::abs(s.normal.z()) > 0.5) {
      continue;
    }
    expected += std::min(1.0, oracle_quality(cube, ring, s) / 0.2);
    ++n;
  }
  expected /= n;
  CHECK(expected >= 0.8);
  const double density = 20.0;
  const auto cloud = simulate_reconstruction(cube, ring, density, 4);
  std::size_t side = 0;
  for (const Vec3& p : cloud.points) {
    side += (p.z() > 1.0 && p.z() < 9.0 && std::max(std::abs(p.x()), std::abs(p.y())) > 4.0) ? 1 : 0;
  }
  const double candidates = density * 4.0 * 10.0 * 8.0;
  CHECK(static_cast<double>(side) / candidates >= 0.8);
}
