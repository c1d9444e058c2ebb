#include "support.hpp"

#include "skyplan/eval.hpp"
#include "skyplan/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace skyplan;

namespace {

// Uniform noise, reproducible per seed; ignores its inputs entirely.
class NoisePredictor final : public Predictor {
public:
  explicit NoisePredictor(std::uint64_t seed) : seed_(seed) {}
  [[nodiscard]] PredictorKind kind() const override { return PredictorKind::visible_count; }
  [[nodiscard]] std::vector<double> predict(std::span<const PointInput> inputs) const override {
    Rng rng(seed_);
    std::vector<double> out(inputs.size());
    for (double& v : out) {
      v = rng.uniform();
    }
    return out;
  }

private:
  std::uint64_t seed_;
};

std::vector<Vec3> plane_points(int n, double z) {
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      out.emplace_back(-4.0 + 8.0 * i / (n - 1), -4.0 + 8.0 * j / (n - 1), z);
    }
  }
  return out;
}

PredictorBenchmarkConfig small_benchmark() {
  PredictorBenchmarkConfig cfg;
  cfg.scene.seed = 4;
  cfg.view_sets = {{"oblique", 9, 25.0, 1.0, 1}};
  cfg.samples = 500;
  cfg.density = 10.0;
  cfg.seed = 3;
  return cfg;
}

} // namespace

TEST_CASE("spearman closed forms") {
  const std::vector<double> a = {1, 2, 3};
  const std::vector<double> b = {3, 1, 2};
  CHECK(spearman(a, b) == -0.5);
  CHECK(spearman(a, a) == doctest::Approx(1.0));
  const std::vector<double> rev = {3, 2, 1};
  CHECK(spearman(a, rev) == doctest::Approx(-1.0));

  const std::vector<double> tied = {1, 2, 2, 3};
  const auto r = average_ranks(tied);
  CHECK(r == std::vector<double>{1.0, 2.5, 2.5, 4.0});

  CHECK_THROWS_AS(spearman(a, std::vector<double>{1, 2}), InputError);
  CHECK_THROWS_AS(spearman(std::vector<double>{1}, std::vector<double>{1}), InputError);
  CHECK_THROWS_AS(spearman(a, std::vector<double>{5, 5, 5}), InputError);
}

TEST_CASE("spearman is unchanged by strictly increasing transforms") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(30), y(30);
    for (int i = 0; i < 30; ++i) {
      x[i] = rng.normal();
      y[i] = x[i] + rng.normal();
    }
    const double rho = spearman(x, y);
    std::vector<double> ex(30), ax(30), cx(30);
    for (int i = 0; i < 30; ++i) {
      ex[i] = std::exp(x[i]);
      ax[i] = 3.0 * x[i] - 7.0;
      cx[i] = x[i] * x[i] * x[i];
    }
    CHECK(spearman(ex, y) == doctest::Approx(rho).epsilon(1e-12));
    CHECK(spearman(ax, y) == doctest::Approx(rho).epsilon(1e-12));
    CHECK(spearman(cx, y) == doctest::Approx(rho).epsilon(1e-12));
    CHECK(spearman(y, x) == doctest::Approx(rho).epsilon(1e-12));
  }
}

TEST_CASE("percentiles and distance metrics") {
  CHECK(default_percents() == std::vector<double>{70, 80, 90, 95});
  const ProxyMesh gt = skytest::plane_mesh(10.0);
  const auto on = plane_points(30, 0.0);
  for (double v : accuracy_at(on, gt, default_percents())) {
    CHECK(v <= 1e-6);
  }
  const auto lifted = plane_points(30, 0.05);
  const auto acc = accuracy_at(lifted, gt, default_percents());
  CHECK(std::abs(acc[2] - 0.05) <= 1e-6);

  Rng rng(4);
  std::vector<double> d(200);
  for (double& x : d) {
    x = rng.uniform(0.0, 3.0);
  }
  double prev = -1.0;
  for (double p = 1; p <= 100; p += 3) {
    const double v = percentile(d, p);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK_THROWS_AS(percentile({}, 50), InputError);
  CHECK_THROWS_AS(accuracy_at({}, gt, default_percents()), InputError);

  for (double v : completeness_at(on, on, default_percents())) {
    CHECK(v == 0.0);
  }
  // reconstruction missing the x > 3 strip (about 12% of the points)
  std::vector<Vec3> partial;
  for (const auto& p : on) {
    if (p.x() <= 3.0) {
      partial.push_back(p);
    }
  }
  const auto comp = completeness_at(on, partial, default_percents());
  CHECK(comp[0] == 0.0);
  CHECK(comp[3] > 0.0);
  CHECK(comp[3] <= 1.0 + 1e-9);
  const auto within = completeness_within(on, partial, default_completeness_thresholds());
  CHECK(within[0] > 0.85);
  CHECK(within[0] < 0.95);
}

TEST_CASE("f-score") {
  const auto a = plane_points(20, 0.0);
  const FScore same = fscore(a, a);
  CHECK(same.precision == 100.0);
  CHECK(same.recall == 100.0);
  CHECK(same.f == 100.0);
  CHECK(kDefaultFScoreThreshold == 0.10);

  const FScore apart = fscore(a, plane_points(20, 1.0), 0.1);
  CHECK(apart.precision == 0.0);
  CHECK(apart.recall == 0.0);
  CHECK(apart.f == 0.0);

  std::vector<Vec3> half = a;
  half.resize(a.size() / 2);
  for (int i = 0; i < 40; ++i) {
    half.emplace_back(20.0 + i, 0, 0);
  }
  const FScore ab = fscore(half, a);
  const FScore ba = fscore(a, half);
  CHECK(ab.precision == doctest::Approx(ba.recall));
  CHECK(ab.recall == doctest::Approx(ba.precision));
  CHECK(ab.f == doctest::Approx(ba.f));
  CHECK(ab.f == doctest::Approx(2 * ab.precision * ab.recall / (ab.precision + ab.recall)));
  CHECK_THROWS_AS(fscore({}, a), InputError);
  CHECK_THROWS_AS(fscore(a, a, 0.0), InputError);

  const ProxyMesh gt = skytest::plane_mesh(10.0);
  CHECK(fscore_against_mesh(a, gt, a).f == 100.0);
}

TEST_CASE("predictor benchmark: determinism, self-correlation and a noise floor") {
  const auto heuristic = make_heuristic_predictor();
  const NoisePredictor noise(17);
  const std::vector<const Predictor*> predictors = {heuristic.get(), &noise};
  const PredictorBenchmark a = benchmark_predictors(small_benchmark(), predictors);
  const PredictorBenchmark b = benchmark_predictors(small_benchmark(), predictors);
  CHECK(to_json(a).dump() == to_json(b).dump());
  CHECK(to_csv(a) == to_csv(b));
  CHECK(to_text(a) == to_text(b));

  REQUIRE(a.view_sets.size() == 1);
  const ViewSetReport& r = a.view_sets[0];
  CHECK(r.evaluated > 100);
  CHECK(r.quality.size() == r.evaluated);
  CHECK(spearman(r.quality, r.quality) == doctest::Approx(1.0));
  REQUIRE(r.scores.size() == 2);
  CHECK(r.scores[0].increment == 0.0);
  CHECK(std::abs(r.scores[1].spearman_quality) < 0.15);
  CHECK(std::abs(r.scores[1].spearman_oracle) < 0.15);
}
