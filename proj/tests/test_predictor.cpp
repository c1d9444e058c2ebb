#include "support.hpp"

#include "skyplan/binary_io.hpp"
#include "skyplan/nn/gradcheck.hpp"
#include "skyplan/predictor.hpp"
#include "skyplan/rng.hpp"
#include "skyplan/view_sets.hpp"

#include <doctest.h>

#include <numbers>

using namespace skyplan;

namespace {

constexpr double kPi = std::numbers::pi;

PointEntry make_entry(const SurfaceSample& s, const Viewpoint& v, std::uint32_t idx) {
  PointEntry e;
  e.view_index = idx;
  e.feature = point_view_feature(s, v);
  e.encoded = normalize_feature(e.feature, v.max_range);
  return e;
}

PointInput random_input(Rng& rng, std::size_t entries, bool descriptors) {
  PointInput in;
  in.sample.position = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 5));
  in.sample.normal = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
  for (std::size_t i = 0; i < entries; ++i) {
    Vec3 u(rng.normal(), rng.normal(), rng.normal());
    u.normalize();
    if (u.dot(in.sample.normal) < 0) {
      u = -u;
    }
    Viewpoint v;
    v.position = in.sample.position + rng.uniform(2.0, 99.0) * u;
    v.direction = (in.sample.position - v.position).normalized();
    PointEntry e = make_entry(in.sample, v, static_cast<std::uint32_t>(i));
    if (descriptors) {
      ViewDescriptor d;
      for (float& x : d) {
        x = static_cast<float>(rng.uniform(-1, 1));
      }
      e.descriptor = d;
    }
    in.entries.push_back(e);
  }
  return in;
}

PointInput permuted(const PointInput& in, Rng& rng) {
  PointInput out = in;
  for (std::size_t i = out.entries.size(); i > 1; --i) {
    std::swap(out.entries[i - 1], out.entries[rng.below(i)]);
  }
  return out;
}

std::shared_ptr<LearnedModel> small_model(std::uint64_t seed) {
  nn::ModelConfig cfg;
  cfg.hidden = 16;
  cfg.ff = 32;
  cfg.desc_ff = 32;
  auto m = std::make_shared<LearnedModel>(cfg);
  m->init(seed);
  return m;
}

} // namespace

TEST_CASE("heuristic score is zero without a pair of views") {
  Rng rng(1);
  const HeuristicParams p;
  CHECK(heuristic_score(random_input(rng, 0, false), p).value == 0.0);
  CHECK(heuristic_score(random_input(rng, 1, false), p).value == 0.0);
}

TEST_CASE("heuristic pair at the upper parallax knee matches the closed form") {
  const HeuristicParams p;
  PointInput in;
  for (int i = 0; i < 2; ++i) {
    PointEntry e;
    e.feature.omega = i == 0 ? 0.0 : kPi;
    e.feature.phi = kPi / 2 - p.alpha3 / 2; // pair parallax alpha3
    e.feature.d = p.d_max / 2;
    e.feature.alpha = 0.0;
    in.entries.push_back(e);
  }
  const double w1 = 1.0 / (1.0 + std::exp(-p.k1 * (p.alpha3 - p.alpha1)));
  CHECK(heuristic_score(in, p).value == doctest::Approx(w1 * 0.5 * 0.5 * 1.0).epsilon(1e-12));
}

TEST_CASE("heuristic defaults and their JSON round trip") {
  const HeuristicParams p;
  CHECK(p.k1 == 32.0);
  CHECK(p.k3 == 8.0);
  CHECK(p.alpha1 == kPi / 16);
  CHECK(p.alpha3 == kPi / 4);
  const nlohmann::json j = p;
  const HeuristicParams q = j.get<HeuristicParams>();
  CHECK(q.k1 == 32.0);
  CHECK(q.k3 == 8.0);
  CHECK(q.alpha1 == kPi / 16);
  CHECK(q.alpha3 == kPi / 4);
  HeuristicParams bad;
  bad.alpha1 = 1.0;
  bad.alpha3 = 0.5;
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("adding a view never lowers the heuristic score") {
  Rng rng(2);
  const HeuristicParams p;
  for (int trial = 0; trial < 1000; ++trial) {
    PointInput in = random_input(rng, 1 + rng.below(6), false);
    const double before = heuristic_score(in, p).value;
    PointInput more = random_input(rng, 1, false);
    PointInput grown = in;
    Viewpoint v;
    v.position = in.sample.position + more.entries[0].feature.d * entry_direction(more.sample, more.entries[0].feature);
    v.direction = (in.sample.position - v.position).normalized();
    if ((v.position - in.sample.position).dot(in.sample.normal) <= 0) {
      continue;
    }
    grown.entries.push_back(make_entry(in.sample, v, 99));
    CHECK(heuristic_score(grown, p).value >= before - 1e-12);
  }
}

TEST_CASE("visible count equals an independent recount on random scenes") {
  for (std::uint64_t seed : {1u, 2u}) {
    SceneSpec spec;
    spec.seed = seed;
    const Scene scene = generate_scene(spec);
    const auto views = make_view_set({"oblique", 9, 25.0, 1.0, seed}, scene.proxy, {});
    for (const auto& s : sample_surface(scene.proxy, 100, seed)) {
      const PointInput in = assemble_point_input(scene.proxy, s, views, nullptr, 1000);
      std::size_t n = 0;
      for (const auto& v : views) {
        n += skytest::brute_force_visible(scene.proxy, v, s) ? 1 : 0;
      }
      CHECK(visible_count_score(in).value == static_cast<double>(n));
    }
  }
  PointInput empty;
  CHECK(visible_count_score(empty).value == 0.0);
}

TEST_CASE("oracle predictor reproduces oracle quality from the features alone") {
  SceneSpec spec;
  spec.seed = 3;
  const Scene scene = generate_scene(spec);
  const auto views = make_view_set({"orbit", 16, 25.0, 1.0, 1}, scene.ground_truth, {});
  for (const auto& s : sample_surface(scene.ground_truth, 200, 4)) {
    const PointInput in = assemble_point_input(scene.ground_truth, s, views, nullptr, 1000);
    CHECK(oracle_score(in).value == doctest::Approx(oracle_quality(scene.ground_truth, views, s)).epsilon(1e-7));
  }
}

TEST_CASE("learned heads are deterministic and invariant to entry order") {
  const auto model = small_model(5);
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const PointInput in = random_input(rng, 1 + rng.below(12), true);
    const double s = predict_spatial(*model, in).value;
    const double u = predict_uncertainty_aware(*model, in).value;
    CHECK(s == predict_spatial(*model, in).value);
    CHECK(u == predict_uncertainty_aware(*model, in).value);
    const PointInput p = permuted(in, rng);
    CHECK(std::abs(predict_spatial(*model, p).value - s) <= 1e-6);
    CHECK(std::abs(predict_uncertainty_aware(*model, p).value - u) <= 1e-6);
  }
}

TEST_CASE("uncertainty head needs descriptors and stays finite on constant ones") {
  const auto model = small_model(7);
  Rng rng(8);
  PointInput in = random_input(rng, 4, false);
  CHECK_THROWS_AS(predict_uncertainty_aware(*model, in), InputError);
  for (float c : {0.0f, 0.75f}) {
    for (auto& e : in.entries) {
      ViewDescriptor d;
      d.fill(c);
      e.descriptor = d;
    }
    const double u = predict_uncertainty_aware(*model, in).value;
    CHECK(std::isfinite(u));
    CHECK(u >= 0.0);
  }
  CHECK_THROWS_AS(make_learned_predictor(nullptr, false), InputError);
}

TEST_CASE("all predictors give finite non-negative values on many random inputs") {
  const auto model = small_model(9);
  Rng rng(10);
  std::vector<PointInput> inputs;
  for (int i = 0; i < 100000; ++i) {
    inputs.push_back(random_input(rng, rng.below(6), true));
  }
  const auto h = make_heuristic_predictor();
  const auto c = make_visible_count_predictor();
  const auto o = make_oracle_predictor();
  const auto ls = make_learned_predictor(model, false);
  const auto lu = make_learned_predictor(model, true);
  CHECK(lu->needs_descriptors());
  CHECK_FALSE(ls->needs_descriptors());
  for (const Predictor* p : {h.get(), c.get(), o.get(), ls.get(), lu.get()}) {
    const auto values = p->predict(inputs);
    REQUIRE(values.size() == inputs.size());
    CHECK(std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v) && v >= 0.0; }));
  }
  // batched evaluation agrees with the single-input path
  const auto batched = ls->predict(std::span<const PointInput>(inputs.data(), 20));
  for (int i = 0; i < 20; ++i) {
    CHECK(batched[i] == doctest::Approx(predict_spatial(*model, inputs[i]).value).epsilon(1e-5));
  }
}

TEST_CASE("predictor kind names round trip") {
  for (auto k : {PredictorKind::heuristic, PredictorKind::visible_count, PredictorKind::oracle,
                 PredictorKind::learned_spatial, PredictorKind::learned_uncertainty}) {
    CHECK(predictor_kind_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(predictor_kind_from_string("magic"), InputError);
}

TEST_CASE("checkpoint round trip is bit exact and damage is detected") {
  const auto dir = skytest::scratch_dir("checkpoint");
  nn::ModelConfig cfg = nn::gradcheck_config();
  Checkpoint ck = fresh_checkpoint(cfg, 3);
  ck.trained_phase = 1;
  save_checkpoint(ck, dir / "a.bin");
  Checkpoint back = load_checkpoint(dir / "a.bin");
  CHECK(back.trained_phase == 1);
  CHECK(back.model.config() == cfg);
  std::vector<nn::Matrix<float>> va, vb;
  ck.model.visit([&](const std::string&, const nn::Param<float>& p) { va.push_back(p.value); });
  back.model.visit([&](const std::string&, const nn::Param<float>& p) { vb.push_back(p.value); });
  REQUIRE(va.size() == vb.size());
  for (std::size_t i = 0; i < va.size(); ++i) {
    CHECK(va[i] == vb[i]);
  }

  const std::string bytes = read_file_bytes(dir / "a.bin");
  write_file_bytes(dir / "short.bin", bytes.substr(0, bytes.size() - 9));
  CHECK_THROWS_AS(load_checkpoint(dir / "short.bin"), InputError);
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  write_file_bytes(dir / "flip.bin", flipped);
  CHECK_THROWS_AS(load_checkpoint(dir / "flip.bin"), InputError);

  nn::ModelConfig other = cfg;
  other.heads = cfg.heads == 2 ? 1 : 2;
  try {
    (void)load_checkpoint(dir / "a.bin", &other);
    FAIL("architecture mismatch not detected");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("heads") != std::string::npos);
  }
}
