#include "support.hpp"

#include "skyplan/binary_io.hpp"
#include "skyplan/training.hpp"

#include <doctest.h>

using namespace skyplan;

namespace {

DatasetConfig small_dataset_config(int phase) {
  DatasetConfig cfg;
  SceneSpec spec;
  spec.seed = 2;
  spec.proxy_level = ProxyLevel::inter;
  cfg.scenes = {spec};
  cfg.view_sets = {{"oblique", 9, 25.0, 1.0, 1}, {"nadir", 25, 30.0, 1.0, 2}, {"orbit", 16, 25.0, 1.0, 3}};
  cfg.samples_per_scene = 200;
  cfg.phase = phase;
  cfg.density = 20.0;
  cfg.seed = 5;
  return cfg;
}

const Dataset& small_dataset() {
  static const Dataset ds = build_dataset(small_dataset_config(1));
  return ds;
}

nn::ModelConfig small_model_config() {
  nn::ModelConfig cfg;
  cfg.hidden = 16;
  cfg.ff = 32;
  cfg.desc_ff = 32;
  return cfg;
}

std::vector<float> flat_parameters(LearnedModel& m) {
  std::vector<float> out;
  m.visit([&](const std::string&, nn::Param<float>& p) {
    out.insert(out.end(), p.value.data(), p.value.data() + p.value.size());
  });
  return out;
}

SurfaceSample at(double x, double y, double z) {
  SurfaceSample s;
  s.position = Vec3(x, y, z);
  return s;
}

} // namespace

TEST_CASE("accuracy projection target of two neighbours") {
  ReconCloud cloud;
  cloud.points = {Vec3(0.05, 0, 0), Vec3(0, 0.1, 0), Vec3(5, 5, 5)};
  cloud.accuracy = {0.1, 0.3, 0.01};
  const std::vector<SurfaceSample> samples = {at(0, 0, 0), at(20, 0, 0)};
  const auto t = phase1_targets(samples, cloud);
  REQUIRE(t.size() == 2);
  CHECK_FALSE(t[0].discarded);
  CHECK(t[0].value == 5.0);
  CHECK(t[0].phase == 1);
  CHECK(t[1].discarded);
  CHECK(kDefaultTau == 0.2);

  // a neighbour just outside tau does not count
  cloud.points[1] = Vec3(0, 0.2001, 0);
  CHECK(phase1_targets(samples, cloud)[0].value == doctest::Approx(10.0));
  CHECK_THROWS_AS(phase1_targets(samples, cloud, 0.0), InputError);
}

TEST_CASE("doubling every accuracy halves the target") {
  ReconCloud a;
  for (int i = 0; i < 40; ++i) {
    a.points.push_back(Vec3(0.003 * i, 0.002 * i, 0));
    a.accuracy.push_back(0.01 + 0.007 * i);
  }
  ReconCloud b = a;
  for (double& x : b.accuracy) {
    x *= 2.0;
  }
  const std::vector<SurfaceSample> samples = {at(0, 0, 0), at(0.1, 0.05, 0), at(0.06, 0.04, 0.01)};
  const auto ta = phase1_targets(samples, a);
  const auto tb = phase1_targets(samples, b);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    REQUIRE_FALSE(ta[i].discarded);
    CHECK(tb[i].value == doctest::Approx(ta[i].value / 2.0).epsilon(1e-14));
  }
}

TEST_CASE("completeness targets") {
  const ProxyMesh gt = skytest::plane_mesh(10.0);
  const std::vector<SurfaceSample> samples = {at(0, 0, 0.3)};
  ReconCloud cloud;
  cloud.points = {Vec3(0, 0, 0)};
  cloud.accuracy = {0.01};
  // sample 0.3 m above its ground-truth point, which the cloud covers exactly
  auto t = phase2_targets(gt, cloud, samples);
  CHECK(t[0].value == doctest::Approx(1.0 / (0.3 + 0.01)));

  const std::vector<SurfaceSample> on = {at(1, 1, 0)};
  cloud.points = {Vec3(1, 1, 0)};
  CHECK(phase2_targets(gt, cloud, on)[0].value == doctest::Approx(100.0));
  cloud.points = {Vec3(1.09, 1, 0)};
  CHECK(phase2_targets(gt, cloud, on)[0].value == doctest::Approx(10.0));
  CHECK(phase2_targets(gt, cloud, on)[0].phase == 2);

  const ReconCloud empty;
  for (const auto& target : phase2_targets(gt, empty, on)) {
    CHECK(target.value == doctest::Approx(1.0 / 2.01));
    CHECK_FALSE(target.discarded);
  }
}

TEST_CASE("dataset building counts, restrictions and determinism") {
  const Dataset& ds = small_dataset();
  CHECK(ds.records.size() <= 600);
  CHECK(ds.records.size() > 100);
  CHECK(ds.phase == 1);
  CHECK_FALSE(ds.has_descriptors);
  for (const auto& r : ds.records) {
    CHECK(r.target > 0.0f);
    CHECK(r.input.size() <= ds.k_cap);
  }

  DatasetConfig box = small_dataset_config(1);
  box.scenes[0].proxy_level = ProxyLevel::box;
  CHECK_THROWS_AS(build_dataset(box), InputError);
  DatasetConfig none = small_dataset_config(1);
  none.scenes.clear();
  CHECK_THROWS_AS(build_dataset(none), InputError);

  const std::string bytes = serialize_dataset(ds);
  CHECK(serialize_dataset(build_dataset(small_dataset_config(1))) == bytes);
  CHECK(serialize_dataset(parse_dataset(bytes)) == bytes);
  CHECK_THROWS_AS(parse_dataset(bytes.substr(0, bytes.size() - 3)), InputError);
  CHECK_THROWS_AS(parse_dataset("nonsense"), InputError);
}

TEST_CASE("phase-2 datasets carry descriptors and accept coarse proxies") {
  DatasetConfig cfg = small_dataset_config(2);
  cfg.scenes[0].proxy_level = ProxyLevel::box;
  cfg.samples_per_scene = 60;
  const Dataset ds = build_dataset(cfg);
  CHECK(ds.phase == 2);
  CHECK(ds.has_descriptors);
  CHECK(ds.records.size() <= 180);
  for (const auto& r : ds.records) {
    for (const auto& e : r.input.entries) {
      CHECK(e.descriptor.has_value());
    }
  }
  const auto dir = skytest::scratch_dir("dataset");
  save_dataset(ds, dir / "d.bin");
  CHECK(serialize_dataset(load_dataset(dir / "d.bin")) == serialize_dataset(ds));
  CHECK_THROWS_AS(load_dataset(dir / "missing.bin"), InputError);
}

TEST_CASE("constant targets are learned quickly") {
  Dataset ds = small_dataset();
  for (auto& r : ds.records) {
    r.target = 5.0f;
  }
  Checkpoint ck = fresh_checkpoint(small_model_config(), 4);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.lr = 1e-2;
  cfg.seed = 2;
  const TrainResult r = train(ck, ds, cfg);
  REQUIRE(r.loss_curve.size() == 20);
  CHECK(r.loss_curve.back() <= 0.1 * r.loss_curve.front());
  CHECK(ck.trained_phase == 1);
}

TEST_CASE("zero learning rate leaves the model untouched") {
  Checkpoint ck = fresh_checkpoint(small_model_config(), 4);
  const auto before = flat_parameters(ck.model);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 0.0;
  const TrainResult r = train(ck, small_dataset(), cfg);
  CHECK(flat_parameters(ck.model) == before);
  CHECK(r.loss_curve[0] == doctest::Approx(r.loss_curve[2]).epsilon(1e-6));
  CHECK(r.loss_curve[0] == doctest::Approx(evaluate_loss(ck.model, small_dataset(), 1)).epsilon(1e-5));
}

TEST_CASE("training is deterministic per seed") {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr = 1e-3;
  cfg.seed = 9;
  Checkpoint a = fresh_checkpoint(small_model_config(), 1);
  Checkpoint b = fresh_checkpoint(small_model_config(), 1);
  const auto ra = train(a, small_dataset(), cfg);
  const auto rb = train(b, small_dataset(), cfg);
  CHECK(ra.loss_curve == rb.loss_curve);
  CHECK(flat_parameters(a.model) == flat_parameters(b.model));
}

TEST_CASE("training preconditions") {
  Checkpoint ck = fresh_checkpoint(small_model_config(), 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.phase = 2;
  CHECK_THROWS_AS(train(ck, small_dataset(), cfg), InputError); // dataset is phase 1

  DatasetConfig p2 = small_dataset_config(2);
  p2.samples_per_scene = 20;
  const Dataset ds2 = build_dataset(p2);
  CHECK_THROWS_AS(train(ck, ds2, cfg), InputError); // untrained checkpoint
  ck.trained_phase = 1;
  CHECK_NOTHROW(train(ck, ds2, cfg));
  CHECK(ck.trained_phase == 2);

  Dataset empty;
  cfg.phase = 1;
  CHECK_THROWS_AS(train(ck, empty, cfg), InputError);
  cfg.neighbor_cap = 8;
  CHECK_THROWS_AS(train(ck, small_dataset(), cfg), InputError);
  TrainConfig bad;
  bad.lr = -1.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
}
