#include "skyplan/training.hpp"

#include "skyplan/binary_io.hpp"
#include "skyplan/nn/optim.hpp"
#include "skyplan/parallel.hpp"
#include "skyplan/rng.hpp"
#include "skyplan/spatial_index.hpp"

#include <numbers>

namespace skyplan {

std::vector<TrainingTarget> phase1_targets(std::span<const SurfaceSample> proxy_samples, const ReconCloud& cloud,
                                           double tau) {
  if (!(tau > 0.0)) {
    throw InputError("tau must be positive");
  }
  if (cloud.points.size() != cloud.accuracy.size()) {
    throw InputError("reconstruction cloud: point and accuracy counts differ");
  }
  std::vector<TrainingTarget> out(proxy_samples.size());
  const PointGrid grid(cloud.points, tau);
  parallel_for(proxy_samples.size(), [&](std::size_t i) {
    std::vector<std::uint32_t> near;
    grid.within(proxy_samples[i].position, tau, near);
    TrainingTarget& t = out[i];
    t.sample_index = static_cast<std::uint32_t>(i);
    t.phase = 1;
    if (near.empty()) {
      t.discarded = true;
      return;
    }
    double sum = 0.0;
    for (std::uint32_t q : near) {
      sum += std::max(cloud.accuracy[q], kAccuracyFloor);
    }
    t.value = static_cast<double>(near.size()) / sum;
  });
  return out;
}

std::vector<TrainingTarget> phase2_targets(const ProxyMesh& gt, const ReconCloud& cloud,
                                           std::span<const SurfaceSample> proxy_samples) {
  if (gt.empty()) {
    throw InputError("phase-2 targets need a non-empty ground-truth mesh");
  }
  std::vector<TrainingTarget> out(proxy_samples.size());
  const KdTree tree(cloud.points);
  parallel_for(proxy_samples.size(), [&](std::size_t i) {
    const Vec3& p = proxy_samples[i].position;
    const ClosestPoint g = gt.closest_point(p);
    double c = kCompletenessCap;
    if (!tree.empty()) {
      c = std::min(kCompletenessCap, g.distance + tree.nearest(g.point).second);
    }
    out[i] = {static_cast<std::uint32_t>(i), 1.0 / (c + kCompletenessOffset), 2, false};
  });
  return out;
}

void DatasetConfig::validate() const {
  if (scenes.empty()) {
    throw InputError("dataset needs at least one scene spec");
  }
  if (phase != 1 && phase != 2) {
    throw InputError("dataset phase must be 1 or 2");
  }
  for (const SceneSpec& s : scenes) {
    s.validate();
    if (phase == 1 && s.proxy_level != ProxyLevel::fine && s.proxy_level != ProxyLevel::inter) {
      throw InputError("configuration error: phase 1 trains on fine and inter proxies only, got '" +
                       to_string(s.proxy_level) + "'");
    }
  }
  if (samples_per_scene == 0) {
    throw InputError("samples_per_scene must be at least 1");
  }
  if (!(density > 0.0)) {
    throw InputError("reconstruction density must be positive");
  }
  if (!(tau > 0.0)) {
    throw InputError("tau must be positive");
  }
  if (k_cap == 0) {
    throw InputError("k_cap must be at least 1");
  }
}

DescriptorProvider make_descriptor_provider(const ProxyMesh& gt, const ProxyMesh& proxy,
                                            std::span<const Viewpoint> views, std::uint64_t seed) {
  return [&gt, &proxy, views, seed](std::uint32_t index, const SurfaceSample& s) {
    return synthetic_descriptor(gt, proxy, views[index], s, seed);
  };
}

Dataset build_dataset(const DatasetConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  Dataset ds;
  ds.phase = cfg.phase;
  ds.k_cap = cfg.k_cap;
  ds.has_descriptors = cfg.phase == 2;
  ds.max_range = cfg.camera.max_range;

  nlohmann::json scenes = nlohmann::json::array();
  nlohmann::json sets_used = nlohmann::json::array();
  for (std::size_t si = 0; si < cfg.scenes.size(); ++si) {
    const SceneSpec& spec = cfg.scenes[si];
    scenes.push_back(spec);
    const Scene scene = generate_scene(spec);
    const auto samples = sample_surface(scene.proxy, cfg.samples_per_scene, derive_seed(cfg.seed, si, 1));
    auto recipes = cfg.view_sets.empty() ? default_view_mix(derive_seed(cfg.seed, si, 2)) : cfg.view_sets;
    nlohmann::json scene_sets = nlohmann::json::array();
    for (std::size_t ri = 0; ri < recipes.size(); ++ri) {
      const ViewSetRecipe& recipe = recipes[ri];
      const auto views = make_view_set(recipe, scene.proxy, cfg.camera);
      scene_sets.push_back({{"kind", recipe.kind},
                            {"count", recipe.count},
                            {"altitude", recipe.altitude},
                            {"keep", recipe.keep},
                            {"seed", recipe.seed},
                            {"views", views.size()}});
      const auto cloud = simulate_reconstruction(scene.ground_truth, views, cfg.density, derive_seed(cfg.seed, si, ri, 3));
      const auto targets = cfg.phase == 1 ? phase1_targets(samples, cloud, cfg.tau)
                                          : phase2_targets(scene.ground_truth, cloud, samples);
      DescriptorProvider provider;
      if (cfg.phase == 2) {
        provider = make_descriptor_provider(scene.ground_truth, scene.proxy, views, derive_seed(cfg.seed, si, ri, 4));
      }
      std::vector<DatasetRecord> recs(samples.size());
      parallel_for(samples.size(), [&](std::size_t i) {
        if (targets[i].discarded) {
          return;
        }
        recs[i].input = assemble_point_input(scene.proxy, samples[i], views, provider ? &provider : nullptr, cfg.k_cap);
        recs[i].target = static_cast<float>(targets[i].value);
        recs[i].phase = static_cast<std::uint8_t>(cfg.phase);
      });
      std::size_t kept = 0;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!targets[i].discarded) {
          ds.records.push_back(std::move(recs[i]));
          ++kept;
        }
      }
      if (progress) {
        progress("scene " + std::to_string(si) + " view set " + std::to_string(ri) + " (" + recipe.kind + ", " +
                 std::to_string(views.size()) + " views): " + std::to_string(kept) + "/" +
                 std::to_string(samples.size()) + " records");
      }
    }
    sets_used.push_back(scene_sets);
  }
  ds.provenance = {{"scenes", scenes},
                   {"view_sets", sets_used},
                   {"samples_per_scene", cfg.samples_per_scene},
                   {"seed", cfg.seed},
                   {"density", cfg.density},
                   {"tau", cfg.tau},
                   {"camera", {{"fov", cfg.camera.fov}, {"max_range", cfg.camera.max_range}}},
                   {"oracle_version", kOracleVersion}};
  return ds;
}

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

} // namespace

std::string serialize_dataset(const Dataset& ds) {
  const nlohmann::json header = {{"phase", ds.phase},
                                 {"k_cap", ds.k_cap},
                                 {"has_descriptors", ds.has_descriptors},
                                 {"max_range", ds.max_range},
                                 {"provenance", ds.provenance}};
  ByteWriter w;
  w.bytes("SKDS");
  w.u32(kDatasetVersion);
  w.str(header.dump());
  w.u64(ds.records.size());
  for (const DatasetRecord& rec : ds.records) {
    const PointInput& in = rec.input;
    if (in.entries.size() > ds.k_cap) {
      throw InputError("dataset record has more entries than k_cap");
    }
    for (int c = 0; c < 3; ++c) {
      w.f64(in.sample.position[c]);
    }
    for (int c = 0; c < 3; ++c) {
      w.f64(in.sample.normal[c]);
    }
    w.u32(in.sample.source_triangle);
    for (std::size_t k = 0; k < ds.k_cap; ++k) {
      const bool used = k < in.entries.size();
      w.u32(used ? in.entries[k].view_index : 0u);
      for (std::size_t c = 0; c < kFeatureDim; ++c) {
        w.f32(used ? in.entries[k].encoded[c] : 0.0f);
      }
      w.u8(used ? 1 : 0);
      if (ds.has_descriptors) {
        if (used && !in.entries[k].descriptor) {
          throw InputError("dataset declares descriptors but an entry has none");
        }
        for (std::size_t c = 0; c < kDescriptorDim; ++c) {
          w.f32(used ? (*in.entries[k].descriptor)[c] : 0.0f);
        }
      }
    }
    w.f32(rec.target);
    w.u8(rec.phase);
  }
  return std::move(w.data());
}

Dataset parse_dataset(std::string_view bytes, const std::string& what) {
  ByteReader r(bytes, what);
  if (r.bytes(4) != "SKDS") {
    throw InputError(what + ": not a dataset file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw InputError(what + ": unsupported dataset version " + std::to_string(version));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(what + ": malformed header: " + e.what());
  }
  Dataset ds;
  try {
    ds.phase = header.at("phase").get<int>();
    ds.k_cap = header.at("k_cap").get<std::size_t>();
    ds.has_descriptors = header.at("has_descriptors").get<bool>();
    ds.max_range = header.at("max_range").get<double>();
    ds.provenance = header.at("provenance");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(what + ": incomplete header: " + e.what());
  }
  if (ds.k_cap == 0) {
    throw InputError(what + ": k_cap must be positive");
  }
  const std::uint64_t count = r.u64();
  const std::size_t slot_bytes = 4 + 4 * kFeatureDim + 1 + (ds.has_descriptors ? 4 * kDescriptorDim : 0);
  const std::size_t record_bytes = 6 * 8 + 4 + ds.k_cap * slot_bytes + 4 + 1;
  if (count > r.remaining() / record_bytes) {
    throw InputError(what + ": record count exceeds file size");
  }
  ds.records.resize(count);
  for (DatasetRecord& rec : ds.records) {
    PointInput& in = rec.input;
    in.k_cap = ds.k_cap;
    for (int c = 0; c < 3; ++c) {
      in.sample.position[c] = r.f64();
    }
    for (int c = 0; c < 3; ++c) {
      in.sample.normal[c] = r.f64();
    }
    in.sample.source_triangle = r.u32();
    bool ended = false;
    for (std::size_t k = 0; k < ds.k_cap; ++k) {
      PointEntry e;
      e.view_index = r.u32();
      for (std::size_t c = 0; c < kFeatureDim; ++c) {
        e.encoded[c] = r.f32();
      }
      const std::uint8_t used = r.u8();
      ViewDescriptor desc{};
      if (ds.has_descriptors) {
        for (std::size_t c = 0; c < kDescriptorDim; ++c) {
          desc[c] = r.f32();
        }
      }
      if (used == 0) {
        ended = true;
        continue;
      }
      if (ended) {
        throw InputError(what + ": mask has a gap (valid slot after an empty one)");
      }
      e.feature.omega = e.encoded[0] * std::numbers::pi;
      e.feature.phi = e.encoded[1] * std::numbers::pi;
      e.feature.d = e.encoded[2] * ds.max_range;
      e.feature.alpha = e.encoded[3] * std::numbers::pi;
      e.feature.beta = e.encoded[4] * std::numbers::pi;
      if (ds.has_descriptors) {
        e.descriptor = desc;
      }
      in.entries.push_back(e);
    }
    rec.target = r.f32();
    rec.phase = r.u8();
  }
  if (r.remaining() != 0) {
    throw InputError(what + ": trailing bytes after the last record");
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) { write_file_bytes(path, serialize_dataset(ds)); }

Dataset load_dataset(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw InputError("dataset '" + path.string() + "' does not exist");
  }
  return parse_dataset(read_file_bytes(path), "dataset '" + path.string() + "'");
}

void TrainConfig::validate() const {
  if (!(tau > 0.0)) {
    throw InputError("tau must be positive");
  }
  if (epochs < 1) {
    throw InputError("epochs must be at least 1");
  }
  if (batch_size == 0) {
    throw InputError("batch size must be at least 1");
  }
  if (!(lr >= 0.0)) {
    throw InputError("learning rate must be non-negative");
  }
  if (phase != 1 && phase != 2) {
    throw InputError("phase must be 1 or 2");
  }
  if (neighbor_cap == 0) {
    throw InputError("neighbor cap must be at least 1");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"tau", c.tau},   {"neighbor_cap", c.neighbor_cap}, {"epochs", c.epochs}, {"batch_size", c.batch_size},
       {"lr", c.lr},     {"seed", c.seed},                 {"phase", c.phase}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.tau = j.value("tau", c.tau);
  c.neighbor_cap = j.value("neighbor_cap", c.neighbor_cap);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.seed = j.value("seed", c.seed);
  c.phase = j.value("phase", c.phase);
}

namespace {

nn::Batch<float> pack_records(const Dataset& ds, std::span<const std::uint32_t> idx, bool descriptors,
                              nn::Matrix<float>& targets) {
  std::vector<PointInput> inputs;
  inputs.reserve(idx.size());
  targets.resize(static_cast<Eigen::Index>(idx.size()), 1);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    inputs.push_back(ds.records[idx[i]].input);
    targets(static_cast<Eigen::Index>(i), 0) = std::log1p(ds.records[idx[i]].target);
  }
  return pack_inputs(inputs, descriptors);
}

} // namespace

TrainResult train(Checkpoint& ckpt, const Dataset& ds, const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  if (ds.records.empty()) {
    throw InputError("training dataset is empty");
  }
  if (ds.phase != cfg.phase) {
    throw InputError("dataset was built for phase " + std::to_string(ds.phase) + " but training phase is " +
                     std::to_string(cfg.phase));
  }
  if (cfg.phase == 2 && ckpt.trained_phase < 1) {
    throw InputError("phase 2 training needs a phase-1 trained checkpoint");
  }
  if (ds.k_cap != cfg.neighbor_cap) {
    throw InputError("dataset k_cap " + std::to_string(ds.k_cap) + " differs from the configured neighbor cap " +
                     std::to_string(cfg.neighbor_cap));
  }
  const bool uncertainty = cfg.phase == 2;
  if (uncertainty && !ds.has_descriptors) {
    throw InputError("phase 2 training needs a dataset with descriptors");
  }

  nn::Adam<float> opt(nn::AdamConfig{cfg.lr});
  std::vector<std::uint32_t> order(ds.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = static_cast<std::uint32_t>(i);
  }
  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, 0x7A1, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    double sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      nn::Matrix<float> targets;
      const auto batch = pack_records(ds, std::span(order).subspan(begin, end - begin), uncertainty, targets);
      nn::Tape<float> tape;
      const auto out = ckpt.model.forward(batch, uncertainty, &tape);
      const auto loss = nn::l1_loss(uncertainty ? out.uncertainty : out.spatial, targets);
      if (uncertainty) {
        ckpt.model.backward(nn::Matrix<float>(), loss.grad, tape);
      } else {
        ckpt.model.backward(loss.grad, nn::Matrix<float>(), tape);
      }
      opt.step(ckpt.model);
      sum += loss.loss * static_cast<double>(end - begin);
    }
    result.loss_curve.push_back(sum / static_cast<double>(order.size()));
    if (progress) {
      progress("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.epochs) +
               " loss " + std::to_string(result.loss_curve.back()));
    }
  }
  ckpt.trained_phase = std::max(ckpt.trained_phase, cfg.phase);
  return result;
}

double evaluate_loss(const LearnedModel& model, const Dataset& ds, int phase) {
  if (ds.records.empty()) {
    throw InputError("dataset is empty");
  }
  const bool uncertainty = phase == 2;
  std::vector<PointInput> inputs;
  inputs.reserve(ds.records.size());
  for (const auto& rec : ds.records) {
    inputs.push_back(rec.input);
  }
  const auto pred = predict_learned(model, inputs, uncertainty);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sum += std::abs(std::log1p(pred[i]) - std::log1p(static_cast<double>(ds.records[i].target)));
  }
  return sum / static_cast<double>(pred.size());
}

} // namespace skyplan
