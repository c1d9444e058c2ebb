#pragma once

#include "skyplan/predictor.hpp"
#include "skyplan/view_sets.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace skyplan {

constexpr double kDefaultTau = 0.2;            // meters
constexpr double kAccuracyFloor = 1e-4;        // meters
constexpr double kCompletenessCap = 2.0;       // meters
constexpr double kCompletenessOffset = 1e-2;   // meters
constexpr const char* kOracleVersion = "skyplan-oracle-1";

struct TrainingTarget {
  std::uint32_t sample_index = 0;
  double value = 0.0;
  int phase = 1;
  bool discarded = false;
};

/// Accuracy projection: the cloud points within tau of each sample give
/// R = count / sum(max(acc, 1e-4)); samples with no neighbour are discarded.
std::vector<TrainingTarget> phase1_targets(std::span<const SurfaceSample> proxy_samples, const ReconCloud& cloud,
                                           double tau = kDefaultTau);

/// Completeness target 1 / (c + 0.01) with c = |sample - g| + |g - nearest
/// cloud point|, capped at 2 m, where g is the closest ground-truth point.
/// Never discards.
std::vector<TrainingTarget> phase2_targets(const ProxyMesh& gt, const ReconCloud& cloud,
                                           std::span<const SurfaceSample> proxy_samples);

struct DatasetRecord {
  PointInput input;
  float target = 0.0f;
  std::uint8_t phase = 1;
};

struct Dataset {
  int phase = 1;
  std::size_t k_cap = kDefaultKCap;
  bool has_descriptors = false;
  double max_range = 100.0;
  nlohmann::json provenance = nlohmann::json::object();
  std::vector<DatasetRecord> records;
};

struct DatasetConfig {
  std::vector<SceneSpec> scenes;
  std::vector<ViewSetRecipe> view_sets; // empty: the default mix, reseeded per scene
  std::size_t samples_per_scene = 400;
  int phase = 1;
  std::uint64_t seed = 1;
  double density = 50.0; // reconstruction candidates per m^2
  double tau = kDefaultTau;
  std::size_t k_cap = kDefaultKCap;
  CameraModel camera;

  void validate() const;
};

/// Optional progress sink for long-running steps (messages go to stderr in the CLI).
using ProgressFn = std::function<void(const std::string&)>;

/// Per scene: generate ground truth and proxy, build every view set, simulate
/// the reconstruction, compute targets and assemble one record per kept
/// (sample, view set) pair. Phase 1 accepts only fine and inter proxies.
Dataset build_dataset(const DatasetConfig& cfg, const ProgressFn& progress = {});

/// Descriptor provider bound to one scene, view set and seed.
DescriptorProvider make_descriptor_provider(const ProxyMesh& gt, const ProxyMesh& proxy,
                                            std::span<const Viewpoint> views, std::uint64_t seed);

std::string serialize_dataset(const Dataset& ds);
Dataset parse_dataset(std::string_view bytes, const std::string& what = "dataset");
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct TrainConfig {
  double tau = kDefaultTau;
  std::size_t neighbor_cap = kDefaultKCap; // K cap the dataset must have been built with
  int epochs = 30;
  std::size_t batch_size = 64;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  int phase = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainResult {
  std::vector<double> loss_curve; // mean L1 in log1p space, per epoch
};

/// Mini-batch L1 training in log1p space. Phase 1 fits the spatial head;
/// phase 2 fits the uncertainty-aware head, fine-tuning every parameter, and
/// requires a phase-1 checkpoint. Deterministic per seed.
TrainResult train(Checkpoint& ckpt, const Dataset& dataset, const TrainConfig& cfg, const ProgressFn& progress = {});

/// Mean L1 loss in log1p space of the head matching `phase`, without training.
double evaluate_loss(const LearnedModel& model, const Dataset& dataset, int phase);

} // namespace skyplan
