#pragma once

#include "skyplan/features.hpp"
#include "skyplan/nn/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace skyplan {

enum class PredictorKind { heuristic, visible_count, oracle, learned_spatial, learned_uncertainty };

std::string to_string(PredictorKind kind);
PredictorKind predictor_kind_from_string(const std::string& name);

struct PointPrediction {
  double value = 0.0;
  PredictorKind kind = PredictorKind::heuristic;
};

/// Pairwise multi-view heuristic parameters (k1, k3, alpha1, alpha3 and the
/// distance normalizer).
struct HeuristicParams {
  double k1 = 32.0;
  double k3 = 8.0;
  double alpha1 = std::numbers::pi / 16.0;
  double alpha3 = std::numbers::pi / 4.0;
  double d_max = 100.0; // camera max range

  void validate() const;
};

void to_json(nlohmann::json& j, const HeuristicParams& p);
void from_json(const nlohmann::json& j, HeuristicParams& p);

/// Sum over unordered view pairs of w1 * w2 * w3 * cos(max(alpha_i, alpha_j)).
PointPrediction heuristic_score(const PointInput& input, const HeuristicParams& params);
PointPrediction visible_count_score(const PointInput& input);
/// The simulated-reconstruction quality, computed from the entry geometry
/// (camera centres are recovered from the local spherical coordinates).
PointPrediction oracle_score(const PointInput& input);

/// Unit direction from the sample towards the view, in world coordinates.
Vec3 entry_direction(const SurfaceSample& sample, const SpatialFeature& f);

using LearnedModel = nn::Model<float>;

/// Packs inputs into one ragged batch (descriptors only when requested).
nn::Batch<float> pack_inputs(std::span<const PointInput> inputs, bool with_descriptors);

/// Reported reconstructability expm1(head output) for every input. Chunks of
/// inputs run in parallel; results do not depend on the thread count.
std::vector<double> predict_learned(const LearnedModel& model, std::span<const PointInput> inputs,
                                    bool uncertainty_aware, std::size_t chunk = 128);

PointPrediction predict_spatial(const LearnedModel& model, const PointInput& input);
/// Throws InputError when any entry lacks a descriptor.
PointPrediction predict_uncertainty_aware(const LearnedModel& model, const PointInput& input);

/// Common interface used by the planner and the benchmarks.
class Predictor {
public:
  virtual ~Predictor() = default;
  [[nodiscard]] virtual PredictorKind kind() const = 0;
  [[nodiscard]] virtual bool needs_descriptors() const { return false; }
  [[nodiscard]] virtual std::vector<double> predict(std::span<const PointInput> inputs) const = 0;
  [[nodiscard]] std::string name() const { return to_string(kind()); }
};

std::unique_ptr<Predictor> make_heuristic_predictor(const HeuristicParams& params = {});
std::unique_ptr<Predictor> make_visible_count_predictor();
std::unique_ptr<Predictor> make_oracle_predictor();
std::unique_ptr<Predictor> make_learned_predictor(std::shared_ptr<const LearnedModel> model, bool uncertainty_aware);

/// Checkpoint layout: "SKPL", u32 version, u32 header length, JSON header
/// (architecture, training phase, tensor table), raw little-endian float32
/// tensors in header order, then a CRC32 of everything before it.
constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  LearnedModel model;
  int trained_phase = 0; // 0 untrained, 1 spatial, 2 uncertainty-aware
  nlohmann::json meta = nlohmann::json::object();
};

/// Randomly initialized, untrained model.
Checkpoint fresh_checkpoint(const nn::ModelConfig& cfg, std::uint64_t seed);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws InputError on I/O failure, bad checksum, version or architecture
/// mismatch. With `expected` set, the header must describe that architecture.
Checkpoint load_checkpoint(const std::filesystem::path& path, const nn::ModelConfig* expected = nullptr);

} // namespace skyplan
