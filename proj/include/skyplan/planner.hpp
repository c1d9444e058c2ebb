#pragma once

#include "skyplan/predictor.hpp"
#include "skyplan/view_sets.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace skyplan {

struct PlannerConfig {
  std::size_t samples_per_iteration = 16; // N targets drawn per iteration
  std::size_t candidates = 64;            // M_m hemisphere candidates per target
  std::size_t keep = 2;                   // M_b candidates kept per target
  double threshold = 0.2;                 // elimination threshold on predicted reconstructability
  std::size_t max_iterations = 8;
  std::size_t view_budget = 40;
  double clearance = 3.0; // meters to the proxy
  std::size_t knn = 8;    // |P_n|
  /// Hemisphere shell radii in meters; 0 selects 0.5 and 1.0 times the camera range.
  double radius_min = 0.0;
  double radius_max = 0.0;
  std::size_t surface_samples = 1000; // proxy samples scored every iteration
  std::size_t adjust_evaluations = 60;
  std::size_t k_cap = kDefaultKCap;
  CameraModel camera;
  std::uint64_t seed = 1;

  void validate() const;
  [[nodiscard]] double shell_min() const { return radius_min > 0.0 ? radius_min : 0.5 * camera.max_range; }
  [[nodiscard]] double shell_max() const { return radius_max > 0.0 ? radius_max : camera.max_range; }
};

void to_json(nlohmann::json& j, const PlannerConfig& c);
/// Missing fields keep their defaults; unknown fields are rejected.
void from_json(const nlohmann::json& j, PlannerConfig& c);

struct ObjectiveStep {
  std::size_t iteration = 0;
  double min = 0.0;
  double mean = 0.0;
  std::size_t views = 0;
  bool accepted = false;
};

struct ViewPlan {
  std::vector<Viewpoint> viewpoints;
  std::vector<ObjectiveStep> trace; // entry 0 is the empty initial state
  std::size_t iterations = 0;
  PlannerConfig config;
  std::string predictor;
};

nlohmann::json to_json(const ViewPlan& plan);
ViewPlan view_plan_from_json(const nlohmann::json& j);

struct Waypoint {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;   // radians
  double pitch = 0.0; // radians
};

struct Trajectory {
  std::vector<Waypoint> waypoints;
  std::vector<std::size_t> order; // index into the input views per waypoint
  double length = 0.0;
};

/// Header `x_m,y_m,z_m,yaw_deg,pitch_deg`, six decimals.
std::string to_csv(const Trajectory& t);

/// Distance to the proxy surface, negative inside it.
double signed_distance(const ProxyMesh& mesh, const Vec3& p);
bool respects_clearance(const ProxyMesh& mesh, const Vec3& p, double clearance);

/// Predicted reconstructability of every sample under a view set. Throws
/// InputError for predictors that need per-view descriptors.
std::vector<double> score_samples(const ProxyMesh& mesh, const Predictor& predictor,
                                  std::span<const SurfaceSample> samples, std::span<const Viewpoint> views,
                                  std::size_t k_cap = kDefaultKCap);

/// Adaptive sampling weights: mean of exp(-d) / R over the k nearest samples
/// (the sample itself included), R floored at 1e-3, normalized to sum 1.
std::vector<double> sampling_probs(std::span<const SurfaceSample> samples, std::span<const double> predictions,
                                   std::size_t k);
/// Same before normalization.
std::vector<double> sampling_weights(std::span<const SurfaceSample> samples, std::span<const double> predictions,
                                     std::size_t k);

/// n distinct indices drawn sequentially, each proportionally to the remaining mass.
std::vector<std::size_t> sample_targets(std::span<const double> probs, std::size_t n, std::uint64_t seed);

/// Score of a hemisphere candidate direction u (unit, from the sample):
/// dot(u, n) times the smallest dot(u, u_v) over existing visible view
/// directions, 1 when there are none.
double init_score(const Vec3& u, const Vec3& normal, std::span<const Vec3> existing_dirs);

/// Up to M_b viewpoints around one sample, aimed at it.
std::vector<Viewpoint> init_views(const SurfaceSample& sample, std::span<const Viewpoint> existing,
                                  const ProxyMesh& mesh, const PlannerConfig& cfg, std::uint64_t seed);

struct EliminationOptions {
  double threshold = 0.1;
  /// When non-zero, keep removing the most redundant views (locks ignored)
  /// until at most this many remain.
  std::size_t budget = 0;
  std::size_t k_cap = kDefaultKCap;
};

/// Redundancy-driven elimination. Returns the surviving views in input order.
std::vector<Viewpoint> eliminate(std::span<const Viewpoint> views, std::span<const SurfaceSample> samples,
                                 const Predictor& predictor, const ProxyMesh& mesh, const EliminationOptions& opt);

/// Nelder-Mead pose refinement of every view in turn.
std::vector<Viewpoint> adjust(std::span<const Viewpoint> views, std::span<const SurfaceSample> samples,
                              const Predictor& predictor, const ProxyMesh& mesh, const PlannerConfig& cfg);

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t evaluations = 0;
};

/// Minimizes f from x0 with an axis-aligned initial simplex; at most
/// max_evaluations calls including the start point.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                             std::span<const double> steps, std::size_t max_evaluations);

/// Iterative sample, initialize, eliminate, adjust loop.
ViewPlan plan(const ProxyMesh& mesh, const Predictor& predictor, const PlannerConfig& cfg);

/// Elimination applied to an externally supplied dense view set.
std::vector<Viewpoint> integrate_eliminate_only(std::span<const Viewpoint> dense, std::span<const SurfaceSample> samples,
                                                const Predictor& predictor, const ProxyMesh& mesh,
                                                const EliminationOptions& opt);
/// Adjustment of a fixed-cardinality view set.
std::vector<Viewpoint> integrate_adjust_only(std::span<const Viewpoint> views, std::span<const SurfaceSample> samples,
                                             const Predictor& predictor, const ProxyMesh& mesh,
                                             const PlannerConfig& cfg);

/// Nearest-neighbour tour from `start`, improved by 2-opt until no swap helps.
Trajectory order_trajectory(std::span<const Viewpoint> views, const Vec3& start);
/// Same without 2-opt, for comparison.
Trajectory nearest_neighbor_trajectory(std::span<const Viewpoint> views, const Vec3& start);

} // namespace skyplan
