#pragma once

#include "skyplan/planner.hpp"
#include "skyplan/predictor.hpp"
#include "skyplan/view_sets.hpp"

#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace skyplan {

/// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of average ranks. Throws InputError on length
/// mismatch, fewer than two values, or zero rank variance.
double spearman(std::span<const double> a, std::span<const double> b);

const std::vector<double>& default_percents(); // 70, 80, 90, 95
const std::vector<double>& default_completeness_thresholds(); // 0.02, 0.05, 0.075 m

/// Distance at which `percent` of the sorted distances fall (nearest rank).
double percentile(std::vector<double> sorted_or_not, double percent);

/// Distance from every reconstructed point to the ground-truth surface,
/// read out at each percentage (lower is better).
std::vector<double> accuracy_at(std::span<const Vec3> recon, const ProxyMesh& gt, std::span<const double> percents);

/// Distance from every ground-truth point to the nearest reconstructed point.
std::vector<double> completeness_at(std::span<const Vec3> gt_points, std::span<const Vec3> recon,
                                    std::span<const double> percents);

/// Fraction of ground-truth points within each threshold of the reconstruction (higher is better).
std::vector<double> completeness_within(std::span<const Vec3> gt_points, std::span<const Vec3> recon,
                                        std::span<const double> thresholds);

struct FScore {
  double precision = 0.0; // percent
  double recall = 0.0;    // percent
  double f = 0.0;         // percent
};

constexpr double kDefaultFScoreThreshold = 0.10;

FScore fscore(std::span<const Vec3> recon, std::span<const Vec3> gt_points, double threshold = kDefaultFScoreThreshold);

/// Precision from exact point-to-surface distances of the reconstruction,
/// recall from a ground-truth reference sampling.
FScore fscore_against_mesh(std::span<const Vec3> recon, const ProxyMesh& gt, std::span<const Vec3> gt_points,
                           double threshold = kDefaultFScoreThreshold);

/// Sample on the ground truth closest to a proxy sample, carrying the
/// ground-truth triangle normal.
SurfaceSample project_to_ground_truth(const ProxyMesh& gt, const SurfaceSample& proxy_sample);

struct PredictorBenchmarkConfig {
  SceneSpec scene;
  std::vector<ViewSetRecipe> view_sets;
  std::size_t samples = 500;
  double density = 50.0;
  double tau = 0.2;
  std::size_t k_cap = kDefaultKCap;
  std::uint64_t seed = 1;
  CameraModel camera;
};

struct PredictorScore {
  std::string predictor;
  double spearman_quality = 0.0; // against the ground-truth quality (accuracy projection)
  double spearman_oracle = 0.0;  // against the analytic oracle at the ground-truth point
  double increment = 0.0;        // relative to the heuristic, (rho - rho_h) / |rho_h|
};

struct ViewSetReport {
  std::string view_set;
  std::size_t views = 0;
  std::size_t evaluated = 0; // samples with a ground-truth quality
  std::vector<PredictorScore> scores;
  std::vector<std::vector<double>> predictions; // per predictor, per evaluated sample
  std::vector<double> quality;                  // accuracy-projection quality per evaluated sample
  std::vector<double> oracle;                   // oracle quality per evaluated sample
};

struct PredictorBenchmark {
  std::vector<ViewSetReport> view_sets;
  nlohmann::json config;
};

/// Per view set: simulate the reconstruction, take the accuracy-projection
/// quality of every proxy sample as ground truth, and rank-correlate every
/// predictor against it and against the analytic oracle.
PredictorBenchmark benchmark_predictors(const PredictorBenchmarkConfig& cfg,
                                        const std::vector<const Predictor*>& predictors);

nlohmann::json to_json(const PredictorBenchmark& b);
/// One row per (view set, sample): predictions of every predictor plus both qualities.
std::string to_csv(const PredictorBenchmark& b);
std::string to_text(const PredictorBenchmark& b);

/// Planners compared by benchmark_planners. Every one gets the same view budget.
///  full: the iterative planner.
///  nadir: a nadir grid with exactly `budget` views.
///  eliminate_only: a dense oblique grid (about dense_factor x budget views)
///    reduced by elimination, then trimmed to the budget.
///  adjust_only: the nadir grid refined by adjustment.
const std::vector<std::string>& planner_names();

struct PlannerBenchmarkConfig {
  SceneSpec scene;
  PlannerConfig planner; // view_budget is overridden by `budget`
  std::size_t budget = 40;
  double nadir_altitude = 30.0; // above the proxy top
  double dense_factor = 2.0;
  double density = 100.0;           // reconstruction candidates per m^2
  std::size_t reference_points = 40000; // ground-truth samples for recall and completeness
  double fscore_threshold = kDefaultFScoreThreshold;
  std::vector<std::string> planners = planner_names();
  std::uint64_t seed = 1;

  void validate() const;
};

struct PlannerMetrics {
  std::string planner;
  std::size_t views = 0;
  std::size_t points = 0;
  FScore fscore;
  std::vector<double> accuracy;     // at default_percents(), meters; empty when nothing was reconstructed
  std::vector<double> completeness; // at default_percents(), meters
  std::vector<Viewpoint> viewpoints;
  std::vector<ObjectiveStep> trace; // full planner only
};

struct PlannerBenchmark {
  std::vector<PlannerMetrics> planners;
  nlohmann::json config;
};

/// Plan with every planner on the scene proxy, simulate the reconstruction
/// of the ground truth from each view set, and score it.
PlannerBenchmark benchmark_planners(const PlannerBenchmarkConfig& cfg, const Predictor& predictor);

nlohmann::json to_json(const PlannerBenchmark& b);
std::string to_text(const PlannerBenchmark& b);

} // namespace skyplan
