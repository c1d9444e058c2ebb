#include "skyplan/eval.hpp"
#include "skyplan/rng.hpp"

#include <cstdio>
#include <sstream>

namespace skyplan {

const std::vector<std::string>& planner_names() {
  static const std::vector<std::string> names = {"full", "nadir", "eliminate_only", "adjust_only"};
  return names;
}

void PlannerBenchmarkConfig::validate() const {
  scene.validate();
  PlannerConfig p = planner;
  p.view_budget = budget;
  p.validate();
  if (!(nadir_altitude > 0.0)) {
    throw InputError("planner benchmark: nadir_altitude must be positive");
  }
  if (!(dense_factor >= 1.0)) {
    throw InputError("planner benchmark: dense_factor must be >= 1");
  }
  if (!(density > 0.0)) {
    throw InputError("planner benchmark: density must be positive");
  }
  if (reference_points < 1) {
    throw InputError("planner benchmark: reference_points must be >= 1");
  }
  if (!(fscore_threshold > 0.0)) {
    throw InputError("planner benchmark: fscore_threshold must be positive");
  }
  if (planners.empty()) {
    throw InputError("planner benchmark: no planners selected");
  }
  for (const auto& name : planners) {
    if (std::find(planner_names().begin(), planner_names().end(), name) == planner_names().end()) {
      throw InputError("planner benchmark: unknown planner '" + name + "'");
    }
  }
}

PlannerBenchmark benchmark_planners(const PlannerBenchmarkConfig& cfg, const Predictor& predictor) {
  cfg.validate();
  const Scene scene = generate_scene(cfg.scene);
  PlannerConfig pcfg = cfg.planner;
  pcfg.view_budget = cfg.budget;
  const Aabb& area = scene.proxy.bounds();
  // the wrappers score the same proxy samples the full planner draws
  const auto pool = sample_surface(scene.proxy, pcfg.surface_samples, derive_seed(pcfg.seed, 1));
  const auto reference = sample_uniform(scene.ground_truth, cfg.reference_points, derive_seed(cfg.seed, 6));
  std::vector<Vec3> ref_points(reference.size());
  for (std::size_t i = 0; i < reference.size(); ++i) {
    ref_points[i] = reference[i].position;
  }
  const EliminationOptions elim{pcfg.threshold, cfg.budget, pcfg.k_cap};

  PlannerBenchmark out;
  for (const std::string& name : cfg.planners) {
    PlannerMetrics m;
    m.planner = name;
    if (name == "full") {
      ViewPlan p = plan(scene.proxy, predictor, pcfg);
      m.viewpoints = std::move(p.viewpoints);
      m.trace = std::move(p.trace);
    } else if (name == "nadir") {
      m.viewpoints = nadir_grid(area, cfg.budget, cfg.nadir_altitude, pcfg.camera);
    } else if (name == "eliminate_only") {
      const auto positions =
          static_cast<std::size_t>(std::ceil(cfg.dense_factor * static_cast<double>(cfg.budget) / 5.0));
      const auto dense = oblique_grid(area, positions, cfg.nadir_altitude, deg2rad(45.0), pcfg.camera);
      m.viewpoints = integrate_eliminate_only(dense, pool, predictor, scene.proxy, elim);
    } else {
      const auto grid = nadir_grid(area, cfg.budget, cfg.nadir_altitude, pcfg.camera);
      m.viewpoints = integrate_adjust_only(grid, pool, predictor, scene.proxy, pcfg);
    }
    m.views = m.viewpoints.size();
    const auto cloud = simulate_reconstruction(scene.ground_truth, m.viewpoints, cfg.density, derive_seed(cfg.seed, 5));
    m.points = cloud.points.size();
    m.fscore = fscore_against_mesh(cloud.points, scene.ground_truth, ref_points, cfg.fscore_threshold);
    if (!cloud.points.empty()) {
      m.accuracy = accuracy_at(cloud.points, scene.ground_truth, default_percents());
      m.completeness = completeness_at(ref_points, cloud.points, default_percents());
    }
    out.planners.push_back(std::move(m));
  }
  out.config = {{"scene", cfg.scene},
                {"planner", pcfg},
                {"budget", cfg.budget},
                {"nadir_altitude", cfg.nadir_altitude},
                {"dense_factor", cfg.dense_factor},
                {"density", cfg.density},
                {"reference_points", cfg.reference_points},
                {"fscore_threshold", cfg.fscore_threshold},
                {"predictor", predictor.name()},
                {"planners", cfg.planners},
                {"seed", cfg.seed}};
  return out;
}

nlohmann::json to_json(const PlannerBenchmark& b) {
  nlohmann::json rows = nlohmann::json::array();
  for (const PlannerMetrics& m : b.planners) {
    nlohmann::json trace = nlohmann::json::array();
    for (const ObjectiveStep& s : m.trace) {
      trace.push_back({{"iteration", s.iteration}, {"min", s.min}, {"mean", s.mean}, {"views", s.views},
                       {"accepted", s.accepted}});
    }
    rows.push_back({{"planner", m.planner},
                    {"views", m.views},
                    {"points", m.points},
                    {"precision", m.fscore.precision},
                    {"recall", m.fscore.recall},
                    {"f_score", m.fscore.f},
                    {"percents", default_percents()},
                    {"accuracy", m.accuracy},
                    {"completeness", m.completeness},
                    {"trace", trace}});
  }
  return {{"planners", rows}, {"config", b.config}};
}

std::string to_text(const PlannerBenchmark& b) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %9s %9s %9s %9s %9s %9s\n", "planner", "Image (#)", "precision", "recall",
                "F-score", "acc@90", "comp@90");
  os << line;
  for (const PlannerMetrics& m : b.planners) {
    const double acc = m.accuracy.size() > 2 ? m.accuracy[2] : std::numeric_limits<double>::quiet_NaN();
    const double comp = m.completeness.size() > 2 ? m.completeness[2] : std::numeric_limits<double>::quiet_NaN();
    std::snprintf(line, sizeof line, "%-16s %9zu %8.2f%% %8.2f%% %8.2f%% %8.3fm %8.3fm\n", m.planner.c_str(), m.views,
                  m.fscore.precision, m.fscore.recall, m.fscore.f, acc, comp);
    os << line;
  }
  return os.str();
}

} // namespace skyplan
