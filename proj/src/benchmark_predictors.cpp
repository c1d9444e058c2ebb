#include "skyplan/eval.hpp"
#include "skyplan/parallel.hpp"
#include "skyplan/rng.hpp"
#include "skyplan/training.hpp"

#include <cstdio>
#include <limits>
#include <sstream>

namespace skyplan {

namespace {

double safe_spearman(std::span<const double> a, std::span<const double> b) {
  try {
    return spearman(a, b);
  } catch (const InputError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

} // namespace

PredictorBenchmark benchmark_predictors(const PredictorBenchmarkConfig& cfg,
                                        const std::vector<const Predictor*>& predictors) {
  if (predictors.empty()) {
    throw InputError("benchmark needs at least one predictor");
  }
  if (cfg.view_sets.empty()) {
    throw InputError("benchmark needs at least one view set");
  }
  const Scene scene = generate_scene(cfg.scene);
  const auto samples = sample_surface(scene.proxy, cfg.samples, derive_seed(cfg.seed, 1));
  std::vector<SurfaceSample> projected(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) { projected[i] = project_to_ground_truth(scene.ground_truth, samples[i]); });
  const bool need_desc = std::any_of(predictors.begin(), predictors.end(),
                                     [](const Predictor* p) { return p->needs_descriptors(); });

  PredictorBenchmark out;
  nlohmann::json sets = nlohmann::json::array();
  for (std::size_t ri = 0; ri < cfg.view_sets.size(); ++ri) {
    const ViewSetRecipe& recipe = cfg.view_sets[ri];
    sets.push_back({{"kind", recipe.kind}, {"count", recipe.count}, {"altitude", recipe.altitude},
                    {"keep", recipe.keep}, {"seed", recipe.seed}});
    const auto views = make_view_set(recipe, scene.proxy, cfg.camera);
    const auto cloud = simulate_reconstruction(scene.ground_truth, views, cfg.density, derive_seed(cfg.seed, ri, 2));
    const auto targets = phase1_targets(samples, cloud, cfg.tau);
    DescriptorProvider provider;
    if (need_desc) {
      provider = make_descriptor_provider(scene.ground_truth, scene.proxy, views, derive_seed(cfg.seed, ri, 4));
    }

    ViewSetReport rep;
    rep.view_set = recipe.kind + std::to_string(recipe.count) + "@" + std::to_string(static_cast<int>(recipe.altitude));
    rep.views = views.size();
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!targets[i].discarded) {
        keep.push_back(i);
      }
    }
    rep.evaluated = keep.size();
    std::vector<PointInput> inputs(keep.size());
    rep.quality.resize(keep.size());
    rep.oracle.resize(keep.size());
    parallel_for(keep.size(), [&](std::size_t k) {
      const std::size_t i = keep[k];
      inputs[k] = assemble_point_input(scene.proxy, samples[i], views, need_desc ? &provider : nullptr, cfg.k_cap);
      rep.quality[k] = targets[i].value;
      rep.oracle[k] = oracle_quality(scene.ground_truth, views, projected[i]);
    });
    double heuristic_rho = std::numeric_limits<double>::quiet_NaN();
    for (const Predictor* p : predictors) {
      rep.predictions.push_back(p->predict(inputs));
      PredictorScore s;
      s.predictor = p->name();
      s.spearman_quality = safe_spearman(rep.predictions.back(), rep.quality);
      s.spearman_oracle = safe_spearman(rep.predictions.back(), rep.oracle);
      if (p->kind() == PredictorKind::heuristic) {
        heuristic_rho = s.spearman_quality;
      }
      rep.scores.push_back(s);
    }
    for (PredictorScore& s : rep.scores) {
      s.increment = (s.spearman_quality - heuristic_rho) / std::abs(heuristic_rho);
    }
    out.view_sets.push_back(std::move(rep));
  }
  nlohmann::json names = nlohmann::json::array();
  for (const Predictor* p : predictors) {
    names.push_back(p->name());
  }
  out.config = {{"scene", cfg.scene},   {"view_sets", sets},  {"samples", cfg.samples},
                {"density", cfg.density}, {"tau", cfg.tau},   {"k_cap", cfg.k_cap},
                {"seed", cfg.seed},     {"predictors", names},
                {"camera", {{"fov", cfg.camera.fov}, {"max_range", cfg.camera.max_range}}}};
  return out;
}

nlohmann::json to_json(const PredictorBenchmark& b) {
  nlohmann::json sets = nlohmann::json::array();
  for (const auto& vs : b.view_sets) {
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& s : vs.scores) {
      scores.push_back({{"predictor", s.predictor},
                        {"spearman", number_or_null(s.spearman_quality)},
                        {"spearman_percent", number_or_null(100.0 * s.spearman_quality)},
                        {"spearman_oracle", number_or_null(s.spearman_oracle)},
                        {"increment_vs_heuristic", number_or_null(s.increment)}});
    }
    sets.push_back({{"view_set", vs.view_set}, {"views", vs.views}, {"evaluated", vs.evaluated}, {"predictors", scores}});
  }
  return {{"predictors", sets}, {"config", b.config}};
}

std::string to_csv(const PredictorBenchmark& b) {
  std::ostringstream os;
  os.precision(9);
  os << "view_set,sample";
  if (!b.view_sets.empty()) {
    for (const auto& s : b.view_sets.front().scores) {
      os << "," << s.predictor;
    }
  }
  os << ",quality,oracle\n";
  for (const auto& vs : b.view_sets) {
    for (std::size_t i = 0; i < vs.evaluated; ++i) {
      os << vs.view_set << "," << i;
      for (const auto& pred : vs.predictions) {
        os << "," << pred[i];
      }
      os << "," << vs.quality[i] << "," << vs.oracle[i] << "\n";
    }
  }
  return os.str();
}

std::string to_text(const PredictorBenchmark& b) {
  std::ostringstream os;
  char line[256];
  for (const auto& vs : b.view_sets) {
    std::snprintf(line, sizeof line, "view set %s: %zu views, %zu evaluated samples\n", vs.view_set.c_str(), vs.views,
                  vs.evaluated);
    os << line;
    std::snprintf(line, sizeof line, "  %-22s %10s %10s %12s\n", "predictor", "spearman", "vs oracle", "inc. vs heur");
    os << line;
    for (const auto& s : vs.scores) {
      std::snprintf(line, sizeof line, "  %-22s %9.2f%% %9.2f%% %11.2f%%\n", s.predictor.c_str(),
                    100.0 * s.spearman_quality, 100.0 * s.spearman_oracle, 100.0 * s.increment);
      os << line;
    }
  }
  return os.str();
}

} // namespace skyplan
