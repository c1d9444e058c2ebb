#include "skyplan/planner.hpp"

#include "skyplan/parallel.hpp"
#include "skyplan/rng.hpp"
#include "skyplan/spatial_index.hpp"

#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

namespace skyplan {

namespace {

constexpr double kReconFloor = 1e-3;
constexpr double kStallImprovement = 0.01;
constexpr std::size_t kStallIterations = 2;

void require(bool ok, const std::string& msg) {
  if (!ok) {
    throw InputError("planner configuration: " + msg);
  }
}

void require_descriptor_free(const Predictor& predictor) {
  if (predictor.needs_descriptors()) {
    throw InputError("predictor '" + predictor.name() +
                     "' needs per-view image descriptors, which do not exist while planning");
  }
}

std::vector<std::vector<std::uint32_t>> visibility_lists(const ProxyMesh& mesh, std::span<const SurfaceSample> samples,
                                                         std::span<const Viewpoint> views) {
  std::vector<std::vector<std::uint32_t>> vis(samples.size());
  parallel_for(samples.size(), [&](std::size_t s) { vis[s] = visible_views(mesh, views, samples[s]); });
  return vis;
}

struct Objective {
  double min = 0.0;
  double mean = 0.0;
};

Objective summarize(std::span<const double> preds) {
  Objective o;
  if (preds.empty()) {
    return o;
  }
  o.min = *std::min_element(preds.begin(), preds.end());
  o.mean = std::accumulate(preds.begin(), preds.end(), 0.0) / static_cast<double>(preds.size());
  return o;
}

// Lexicographic: the minimum first, the mean breaks ties at equal minimum.
bool improves(const Objective& now, const Objective& before) {
  return now.min > before.min || (now.min == before.min && now.mean > before.mean);
}

double relative_gain(const Objective& now, const Objective& before) {
  if (now.min > before.min) {
    return (now.min - before.min) / std::max(std::abs(before.min), 1e-12);
  }
  return (now.mean - before.mean) / std::max(std::abs(before.mean), 1e-12);
}

// Removal bookkeeping for eliminate(). For every sample, `without[s][t]` is
// the prediction with the t-th view of vis[s] taken out (NaN once that view
// is gone), so redundancies are re-read instead of re-predicted.
class Eliminator {
public:
  Eliminator(std::span<const Viewpoint> views, std::span<const SurfaceSample> samples, const Predictor& predictor,
             const ProxyMesh& mesh, std::size_t k_cap)
      : views_(views), samples_(samples), predictor_(predictor), k_cap_(k_cap), active_(views.size(), 1),
        locked_(views.size(), 0) {
    vis_ = visibility_lists(mesh, samples, views);
    seen_.resize(views.size());
    for (std::size_t s = 0; s < vis_.size(); ++s) {
      for (std::size_t t = 0; t < vis_[s].size(); ++t) {
        seen_[vis_[s][t]].push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(t)});
      }
    }
    pred_.assign(samples.size(), 0.0);
    without_.resize(samples.size());
    std::vector<std::uint32_t> all(samples.size());
    std::iota(all.begin(), all.end(), 0u);
    refresh(all);
  }

  [[nodiscard]] double redundancy(std::size_t v, double threshold) const {
    double r = std::numeric_limits<double>::infinity();
    for (const auto& [s, t] : seen_[v]) {
      r = std::min(r, without_[s][t] - threshold);
    }
    return r;
  }

  /// Most redundant active view (lowest index on ties), optionally skipping locked ones.
  [[nodiscard]] std::optional<std::size_t> most_redundant(double threshold, bool respect_locks) const {
    std::optional<std::size_t> best;
    double best_r = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < views_.size(); ++v) {
      if (!active_[v] || (respect_locks && locked_[v])) {
        continue;
      }
      const double r = redundancy(v, threshold);
      if (!best || r > best_r) {
        best = v;
        best_r = r;
      }
    }
    return best;
  }

  /// True when no sample at or above the threshold would drop below it.
  [[nodiscard]] bool removal_is_safe(std::size_t v, double threshold) const {
    return std::none_of(seen_[v].begin(), seen_[v].end(), [&](const auto& st) {
      return pred_[st.first] >= threshold && without_[st.first][st.second] < threshold;
    });
  }

  void remove(std::size_t v) {
    active_[v] = 0;
    std::vector<std::uint32_t> touched;
    for (const auto& st : seen_[v]) {
      touched.push_back(st.first);
    }
    seen_[v].clear();
    refresh(touched);
  }

  void lock(std::size_t v) { locked_[v] = 1; }

  [[nodiscard]] std::size_t active_count() const {
    return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), 1));
  }

  [[nodiscard]] std::vector<Viewpoint> survivors() const {
    std::vector<Viewpoint> out;
    for (std::size_t v = 0; v < views_.size(); ++v) {
      if (active_[v]) {
        out.push_back(views_[v]);
      }
    }
    return out;
  }

private:
  void refresh(std::span<const std::uint32_t> touched) {
    // slot layout per sample: full set first, then one input per active view
    std::vector<std::size_t> first(touched.size() + 1, 0);
    for (std::size_t i = 0; i < touched.size(); ++i) {
      const auto& vs = vis_[touched[i]];
      const auto n_active = std::count_if(vs.begin(), vs.end(), [&](std::uint32_t v) { return active_[v] != 0; });
      first[i + 1] = first[i] + 1 + static_cast<std::size_t>(n_active);
    }
    std::vector<PointInput> inputs(first.back());
    parallel_for(touched.size(), [&](std::size_t i) {
      const std::uint32_t s = touched[i];
      std::vector<std::uint32_t> live;
      for (std::uint32_t v : vis_[s]) {
        if (active_[v]) {
          live.push_back(v);
        }
      }
      std::size_t slot = first[i];
      inputs[slot++] = assemble_from_visible(samples_[s], views_, live, nullptr, k_cap_);
      std::vector<std::uint32_t> minus;
      for (std::size_t drop = 0; drop < live.size(); ++drop) {
        minus.clear();
        for (std::size_t k = 0; k < live.size(); ++k) {
          if (k != drop) {
            minus.push_back(live[k]);
          }
        }
        inputs[slot++] = assemble_from_visible(samples_[s], views_, minus, nullptr, k_cap_);
      }
    });
    const auto values = predictor_.predict(inputs);
    for (std::size_t i = 0; i < touched.size(); ++i) {
      const std::uint32_t s = touched[i];
      std::size_t slot = first[i];
      pred_[s] = values[slot++];
      without_[s].assign(vis_[s].size(), std::numeric_limits<double>::quiet_NaN());
      for (std::size_t t = 0; t < vis_[s].size(); ++t) {
        if (active_[vis_[s][t]]) {
          without_[s][t] = values[slot++];
        }
      }
    }
  }

  std::span<const Viewpoint> views_;
  std::span<const SurfaceSample> samples_;
  const Predictor& predictor_;
  std::size_t k_cap_;
  std::vector<std::vector<std::uint32_t>> vis_;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> seen_; // (sample, slot in vis_[sample])
  std::vector<char> active_;
  std::vector<char> locked_;
  std::vector<double> pred_;
  std::vector<std::vector<double>> without_;
};

Viewpoint pose_to_view(const std::vector<double>& x, const Viewpoint& like) {
  Viewpoint v = like;
  v.position = Vec3(x[0], x[1], x[2]);
  v.direction = Viewpoint::direction_from(x[3], x[4]);
  return v;
}

nlohmann::json view_json(const Viewpoint& v) {
  return {{"position", {v.position.x(), v.position.y(), v.position.z()}},
          {"direction", {v.direction.x(), v.direction.y(), v.direction.z()}},
          {"yaw_deg", rad2deg(v.yaw())},
          {"pitch_deg", rad2deg(v.pitch())},
          {"fov", v.fov},
          {"max_range", v.max_range}};
}

Vec3 vec_from_json(const nlohmann::json& j, const char* field) {
  const auto a = j.at(field).get<std::vector<double>>();
  if (a.size() != 3) {
    throw InputError(std::string("viewpoint field '") + field + "' must hold 3 numbers");
  }
  return {a[0], a[1], a[2]};
}

Trajectory make_trajectory(std::span<const Viewpoint> views, std::vector<std::size_t> order) {
  Trajectory t;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Viewpoint& v = views[order[k]];
    t.waypoints.push_back({v.position, v.yaw(), v.pitch()});
    if (k > 0) {
      t.length += (v.position - views[order[k - 1]].position).norm();
    }
  }
  t.order = std::move(order);
  return t;
}

std::vector<std::size_t> nearest_neighbor_order(std::span<const Viewpoint> views, const Vec3& start) {
  std::vector<char> used(views.size(), 0);
  std::vector<std::size_t> order;
  Vec3 at = start;
  for (std::size_t step = 0; step < views.size(); ++step) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < views.size(); ++i) {
      const double d = (views[i].position - at).norm();
      if (!used[i] && d < best_d) {
        best = i;
        best_d = d;
      }
    }
    used[best] = 1;
    order.push_back(best);
    at = views[best].position;
  }
  return order;
}

} // namespace

void PlannerConfig::validate() const {
  require(samples_per_iteration >= 1, "samples_per_iteration must be >= 1");
  require(candidates >= 1, "candidates (M_m) must be >= 1");
  require(keep >= 1 && keep <= candidates, "keep (M_b) must lie in [1, candidates]");
  require(std::isfinite(threshold), "threshold must be finite");
  require(max_iterations >= 1, "max_iterations must be >= 1");
  require(view_budget >= 1, "view_budget must be >= 1");
  require(clearance > 0.0, "clearance must be positive");
  require(knn >= 1, "knn must be >= 1");
  require(radius_min >= 0.0 && radius_max >= 0.0, "radius range must be non-negative");
  require(shell_min() <= shell_max(), "radius_min must not exceed radius_max");
  require(shell_min() > clearance, "hemisphere radius must exceed the clearance");
  require(surface_samples >= 2, "surface_samples must be >= 2");
  require(adjust_evaluations >= 1, "adjust_evaluations must be >= 1");
  require(k_cap >= 1, "k_cap must be >= 1");
  require(camera.fov > 0.0 && camera.fov < std::numbers::pi, "camera fov must lie in (0, pi)");
  require(camera.max_range > 0.0, "camera max_range must be positive");
}

void to_json(nlohmann::json& j, const PlannerConfig& c) {
  j = {{"samples_per_iteration", c.samples_per_iteration},
       {"candidates", c.candidates},
       {"keep", c.keep},
       {"threshold", c.threshold},
       {"max_iterations", c.max_iterations},
       {"view_budget", c.view_budget},
       {"clearance", c.clearance},
       {"knn", c.knn},
       {"radius_min", c.shell_min()},
       {"radius_max", c.shell_max()},
       {"surface_samples", c.surface_samples},
       {"adjust_evaluations", c.adjust_evaluations},
       {"k_cap", c.k_cap},
       {"fov_deg", rad2deg(c.camera.fov)},
       {"max_range", c.camera.max_range},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PlannerConfig& c) {
  static const std::set<std::string> known = {
      "samples_per_iteration", "candidates", "keep",          "threshold",          "max_iterations", "view_budget",
      "clearance",             "knn",        "radius_min",    "radius_max",         "surface_samples",
      "adjust_evaluations",    "k_cap",      "fov_deg",       "max_range",          "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      throw InputError("planner configuration: unknown field '" + key + "'");
    }
  }
  c.samples_per_iteration = j.value("samples_per_iteration", c.samples_per_iteration);
  c.candidates = j.value("candidates", c.candidates);
  c.keep = j.value("keep", c.keep);
  c.threshold = j.value("threshold", c.threshold);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.view_budget = j.value("view_budget", c.view_budget);
  c.clearance = j.value("clearance", c.clearance);
  c.knn = j.value("knn", c.knn);
  c.radius_min = j.value("radius_min", c.radius_min);
  c.radius_max = j.value("radius_max", c.radius_max);
  c.surface_samples = j.value("surface_samples", c.surface_samples);
  c.adjust_evaluations = j.value("adjust_evaluations", c.adjust_evaluations);
  c.k_cap = j.value("k_cap", c.k_cap);
  c.camera.fov = deg2rad(j.value("fov_deg", rad2deg(c.camera.fov)));
  c.camera.max_range = j.value("max_range", c.camera.max_range);
  c.seed = j.value("seed", c.seed);
}

nlohmann::json to_json(const ViewPlan& plan) {
  nlohmann::json views = nlohmann::json::array();
  for (const Viewpoint& v : plan.viewpoints) {
    views.push_back(view_json(v));
  }
  nlohmann::json trace = nlohmann::json::array();
  for (const ObjectiveStep& s : plan.trace) {
    trace.push_back(
        {{"iteration", s.iteration}, {"min", s.min}, {"mean", s.mean}, {"views", s.views}, {"accepted", s.accepted}});
  }
  return {{"viewpoints", views},      {"trace", trace},        {"iterations", plan.iterations},
          {"config", plan.config},    {"seed", plan.config.seed}, {"predictor", plan.predictor}};
}

ViewPlan view_plan_from_json(const nlohmann::json& j) {
  ViewPlan plan;
  try {
    for (const auto& v : j.at("viewpoints")) {
      Viewpoint vp;
      vp.position = vec_from_json(v, "position");
      vp.direction = vec_from_json(v, "direction");
      vp.fov = v.value("fov", vp.fov);
      vp.max_range = v.value("max_range", vp.max_range);
      vp.validate();
      plan.viewpoints.push_back(vp);
    }
    for (const auto& s : j.value("trace", nlohmann::json::array())) {
      plan.trace.push_back({s.at("iteration").get<std::size_t>(), s.at("min").get<double>(),
                            s.at("mean").get<double>(), s.at("views").get<std::size_t>(),
                            s.at("accepted").get<bool>()});
    }
    plan.iterations = j.value("iterations", std::size_t{0});
    if (j.contains("config")) {
      plan.config = j.at("config").get<PlannerConfig>();
    }
    plan.predictor = j.value("predictor", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed view plan: ") + e.what());
  }
  return plan;
}

std::string to_csv(const Trajectory& t) {
  std::ostringstream os;
  os << "x_m,y_m,z_m,yaw_deg,pitch_deg\n";
  char line[160];
  for (const Waypoint& w : t.waypoints) {
    std::snprintf(line, sizeof line, "%.6f,%.6f,%.6f,%.6f,%.6f\n", w.position.x(), w.position.y(), w.position.z(),
                  rad2deg(w.yaw), rad2deg(w.pitch));
    os << line;
  }
  return os.str();
}

double signed_distance(const ProxyMesh& mesh, const Vec3& p) {
  const double d = mesh.closest_point(p).distance;
  return mesh.inside(p) ? -d : d;
}

bool respects_clearance(const ProxyMesh& mesh, const Vec3& p, double clearance) {
  return signed_distance(mesh, p) >= clearance;
}

std::vector<double> score_samples(const ProxyMesh& mesh, const Predictor& predictor,
                                  std::span<const SurfaceSample> samples, std::span<const Viewpoint> views,
                                  std::size_t k_cap) {
  require_descriptor_free(predictor);
  std::vector<PointInput> inputs(samples.size());
  parallel_for(samples.size(),
               [&](std::size_t s) { inputs[s] = assemble_point_input(mesh, samples[s], views, nullptr, k_cap); });
  return predictor.predict(inputs);
}

std::vector<double> sampling_weights(std::span<const SurfaceSample> samples, std::span<const double> predictions,
                                     std::size_t k) {
  if (samples.size() != predictions.size()) {
    throw InputError("sampling: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(samples.size()) + " samples");
  }
  if (k < 1) {
    throw InputError("sampling: k must be >= 1");
  }
  std::vector<Vec3> pts(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    pts[i] = samples[i].position;
  }
  const KdTree tree(pts);
  const std::size_t kk = std::min(k, samples.size());
  std::vector<double> w(samples.size(), 0.0);
  parallel_for(samples.size(), [&](std::size_t j) {
    double sum = 0.0;
    for (const auto& [q, d] : tree.knn(pts[j], kk)) {
      sum += std::exp(-d) / std::max(predictions[q], kReconFloor);
    }
    w[j] = sum / static_cast<double>(kk);
  });
  return w;
}

std::vector<double> sampling_probs(std::span<const SurfaceSample> samples, std::span<const double> predictions,
                                   std::size_t k) {
  auto w = sampling_weights(samples, predictions, k);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) {
    v /= total;
  }
  return w;
}

std::vector<std::size_t> sample_targets(std::span<const double> probs, std::size_t n, std::uint64_t seed) {
  if (n > probs.size()) {
    throw InputError("cannot draw " + std::to_string(n) + " distinct targets from " + std::to_string(probs.size()) +
                     " samples");
  }
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw InputError("target probabilities must be finite and non-negative");
    }
  }
  std::vector<double> mass(probs.begin(), probs.end());
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t draw = 0; draw < n; ++draw) {
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    std::size_t pick = mass.size();
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < mass.size(); ++i) {
        acc += mass[i];
        if (mass[i] > 0.0 && u < acc) {
          pick = i;
          break;
        }
      }
      if (pick == mass.size()) {
        // rounding at the upper end: last index with mass
        for (std::size_t i = mass.size(); i-- > 0;) {
          if (mass[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // only zero-mass indices remain; fall back to uniform among the unpicked
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < mass.size(); ++i) {
        if (std::find(out.begin(), out.end(), i) == out.end()) {
          rest.push_back(i);
        }
      }
      pick = rest[rng.below(rest.size())];
    }
    out.push_back(pick);
    mass[pick] = 0.0;
  }
  return out;
}

double init_score(const Vec3& u, const Vec3& normal, std::span<const Vec3> existing_dirs) {
  double m = 1.0;
  if (!existing_dirs.empty()) {
    m = std::numeric_limits<double>::infinity();
    for (const Vec3& v : existing_dirs) {
      m = std::min(m, u.dot(v));
    }
  }
  return u.dot(normal) * m;
}

std::vector<Viewpoint> init_views(const SurfaceSample& sample, std::span<const Viewpoint> existing,
                                  const ProxyMesh& mesh, const PlannerConfig& cfg, std::uint64_t seed) {
  std::vector<Vec3> existing_dirs;
  for (const Viewpoint& v : existing) {
    if (visible(mesh, v, sample)) {
      existing_dirs.push_back((v.position - sample.position).normalized());
    }
  }
  Rng rng(seed);
  struct Candidate {
    Viewpoint view;
    double score;
    std::size_t index;
  };
  std::vector<Candidate> kept;
  for (std::size_t m = 0; m < cfg.candidates; ++m) {
    Vec3 u(rng.normal(), rng.normal(), rng.normal());
    while (u.squaredNorm() < 1e-12) {
      u = Vec3(rng.normal(), rng.normal(), rng.normal());
    }
    u.normalize();
    if (u.dot(sample.normal) < 0.0) {
      u = -u;
    }
    const double r = rng.uniform(cfg.shell_min(), cfg.shell_max());
    const Vec3 p = sample.position + r * u;
    if (!respects_clearance(mesh, p, cfg.clearance)) {
      continue;
    }
    const Viewpoint view{p, -u, cfg.camera.fov, cfg.camera.max_range};
    if (!visible(mesh, view, sample)) {
      continue;
    }
    kept.push_back({view, init_score(u, sample.normal, existing_dirs), m});
  }
  std::sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) {
    return a.score != b.score ? a.score > b.score : a.index < b.index;
  });
  std::vector<Viewpoint> out;
  for (std::size_t i = 0; i < kept.size() && i < cfg.keep; ++i) {
    out.push_back(kept[i].view);
  }
  return out;
}

std::vector<Viewpoint> eliminate(std::span<const Viewpoint> views, std::span<const SurfaceSample> samples,
                                 const Predictor& predictor, const ProxyMesh& mesh, const EliminationOptions& opt) {
  require_descriptor_free(predictor);
  if (views.empty()) {
    return {};
  }
  Eliminator el(views, samples, predictor, mesh, opt.k_cap);
  while (const auto v = el.most_redundant(opt.threshold, true)) {
    if (el.removal_is_safe(*v, opt.threshold)) {
      el.remove(*v);
    } else {
      el.lock(*v);
    }
  }
  if (opt.budget > 0) {
    while (el.active_count() > opt.budget) {
      el.remove(*el.most_redundant(opt.threshold, false));
    }
  }
  return el.survivors();
}

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                             std::span<const double> steps, std::size_t max_evaluations) {
  const std::size_t n = x0.size();
  if (steps.size() != n) {
    throw InputError("nelder_mead: step count does not match the dimension");
  }
  NelderMeadResult res;
  struct Vertex {
    std::vector<double> x;
    double f;
  };
  const auto eval = [&](const std::vector<double>& x) {
    ++res.evaluations;
    return f(x);
  };
  std::vector<Vertex> simplex;
  simplex.push_back({x0, eval(x0)});
  for (std::size_t i = 0; i < n && res.evaluations < max_evaluations; ++i) {
    auto x = x0;
    x[i] += steps[i];
    simplex.push_back({x, eval(x)});
  }
  const auto by_value = [](const Vertex& a, const Vertex& b) { return a.f < b.f; };
  const auto combine = [](const std::vector<double>& a, const std::vector<double>& b, double t) {
    // a + t (b - a)
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      out[i] = a[i] + t * (b[i] - a[i]);
    }
    return out;
  };
  if (simplex.size() == n + 1) {
    while (res.evaluations < max_evaluations) {
      std::stable_sort(simplex.begin(), simplex.end(), by_value);
      std::vector<double> c(n, 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
          c[i] += simplex[k].x[i] / static_cast<double>(n);
        }
      }
      Vertex& worst = simplex[n];
      const auto xr = combine(c, worst.x, -1.0);
      const double fr = eval(xr);
      if (fr < simplex[0].f) {
        if (res.evaluations < max_evaluations) {
          const auto xe = combine(c, worst.x, -2.0);
          const double fe = eval(xe);
          worst = fe < fr ? Vertex{xe, fe} : Vertex{xr, fr};
        } else {
          worst = {xr, fr};
        }
        continue;
      }
      if (fr < simplex[n - 1].f) {
        worst = {xr, fr};
        continue;
      }
      if (res.evaluations >= max_evaluations) {
        break;
      }
      const bool outside = fr < worst.f;
      const auto xc = outside ? combine(c, xr, 0.5) : combine(c, worst.x, 0.5);
      const double fc = eval(xc);
      if (fc < std::min(fr, worst.f)) {
        worst = {xc, fc};
        continue;
      }
      for (std::size_t k = 1; k <= n && res.evaluations < max_evaluations; ++k) {
        simplex[k].x = combine(simplex[0].x, simplex[k].x, 0.5);
        simplex[k].f = eval(simplex[k].x);
      }
    }
  }
  const auto best = std::min_element(simplex.begin(), simplex.end(), by_value);
  res.x = best->x;
  res.value = best->f;
  return res;
}

std::vector<Viewpoint> adjust(std::span<const Viewpoint> views, std::span<const SurfaceSample> samples,
                              const Predictor& predictor, const ProxyMesh& mesh, const PlannerConfig& cfg) {
  require_descriptor_free(predictor);
  std::vector<Viewpoint> out(views.begin(), views.end());
  if (out.empty() || samples.empty()) {
    return out;
  }
  auto vis = visibility_lists(mesh, samples, out);
  const auto predict_lists = [&](std::span<const std::uint32_t> which, std::span<const Viewpoint> vs,
                                 const std::vector<std::vector<std::uint32_t>>& lists) {
    std::vector<PointInput> inputs(which.size());
    parallel_for(which.size(), [&](std::size_t k) {
      inputs[k] = assemble_from_visible(samples[which[k]], vs, lists[k], nullptr, cfg.k_cap);
    });
    return predictor.predict(inputs);
  };
  std::vector<double> full(samples.size());
  {
    std::vector<std::uint32_t> all(samples.size());
    std::iota(all.begin(), all.end(), 0u);
    full = predict_lists(all, out, vis);
  }
  const std::array<double, 5> steps = {2.0, 2.0, 2.0, deg2rad(5.0), deg2rad(5.0)};

  for (std::size_t i = 0; i < out.size(); ++i) {
    const Viewpoint start = out[i];
    const auto vi = static_cast<std::uint32_t>(i);
    // affected samples: everything within range of the starting pose
    std::vector<std::uint32_t> affected;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      if ((samples[s].position - start.position).norm() <= start.max_range) {
        affected.push_back(static_cast<std::uint32_t>(s));
      }
    }
    // prediction of each affected sample with view i taken out
    std::vector<std::vector<std::uint32_t>> others(affected.size());
    std::vector<double> base(affected.size());
    std::vector<std::uint32_t> need;
    std::vector<std::vector<std::uint32_t>> need_lists;
    std::vector<std::size_t> need_slot;
    for (std::size_t k = 0; k < affected.size(); ++k) {
      const auto& vs = vis[affected[k]];
      std::copy_if(vs.begin(), vs.end(), std::back_inserter(others[k]), [&](std::uint32_t v) { return v != vi; });
      base[k] = full[affected[k]];
      if (others[k].size() != vs.size()) {
        need.push_back(affected[k]);
        need_lists.push_back(others[k]);
        need_slot.push_back(k);
      }
    }
    const auto removed = predict_lists(need, out, need_lists);
    for (std::size_t q = 0; q < need.size(); ++q) {
      base[need_slot[q]] = removed[q];
    }
    const double constant = std::accumulate(base.begin(), base.end(), 0.0);

    std::vector<Viewpoint> trial = out;
    const auto objective = [&](const Viewpoint& pose) {
      if (!respects_clearance(mesh, pose.position, cfg.clearance)) {
        return -std::numeric_limits<double>::infinity();
      }
      trial[i] = pose;
      std::vector<char> sees(affected.size(), 0);
      parallel_for(affected.size(), [&](std::size_t k) { sees[k] = visible(mesh, pose, samples[affected[k]]) ? 1 : 0; });
      std::vector<std::uint32_t> which;
      std::vector<std::vector<std::uint32_t>> lists;
      std::vector<std::size_t> slot;
      for (std::size_t k = 0; k < affected.size(); ++k) {
        if (sees[k]) {
          auto l = others[k];
          l.insert(std::upper_bound(l.begin(), l.end(), vi), vi);
          which.push_back(affected[k]);
          lists.push_back(std::move(l));
          slot.push_back(k);
        }
      }
      const auto with = predict_lists(which, trial, lists);
      double total = constant;
      for (std::size_t q = 0; q < which.size(); ++q) {
        total += with[q] - base[slot[q]];
      }
      return total;
    };

    const double f_start = objective(start);
    const std::vector<double> x0 = {start.position.x(), start.position.y(), start.position.z(), start.yaw(),
                                    start.pitch()};
    const auto res = nelder_mead([&](const std::vector<double>& x) { return -objective(pose_to_view(x, start)); },
                                 x0, steps, cfg.adjust_evaluations);
    const double f_best = -res.value;
    if (!(f_best > f_start) || !std::isfinite(f_best)) {
      continue;
    }
    out[i] = pose_to_view(res.x, start);
    std::vector<std::uint32_t> changed;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      auto& vs = vis[s];
      const auto it = std::lower_bound(vs.begin(), vs.end(), vi);
      const bool had = it != vs.end() && *it == vi;
      const bool has = visible(mesh, out[i], samples[s]);
      if (had && !has) {
        vs.erase(it);
      } else if (!had && has) {
        vs.insert(it, vi);
      }
      if (had || has) {
        changed.push_back(static_cast<std::uint32_t>(s));
      }
    }
    std::vector<std::vector<std::uint32_t>> lists;
    for (std::uint32_t s : changed) {
      lists.push_back(vis[s]);
    }
    const auto fresh = predict_lists(changed, out, lists);
    for (std::size_t q = 0; q < changed.size(); ++q) {
      full[changed[q]] = fresh[q];
    }
  }
  return out;
}

ViewPlan plan(const ProxyMesh& mesh, const Predictor& predictor, const PlannerConfig& cfg) {
  cfg.validate();
  require_descriptor_free(predictor);
  if (mesh.empty()) {
    throw InputError("cannot plan on an empty proxy mesh");
  }
  ViewPlan result;
  result.config = cfg;
  result.predictor = predictor.name();

  const auto pool = sample_surface(mesh, cfg.surface_samples, derive_seed(cfg.seed, 1));
  std::vector<Viewpoint> views;
  auto preds = score_samples(mesh, predictor, pool, views, cfg.k_cap);
  Objective best = summarize(preds);
  result.trace.push_back({0, best.min, best.mean, 0, true});

  const EliminationOptions elim{cfg.threshold, cfg.view_budget, cfg.k_cap};
  std::size_t stalled = 0;
  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    result.iterations = it;
    const auto probs = sampling_probs(pool, preds, cfg.knn);
    const auto targets = sample_targets(probs, std::min(cfg.samples_per_iteration, pool.size()),
                                        derive_seed(cfg.seed, it, 2));
    std::vector<Viewpoint> trial = views;
    for (std::size_t j = 0; j < targets.size(); ++j) {
      const auto fresh = init_views(pool[targets[j]], trial, mesh, cfg, derive_seed(cfg.seed, it, 3, j));
      trial.insert(trial.end(), fresh.begin(), fresh.end());
    }
    trial = eliminate(trial, pool, predictor, mesh, elim);
    trial = adjust(trial, pool, predictor, mesh, cfg);
    auto trial_preds = score_samples(mesh, predictor, pool, trial, cfg.k_cap);
    const Objective now = summarize(trial_preds);
    const bool accepted = improves(now, best);
    result.trace.push_back({it, now.min, now.mean, trial.size(), accepted});
    double gain = 0.0;
    if (accepted) {
      gain = relative_gain(now, best);
      views = std::move(trial);
      preds = std::move(trial_preds);
      best = now;
    }
    stalled = gain < kStallImprovement ? stalled + 1 : 0;
    if (stalled >= kStallIterations || views.size() >= cfg.view_budget) {
      break;
    }
  }
  result.viewpoints = std::move(views);
  return result;
}

std::vector<Viewpoint> integrate_eliminate_only(std::span<const Viewpoint> dense, std::span<const SurfaceSample> samples,
                                                const Predictor& predictor, const ProxyMesh& mesh,
                                                const EliminationOptions& opt) {
  return eliminate(dense, samples, predictor, mesh, opt);
}

std::vector<Viewpoint> integrate_adjust_only(std::span<const Viewpoint> views, std::span<const SurfaceSample> samples,
                                             const Predictor& predictor, const ProxyMesh& mesh,
                                             const PlannerConfig& cfg) {
  return adjust(views, samples, predictor, mesh, cfg);
}

Trajectory nearest_neighbor_trajectory(std::span<const Viewpoint> views, const Vec3& start) {
  if (views.empty()) {
    throw InputError("trajectory needs at least one view");
  }
  return make_trajectory(views, nearest_neighbor_order(views, start));
}

Trajectory order_trajectory(std::span<const Viewpoint> views, const Vec3& start) {
  if (views.empty()) {
    throw InputError("trajectory needs at least one view");
  }
  auto order = nearest_neighbor_order(views, start);
  const std::size_t n = order.size();
  const auto at = [&](std::size_t k) -> const Vec3& { return k == 0 ? start : views[order[k - 1]].position; };
  // positions 1..n in the path start, order[0], ..., order[n-1]; reversing a
  // segment [i, j] only changes its two boundary edges
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t i = 1; i < n; ++i) {
      for (std::size_t j = i + 1; j <= n; ++j) {
        const double before = (at(i) - at(i - 1)).norm() + (j < n ? (at(j + 1) - at(j)).norm() : 0.0);
        const double after = (at(j) - at(i - 1)).norm() + (j < n ? (at(j + 1) - at(i)).norm() : 0.0);
        if (after < before - 1e-9) {
          std::reverse(order.begin() + static_cast<long>(i - 1), order.begin() + static_cast<long>(j));
          improved = true;
        }
      }
    }
  }
  return make_trajectory(views, std::move(order));
}

} // namespace skyplan
