#include "skyplan/cli.hpp"

#include "skyplan/binary_io.hpp"
#include "skyplan/eval.hpp"
#include "skyplan/nn/gradcheck.hpp"
#include "skyplan/parallel.hpp"
#include "skyplan/planner.hpp"
#include "skyplan/rng.hpp"
#include "skyplan/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <sstream>

namespace skyplan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Field {
  std::string key;
  json value; // default, and the type every override must match
  std::string help;
};
using Fields = std::vector<Field>;

struct Binding {
  std::string key;
  CLI::Option* option = nullptr;
  std::function<json()> value;
};

/// Everything a command records about its run.
class Manifest {
public:
  void input(const fs::path& path) {
    const std::string data = read_file_bytes(path);
    inputs_.push_back({{"path", path.string()}, {"bytes", data.size()}, {"crc32", crc32_of(data)}});
  }
  void output(const fs::path& path, const std::string& data) {
    write_file_bytes(path, data);
    outputs_.push_back({{"path", path.filename().string()}, {"bytes", data.size()}, {"crc32", crc32_of(data)}});
  }
  void seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }
  [[nodiscard]] json to_json(const std::string& command, const json& config, double wall_time) const {
    return {{"command", command},
            {"version", kVersion},
            {"config", config},
            {"seeds", seeds_},
            {"inputs", inputs_},
            {"outputs", outputs_},
            {"threads", thread_count()},
            {"wall_time_s", wall_time}};
  }

private:
  json inputs_ = json::array();
  json outputs_ = json::array();
  json seeds_ = json::object();
};

struct Context {
  fs::path out;
  Manifest manifest;
};

struct Command {
  std::string name;
  std::string description;
  Fields fields;
  std::function<int(const json&, Context&)> body;
};

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

void log(const std::string& msg) { std::cerr << msg << '\n'; }

// ---- typed access to the merged configuration -------------------------------

double num(const json& c, const std::string& key) { return c.at(key).get<double>(); }
long long integer(const json& c, const std::string& key) { return c.at(key).get<long long>(); }
std::string str(const json& c, const std::string& key) { return c.at(key).get<std::string>(); }

std::size_t count(const json& c, const std::string& key) {
  const long long v = integer(c, key);
  if (v < 0) {
    throw InputError("'" + key + "' must be non-negative, got " + std::to_string(v));
  }
  return static_cast<std::size_t>(v);
}

std::uint64_t seed_of(const json& c, const std::string& key) { return static_cast<std::uint64_t>(count(c, key)); }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    if (!item.empty()) {
      out.push_back(item);
    }
  }
  return out;
}

fs::path existing_file(const json& c, const std::string& key, Context& ctx) {
  const std::string p = str(c, key);
  if (p.empty()) {
    throw InputError("--" + dashed(key) + " is required");
  }
  if (!fs::is_regular_file(p)) {
    throw InputError("input file '" + p + "' does not exist");
  }
  ctx.manifest.input(p);
  return p;
}

json read_json_file(const fs::path& path) {
  try {
    return json::parse(read_file_bytes(path));
  } catch (const json::parse_error& e) {
    throw InputError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---- shared field groups ------------------------------------------------------

Fields scene_shape_fields() {
  return {{"footprint_x", 60.0, "scene extent along x, meters"},
          {"footprint_y", 60.0, "scene extent along y, meters"},
          {"buildings", 4, "number of buildings"},
          {"height_min", 10.0, "lowest eave height, meters"},
          {"height_max", 24.0, "highest eave height, meters"}};
}

Fields scene_fields(const std::string& seed_key, std::uint64_t seed) {
  Fields f{{seed_key, seed, "scene generator seed"}};
  for (Field& x : scene_shape_fields()) {
    f.push_back(std::move(x));
  }
  f.push_back({"proxy_level", "fine", "proxy degradation: box | coarse | inter | fine"});
  return f;
}

SceneSpec scene_from(const json& c, const std::string& seed_key) {
  SceneSpec s;
  s.seed = seed_of(c, seed_key);
  s.footprint_x = num(c, "footprint_x");
  s.footprint_y = num(c, "footprint_y");
  s.buildings = static_cast<int>(integer(c, "buildings"));
  s.height_min = num(c, "height_min");
  s.height_max = num(c, "height_max");
  s.proxy_level = proxy_level_from_string(str(c, "proxy_level"));
  s.validate();
  return s;
}

Fields camera_fields() {
  return {{"fov_deg", 60.0, "camera full cone angle, degrees"}, {"max_range", 100.0, "camera range, meters"}};
}

CameraModel camera_from(const json& c) {
  CameraModel cam;
  cam.fov = deg2rad(num(c, "fov_deg"));
  cam.max_range = num(c, "max_range");
  if (!(cam.fov > 0.0 && cam.fov < std::numbers::pi) || !(cam.max_range > 0.0)) {
    throw InputError("camera needs 0 < fov_deg < 180 and a positive max_range");
  }
  return cam;
}

Fields planner_fields(double radius_min, double radius_max) {
  const PlannerConfig d;
  return {{"samples_per_iteration", d.samples_per_iteration, "targets drawn per iteration (N)"},
          {"candidates", d.candidates, "hemisphere candidates per target (M_m)"},
          {"keep", d.keep, "candidates kept per target (M_b)"},
          {"threshold", d.threshold, "elimination threshold on predicted reconstructability"},
          {"max_iterations", d.max_iterations, "outer iterations"},
          {"view_budget", d.view_budget, "maximum number of views"},
          {"clearance", d.clearance, "safety distance to the proxy, meters"},
          {"knn", d.knn, "neighbours in the adaptive sampling weight"},
          {"radius_min", radius_min, "hemisphere shell inner radius, meters (0: half the camera range)"},
          {"radius_max", radius_max, "hemisphere shell outer radius, meters (0: the camera range)"},
          {"surface_samples", d.surface_samples, "proxy samples scored every iteration"},
          {"adjust_evaluations", d.adjust_evaluations, "Nelder-Mead evaluations per view"},
          {"k_cap", d.k_cap, "views kept per sample"}};
}

PlannerConfig planner_from(const json& c) {
  PlannerConfig p;
  p.samples_per_iteration = count(c, "samples_per_iteration");
  p.candidates = count(c, "candidates");
  p.keep = count(c, "keep");
  p.threshold = num(c, "threshold");
  p.max_iterations = count(c, "max_iterations");
  p.view_budget = count(c, "view_budget");
  p.clearance = num(c, "clearance");
  p.knn = count(c, "knn");
  p.radius_min = num(c, "radius_min");
  p.radius_max = num(c, "radius_max");
  p.surface_samples = count(c, "surface_samples");
  p.adjust_evaluations = count(c, "adjust_evaluations");
  p.k_cap = count(c, "k_cap");
  p.camera = camera_from(c);
  p.seed = seed_of(c, "seed");
  p.validate();
  return p;
}

Fields concat(std::initializer_list<Fields> groups) {
  Fields out;
  for (const Fields& g : groups) {
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

/// "kind:count:altitude[:keep]" items separated by commas.
std::vector<ViewSetRecipe> parse_view_sets(const std::string& text, std::uint64_t seed) {
  std::vector<ViewSetRecipe> out;
  for (const std::string& item : split(text, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() < 3 || parts.size() > 4) {
      throw InputError("view set '" + item + "' must look like kind:count:altitude[:keep]");
    }
    ViewSetRecipe r;
    r.kind = parts[0];
    try {
      r.count = std::stoul(parts[1]);
      r.altitude = std::stod(parts[2]);
      if (parts.size() == 4) {
        r.keep = std::stod(parts[3]);
      }
    } catch (const std::exception&) {
      throw InputError("view set '" + item + "' has a non-numeric field");
    }
    r.seed = seed;
    if (r.count == 0) {
      throw InputError("view set '" + item + "' has no views");
    }
    out.push_back(r);
  }
  return out;
}

struct LoadedPredictor {
  std::shared_ptr<LearnedModel> model;
  std::unique_ptr<Predictor> predictor;
};

LoadedPredictor load_predictor(const std::string& kind_name, const json& c, Context& ctx) {
  const PredictorKind kind = predictor_kind_from_string(kind_name);
  LoadedPredictor out;
  switch (kind) {
  case PredictorKind::heuristic:
    out.predictor = make_heuristic_predictor();
    break;
  case PredictorKind::visible_count:
    out.predictor = make_visible_count_predictor();
    break;
  case PredictorKind::oracle:
    out.predictor = make_oracle_predictor();
    break;
  case PredictorKind::learned_spatial:
  case PredictorKind::learned_uncertainty: {
    if (str(c, "checkpoint").empty()) {
      throw InputError("predictor '" + kind_name + "' needs --checkpoint");
    }
    Checkpoint ck = load_checkpoint(existing_file(c, "checkpoint", ctx));
    const bool unc = kind == PredictorKind::learned_uncertainty;
    if (ck.trained_phase < (unc ? 2 : 1)) {
      throw InputError("checkpoint was trained up to phase " + std::to_string(ck.trained_phase) + "; '" + kind_name +
                       "' needs phase " + (unc ? "2" : "1"));
    }
    out.model = std::make_shared<LearnedModel>(std::move(ck.model));
    out.predictor = make_learned_predictor(out.model, unc);
    break;
  }
  }
  return out;
}

// ---- commands -------------------------------------------------------------------

int cmd_gen_scene(const json& c, Context& ctx) {
  const SceneSpec spec = scene_from(c, "seed");
  const std::string format = str(c, "format");
  if (format != "obj" && format != "ply") {
    throw InputError("format must be obj or ply, got '" + format + "'");
  }
  ctx.manifest.seed("scene", spec.seed);
  const Scene scene = generate_scene(spec);
  for (const auto& [name, mesh] : {std::pair<std::string, const ProxyMesh*>{"ground_truth", &scene.ground_truth},
                                   {"proxy", &scene.proxy}}) {
    const fs::path path = ctx.out / (name + "." + format);
    if (format == "obj") {
      save_obj(*mesh, path);
    } else {
      save_ply(*mesh, path);
    }
    ctx.manifest.output(path, read_file_bytes(path));
  }
  json footprints = json::array();
  for (const auto& f : scene.footprints) {
    footprints.push_back({f[0], f[1], f[2], f[3]});
  }
  ctx.manifest.output(ctx.out / "scene.json",
                      dump({{"spec", spec},
                            {"footprints", footprints},
                            {"ground_truth_triangles", scene.ground_truth.triangle_count()},
                            {"proxy_triangles", scene.proxy.triangle_count()}}));
  log("scene written to " + ctx.out.string());
  return kExitOk;
}

int cmd_sample(const json& c, Context& ctx) {
  const ProxyMesh mesh = load_mesh(existing_file(c, "mesh", ctx));
  const std::size_t n = count(c, "count");
  const std::uint64_t seed = seed_of(c, "seed");
  const std::string method = str(c, "method");
  ctx.manifest.seed("samples", seed);
  std::vector<SurfaceSample> samples;
  if (method == "blue_noise") {
    samples = sample_surface(mesh, n, seed);
  } else if (method == "uniform") {
    samples = sample_uniform(mesh, n, seed);
  } else {
    throw InputError("method must be blue_noise or uniform, got '" + method + "'");
  }
  std::ostringstream os;
  os << "x,y,z,nx,ny,nz,triangle\n";
  char line[256];
  for (const SurfaceSample& s : samples) {
    std::snprintf(line, sizeof line, "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%u\n", s.position.x(), s.position.y(),
                  s.position.z(), s.normal.x(), s.normal.y(), s.normal.z(), s.source_triangle);
    os << line;
  }
  ctx.manifest.output(ctx.out / "samples.csv", os.str());
  log(std::to_string(samples.size()) + " samples written");
  return kExitOk;
}

int cmd_build_dataset(const json& c, Context& ctx) {
  DatasetConfig dc;
  const auto seeds = split(str(c, "scene_seeds"), ',');
  const auto levels = split(str(c, "proxy_levels"), ',');
  if (seeds.empty() || levels.empty()) {
    throw InputError("scene_seeds and proxy_levels must not be empty");
  }
  json scene_cfg = c;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    try {
      scene_cfg["scene_seed"] = std::stoull(seeds[i]);
    } catch (const std::exception&) {
      throw InputError("scene seed '" + seeds[i] + "' is not a number");
    }
    scene_cfg["proxy_level"] = levels[i % levels.size()];
    dc.scenes.push_back(scene_from(scene_cfg, "scene_seed"));
  }
  dc.samples_per_scene = count(c, "samples_per_scene");
  dc.phase = static_cast<int>(integer(c, "phase"));
  dc.seed = seed_of(c, "seed");
  dc.density = num(c, "density");
  dc.tau = num(c, "tau");
  dc.k_cap = count(c, "k_cap");
  dc.camera = camera_from(c);
  dc.view_sets = parse_view_sets(str(c, "view_sets"), dc.seed);
  dc.validate();
  ctx.manifest.seed("dataset", dc.seed);
  const Dataset ds = build_dataset(dc, log);
  ctx.manifest.output(ctx.out / "dataset.bin", serialize_dataset(ds));
  log(std::to_string(ds.records.size()) + " records written");
  return kExitOk;
}

int cmd_train(const json& c, Context& ctx) {
  TrainConfig tc;
  tc.phase = static_cast<int>(integer(c, "phase"));
  tc.epochs = static_cast<int>(integer(c, "epochs"));
  tc.batch_size = count(c, "batch_size");
  tc.lr = num(c, "lr");
  tc.seed = seed_of(c, "seed");
  tc.tau = num(c, "tau");
  tc.neighbor_cap = count(c, "neighbor_cap");
  tc.validate();
  if (tc.phase == 2 && str(c, "checkpoint").empty()) {
    throw InputError("phase 2 training fine-tunes a phase-1 model; pass its checkpoint with --checkpoint");
  }
  const Dataset ds = load_dataset(existing_file(c, "dataset", ctx));
  Checkpoint ck;
  if (!str(c, "checkpoint").empty()) {
    ck = load_checkpoint(existing_file(c, "checkpoint", ctx));
    if (tc.phase == 2 && ck.trained_phase < 1) {
      throw InputError("checkpoint '" + str(c, "checkpoint") +
                       "' has not been through phase 1; phase 2 needs a phase-1 model");
    }
  } else {
    nn::ModelConfig mc;
    mc.hidden = static_cast<int>(integer(c, "hidden"));
    mc.heads = static_cast<int>(integer(c, "heads"));
    mc.layers = static_cast<int>(integer(c, "layers"));
    mc.ff = static_cast<int>(integer(c, "ff"));
    mc.validate();
    ck = fresh_checkpoint(mc, seed_of(c, "init_seed"));
    ctx.manifest.seed("init", seed_of(c, "init_seed"));
  }
  ctx.manifest.seed("train", tc.seed);
  const TrainResult res = train(ck, ds, tc, log);
  ck.meta["train"] = tc;
  fs::create_directories(ctx.out);
  const fs::path ck_path = ctx.out / "checkpoint.bin";
  save_checkpoint(ck, ck_path);
  ctx.manifest.output(ck_path, read_file_bytes(ck_path));
  std::ostringstream os;
  os << "epoch,loss\n";
  char line[64];
  for (std::size_t e = 0; e < res.loss_curve.size(); ++e) {
    std::snprintf(line, sizeof line, "%zu,%.9g\n", e + 1, res.loss_curve[e]);
    os << line;
  }
  ctx.manifest.output(ctx.out / "loss.csv", os.str());
  return kExitOk;
}

int cmd_predict(const json& c, Context& ctx) {
  const ProxyMesh mesh = load_mesh(existing_file(c, "mesh", ctx));
  const std::uint64_t seed = seed_of(c, "seed");
  const CameraModel cam = camera_from(c);
  std::vector<Viewpoint> views;
  if (!str(c, "views").empty()) {
    views = view_plan_from_json(read_json_file(existing_file(c, "views", ctx))).viewpoints;
  } else {
    for (const ViewSetRecipe& r : parse_view_sets(str(c, "view_set"), seed)) {
      const auto v = make_view_set(r, mesh, cam);
      views.insert(views.end(), v.begin(), v.end());
    }
  }
  LoadedPredictor lp = load_predictor(str(c, "predictor"), c, ctx);
  const auto samples = sample_surface(mesh, count(c, "samples"), derive_seed(seed, 1));
  ctx.manifest.seed("predict", seed);
  DescriptorProvider provider;
  if (lp.predictor->needs_descriptors()) {
    const ProxyMesh gt = load_mesh(existing_file(c, "ground_truth", ctx));
    provider = make_descriptor_provider(gt, mesh, views, derive_seed(seed, 4));
  }
  const std::size_t k_cap = count(c, "k_cap");
  std::vector<PointInput> inputs(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    inputs[i] = assemble_point_input(mesh, samples[i], views, provider ? &provider : nullptr, k_cap);
  });
  const auto pred = lp.predictor->predict(inputs);
  std::ostringstream os;
  os << "x,y,z,nx,ny,nz,views," << lp.predictor->name() << "\n";
  char line[256];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SurfaceSample& s = samples[i];
    std::snprintf(line, sizeof line, "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%zu,%.9g\n", s.position.x(), s.position.y(),
                  s.position.z(), s.normal.x(), s.normal.y(), s.normal.z(), inputs[i].size(), pred[i]);
    os << line;
  }
  ctx.manifest.output(ctx.out / "predictions.csv", os.str());
  return kExitOk;
}

int cmd_plan(const json& c, Context& ctx) {
  const PlannerConfig pc = planner_from(c);
  const ProxyMesh mesh = load_mesh(existing_file(c, "mesh", ctx));
  LoadedPredictor lp = load_predictor(str(c, "predictor"), c, ctx);
  ctx.manifest.seed("plan", pc.seed);
  const ViewPlan p = plan(mesh, *lp.predictor, pc);
  log("planned " + std::to_string(p.viewpoints.size()) + " views in " + std::to_string(p.iterations) + " iterations");
  ctx.manifest.output(ctx.out / "plan.json", dump(to_json(p)));
  return kExitOk;
}

int cmd_export_traj(const json& c, Context& ctx) {
  const ViewPlan p = view_plan_from_json(read_json_file(existing_file(c, "plan", ctx)));
  if (p.viewpoints.empty()) {
    throw InputError("plan has no viewpoints");
  }
  const Vec3 start(num(c, "start_x"), num(c, "start_y"), num(c, "start_z"));
  const Trajectory t = order_trajectory(p.viewpoints, start);
  log("trajectory length " + std::to_string(t.length) + " m over " + std::to_string(t.waypoints.size()) +
      " waypoints");
  ctx.manifest.output(ctx.out / "trajectory.csv", to_csv(t));
  return kExitOk;
}

int cmd_eval_predictors(const json& c, Context& ctx) {
  PredictorBenchmarkConfig bc;
  bc.scene = scene_from(c, "scene_seed");
  bc.seed = seed_of(c, "seed");
  bc.view_sets = parse_view_sets(str(c, "view_sets"), bc.seed);
  bc.samples = count(c, "samples");
  bc.density = num(c, "density");
  bc.tau = num(c, "tau");
  bc.k_cap = count(c, "k_cap");
  bc.camera = camera_from(c);
  if (bc.view_sets.empty()) {
    throw InputError("at least one view set is required");
  }
  std::vector<std::string> names = split(str(c, "predictors"), ',');
  if (names.empty()) {
    throw InputError("at least one predictor is required");
  }
  std::vector<LoadedPredictor> loaded;
  std::vector<const Predictor*> ptrs;
  for (const auto& n : names) {
    loaded.push_back(load_predictor(n, c, ctx));
    ptrs.push_back(loaded.back().predictor.get());
  }
  ctx.manifest.seed("benchmark", bc.seed);
  ctx.manifest.seed("scene", bc.scene.seed);
  const PredictorBenchmark b = benchmark_predictors(bc, ptrs);
  const std::string text = to_text(b);
  std::cout << text;
  ctx.manifest.output(ctx.out / "report.json", dump(to_json(b)));
  ctx.manifest.output(ctx.out / "report.txt", text);
  ctx.manifest.output(ctx.out / "samples.csv", to_csv(b));
  return kExitOk;
}

int cmd_eval_planners(const json& c, Context& ctx) {
  PlannerBenchmarkConfig bc;
  bc.scene = scene_from(c, "scene_seed");
  json pc = c;
  pc["view_budget"] = c.at("budget");
  bc.planner = planner_from(pc);
  bc.budget = count(c, "budget");
  bc.nadir_altitude = num(c, "nadir_altitude");
  bc.dense_factor = num(c, "dense_factor");
  bc.density = num(c, "density");
  bc.reference_points = count(c, "reference_points");
  bc.fscore_threshold = num(c, "fscore_threshold");
  bc.planners = split(str(c, "planners"), ',');
  bc.seed = seed_of(c, "seed");
  bc.validate();
  LoadedPredictor lp = load_predictor(str(c, "predictor"), c, ctx);
  ctx.manifest.seed("benchmark", bc.seed);
  ctx.manifest.seed("scene", bc.scene.seed);
  const PlannerBenchmark b = benchmark_planners(bc, *lp.predictor);
  const std::string text = to_text(b);
  std::cout << text;
  ctx.manifest.output(ctx.out / "report.json", dump(to_json(b)));
  ctx.manifest.output(ctx.out / "report.txt", text);
  return kExitOk;
}

int cmd_gradcheck(const json& c, Context& ctx) {
  const std::size_t seeds = count(c, "seeds");
  const std::uint64_t first = seed_of(c, "first_seed");
  const double h = num(c, "step");
  const double tol = num(c, "tolerance");
  if (seeds < 1 || !(h > 0.0) || !(tol > 0.0)) {
    throw InputError("gradcheck needs seeds >= 1 and positive step and tolerance");
  }
  json runs = json::array();
  double worst = 0.0;
  for (std::size_t i = 0; i < seeds; ++i) {
    const std::uint64_t s = first + i;
    const auto r = nn::gradcheck_model(s, nn::gradcheck_config(), h);
    char msg[160];
    std::snprintf(msg, sizeof msg, "seed %llu: max relative error %.3e at %s", static_cast<unsigned long long>(s),
                  r.max_rel_error, r.worst_parameter.c_str());
    log(msg);
    runs.push_back({{"seed", s},
                    {"max_rel_error", r.max_rel_error},
                    {"worst_parameter", r.worst_parameter},
                    {"checked", r.checked},
                    {"refined", r.refined}});
    worst = std::max(worst, r.max_rel_error);
  }
  ctx.manifest.seed("first", first);
  const bool ok = worst <= tol;
  ctx.manifest.output(ctx.out / "gradcheck.json",
                      dump({{"runs", runs}, {"max_rel_error", worst}, {"tolerance", tol}, {"pass", ok}}));
  char line[128];
  std::snprintf(line, sizeof line, "max relative gradient error %.3e (tolerance %.1e): %s\n", worst, tol,
                ok ? "ok" : "FAILED");
  std::cout << line;
  return ok ? kExitOk : kExitRuntime;
}

std::vector<Command> commands() {
  const std::string default_sets = "oblique:16:25,nadir:36:30,orbit:24:25";
  const PlannerBenchmarkConfig pb;
  return {
      {"gen-scene", "Generate a synthetic scene: ground-truth mesh, proxy mesh and layout",
       concat({scene_fields("seed", 1), {{"format", "obj", "mesh format: obj | ply"}}}), cmd_gen_scene},
      {"sample", "Sample points on a mesh surface",
       {{"mesh", "", "input mesh (OBJ or binary PLY)"},
        {"count", 1000, "number of samples"},
        {"seed", 1, "sampling seed"},
        {"method", "blue_noise", "blue_noise | uniform"}},
       cmd_sample},
      {"build-dataset", "Build a training dataset from synthetic scenes and simulated reconstructions",
       concat({{{"scene_seeds", "1,2,3", "comma-separated scene seeds"},
                {"proxy_levels", "fine", "comma-separated proxy levels, cycled over the scenes"}},
               scene_shape_fields(),
               {{"view_sets", "", "kind:count:altitude[:keep] list; empty selects the default mix"},
                {"samples_per_scene", 400, "proxy samples per scene"},
                {"phase", 1, "1: accuracy targets, 2: completeness targets with descriptors"},
                {"seed", 1, "dataset seed"},
                {"density", 50.0, "reconstruction candidates per square meter"},
                {"tau", kDefaultTau, "accuracy projection radius, meters"},
                {"k_cap", static_cast<long long>(kDefaultKCap), "views kept per sample"}},
               camera_fields()}),
       cmd_build_dataset},
      {"train", "Train the reconstructability network (phase 1 or phase 2)",
       {{"dataset", "", "dataset file from build-dataset"},
        {"checkpoint", "", "starting checkpoint (required for phase 2)"},
        {"phase", 1, "training phase"},
        {"epochs", 30, "epochs"},
        {"batch_size", 64, "records per mini-batch"},
        {"lr", 1e-4, "Adam learning rate"},
        {"seed", 1, "shuffling seed"},
        {"tau", kDefaultTau, "accuracy projection radius the dataset was built with, meters"},
        {"neighbor_cap", static_cast<long long>(kDefaultKCap), "views kept per sample in the dataset"},
        {"init_seed", 1, "weight initialization seed (without --checkpoint)"},
        {"hidden", 256, "hidden width (without --checkpoint)"},
        {"heads", 4, "attention heads (without --checkpoint)"},
        {"layers", 2, "encoder layers (without --checkpoint)"},
        {"ff", 512, "feed-forward width (without --checkpoint)"}},
       cmd_train},
      {"predict", "Predict per-sample reconstructability on a mesh for a view set",
       concat({{{"mesh", "", "proxy mesh"},
                {"ground_truth", "", "ground-truth mesh, needed for descriptors (learned_uncertainty)"},
                {"views", "", "plan JSON whose viewpoints are used; empty uses --view-set"},
                {"view_set", "oblique:16:25", "kind:count:altitude[:keep] list used without --views"},
                {"samples", 500, "number of surface samples"},
                {"seed", 1, "sampling and descriptor seed"},
                {"predictor", "heuristic",
                 "heuristic | visible_count | oracle | learned_spatial | learned_uncertainty"},
                {"checkpoint", "", "checkpoint for the learned predictors"},
                {"k_cap", static_cast<long long>(kDefaultKCap), "views kept per sample"}},
               camera_fields()}),
       cmd_predict},
      {"plan", "Plan a view set on a proxy mesh",
       concat({{{"mesh", "", "proxy mesh"},
                {"predictor", "oracle", "heuristic | visible_count | oracle | learned_spatial"},
                {"checkpoint", "", "checkpoint for the learned predictor"},
                {"seed", 1, "planner seed"}},
               planner_fields(0.0, 0.0), camera_fields()}),
       cmd_plan},
      {"export-traj", "Order a plan's viewpoints into a flight trajectory (CSV)",
       {{"plan", "", "plan JSON"},
        {"start_x", 0.0, "start position x, meters"},
        {"start_y", 0.0, "start position y, meters"},
        {"start_z", 0.0, "start position z, meters"}},
       cmd_export_traj},
      {"eval-predictors", "Rank-correlate predictors against simulated reconstruction quality",
       concat({scene_fields("scene_seed", 4),
               {{"view_sets", default_sets, "kind:count:altitude[:keep] list"},
                {"predictors", "heuristic,visible_count,oracle", "comma-separated predictors"},
                {"checkpoint", "", "checkpoint for the learned predictors"},
                {"samples", 500, "proxy samples"},
                {"density", 50.0, "reconstruction candidates per square meter"},
                {"tau", kDefaultTau, "accuracy projection radius, meters"},
                {"k_cap", static_cast<long long>(kDefaultKCap), "views kept per sample"},
                {"seed", 1, "benchmark seed"}},
               camera_fields()}),
       cmd_eval_predictors},
      {"eval-planners", "Compare planners at equal view budget by simulated reconstruction quality",
       concat({scene_fields("scene_seed", 1),
               {{"predictor", "oracle", "predictor driving the planners"},
                {"checkpoint", "", "checkpoint for the learned predictor"},
                {"planners", "full,nadir,eliminate_only,adjust_only", "comma-separated planners"},
                {"budget", pb.budget, "view budget of every planner"},
                {"nadir_altitude", pb.nadir_altitude, "grid altitude above the proxy top, meters"},
                {"dense_factor", pb.dense_factor, "over-completeness of the eliminate-only start"},
                {"density", pb.density, "reconstruction candidates per square meter"},
                {"reference_points", pb.reference_points, "ground-truth reference samples"},
                {"fscore_threshold", pb.fscore_threshold, "F-score distance threshold, meters"},
                {"seed", 1, "benchmark and planner seed"}},
               [] {
                 Fields f = planner_fields(15.0, 40.0);
                 f.erase(std::remove_if(f.begin(), f.end(), [](const Field& x) { return x.key == "view_budget"; }),
                         f.end());
                 return f;
               }(),
               camera_fields()}),
       cmd_eval_planners},
      {"gradcheck", "Finite-difference check of every network gradient on a small model",
       {{"seeds", 5, "number of seeds"},
        {"first_seed", 1, "first seed"},
        {"step", 1e-3, "finite-difference step"},
        {"tolerance", 1e-4, "maximum accepted relative error"}},
       cmd_gradcheck},
  };
}

void bind_fields(CLI::App& app, const Fields& fields, std::vector<Binding>& out) {
  for (const Field& f : fields) {
    const std::string name = "--" + dashed(f.key);
    Binding b{f.key, nullptr, {}};
    if (f.value.is_boolean()) {
      auto v = std::make_shared<bool>(f.value.get<bool>());
      b.option = app.add_flag(name, *v, f.help);
      b.value = [v] { return json(*v); };
    } else if (f.value.is_number_integer()) {
      auto v = std::make_shared<long long>(f.value.get<long long>());
      b.option = app.add_option(name, *v, f.help)->capture_default_str();
      b.value = [v] { return json(*v); };
    } else if (f.value.is_number()) {
      auto v = std::make_shared<double>(f.value.get<double>());
      b.option = app.add_option(name, *v, f.help)->capture_default_str();
      b.value = [v] { return json(*v); };
    } else {
      auto v = std::make_shared<std::string>(f.value.get<std::string>());
      b.option = app.add_option(name, *v, f.help)->capture_default_str();
      b.value = [v] { return json(*v); };
    }
    out.push_back(std::move(b));
  }
}

bool same_kind(const json& want, const json& got) {
  if (want.is_number_integer()) {
    return got.is_number_integer();
  }
  if (want.is_number()) {
    return got.is_number();
  }
  return want.type() == got.type();
}

/// Defaults, then the config file, then flags given on the command line.
json merge_config(const Command& cmd, const std::string& config_path, const std::vector<Binding>& bindings) {
  json eff = json::object();
  for (const Field& f : cmd.fields) {
    eff[f.key] = f.value;
  }
  if (!config_path.empty()) {
    if (!fs::is_regular_file(config_path)) {
      throw InputError("config file '" + config_path + "' does not exist");
    }
    json file = read_json_file(config_path);
    if (file.is_object() && file.contains("command") && file.contains("config")) {
      // a manifest from an earlier run
      if (file.at("command") != cmd.name) {
        throw InputError("manifest '" + config_path + "' belongs to '" + file.at("command").get<std::string>() +
                         "', not '" + cmd.name + "'");
      }
      file = file.at("config");
    }
    if (!file.is_object()) {
      throw InputError("config file '" + config_path + "' must hold a JSON object");
    }
    for (const auto& [key, value] : file.items()) {
      if (!eff.contains(key)) {
        throw InputError("config file '" + config_path + "': unknown field '" + key + "' for " + cmd.name);
      }
      if (!same_kind(eff.at(key), value)) {
        throw InputError("config file '" + config_path + "': field '" + key + "' must be " +
                         std::string(eff.at(key).type_name()) + ", got " + value.type_name());
      }
      eff[key] = value;
    }
  }
  for (const Binding& b : bindings) {
    if (b.option->count() > 0) {
      eff[b.key] = b.value();
    }
  }
  return eff;
}

unsigned threads_from_env() {
  const char* env = std::getenv("SKYPLAN_THREADS");
  if (env == nullptr || *env == '\0') {
    return 0;
  }
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 0) {
    throw InputError(std::string("SKYPLAN_THREADS must be a non-negative integer, got '") + env + "'");
  }
  return static_cast<unsigned>(v);
}

} // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"skyplan: reconstructability prediction and aerial view planning on synthetic scenes", "skyplan"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  struct Slot {
    Command cmd;
    CLI::App* sub = nullptr;
    std::vector<Binding> bindings;
    std::string config;
    std::string out = "skyplan-out";
    int threads = -1;
  };
  std::vector<std::unique_ptr<Slot>> slots;
  for (Command& cmd : commands()) {
    auto slot = std::make_unique<Slot>();
    slot->cmd = std::move(cmd);
    slot->sub = app.add_subcommand(slot->cmd.name, slot->cmd.description);
    slot->sub->add_option("--config", slot->config, "JSON config file (or a manifest) merged under the flags");
    slot->sub->add_option("--out", slot->out, "output directory")->capture_default_str();
    slot->sub->add_option("--threads", slot->threads,
                          "worker threads (default: SKYPLAN_THREADS, else all cores; 0 = all cores)");
    bind_fields(*slot->sub, slot->cmd.fields, slot->bindings);
    slots.push_back(std::move(slot));
  }

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) {
    rev.pop_back(); // program name
  }
  try {
    app.parse(rev);
  } catch (const CLI::Success& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto chosen = app.get_subcommands();
    std::cerr << (chosen.empty() ? app.help() : chosen.front()->help());
    return kExitValidation;
  }

  Slot* slot = nullptr;
  for (auto& s : slots) {
    if (s->sub->parsed()) {
      slot = s.get();
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  try {
    set_thread_count(slot->threads >= 0 ? static_cast<unsigned>(slot->threads) : threads_from_env());
    const json config = merge_config(slot->cmd, slot->config, slot->bindings);
    Context ctx{slot->out, {}};
    fs::create_directories(ctx.out);
    const int status = slot->cmd.body(config, ctx);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_file_bytes(ctx.out / "manifest.json", dump(ctx.manifest.to_json(slot->cmd.name, config, wall)));
    return status;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const json::exception& e) {
    std::cerr << "error: bad configuration value: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args);
}

} // namespace skyplan
