#include "support.hpp"

#include "skyplan/binary_io.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path& work() {
  static const fs::path dir = skytest::scratch_dir("cli");
  return dir;
}

int cli(const std::string& args, const std::string& env = "") {
  const std::string log = (work() / "last.log").string();
  const std::string cmd = env + (env.empty() ? "" : " ") + SKYPLAN_CLI_PATH + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string last_log() { return skyplan::read_file_bytes(work() / "last.log"); }

std::string out(const std::string& name) { return (work() / name).string(); }

std::string bytes(const std::string& dir, const std::string& file) {
  return skyplan::read_file_bytes(work() / dir / file);
}

// A scene and a tiny dataset shared by several cases.
void ensure_fixtures() {
  static bool done = false;
  if (done) {
    return;
  }
  REQUIRE(cli("gen-scene --seed 3 --out " + out("scene")) == 0);
  REQUIRE(cli("build-dataset --scene-seeds 1 --proxy-levels inter --samples-per-scene 30 --density 20 "
              "--view-sets oblique:4:25,orbit:8:25 --out " + out("ds")) == 0);
  done = true;
}

const std::string kSmallPlan =
    "--surface-samples 120 --samples-per-iteration 4 --candidates 12 --max-iterations 2 --adjust-evaluations 8 "
    "--view-budget 8 --radius-min 15 --radius-max 40";

} // namespace

TEST_CASE("every subcommand answers --help") {
  for (const char* sub : {"gen-scene", "sample", "build-dataset", "train", "predict", "plan", "export-traj",
                          "eval-predictors", "eval-planners", "gradcheck"}) {
    INFO(sub);
    CHECK(cli(std::string(sub) + " --help") == 0);
    CHECK(last_log().find("--out") != std::string::npos);
  }
  CHECK(cli("--help") == 0);
  CHECK(cli("--version") == 0);
}

TEST_CASE("validation failures exit with status 1") {
  CHECK(cli("plan --no-such-flag 3") == 1);
  CHECK(last_log().find("no-such-flag") != std::string::npos);
  CHECK(cli("teleport") == 1);
  CHECK(cli("") == 1);
  CHECK(cli("sample --mesh /definitely/missing.obj --out " + out("missing")) == 1);
  CHECK(last_log().find("/definitely/missing.obj") != std::string::npos);
  CHECK(cli("gen-scene --buildings -2 --out " + out("bad")) == 1);
  CHECK(cli("gen-scene --seed notanumber --out " + out("bad")) == 1);
}

TEST_CASE("phase-2 training without a phase-1 checkpoint is refused") {
  ensure_fixtures();
  const std::string ds = out("ds") + "/dataset.bin";
  CHECK(cli("train --dataset " + ds + " --phase 2 --out " + out("p2")) == 1);
  CHECK(last_log().find("checkpoint") != std::string::npos);
  CHECK(cli("train --dataset " + ds + " --epochs 1 --hidden 16 --ff 32 --out " + out("p1")) == 0);
  // a phase-1 dataset cannot drive phase-2 training even with a checkpoint
  CHECK(cli("train --dataset " + ds + " --phase 2 --checkpoint " + out("p1") + "/checkpoint.bin --out " +
            out("p2b")) == 1);
}

TEST_CASE("gradcheck reports its error and succeeds") {
  CHECK(cli("gradcheck --seeds 2 --out " + out("grad")) == 0);
  CHECK(last_log().find("max relative gradient error") != std::string::npos);
  const auto report = nlohmann::json::parse(bytes("grad", "gradcheck.json"));
  CHECK(report.at("max_rel_error").get<double>() <= 1e-4);
}

TEST_CASE("plan output is byte-identical across runs, thread counts and manifest replays") {
  ensure_fixtures();
  const std::string mesh = "--mesh " + out("scene") + "/proxy.obj ";
  REQUIRE(cli("plan " + mesh + "--seed 7 " + kSmallPlan + " --out " + out("plan_a")) == 0);
  REQUIRE(cli("plan " + mesh + "--seed 7 " + kSmallPlan + " --out " + out("plan_b") + " --threads 3") == 0);
  REQUIRE(cli("plan " + mesh + "--seed 7 " + kSmallPlan + " --out " + out("plan_c"), "SKYPLAN_THREADS=2") == 0);
  const std::string a = bytes("plan_a", "plan.json");
  CHECK(a == bytes("plan_b", "plan.json"));
  CHECK(a == bytes("plan_c", "plan.json"));

  const auto manifest = nlohmann::json::parse(bytes("plan_a", "manifest.json"));
  CHECK(manifest.at("command") == "plan");
  CHECK(manifest.at("config").at("seed") == 7);
  REQUIRE(manifest.at("inputs").size() == 1);
  CHECK(manifest.at("inputs")[0].at("crc32") == skyplan::crc32_of(bytes("scene", "proxy.obj")));
  CHECK(manifest.at("threads").get<int>() >= 1);
  CHECK(manifest.contains("wall_time_s"));

  REQUIRE(cli("plan --config " + out("plan_a") + "/manifest.json --out " + out("plan_d")) == 0);
  CHECK(a == bytes("plan_d", "plan.json"));
  // flags given explicitly win over the config file
  REQUIRE(cli("plan --config " + out("plan_a") + "/manifest.json --seed 8 --out " + out("plan_e")) == 0);
  CHECK(nlohmann::json::parse(bytes("plan_e", "manifest.json")).at("config").at("seed") == 8);
  // a manifest of another command is not a valid config
  CHECK(cli("gen-scene --config " + out("plan_a") + "/manifest.json --out " + out("bad_cfg")) == 1);

  REQUIRE(cli("export-traj --plan " + out("plan_a") + "/plan.json --start-z 5 --out " + out("traj")) == 0);
  CHECK(bytes("traj", "trajectory.csv").rfind("x_m,y_m,z_m,yaw_deg,pitch_deg\n", 0) == 0);
}

TEST_CASE("sample, predict and dataset commands write their outputs deterministically") {
  ensure_fixtures();
  REQUIRE(cli("sample --mesh " + out("scene") + "/ground_truth.obj --count 50 --out " + out("smp")) == 0);
  const std::string csv = bytes("smp", "samples.csv");
  CHECK(csv.rfind("x,y,z,nx,ny,nz,triangle\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 51);

  REQUIRE(cli("predict --mesh " + out("scene") + "/proxy.obj --samples 40 --predictor heuristic --out " +
              out("pred")) == 0);
  const std::string pred = bytes("pred", "predictions.csv");
  CHECK(std::count(pred.begin(), pred.end(), '\n') >= 40);
  CHECK(cli("predict --mesh " + out("scene") + "/proxy.obj --predictor learned_spatial --out " + out("pred2")) == 1);

  REQUIRE(cli("build-dataset --scene-seeds 1 --proxy-levels inter --samples-per-scene 30 --density 20 "
              "--view-sets oblique:4:25,orbit:8:25 --out " + out("ds2")) == 0);
  CHECK(bytes("ds", "dataset.bin") == bytes("ds2", "dataset.bin"));
  CHECK(cli("build-dataset --scene-seeds 1 --proxy-levels box --out " + out("ds_box")) == 1);
}
