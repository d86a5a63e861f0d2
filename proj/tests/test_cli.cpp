#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "featalign/io.hpp"

using namespace featalign;
namespace fs = std::filesystem;
using nlohmann::json;

TEST_SUITE_BEGIN("cli");

namespace {

constexpr double kPi = 3.14159265358979323846;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("featalign_cli_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

struct RunResult {
  int exit_code = -1;
  std::string stderr_text;
};

RunResult run_tool(const TempDir& tmp, const std::string& args) {
  const fs::path err = tmp.path / "stderr.txt";
  const std::string cmd =
      std::string(FEATALIGN_TOOL_PATH) + " " + args + " 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  RunResult out;
  out.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(err);
  std::stringstream ss;
  ss << in.rdbuf();
  out.stderr_text = ss.str();
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("make-scene then localize recovers the embedded ground truth") {
  TempDir tmp;
  const fs::path scene = tmp.path / "scene";
  const fs::path out = tmp.path / "loc";
  REQUIRE(run_tool(tmp, "make-scene --out " + scene.string() + " --seed 0")
              .exit_code == 0);
  for (const char* f : {"map.json", "query.json", "prior.json", "gt_pose.json",
                        "run_manifest.json"})
    CHECK(fs::exists(scene / f));

  const auto loc = run_tool(
      tmp, "localize --map " + (scene / "map.json").string() + " --query " +
               (scene / "query.json").string() + " --prior " +
               (scene / "prior.json").string() + " --out " + out.string());
  CHECK(loc.exit_code == 0);
  REQUIRE(fs::exists(out / "pose.json"));
  REQUIRE(fs::exists(out / "report.json"));
  REQUIRE(fs::exists(out / "run_manifest.json"));

  const Pose gt = pose_from_json(load_json(scene / "gt_pose.json"));
  const Pose est = pose_from_json(load_json(out / "pose.json"));
  CHECK(rotation_error(est, gt) < 0.5 * kPi / 180.0);
  CHECK(translation_error(est, gt) < 0.04);  // 1% of the 4-unit scene extent

  const json manifest = load_json(out / "run_manifest.json");
  CHECK(manifest.at("exit_status") == 0);
  CHECK(manifest.at("command") == "localize");
  CHECK(!manifest.at("inputs").empty());
}

TEST_CASE("localize with an empty prior fails with a diagnostic") {
  TempDir tmp;
  const fs::path scene = tmp.path / "scene";
  REQUIRE(run_tool(tmp, "make-scene --out " + scene.string() +
                            " --seed 1 --points 60")
              .exit_code == 0);
  const fs::path empty_prior = tmp.path / "empty.json";
  std::ofstream(empty_prior) << "[]";
  const fs::path out = tmp.path / "loc";
  const auto loc = run_tool(
      tmp, "localize --map " + (scene / "map.json").string() + " --query " +
               (scene / "query.json").string() + " --prior " +
               empty_prior.string() + " --out " + out.string());
  CHECK(loc.exit_code == 1);
  CHECK(loc.stderr_text.find("no prior poses") != std::string::npos);
  // The run manifest is still written on failure.
  const json manifest = load_json(out / "run_manifest.json");
  CHECK(manifest.at("exit_status") == 1);
}

TEST_CASE("localize with malformed input names the file and byte offset") {
  TempDir tmp;
  const fs::path scene = tmp.path / "scene";
  REQUIRE(run_tool(tmp, "make-scene --out " + scene.string() +
                            " --seed 1 --points 60")
              .exit_code == 0);
  const fs::path bad = tmp.path / "bad_prior.json";
  std::ofstream(bad) << "[{\"pose\": }]";
  const auto loc = run_tool(
      tmp, "localize --map " + (scene / "map.json").string() + " --query " +
               (scene / "query.json").string() + " --prior " + bad.string() +
               " --out " + (tmp.path / "loc").string());
  CHECK(loc.exit_code == 1);
  CHECK(loc.stderr_text.find("bad_prior.json") != std::string::npos);
  CHECK(loc.stderr_text.find("byte") != std::string::npos);
}

TEST_CASE("localize from the exact ground truth stays at the ground truth") {
  TempDir tmp;
  const fs::path scene = tmp.path / "scene";
  REQUIRE(run_tool(tmp, "make-scene --out " + scene.string() + " --seed 2")
              .exit_code == 0);
  // A prior containing only the ground truth averages to the ground truth.
  const json gt = load_json(scene / "gt_pose.json");
  std::ofstream(tmp.path / "gt_prior.json")
      << json::array({{{"pose", gt}, {"weight", 1.0}}}).dump();
  const fs::path out = tmp.path / "loc";
  const auto loc = run_tool(
      tmp, "localize --map " + (scene / "map.json").string() + " --query " +
               (scene / "query.json").string() + " --prior " +
               (tmp.path / "gt_prior.json").string() + " --out " + out.string());
  REQUIRE(loc.exit_code == 0);
  // Aggregated references carry a small sampling residual even at the ground
  // truth, so the solver polishes rather than stopping instantly; the pose
  // must not move away in any meaningful amount.
  const Pose est = pose_from_json(load_json(out / "pose.json"));
  const Pose gt_pose = pose_from_json(gt);
  CHECK(rotation_error(est, gt_pose) < 0.1 * kPi / 180.0);
  CHECK(translation_error(est, gt_pose) < 0.01);
  const json report = load_json(out / "report.json");
  for (const auto& stage : report.at("stages"))
    CHECK(!stage.at("skipped").get<bool>());
}

TEST_CASE("refine improves a one-pixel error and leaves an optimum alone") {
  TempDir tmp;
  const fs::path scene = tmp.path / "scene";
  REQUIRE(run_tool(tmp, "make-scene --out " + scene.string() + " --seed 3")
              .exit_code == 0);
  const MapBundle map = load_map(scene / "map.json");
  REQUIRE(map.gt_pose);

  // ~1 px initial error: x-translation of depth/fx world units.
  Pose off = *map.gt_pose;
  off.t.x() += 4.0 / 256.0;
  save_json(tmp.path / "off.json", pose_to_json(off));
  const fs::path out1 = tmp.path / "ref1";
  const auto r1 = run_tool(
      tmp, "refine --map " + (scene / "map.json").string() + " --query " +
               (scene / "query.json").string() + " --pose " +
               (tmp.path / "off.json").string() + " --out " + out1.string());
  REQUIRE(r1.exit_code == 0);
  const Pose refined = pose_from_json(load_json(out1 / "pose.json"));
  CHECK(translation_error(refined, *map.gt_pose) <
        translation_error(off, *map.gt_pose));
  // Missing damping file defaults with a warning.
  CHECK(r1.stderr_text.find("warning") != std::string::npos);

  // Refining an already-optimal pose keeps it (step below tolerance).
  save_json(tmp.path / "opt.json", pose_to_json(refined));
  const fs::path out2 = tmp.path / "ref2";
  REQUIRE(run_tool(tmp, "refine --map " + (scene / "map.json").string() +
                            " --query " + (scene / "query.json").string() +
                            " --pose " + (tmp.path / "opt.json").string() +
                            " --out " + out2.string())
              .exit_code == 0);
  const Pose again = pose_from_json(load_json(out2 / "pose.json"));
  CHECK(rotation_error(again, refined) < 1e-3);
  CHECK(translation_error(again, refined) < 1e-3);
}

TEST_CASE("sweep rejects --trials 0 and is deterministic otherwise") {
  TempDir tmp;
  const fs::path scene = tmp.path / "scene";
  REQUIRE(run_tool(tmp, "make-scene --out " + scene.string() +
                            " --seed 4 --points 80 --scales 1")
              .exit_code == 0);
  const std::string common = "sweep --map " + (scene / "map.json").string() +
                             " --query " + (scene / "query.json").string();
  CHECK(run_tool(tmp, common + " --trials 0 --out " +
                          (tmp.path / "s0").string())
            .exit_code == 1);

  REQUIRE(run_tool(tmp, common + " --trials 20 --seed 7 --threads 2 --out " +
                            (tmp.path / "s1").string())
              .exit_code == 0);
  REQUIRE(run_tool(tmp, common + " --trials 20 --seed 7 --threads 1 --out " +
                            (tmp.path / "s2").string())
              .exit_code == 0);
  CHECK(read_file(tmp.path / "s1" / "sweep.csv") ==
        read_file(tmp.path / "s2" / "sweep.csv"));
  CHECK(!read_file(tmp.path / "s1" / "sweep.csv").empty());
}

TEST_CASE("basin on a bimodal scene writes per-level and combined rasters") {
  TempDir tmp;
  const fs::path scene = tmp.path / "scene";
  REQUIRE(run_tool(tmp, "make-scene --out " + scene.string() +
                            " --seed 5 --field bimodal --points 60 --scales 1")
              .exit_code == 0);
  const fs::path out = tmp.path / "basin";
  const auto r = run_tool(
      tmp, "basin --map " + (scene / "map.json").string() + " --query " +
               (scene / "query.json").string() + " --point 0 --out " +
               out.string());
  REQUIRE(r.exit_code == 0);
  for (const char* f : {"basin_l0.pgm", "basin_l1.pgm", "basin_l2.pgm",
                        "basin_combined.pgm"})
    CHECK(fs::exists(out / f));
  // The seed pixel is white: every raster contains a 255 byte.
  for (const char* f : {"basin_l0.pgm", "basin_combined.pgm"}) {
    const std::string content = read_file(out / f);
    CHECK(content.find('\xff') != std::string::npos);
  }
}

TEST_CASE("fit-damping with zero steps echoes the initial parameters") {
  TempDir tmp;
  const fs::path out = tmp.path / "fit";
  const auto r = run_tool(
      tmp, "fit-damping --samples 2 --val-samples 0 --steps 0 --out " +
               out.string());
  REQUIRE(r.exit_code == 0);
  const DampingParams params = damping_from_json(load_json(out / "damping.json"));
  for (const auto& th : params.theta) CHECK(th.norm() == 0.0);
  CHECK(fs::exists(out / "loss.csv"));
}

TEST_CASE("unknown flags and missing subcommands are input errors") {
  TempDir tmp;
  CHECK(run_tool(tmp, "").exit_code == 1);
  CHECK(run_tool(tmp, "localize --nope x").exit_code == 1);
}

TEST_SUITE_END();
