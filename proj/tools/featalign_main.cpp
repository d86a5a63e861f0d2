// featalign command-line tool: synthetic scene generation, localization,
// pose refinement, convergence sweeps, basin rasterization, and damping
// fitting. All commands are deterministic given --seed and emit a
// run_manifest.json next to their outputs, on success and on failure.

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>

#include "featalign/analysis.hpp"
#include "featalign/errors.hpp"
#include "featalign/io.hpp"
#include "featalign/training_data.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace featalign;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 1;
constexpr int kExitSolveFailure = 2;

int default_threads() {
  if (const char* env = std::getenv("FEATALIGN_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

class RunManifest {
 public:
  RunManifest(std::string command, fs::path out_dir)
      : out_dir_(std::move(out_dir)), start_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["inputs"] = json::object();
    j_["outputs"] = json::array();
    fs::create_directories(out_dir_);
  }

  void add_input(const fs::path& path) {
    try {
      j_["inputs"][path.string()] = file_digest(path);
    } catch (const Error&) {
      j_["inputs"][path.string()] = nullptr;
    }
  }
  void add_output(const fs::path& path) { j_["outputs"].push_back(path.string()); }
  void set_config(json config) { j_["config"] = std::move(config); }

  void finish(int exit_status) {
    const auto elapsed = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start_)
                             .count();
    j_["wall_clock_seconds"] = elapsed;
    j_["exit_status"] = exit_status;
    try {
      save_json(out_dir_ / "run_manifest.json", j_);
    } catch (const Error& e) {
      std::cerr << "warning: " << e.what() << "\n";
    }
  }

 private:
  fs::path out_dir_;
  json j_;
  std::chrono::steady_clock::time_point start_;
};

struct CommonOpts {
  std::string map_path, query_path, config_path, damping_path, out_dir;
};

SolverConfig load_config_or_default(const std::string& path, RunManifest& manifest) {
  if (path.empty()) return SolverConfig{};
  manifest.add_input(path);
  return config_from_json(load_json(path));
}

DampingParams load_damping_or_default(const std::string& path, int n_levels,
                                      RunManifest& manifest) {
  if (path.empty()) {
    std::cerr << "warning: no damping file given, defaulting to theta = 0\n";
    return DampingParams::zeros(n_levels);
  }
  manifest.add_input(path);
  DampingParams params = damping_from_json(load_json(path));
  if (static_cast<int>(params.theta.size()) != n_levels)
    throw InputError(path + ": expected " + std::to_string(n_levels) +
                     " theta rows");
  return params;
}

json report_to_json(const SolveReport& report) {
  json stages = json::array();
  for (const auto& stage : report.stages) {
    json iters = json::array();
    for (const auto& it : stage.iterations) {
      iters.push_back(json{{"cost", it.cost},
                           {"step_norm", it.step_norm},
                           {"grad_norm", it.grad_norm},
                           {"n_valid", it.n_valid},
                           {"n_dropped", it.n_dropped},
                           {"pose", pose_to_json(it.pose)}});
    }
    stages.push_back(json{{"scale", stage.scale},
                          {"level", stage.level},
                          {"converged", stage.converged},
                          {"skipped", stage.skipped},
                          {"iterations", iters}});
  }
  return json{{"stages", stages},
              {"final_pose", pose_to_json(report.final_pose)},
              {"total_dropped", report.total_dropped}};
}

// make-scene ---------------------------------------------------------------

struct MakeSceneOpts {
  std::string out_dir;
  std::uint64_t seed = 0;
  int points = 200;
  std::string field = "smooth";
  std::string uncertainty = "zero";
  std::vector<double> scales = {0.25, 1.0};
  double noise = 0.0;
};

int cmd_make_scene(const MakeSceneOpts& opt) {
  RunManifest manifest("make-scene", opt.out_dir);
  int status = kExitOk;
  try {
    SceneSpec spec;
    spec.seed = opt.seed;
    spec.n_points = opt.points;
    spec.scales = opt.scales;
    spec.feature_noise = opt.noise;
    if (opt.field == "smooth")
      spec.field = FieldType::kRandomSmooth;
    else if (opt.field == "quadratic")
      spec.field = FieldType::kQuadraticBasin;
    else if (opt.field == "bimodal")
      spec.field = FieldType::kBimodal;
    else
      throw InputError("unknown field type: " + opt.field);
    if (opt.uncertainty == "zero")
      spec.uncertainty = UncertaintyPattern::kZero;
    else if (opt.uncertainty == "random")
      spec.uncertainty = UncertaintyPattern::kRandom;
    else
      throw InputError("unknown uncertainty pattern: " + opt.uncertainty);

    manifest.set_config(json{{"seed", opt.seed},
                             {"points", opt.points},
                             {"field", opt.field},
                             {"uncertainty", opt.uncertainty},
                             {"scales", opt.scales},
                             {"noise", opt.noise}});

    const auto gen = generate(spec);
    const fs::path dir(opt.out_dir);

    MapBundle map;
    map.camera = gen.camera;
    map.refs = gen.refs;
    map.points = gen.raw_points;
    map.gt_pose = gen.gt;
    map.diameter = gen.diameter;
    save_map(dir / "map.json", map);
    manifest.add_output(dir / "map.json");

    QueryBundle query;
    query.camera = gen.camera;
    query.scales = spec.scales;
    query.pyramids = gen.query;
    save_query(dir / "query.json", query);
    manifest.add_output(dir / "query.json");

    std::vector<WeightedPose> prior;
    for (const auto& ref : gen.refs) prior.push_back({ref.pose, 1.0});
    save_json(dir / "prior.json", prior_to_json(prior));
    manifest.add_output(dir / "prior.json");

    save_json(dir / "gt_pose.json", pose_to_json(gen.gt));
    manifest.add_output(dir / "gt_pose.json");
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = kExitInputError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = kExitSolveFailure;
  }
  manifest.finish(status);
  return status;
}

// localize / refine --------------------------------------------------------

int run_alignment(const CommonOpts& opt, const std::string& prior_path,
                  const std::string& pose_path, bool refine) {
  RunManifest manifest(refine ? "refine" : "localize", opt.out_dir);
  int status = kExitOk;
  try {
    manifest.add_input(opt.map_path);
    manifest.add_input(opt.query_path);
    const MapBundle map = load_map(opt.map_path);
    const QueryBundle query = load_query(opt.query_path);
    const int n_levels = query.pyramids.back().num_levels();

    SolverConfig config = load_config_or_default(opt.config_path, manifest);
    config.image_pyramid_scales = query.scales;
    DampingParams damping_params =
        load_damping_or_default(opt.damping_path, n_levels, manifest);
    manifest.set_config(config_to_json(config));

    Pose pose0;
    if (refine) {
      manifest.add_input(pose_path);
      pose0 = pose_from_json(load_json(pose_path));
    } else {
      manifest.add_input(prior_path);
      const auto prior = prior_from_json(load_json(prior_path));
      if (prior.empty()) throw InputError(prior_path + ": no prior poses");
      try {
        pose0 = average_poses(prior);
      } catch (const DegenerateRotationSet&) {
        size_t best = 0;
        for (size_t i = 1; i < prior.size(); ++i)
          if (prior[i].weight > prior[best].weight) best = i;
        pose0 = prior[best].pose;
      }
    }

    const ScenePoints scene = aggregate_reference(map.points, map.refs);

    Pose pose = pose0;
    SolveReport report;
    if (refine) {
      // Post-processing mode: only the medium and fine levels of the finest
      // image scale, no multiscale outer loop.
      const double scale = query.scales.back();
      const Camera cam_s = scale_camera(map.camera, scale);
      const auto& pyr = query.pyramids.back();
      bool any = false;
      for (int level = 1; level < pyr.num_levels(); ++level) {
        LevelTrace trace;
        trace.scale = scale;
        trace.level = level;
        const Vec6 lambda = damping(damping_params, level);
        try {
          pose = optimize_level<double>(pose, scene, pyr, cam_s, level, config,
                                        lambda, &trace);
          any = true;
        } catch (const NoValidObservations&) {
          trace.skipped = true;
        }
        report.stages.push_back(std::move(trace));
      }
      if (!any) throw InitializationFailed();
      report.final_pose = pose;
    } else {
      const auto result = optimize<double>(pose0, scene, query.pyramids,
                                           map.camera, config, damping_params);
      pose = result.pose;
      report = result.report;
    }

    const fs::path dir(opt.out_dir);
    save_json(dir / "pose.json", pose_to_json(pose));
    manifest.add_output(dir / "pose.json");
    save_json(dir / "report.json", report_to_json(report));
    manifest.add_output(dir / "report.json");
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = kExitInputError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = kExitSolveFailure;
  }
  manifest.finish(status);
  return status;
}

// sweep --------------------------------------------------------------------

struct SweepOpts {
  CommonOpts common;
  int trials = 500;
  std::uint64_t seed = 0;
  int threads = default_threads();
  double rot_max = 0.15;
  double trans_max = 0.4;
};

int cmd_sweep(const SweepOpts& opt) {
  RunManifest manifest("sweep", opt.common.out_dir);
  int status = kExitOk;
  try {
    if (opt.trials < 1) throw InputError("--trials must be >= 1");
    manifest.add_input(opt.common.map_path);
    manifest.add_input(opt.common.query_path);
    const MapBundle map = load_map(opt.common.map_path);
    const QueryBundle query = load_query(opt.common.query_path);
    if (!map.gt_pose) throw InputError(opt.common.map_path + ": gt_pose required");
    const int n_levels = query.pyramids.back().num_levels();

    SolverConfig config = load_config_or_default(opt.common.config_path, manifest);
    config.image_pyramid_scales = query.scales;
    const DampingParams damping_params =
        load_damping_or_default(opt.common.damping_path, n_levels, manifest);

    SweepConfig sweep;
    sweep.n_trials = opt.trials;
    sweep.seed = opt.seed;
    sweep.threads = opt.threads;
    sweep.rot_max = opt.rot_max;
    sweep.trans_max = opt.trans_max;
    if (map.diameter > 0.0) sweep.trans_tol = 0.01 * map.diameter;
    manifest.set_config(json{{"trials", opt.trials},
                             {"seed", opt.seed},
                             {"threads", opt.threads},
                             {"rot_max", opt.rot_max},
                             {"trans_max", opt.trans_max},
                             {"solver", config_to_json(config)}});

    const ScenePoints scene = aggregate_reference(map.points, map.refs);
    const auto result = convergence_sweep(scene, query.pyramids, map.camera,
                                          *map.gt_pose, config, damping_params, sweep);
    const fs::path csv = fs::path(opt.common.out_dir) / "sweep.csv";
    write_sweep_csv(csv, result);
    manifest.add_output(csv);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = kExitInputError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = kExitSolveFailure;
  }
  manifest.finish(status);
  return status;
}

// basin --------------------------------------------------------------------

struct BasinOpts {
  CommonOpts common;
  int point = 0;
  std::vector<double> seed_pixel;  // optional override
};

int cmd_basin(const BasinOpts& opt) {
  RunManifest manifest("basin", opt.common.out_dir);
  int status = kExitOk;
  try {
    manifest.add_input(opt.common.map_path);
    manifest.add_input(opt.common.query_path);
    const MapBundle map = load_map(opt.common.map_path);
    const QueryBundle query = load_query(opt.common.query_path);
    manifest.set_config(json{{"point", opt.point}});

    const ScenePoints scene = aggregate_reference(map.points, map.refs);
    if (opt.point < 0 || size_t(opt.point) >= scene.size())
      throw InputError("--point out of range");
    const auto& pf = scene.features[opt.point];
    const auto& pyr = query.pyramids.back();
    std::vector<Eigen::VectorXd> descriptors;
    for (int l = 0; l < pyr.num_levels(); ++l) {
      if (!pf.has_level(l))
        throw InputError("point has no reference descriptor at level " +
                         std::to_string(l));
      descriptors.push_back(pf.per_level[l]->descriptor);
    }

    Vec2 seed;
    if (opt.seed_pixel.size() == 2) {
      seed = Vec2(opt.seed_pixel[0], opt.seed_pixel[1]);
    } else {
      if (!map.gt_pose)
        throw InputError("no --seed-pixel given and map has no gt_pose");
      const Camera cam_s = scale_camera(map.camera, query.scales.back());
      const auto p = project(cam_s, transform(*map.gt_pose, scene.points[opt.point]));
      if (!p) throw InputError("selected point is behind the gt camera");
      seed = *p;
    }

    const BasinRaster raster = basin(pyr, descriptors, seed);
    const fs::path dir(opt.common.out_dir);
    for (size_t l = 0; l < raster.levels.size(); ++l) {
      const fs::path path = dir / ("basin_l" + std::to_string(l) + ".pgm");
      write_pgm(path, raster.levels[l]);
      manifest.add_output(path);
    }
    write_pgm(dir / "basin_combined.pgm", raster.combined);
    manifest.add_output(dir / "basin_combined.pgm");
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = kExitInputError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = kExitSolveFailure;
  }
  manifest.finish(status);
  return status;
}

// fit-damping --------------------------------------------------------------

struct FitOpts {
  std::string out_dir;
  std::uint64_t seed = 0;
  int samples = 32;
  int val_samples = 8;
  int steps = 100;
  double lr = 0.3;
  int threads = default_threads();
  bool planar = false;
  std::string init_damping;
};

int cmd_fit_damping(const FitOpts& opt) {
  RunManifest manifest("fit-damping", opt.out_dir);
  int status = kExitOk;
  try {
    if (opt.samples < 1) throw InputError("--samples must be >= 1");
    manifest.set_config(json{{"seed", opt.seed},
                             {"samples", opt.samples},
                             {"val_samples", opt.val_samples},
                             {"steps", opt.steps},
                             {"lr", opt.lr},
                             {"planar", opt.planar},
                             {"threads", opt.threads}});

    const SceneSpec spec = fitting_scene_spec();
    const SolverConfig config = fitting_config();
    const int n_levels = spec.pyramid.num_levels();
    DampingParams init = DampingParams::zeros(n_levels);
    if (!opt.init_damping.empty()) {
      manifest.add_input(opt.init_damping);
      init = damping_from_json(load_json(opt.init_damping));
      if (static_cast<int>(init.theta.size()) != n_levels)
        throw InputError(opt.init_damping + ": expected " +
                         std::to_string(n_levels) + " theta rows");
    }

    const auto train = make_train_samples(spec, opt.samples, opt.seed, opt.planar,
                                          0.04, 0.25);
    const auto val = make_train_samples(spec, opt.val_samples, opt.seed + 1,
                                        opt.planar, 0.04, 0.25);
    const auto fit =
        fit_damping(train, val, config, init, opt.lr, opt.steps, opt.threads);

    const fs::path dir(opt.out_dir);
    save_json(dir / "damping.json", damping_to_json(fit.params));
    manifest.add_output(dir / "damping.json");
    write_history_csv(dir / "loss.csv", fit.history);
    manifest.add_output(dir / "loss.csv");
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = kExitInputError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = kExitSolveFailure;
  }
  manifest.finish(status);
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-metric direct alignment localization toolkit"};
  app.require_subcommand(1);

  MakeSceneOpts make_opts;
  auto* make = app.add_subcommand("make-scene", "Generate a synthetic scene bundle");
  make->add_option("--out", make_opts.out_dir)->required();
  make->add_option("--seed", make_opts.seed);
  make->add_option("--points", make_opts.points);
  make->add_option("--field", make_opts.field)
      ->check(CLI::IsMember({"smooth", "quadratic", "bimodal"}));
  make->add_option("--uncertainty", make_opts.uncertainty)
      ->check(CLI::IsMember({"zero", "random"}));
  make->add_option("--scales", make_opts.scales)->delimiter(',');
  make->add_option("--noise", make_opts.noise);

  CommonOpts loc_opts;
  std::string prior_path;
  auto* localize = app.add_subcommand("localize", "Localize a query from a prior");
  localize->add_option("--map", loc_opts.map_path)->required();
  localize->add_option("--query", loc_opts.query_path)->required();
  localize->add_option("--prior", prior_path)->required();
  localize->add_option("--config", loc_opts.config_path);
  localize->add_option("--damping", loc_opts.damping_path);
  localize->add_option("--out", loc_opts.out_dir)->required();

  CommonOpts ref_opts;
  std::string pose_path;
  auto* refine = app.add_subcommand("refine", "Refine an existing pose estimate");
  refine->add_option("--map", ref_opts.map_path)->required();
  refine->add_option("--query", ref_opts.query_path)->required();
  refine->add_option("--pose", pose_path)->required();
  refine->add_option("--config", ref_opts.config_path);
  refine->add_option("--damping", ref_opts.damping_path);
  refine->add_option("--out", ref_opts.out_dir)->required();

  SweepOpts sweep_opts;
  auto* sweep = app.add_subcommand("sweep", "Convergence sweep over initial errors");
  sweep->add_option("--map", sweep_opts.common.map_path)->required();
  sweep->add_option("--query", sweep_opts.common.query_path)->required();
  sweep->add_option("--config", sweep_opts.common.config_path);
  sweep->add_option("--damping", sweep_opts.common.damping_path);
  sweep->add_option("--out", sweep_opts.common.out_dir)->required();
  sweep->add_option("--trials", sweep_opts.trials);
  sweep->add_option("--seed", sweep_opts.seed);
  sweep->add_option("--threads", sweep_opts.threads);
  sweep->add_option("--rot-max", sweep_opts.rot_max);
  sweep->add_option("--trans-max", sweep_opts.trans_max);

  BasinOpts basin_opts;
  auto* basin_cmd = app.add_subcommand("basin", "Rasterize a point's attraction basin");
  basin_cmd->add_option("--map", basin_opts.common.map_path)->required();
  basin_cmd->add_option("--query", basin_opts.common.query_path)->required();
  basin_cmd->add_option("--out", basin_opts.common.out_dir)->required();
  basin_cmd->add_option("--point", basin_opts.point);
  basin_cmd->add_option("--seed-pixel", basin_opts.seed_pixel)
      ->delimiter(',')
      ->expected(2);

  FitOpts fit_opts;
  auto* fit = app.add_subcommand("fit-damping", "Fit damping parameters on synthetic data");
  fit->add_option("--out", fit_opts.out_dir)->required();
  fit->add_option("--seed", fit_opts.seed);
  fit->add_option("--samples", fit_opts.samples);
  fit->add_option("--val-samples", fit_opts.val_samples);
  fit->add_option("--steps", fit_opts.steps);
  fit->add_option("--lr", fit_opts.lr);
  fit->add_option("--threads", fit_opts.threads);
  fit->add_flag("--planar", fit_opts.planar);
  fit->add_option("--init-damping", fit_opts.init_damping);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInputError;
  }

  if (make->parsed()) return cmd_make_scene(make_opts);
  if (localize->parsed()) return run_alignment(loc_opts, prior_path, "", false);
  if (refine->parsed()) return run_alignment(ref_opts, "", pose_path, true);
  if (sweep->parsed()) return cmd_sweep(sweep_opts);
  if (basin_cmd->parsed()) return cmd_basin(basin_opts);
  if (fit->parsed()) return cmd_fit_damping(fit_opts);
  return kExitInputError;
}
