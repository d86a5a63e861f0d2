#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "featalign/features.hpp"
#include "featalign/solver.hpp"

namespace featalign {

/// Mean pixel distance between the projections of the points under pose0 and
/// gt, over points visible (in front and inside the image) under both.
double initial_reproj_error(const Pose& pose0, const Pose& gt,
                            std::span<const Point3> points, const Camera& cam);

struct SweepConfig {
  int n_trials = 500;
  double rot_max = 0.15;       // radians, per-trial magnitude ramps up to this
  double trans_max = 0.4;      // scene units
  double rot_tol = 0.5 * 3.14159265358979323846 / 180.0;  // success threshold
  double trans_tol = 0.04;     // scene units (1% of the standard diameter)
  std::vector<double> bin_edges = {0.0, 5.0, 10.0, 20.0, 40.0, 80.0, 160.0};
  std::uint64_t seed = 0;
  int threads = 1;
};

struct SweepResult {
  std::vector<double> bin_edges;   // strictly increasing, size bins + 1
  std::vector<int> trials;         // per bin
  std::vector<int> successes;      // per bin
  int overflow_trials = 0;         // initial error beyond the last edge

  double rate(size_t bin) const {
    return trials[bin] > 0 ? double(successes[bin]) / trials[bin] : -1.0;
  }
};

/// Monte-Carlo convergence sweep: perturb the ground truth, solve, classify
/// success, and bin by initial reprojection error. Per-trial seeds derive
/// from the master seed, so results are bit-reproducible and trials can run
/// on any number of threads.
SweepResult convergence_sweep(const ScenePoints& scene,
                              std::span<const FeaturePyramid> query,
                              const Camera& cam, const Pose& gt,
                              const SolverConfig& config,
                              const DampingParams& damping_params,
                              const SweepConfig& sweep);

struct BasinRaster {
  struct LevelScores {
    int width = 0, height = 0;
    double stride = 1.0;
    std::vector<double> scores;  // row-major, in [0, 1]

    double at(int x, int y) const { return scores[size_t(y) * width + x]; }
  };
  std::vector<LevelScores> levels;  // pyramid order (coarse to fine)
  LevelScores combined;             // finest resolution, product over levels
  Vec2 seed_pixel;
};

/// Attraction-basin rasterization: per level, each pixel propagates a soft
/// score from the 2 of its 8 neighbors most opposed to the feature-gradient
/// direction dF/dp^T r, iterated to a fixpoint from the seed (score 1).
/// Levels run fine to coarse; the combined raster is the per-level product.
BasinRaster basin(const FeaturePyramid& query,
                  std::span<const Eigen::VectorXd> ref_descriptor_per_level,
                  const Vec2& seed_pixel);

}  // namespace featalign
