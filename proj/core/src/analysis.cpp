#include "featalign/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "featalign/errors.hpp"
#include "featalign/initpose.hpp"

namespace featalign {

double initial_reproj_error(const Pose& pose0, const Pose& gt,
                            std::span<const Point3> points, const Camera& cam) {
  double sum = 0.0;
  int n = 0;
  const auto inside = [&](const Vec2& p) {
    return p.x() >= 0.0 && p.x() <= cam.width - 1.0 && p.y() >= 0.0 &&
           p.y() <= cam.height - 1.0;
  };
  for (const auto& P : points) {
    const auto p_gt = project(cam, transform(gt, P));
    const auto p0 = project(cam, transform(pose0, P));
    if (!p_gt || !p0 || !inside(*p_gt) || !inside(*p0)) continue;
    sum += (*p0 - *p_gt).norm();
    ++n;
  }
  if (n == 0) throw NoVisiblePoints();
  return sum / n;
}

SweepResult convergence_sweep(const ScenePoints& scene,
                              std::span<const FeaturePyramid> query,
                              const Camera& cam, const Pose& gt,
                              const SolverConfig& config,
                              const DampingParams& damping_params,
                              const SweepConfig& sweep) {
  if (sweep.n_trials < 1) throw InputError("n_trials must be >= 1");
  const size_t n_bins = sweep.bin_edges.size() - 1;

  struct TrialOutcome {
    int bin = -1;  // -1: overflow or unmeasurable
    bool success = false;
  };
  std::vector<TrialOutcome> outcomes(sweep.n_trials);

  const auto run_trial = [&](int i) {
    TrialOutcome out;
    const std::uint64_t trial_seed =
        sweep.seed ^ (0x9e3779b97f4a7c15ULL * (std::uint64_t(i) + 1));
    std::mt19937_64 rng(trial_seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double factor = uni(rng);
    const Pose pose0 =
        perturb(gt, factor * sweep.rot_max, factor * sweep.trans_max, rng());
    double e0;
    try {
      e0 = initial_reproj_error(pose0, gt, scene.points, cam);
    } catch (const NoVisiblePoints&) {
      return out;
    }
    const auto it = std::upper_bound(sweep.bin_edges.begin(), sweep.bin_edges.end(), e0);
    const auto idx = it - sweep.bin_edges.begin() - 1;
    if (idx < 0 || size_t(idx) >= n_bins) return out;
    out.bin = int(idx);
    try {
      const auto result =
          optimize<double>(pose0, scene, query, cam, config, damping_params);
      const Pose final = pose_value(result.pose);
      out.success = rotation_error(final, gt) < sweep.rot_tol &&
                    translation_error(final, gt) < sweep.trans_tol;
    } catch (const Error&) {
      out.success = false;
    }
    return out;
  };

  const int n_threads = std::max(1, sweep.threads);
  if (n_threads == 1) {
    for (int i = 0; i < sweep.n_trials; ++i) outcomes[i] = run_trial(i);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (sweep.n_trials + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      const int begin = t * chunk;
      const int end = std::min(sweep.n_trials, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back([&, begin, end] {
        for (int i = begin; i < end; ++i) outcomes[i] = run_trial(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  SweepResult result;
  result.bin_edges = sweep.bin_edges;
  result.trials.assign(n_bins, 0);
  result.successes.assign(n_bins, 0);
  for (const auto& out : outcomes) {
    if (out.bin < 0) {
      ++result.overflow_trials;
      continue;
    }
    ++result.trials[out.bin];
    if (out.success) ++result.successes[out.bin];
  }
  return result;
}

namespace {

struct CellPropagation {
  // Up to two source neighbors (downhill, opposed to the feature gradient)
  // with their soft voting weights.
  int src[2] = {-1, -1};
  double weight[2] = {0.0, 0.0};
};

BasinRaster::LevelScores run_level(const FeatureLevel& level,
                                   const Eigen::VectorXd& ref_descriptor,
                                   int seed_x, int seed_y) {
  const int w = level.width;
  const int h = level.height;
  BasinRaster::LevelScores out;
  out.width = w;
  out.height = h;
  out.stride = level.stride;
  out.scores.assign(size_t(w) * h, 0.0);

  static const int dx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
  static const int dy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};

  std::vector<CellPropagation> prop(size_t(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Energy descent direction from central differences on the grid; the
      // bilinear gradient is one-sided exactly at cell centers, which would
      // bias the direction by half a cell.
      Vec2 grad = Vec2::Zero();
      const int xm = std::max(0, x - 1), xp = std::min(w - 1, x + 1);
      const int ym = std::max(0, y - 1), yp = std::min(h - 1, y + 1);
      for (int c = 0; c < level.channels; ++c) {
        const double r = level.at(x, y, c) - ref_descriptor[c];
        grad.x() += (level.at(xp, y, c) - level.at(xm, y, c)) / (xp - xm) * r;
        grad.y() += (level.at(x, yp, c) - level.at(x, ym, c)) / (yp - ym) * r;
      }
      const double gn = grad.norm();
      if (gn < 1e-12) continue;
      auto& cp = prop[size_t(y) * w + x];
      for (int k = 0; k < 8; ++k) {
        const int nx = x + dx[k];
        const int ny = y + dy[k];
        if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
        const Vec2 dir = Vec2(dx[k], dy[k]).normalized();
        const double opposition = -grad.dot(dir) / gn;  // cos against -grad
        if (opposition <= 0.0) continue;
        // Keep the two strongest.
        if (opposition > cp.weight[0]) {
          cp.src[1] = cp.src[0];
          cp.weight[1] = cp.weight[0];
          cp.src[0] = ny * w + nx;
          cp.weight[0] = opposition;
        } else if (opposition > cp.weight[1]) {
          cp.src[1] = ny * w + nx;
          cp.weight[1] = opposition;
        }
      }
    }
  }

  const size_t seed_idx = size_t(seed_y) * w + seed_x;
  out.scores[seed_idx] = 1.0;
  const long max_sweeps = long(w) * h;
  for (long sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (size_t i = 0; i < out.scores.size(); ++i) {
      if (i == seed_idx) continue;
      const auto& cp = prop[i];
      double s = out.scores[i];
      // Bottleneck propagation: a path is as good as its worst edge, so a
      // well-aligned gradient flow keeps a high score over any distance.
      for (int k = 0; k < 2; ++k) {
        if (cp.src[k] < 0) continue;
        s = std::max(s, std::min(cp.weight[k], out.scores[size_t(cp.src[k])]));
      }
      max_change = std::max(max_change, s - out.scores[i]);
      out.scores[i] = std::min(1.0, s);
    }
    if (max_change < 1e-6) break;
  }
  return out;
}

}  // namespace

BasinRaster basin(const FeaturePyramid& query,
                  std::span<const Eigen::VectorXd> ref_descriptor_per_level,
                  const Vec2& seed_pixel) {
  if (query.num_levels() == 0 ||
      ref_descriptor_per_level.size() != size_t(query.num_levels()))
    throw InputError("one reference descriptor per level required");
  const auto& finest = query.levels.back();
  if (!interpolate<double>(finest, seed_pixel).valid) throw SeedOutOfBounds();

  BasinRaster out;
  out.seed_pixel = seed_pixel;
  out.levels.resize(query.num_levels());
  // Fine to coarse, each level run to its own fixpoint.
  for (int l = query.num_levels() - 1; l >= 0; --l) {
    const auto& level = query.levels[l];
    const int sx = std::clamp(
        int(std::lround((seed_pixel.x() + 0.5) / level.stride - 0.5)), 0,
        level.width - 1);
    const int sy = std::clamp(
        int(std::lround((seed_pixel.y() + 0.5) / level.stride - 0.5)), 0,
        level.height - 1);
    out.levels[l] = run_level(level, ref_descriptor_per_level[l], sx, sy);
  }

  auto& comb = out.combined;
  comb.width = finest.width;
  comb.height = finest.height;
  comb.stride = finest.stride;
  comb.scores.assign(size_t(comb.width) * comb.height, 1.0);
  for (int y = 0; y < comb.height; ++y) {
    for (int x = 0; x < comb.width; ++x) {
      const double px = (x + 0.5) * finest.stride - 0.5;
      const double py = (y + 0.5) * finest.stride - 0.5;
      double v = 1.0;
      for (const auto& lvl : out.levels) {
        const int lx = std::clamp(int(std::lround((px + 0.5) / lvl.stride - 0.5)), 0,
                                  lvl.width - 1);
        const int ly = std::clamp(int(std::lround((py + 0.5) / lvl.stride - 0.5)), 0,
                                  lvl.height - 1);
        v *= lvl.at(lx, ly);
      }
      comb.scores[size_t(y) * comb.width + x] = v;
    }
  }
  return out;
}

}  // namespace featalign
