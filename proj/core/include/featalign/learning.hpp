#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "featalign/dual.hpp"
#include "featalign/errors.hpp"
#include "featalign/solver.hpp"

namespace featalign {

/// One supervised localization episode on a fixed synthetic scene.
struct TrainSample {
  ScenePoints scene;
  std::vector<FeaturePyramid> query;  // one pyramid per config image scale
  Camera camera;
  Pose gt;
  Pose init;
};

/// Huber penalty on a nonnegative scalar error: e^2/2 below the elbow,
/// delta * e - delta^2/2 above.
template <class S>
S huber(const S& e, double delta) {
  if (value(e) <= delta) return S(0.5) * e * e;
  return S(delta) * e - S(0.5 * delta * delta);
}

/// Mean Huber reprojection error between two poses over the given points.
/// Points behind either camera are skipped; throws NoVisiblePoints when none
/// remain. mean_pixel_error_out receives the un-Hubered mean pixel error.
template <class S>
S reprojection_loss(const PoseT<S>& pose, const Pose& gt,
                    std::span<const Point3> points, const Camera& cam,
                    double huber_delta, S* mean_pixel_error_out = nullptr) {
  using std::sqrt;
  S loss{0};
  S pix{0};
  int n = 0;
  for (const auto& P : points) {
    const auto p_gt = project(cam, transform(gt, P));
    if (!p_gt) continue;
    const auto p = project(cam, transform(pose, P.cast<S>().eval()));
    if (!p) continue;
    const S e = sqrt((*p - p_gt->cast<S>()).squaredNorm() + S(1e-16));
    loss += huber(e, huber_delta);
    pix += e;
    ++n;
  }
  if (n == 0) throw NoVisiblePoints();
  if (mean_pixel_error_out) *mean_pixel_error_out = pix / S(double(n));
  return loss / S(double(n));
}

template <class S>
struct LossReportT {
  std::vector<S> per_level;        // clamped Huber term, 0 when gated off
  std::vector<bool> active;
  std::vector<S> mean_pixel_error;
  S total{0};
};

using LossReport = LossReportT<double>;

inline constexpr double kDefaultHuberDelta = 1.0;    // pixels
inline constexpr double kLossClamp = 50.0;           // pixels
inline constexpr double kDefaultGateThreshold = 50.0;  // pixels

/// Level-gated training loss: level l contributes only if level l-1 brought
/// the mean reprojection error below gate_threshold (the coarsest level is
/// always active). Included terms are clamped and the total is normalized by
/// the number of levels.
template <class S>
LossReportT<S> gated_total_loss(std::span<const PoseT<S>> per_level_poses,
                                const Pose& gt, std::span<const Point3> points,
                                const Camera& cam,
                                double huber_delta = kDefaultHuberDelta,
                                double gate_threshold = kDefaultGateThreshold,
                                double clamp = kLossClamp) {
  using std::min;
  LossReportT<S> report;
  const size_t L = per_level_poses.size();
  report.per_level.assign(L, S(0));
  report.active.assign(L, false);
  report.mean_pixel_error.assign(L, S(0));
  bool gate_open = true;
  for (size_t l = 0; l < L; ++l) {
    S pix{0};
    S term;
    try {
      term = reprojection_loss(per_level_poses[l], gt, points, cam, huber_delta, &pix);
    } catch (const NoVisiblePoints&) {
      term = S(clamp);
      pix = S(1e6);
    }
    report.mean_pixel_error[l] = pix;
    if (gate_open) {
      report.per_level[l] = min(term, S(clamp));
      report.active[l] = true;
      report.total += report.per_level[l];
    }
    gate_open = gate_open && value(pix) < gate_threshold;
  }
  report.total = report.total / S(double(L));
  return report;
}

/// Run the unrolled solver on a sample and evaluate the gated loss on the
/// per-level poses of the finest image scale.
template <class S>
LossReportT<S> sample_loss(const TrainSample& sample, const SolverConfig& config,
                           const DampingParamsT<S>& damping_params,
                           int* n_near_boundary = nullptr) {
  const auto result =
      optimize<S>(sample.init.cast<S>(), sample.scene, sample.query, sample.camera,
                  config, damping_params);
  const int L = sample.query.back().num_levels();
  std::span<const PoseT<S>> level_poses(result.stage_poses.data() +
                                            result.stage_poses.size() - L,
                                        size_t(L));
  if (n_near_boundary) *n_near_boundary = result.report.total_near_boundary;
  const Camera cam_fine =
      scale_camera(sample.camera, config.image_pyramid_scales.back());
  return gated_total_loss<S>(level_poses, sample.gt, sample.scene.points, cam_fine);
}

struct ThetaGradient {
  std::vector<Vec6> per_level;
  double loss = 0.0;
  int n_near_boundary = 0;
};

/// Exact derivative of the unrolled gated loss with respect to every damping
/// parameter, by forward-mode dual numbers seeded one component at a time.
ThetaGradient theta_gradient(const TrainSample& sample, const SolverConfig& config,
                             const DampingParams& damping_params);

struct FitHistoryEntry {
  int step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct FitResult {
  DampingParams params;
  std::vector<FitHistoryEntry> history;
};

/// Plain gradient descent on theta over the sample set, with per-component
/// gradient clipping to [-1, 1]. val_samples (optional) are evaluated with
/// the plain double solver for the history.
FitResult fit_damping(const std::vector<TrainSample>& samples,
                      const std::vector<TrainSample>& val_samples,
                      const SolverConfig& config, const DampingParams& init_theta,
                      double lr, int steps, int threads = 1);

}  // namespace featalign
