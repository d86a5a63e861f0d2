#pragma once

#include <Eigen/Core>
#include <cmath>
#include <span>
#include <vector>

#include "featalign/errors.hpp"
#include "featalign/features.hpp"
#include "featalign/geometry.hpp"

namespace featalign {

// Absolute ridge added to the damped Hessian before factorization.
inline constexpr double kRidge = 1e-10;

struct SolverConfig {
  int max_iters_per_level = 100;
  double cost_scale = 0.1;  // Cauchy scale c
  double step_tol = 1e-5;
  double grad_tol = 1e-7;
  std::vector<double> image_pyramid_scales = {0.25, 1.0};
};

/// Per-level damping parameters. theta is unconstrained; the damping factors
/// are log10 lambda = lambda_min + sigmoid(theta) * (lambda_max - lambda_min),
/// one factor per pose parameter.
template <class S>
struct DampingParamsT {
  double lambda_min = -6.0;
  double lambda_max = 5.0;
  std::vector<Vec6T<S>> theta;  // one 6-vector per pyramid level

  static DampingParamsT zeros(int n_levels) {
    DampingParamsT out;
    out.theta.assign(n_levels, Vec6T<S>::Zero());
    return out;
  }

  /// theta such that every damping factor equals lambda (log10 inverse of the
  /// sigmoid parametrization).
  static DampingParamsT constant_lambda(int n_levels, double lambda) {
    DampingParamsT out;
    const double s = (std::log10(lambda) - out.lambda_min) /
                     (out.lambda_max - out.lambda_min);
    const double theta = std::log(s / (1.0 - s));
    out.theta.assign(n_levels, Vec6T<S>::Constant(S(theta)));
    return out;
  }

  template <class T>
  DampingParamsT<T> cast() const {
    DampingParamsT<T> out;
    out.lambda_min = lambda_min;
    out.lambda_max = lambda_max;
    for (const auto& th : theta) out.theta.push_back(th.template cast<T>());
    return out;
  }
};

using DampingParams = DampingParamsT<double>;

template <class S>
Vec6T<S> damping(const Vec6T<S>& theta, double lambda_min, double lambda_max) {
  using std::exp;
  using std::pow;
  Vec6T<S> lambda;
  for (int i = 0; i < 6; ++i) {
    const S sig = S(1) / (S(1) + exp(-theta[i]));
    const S log10_lambda = S(lambda_min) + sig * S(lambda_max - lambda_min);
    lambda[i] = exp(log10_lambda * S(std::log(10.0)));
  }
  return lambda;
}

template <class S>
Vec6T<S> damping(const DampingParamsT<S>& params, int level) {
  return damping(params.theta[level], params.lambda_min, params.lambda_max);
}

/// Cauchy robust cost: rho(s) = c^2 ln(1 + s/c^2), rho'(s) = 1/(1 + s/c^2).
template <class S>
void cauchy(const S& s, double c, S& rho, S& rho_prime) {
  using std::log;
  const S c2 = S(c * c);
  rho = c2 * log(S(1) + s / c2);
  rho_prime = S(1) / (S(1) + s / c2);
}

template <class S>
Eigen::Matrix<S, Eigen::Dynamic, 1> residual(
    const Eigen::Matrix<S, Eigen::Dynamic, 1>& query_feat,
    const Eigen::Matrix<S, Eigen::Dynamic, 1>& ref_feat) {
  return query_feat - ref_feat;
}

template <class S>
struct LinearSystem {
  Mat6T<S> H = Mat6T<S>::Zero();
  Vec6T<S> g = Vec6T<S>::Zero();
  S cost{0};
  int n_valid = 0;
  int n_dropped = 0;
  int n_near_boundary = 0;
};

namespace detail {

template <class S>
struct PointTerm {
  S weight;      // w = u_q * u_ref
  S rho, rho_p;  // robust cost and derivative at ||r||^2
  Eigen::Matrix<S, Eigen::Dynamic, 1> r;
  InterpResult<S> interp;
  Mat26T<S> pose_jac;
};

/// Evaluate one point's residual term at the current pose; false when the
/// observation must be dropped (behind camera, border, or missing features).
template <class S>
bool eval_point(const PoseT<S>& pose, const ScenePoints& scene, size_t i,
                const FeatureLevel& level_grid, const Camera& cam, int level,
                double cost_scale, PointTerm<S>& term) {
  if (!scene.features[i].has_level(level)) return false;
  const Vec3T<S> Pc = transform(pose, scene.points[i].cast<S>().eval());
  const auto p = project(cam, Pc);
  if (!p) return false;
  term.interp = interpolate<S>(level_grid, *p);
  if (!term.interp.valid) return false;
  const auto& ref = *scene.features[i].per_level[level];
  term.r = term.interp.feature - ref.descriptor.cast<S>();
  const S u_q = confidence_from_uncertainty(term.interp.uncertainty);
  term.weight = u_q * S(ref.confidence);
  cauchy(S(term.r.squaredNorm()), cost_scale, term.rho, term.rho_p);
  const Eigen::Matrix<S, 2, 3> Jp = projection_jacobian(cam, Pc);
  term.pose_jac.template leftCols<3>() = Jp;
  term.pose_jac.template rightCols<3>() = -Jp * skew(Pc);
  return true;
}

}  // namespace detail

/// Robust weighted total cost at the given pose and level. Throws
/// NoValidObservations when every point is dropped.
template <class S>
S total_cost(const PoseT<S>& pose, const ScenePoints& scene,
             const FeaturePyramid& query, const Camera& cam, int level,
             const SolverConfig& config, int* n_valid_out = nullptr) {
  S cost{0};
  int n_valid = 0;
  detail::PointTerm<S> term;
  for (size_t i = 0; i < scene.size(); ++i) {
    if (!detail::eval_point(pose, scene, i, query.levels[level], cam, level,
                            config.cost_scale, term))
      continue;
    cost += term.weight * term.rho;
    ++n_valid;
  }
  if (n_valid == 0) throw NoValidObservations();
  if (n_valid_out) *n_valid_out = n_valid;
  return cost;
}

/// Accumulate the damped-LM normal equations at the current pose:
/// H = sum w rho' J^T J, g = sum w rho' J^T r with J = dF/dp * dp/ddelta.
template <class S>
LinearSystem<S> build_system(const PoseT<S>& pose, const ScenePoints& scene,
                             const FeaturePyramid& query, const Camera& cam,
                             int level, const SolverConfig& config) {
  LinearSystem<S> sys;
  detail::PointTerm<S> term;
  Eigen::Matrix<S, Eigen::Dynamic, 6> J;
  for (size_t i = 0; i < scene.size(); ++i) {
    if (!detail::eval_point(pose, scene, i, query.levels[level], cam, level,
                            config.cost_scale, term)) {
      ++sys.n_dropped;
      continue;
    }
    J.noalias() = term.interp.grad * term.pose_jac;
    const S w = term.weight * term.rho_p;
    sys.H.noalias() += w * (J.transpose() * J);
    sys.g.noalias() += w * (J.transpose() * term.r);
    sys.cost += term.weight * term.rho;
    if (term.interp.near_cell_boundary) ++sys.n_near_boundary;
    ++sys.n_valid;
  }
  if (sys.n_valid == 0) throw NoValidObservations();
  return sys;
}

namespace detail {

/// Cholesky solve of A x = b for a 6x6 SPD matrix, templated so the solve is
/// differentiable. Throws SingularSystem on a non-positive pivot.
template <class S>
Vec6T<S> cholesky_solve6(Mat6T<S> A, Vec6T<S> b) {
  using std::sqrt;
  // A = L L^T, in place.
  for (int j = 0; j < 6; ++j) {
    S d = A(j, j);
    for (int k = 0; k < j; ++k) d -= A(j, k) * A(j, k);
    if (!(value(d) > 0.0)) throw SingularSystem();
    A(j, j) = sqrt(d);
    for (int i = j + 1; i < 6; ++i) {
      S s = A(i, j);
      for (int k = 0; k < j; ++k) s -= A(i, k) * A(j, k);
      A(i, j) = s / A(j, j);
    }
  }
  // Forward then backward substitution.
  for (int i = 0; i < 6; ++i) {
    for (int k = 0; k < i; ++k) b[i] -= A(i, k) * b[k];
    b[i] /= A(i, i);
  }
  for (int i = 5; i >= 0; --i) {
    for (int k = i + 1; k < 6; ++k) b[i] -= A(k, i) * b[k];
    b[i] /= A(i, i);
  }
  return b;
}

}  // namespace detail

/// delta = -(H + diag(lambda) * diag(H) + ridge * I)^-1 g, with per-parameter
/// Marquardt damping.
template <class S>
Vec6T<S> lm_step(const Mat6T<S>& H, const Vec6T<S>& g, const Vec6T<S>& lambda) {
  Mat6T<S> A = H;
  for (int j = 0; j < 6; ++j) A(j, j) += lambda[j] * H(j, j) + S(kRidge);
  return detail::cholesky_solve6<S>(A, (-g).eval());
}

struct IterationRecord {
  double cost = 0.0;
  double step_norm = 0.0;
  double grad_norm = 0.0;
  int n_valid = 0;
  int n_dropped = 0;
  Pose pose;  // after the step
};

struct LevelTrace {
  double scale = 1.0;
  int level = 0;
  bool converged = false;
  bool skipped = false;
  int n_near_boundary = 0;
  std::vector<IterationRecord> iterations;
};

struct SolveReport {
  std::vector<LevelTrace> stages;
  Pose final_pose;
  int total_dropped = 0;
  int total_near_boundary = 0;
};

/// Fixed-damping LM iteration on one level; every step is applied (the
/// damping is a model parameter, not a trust-region control). Stops when the
/// gradient or step norm falls below tolerance or the budget is exhausted.
template <class S>
PoseT<S> optimize_level(PoseT<S> pose, const ScenePoints& scene,
                        const FeaturePyramid& query, const Camera& cam, int level,
                        const SolverConfig& config, const Vec6T<S>& lambda,
                        LevelTrace* trace = nullptr) {
  using std::sqrt;
  for (int it = 0; it < config.max_iters_per_level; ++it) {
    const LinearSystem<S> sys = build_system(pose, scene, query, cam, level, config);
    IterationRecord rec;
    rec.cost = value(sys.cost);
    rec.grad_norm = std::sqrt(value(sys.g.squaredNorm()));
    rec.n_valid = sys.n_valid;
    rec.n_dropped = sys.n_dropped;
    if (trace) trace->n_near_boundary += sys.n_near_boundary;
    if (rec.grad_norm < config.grad_tol) {
      rec.pose = pose_value(pose);
      if (trace) {
        trace->iterations.push_back(rec);
        trace->converged = true;
      }
      break;
    }
    const Vec6T<S> delta = lm_step(sys.H, sys.g, lambda);
    pose = left_update(pose, delta);
    rec.step_norm = std::sqrt(value(delta.squaredNorm()));
    rec.pose = pose_value(pose);
    if (trace) trace->iterations.push_back(rec);
    if (rec.step_norm < config.step_tol) {
      if (trace) trace->converged = true;
      break;
    }
  }
  return pose;
}

template <class S>
struct OptimizeResult {
  PoseT<S> pose;
  // Final pose of each stage, in schedule order (scales outer, levels inner).
  std::vector<PoseT<S>> stage_poses;
  SolveReport report;
};

/// Coarse-to-fine schedule: outer loop over image scales (camera rescaled per
/// scale, one query pyramid per scale), inner loop over pyramid levels, each
/// stage initialized from the previous one. Levels with no valid observation
/// are skipped; throws InitializationFailed when every stage is skipped.
template <class S>
OptimizeResult<S> optimize(PoseT<S> pose, const ScenePoints& scene,
                           std::span<const FeaturePyramid> query_per_scale,
                           const Camera& cam, const SolverConfig& config,
                           const DampingParamsT<S>& damping_params) {
  if (query_per_scale.size() != config.image_pyramid_scales.size())
    throw InputError("one query pyramid per image scale required");
  OptimizeResult<S> result;
  bool any_stage = false;
  for (size_t si = 0; si < query_per_scale.size(); ++si) {
    const double scale = config.image_pyramid_scales[si];
    const Camera cam_s = scale_camera(cam, scale);
    const FeaturePyramid& pyr = query_per_scale[si];
    for (int level = 0; level < pyr.num_levels(); ++level) {
      LevelTrace trace;
      trace.scale = scale;
      trace.level = level;
      const Vec6T<S> lambda = damping(damping_params, level);
      try {
        pose = optimize_level(pose, scene, pyr, cam_s, level, config, lambda, &trace);
        any_stage = true;
      } catch (const NoValidObservations&) {
        trace.skipped = true;
      }
      for (const auto& rec : trace.iterations)
        result.report.total_dropped += rec.n_dropped;
      result.report.total_near_boundary += trace.n_near_boundary;
      result.report.stages.push_back(std::move(trace));
      result.stage_poses.push_back(pose);
    }
  }
  if (!any_stage) throw InitializationFailed();
  result.pose = pose;
  result.report.final_pose = pose_value(pose);
  return result;
}

}  // namespace featalign
