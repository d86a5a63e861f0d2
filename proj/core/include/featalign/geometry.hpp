#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <optional>

#include "featalign/dual.hpp"

namespace featalign {

template <class S>
using Vec2T = Eigen::Matrix<S, 2, 1>;
template <class S>
using Vec3T = Eigen::Matrix<S, 3, 1>;
template <class S>
using Vec6T = Eigen::Matrix<S, 6, 1>;
template <class S>
using Mat3T = Eigen::Matrix<S, 3, 3>;
template <class S>
using Mat6T = Eigen::Matrix<S, 6, 6>;
template <class S>
using Mat26T = Eigen::Matrix<S, 2, 6>;

using Vec2 = Vec2T<double>;
using Vec3 = Vec3T<double>;
using Vec6 = Vec6T<double>;
using Mat3 = Mat3T<double>;
using Mat6 = Mat6T<double>;

using Point3 = Vec3;

// Angle below which exp/log switch to their 2nd-order Taylor branch.
inline constexpr double kSmallAngle = 1e-8;
// Minimum depth for a point to count as in front of the camera.
inline constexpr double kZMin = 1e-4;

/// World-to-camera rigid transform: x_cam = R * x_world + t.
/// Tangent vectors are ordered (translation xyz, rotation xyz) and act by
/// left multiplication, pose' = exp(delta) * pose.
template <class S>
struct PoseT {
  Mat3T<S> R = Mat3T<S>::Identity();
  Vec3T<S> t = Vec3T<S>::Zero();

  static PoseT Identity() { return PoseT{}; }

  template <class T>
  PoseT<T> cast() const {
    PoseT<T> out;
    out.R = R.template cast<T>();
    out.t = t.template cast<T>();
    return out;
  }
};

using Pose = PoseT<double>;

inline Pose pose_value(const Pose& p) { return p; }
inline Pose pose_value(const PoseT<Dual>& p) {
  Pose out;
  for (int i = 0; i < 3; ++i) {
    out.t[i] = p.t[i].v;
    for (int j = 0; j < 3; ++j) out.R(i, j) = p.R(i, j).v;
  }
  return out;
}

struct Camera {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 1, height = 1;
};

/// Rescale intrinsics for an image resized by factor s. Pixel centers map as
/// p' = (p + 0.5) * s - 0.5.
inline Camera scale_camera(const Camera& cam, double s) {
  Camera out;
  out.fx = cam.fx * s;
  out.fy = cam.fy * s;
  out.cx = (cam.cx + 0.5) * s - 0.5;
  out.cy = (cam.cy + 0.5) * s - 0.5;
  out.width = static_cast<int>(std::lround(cam.width * s));
  out.height = static_cast<int>(std::lround(cam.height * s));
  return out;
}

template <class S>
Mat3T<S> skew(const Vec3T<S>& w) {
  Mat3T<S> W;
  W << S(0), -w.z(), w.y(), w.z(), S(0), -w.x(), -w.y(), w.x(), S(0);
  return W;
}

template <class S>
Vec3T<S> unskew(const Mat3T<S>& W) {
  return Vec3T<S>(W(2, 1), W(0, 2), W(1, 0));
}

/// Rodrigues' formula with a Taylor branch near zero.
template <class S>
Mat3T<S> so3_exp(const Vec3T<S>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const S theta2 = w.squaredNorm();
  const Mat3T<S> W = skew(w);
  S a, b;
  if (value(theta2) < kSmallAngle * kSmallAngle) {
    a = S(1) - theta2 / S(6);
    b = S(0.5) - theta2 / S(24);
  } else {
    const S theta = sqrt(theta2);
    a = sin(theta) / theta;
    b = (S(1) - cos(theta)) / theta2;
  }
  return Mat3T<S>::Identity() + a * W + b * (W * W);
}

/// Principal-branch logarithm, ||result|| <= pi. The angle-pi case falls back
/// to axis extraction from the symmetric part.
template <class S>
Vec3T<S> so3_log(const Mat3T<S>& R) {
  using std::atan2;
  using std::sqrt;
  const Vec3T<S> axis_sin = unskew<S>((R - R.transpose()) * S(0.5));
  const S sin_theta = axis_sin.norm();
  const S cos_theta = (R.trace() - S(1)) * S(0.5);
  const double c = value(cos_theta);
  if (c > 0.0 && value(sin_theta) < kSmallAngle) {
    // theta ~ 0: axis_sin = sin(theta) * axis; sin(theta)/theta ~ 1 - theta^2/6.
    const S theta2 = axis_sin.squaredNorm();
    return axis_sin * (S(1) + theta2 / S(6));
  }
  if (c < -1.0 + 1e-10) {
    // theta ~ pi: R + I = 2 * axis * axis^T (+ O(pi - theta)).
    const Mat3T<S> B = (R + Mat3T<S>::Identity()) * S(0.5);
    int k = 0;
    for (int i = 1; i < 3; ++i)
      if (value(B(i, i)) > value(B(k, k))) k = i;
    Vec3T<S> axis;
    axis[k] = sqrt(B(k, k));
    for (int i = 0; i < 3; ++i)
      if (i != k) axis[i] = B(k, i) / axis[k];
    axis.normalize();
    const S theta = atan2(sin_theta, cos_theta);
    return axis * theta;
  }
  const S theta = atan2(sin_theta, cos_theta);
  return axis_sin * (theta / sin_theta);
}

namespace detail {

// Coefficients of V = I + b*W + c*W^2 coupling rotation and translation in
// the SE(3) exponential, and of its inverse.
template <class S>
void se3_v_coeffs(const S& theta2, S& b, S& c) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  if (value(theta2) < kSmallAngle * kSmallAngle) {
    b = S(0.5) - theta2 / S(24);
    c = S(1) / S(6) - theta2 / S(120);
  } else {
    const S theta = sqrt(theta2);
    b = (S(1) - cos(theta)) / theta2;
    c = (theta - sin(theta)) / (theta2 * theta);
  }
}

}  // namespace detail

template <class S>
PoseT<S> se3_exp(const Vec6T<S>& delta) {
  const Vec3T<S> v = delta.template head<3>();
  const Vec3T<S> w = delta.template tail<3>();
  const S theta2 = w.squaredNorm();
  const Mat3T<S> W = skew(w);
  S b, c;
  detail::se3_v_coeffs(theta2, b, c);
  const Mat3T<S> V = Mat3T<S>::Identity() + b * W + c * (W * W);
  PoseT<S> out;
  out.R = so3_exp(w);
  out.t = V * v;
  return out;
}

template <class S>
Vec6T<S> se3_log(const PoseT<S>& pose) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Vec3T<S> w = so3_log(pose.R);
  const S theta2 = w.squaredNorm();
  const Mat3T<S> W = skew(w);
  S c;
  if (value(theta2) < kSmallAngle * kSmallAngle) {
    c = S(1) / S(12) + theta2 / S(720);
  } else {
    const S theta = sqrt(theta2);
    c = (S(1) - theta * sin(theta) / (S(2) * (S(1) - cos(theta)))) / theta2;
  }
  const Mat3T<S> Vinv = Mat3T<S>::Identity() - S(0.5) * W + c * (W * W);
  Vec6T<S> delta;
  delta.template head<3>() = Vinv * pose.t;
  delta.template tail<3>() = w;
  return delta;
}

namespace detail {

// One Newton step of the polar decomposition, applied only when round-off
// has pushed R off the manifold.
template <class S>
void reorthonormalize(Mat3T<S>& R) {
  const Mat3T<S> E = R.transpose() * R - Mat3T<S>::Identity();
  if (value(E.squaredNorm()) > 1e-12 * 1e-12) {
    R = R * (Mat3T<S>::Identity() - S(0.5) * E);
  }
}

}  // namespace detail

/// pose' = exp(delta) * pose.
template <class S>
PoseT<S> left_update(const PoseT<S>& pose, const Vec6T<S>& delta) {
  const PoseT<S> d = se3_exp(delta);
  PoseT<S> out;
  out.R = d.R * pose.R;
  out.t = d.R * pose.t + d.t;
  detail::reorthonormalize(out.R);
  return out;
}

template <class S>
PoseT<S> compose(const PoseT<S>& a, const PoseT<S>& b) {
  PoseT<S> out;
  out.R = a.R * b.R;
  out.t = a.R * b.t + a.t;
  detail::reorthonormalize(out.R);
  return out;
}

template <class S>
PoseT<S> inverse(const PoseT<S>& pose) {
  PoseT<S> out;
  out.R = pose.R.transpose();
  out.t = -(out.R * pose.t);
  return out;
}

template <class S>
Vec3T<S> transform(const PoseT<S>& pose, const Vec3T<S>& P) {
  return pose.R * P + pose.t;
}

/// Pinhole projection; nullopt when the point is at or behind the camera
/// plane (z <= kZMin), which drops the observation for this iteration.
template <class S>
std::optional<Vec2T<S>> project(const Camera& cam, const Vec3T<S>& Pc) {
  if (value(Pc.z()) <= kZMin) return std::nullopt;
  return Vec2T<S>(S(cam.fx) * Pc.x() / Pc.z() + S(cam.cx),
                  S(cam.fy) * Pc.y() / Pc.z() + S(cam.cy));
}

/// 2x3 derivative of the projection w.r.t. the camera-frame point.
template <class S>
Eigen::Matrix<S, 2, 3> projection_jacobian(const Camera& cam, const Vec3T<S>& Pc) {
  const S iz = S(1) / Pc.z();
  const S iz2 = iz * iz;
  Eigen::Matrix<S, 2, 3> J;
  J << S(cam.fx) * iz, S(0), -S(cam.fx) * Pc.x() * iz2, S(0), S(cam.fy) * iz,
      -S(cam.fy) * Pc.y() * iz2;
  return J;
}

/// d(projected pixel)/d(delta) at delta = 0 under the left-update convention:
/// chain of the 2x3 projection Jacobian with [I | -(R P + t)^].
template <class S>
std::optional<Mat26T<S>> pose_point_jacobian(const Camera& cam, const PoseT<S>& pose,
                                             const Vec3T<S>& P) {
  const Vec3T<S> Pc = transform(pose, P);
  if (value(Pc.z()) <= kZMin) return std::nullopt;
  const Eigen::Matrix<S, 2, 3> Jp = projection_jacobian(cam, Pc);
  Mat26T<S> J;
  J.template leftCols<3>() = Jp;
  J.template rightCols<3>() = -Jp * skew(Pc);
  return J;
}

inline double rotation_angle(const Mat3& Ra, const Mat3& Rb) {
  return so3_log<double>(Ra * Rb.transpose()).norm();
}

inline double rotation_error(const Pose& a, const Pose& b) {
  return rotation_angle(a.R, b.R);
}

/// Distance between camera centers (translation error in scene units).
inline double translation_error(const Pose& a, const Pose& b) {
  const Vec3 ca = -(a.R.transpose() * a.t);
  const Vec3 cb = -(b.R.transpose() * b.t);
  return (ca - cb).norm();
}

}  // namespace featalign
