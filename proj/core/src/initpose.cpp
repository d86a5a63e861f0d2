#include "featalign/initpose.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <random>

#include "featalign/errors.hpp"

namespace featalign {

Pose average_poses(const std::vector<WeightedPose>& candidates) {
  if (candidates.empty()) throw InputError("no prior poses");
  double weight_sum = 0.0;
  size_t best = 0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].weight < 0.0) throw InputError("negative prior weight");
    weight_sum += candidates[i].weight;
    if (candidates[i].weight > candidates[best].weight) best = i;
  }
  if (weight_sum <= 0.0) throw InputError("prior weights sum to zero");

  // q and -q encode the same rotation; align signs against the
  // highest-weight candidate before averaging.
  const Eigen::Quaterniond q_ref(candidates[best].pose.R);
  Eigen::Matrix4d M = Eigen::Matrix4d::Zero();
  Vec3 t_mean = Vec3::Zero();
  for (const auto& c : candidates) {
    const double w = c.weight / weight_sum;
    Eigen::Quaterniond q(c.pose.R);
    if (q.coeffs().dot(q_ref.coeffs()) < 0.0) q.coeffs() = -q.coeffs();
    M += w * (q.coeffs() * q.coeffs().transpose());
    t_mean += w * c.pose.t;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(M);
  const auto& evals = eig.eigenvalues();  // ascending
  if (evals[3] - evals[2] < 1e-9) throw DegenerateRotationSet();
  Eigen::Quaterniond q_avg;
  q_avg.coeffs() = eig.eigenvectors().col(3);
  q_avg.normalize();

  Pose out;
  out.R = q_avg.toRotationMatrix();
  out.t = t_mean;
  return out;
}

Pose perturb(const Pose& pose, double rot_mag, double trans_mag, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Vec3 axis(gauss(rng), gauss(rng), gauss(rng));
  axis = axis.norm() > 0 ? axis.normalized().eval() : Vec3(1, 0, 0);
  Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
  dir = dir.norm() > 0 ? dir.normalized().eval() : Vec3(1, 0, 0);
  const double radius = trans_mag * std::cbrt(uni(rng));
  Vec6 delta;
  delta << radius * dir, rot_mag * axis;
  return left_update(pose, delta);
}

}  // namespace featalign
