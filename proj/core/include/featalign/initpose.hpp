#pragma once

#include <cstdint>
#include <vector>

#include "featalign/geometry.hpp"

namespace featalign {

struct WeightedPose {
  Pose pose;
  double weight = 1.0;  // e.g. retrieval-descriptor similarity
};

/// Weighted pose average: arithmetic mean of the translations and the
/// principal eigenvector of the weighted quaternion outer-product matrix for
/// the rotations. Throws DegenerateRotationSet on an eigenvalue tie, in which
/// case callers fall back to the highest-weight pose.
Pose average_poses(const std::vector<WeightedPose>& candidates);

/// Left-multiplicative random perturbation: rotation axis uniform on the
/// sphere with angle rot_mag, translation uniform in the ball of radius
/// trans_mag. Deterministic per seed.
Pose perturb(const Pose& pose, double rot_mag, double trans_mag, std::uint64_t seed);

}  // namespace featalign
