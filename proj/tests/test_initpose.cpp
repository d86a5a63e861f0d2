#include <doctest.h>

#include <algorithm>
#include <random>

#include "featalign/errors.hpp"
#include "featalign/initpose.hpp"

using namespace featalign;

TEST_SUITE_BEGIN("initpose");

namespace {

constexpr double kPi = 3.14159265358979323846;

Pose rot_z(double angle, const Vec3& t = Vec3::Zero()) {
  Pose p;
  p.R = so3_exp<double>(Vec3(0.0, 0.0, angle));
  p.t = t;
  return p;
}

}  // namespace

TEST_CASE("average_poses input validation") {
  CHECK_THROWS_AS(average_poses({}), InputError);
  CHECK_THROWS_AS(average_poses({{Pose{}, -1.0}}), InputError);
  CHECK_THROWS_AS(average_poses({{Pose{}, 0.0}, {Pose{}, 0.0}}), InputError);
  CHECK_THROWS_WITH_AS(average_poses({}), "no prior poses", InputError);
}

TEST_CASE("average_poses identical candidates") {
  const Pose p = rot_z(0.4, Vec3(1.0, -2.0, 0.5));
  const Pose avg = average_poses({{p, 1.0}, {p, 2.0}, {p, 0.5}});
  CHECK(rotation_error(avg, p) < 1e-12);
  CHECK((avg.t - p.t).norm() < 1e-12);
}

TEST_CASE("average_poses weight (1, 0) returns the first pose") {
  const Pose a = rot_z(0.3, Vec3(1.0, 0.0, 0.0));
  const Pose b = rot_z(-0.9, Vec3(0.0, 5.0, 0.0));
  const Pose avg = average_poses({{a, 1.0}, {b, 0.0}});
  CHECK(rotation_error(avg, a) < 1e-9);
  CHECK((avg.t - a.t).norm() < 1e-12);
}

TEST_CASE("average_poses +-10 degrees about z averages to identity") {
  const double ten = 10.0 * kPi / 180.0;
  const Pose avg = average_poses({{rot_z(ten), 1.0}, {rot_z(-ten), 1.0}});
  CHECK(rotation_error(avg, Pose{}) < 1e-9);
}

TEST_CASE("average_poses translation is the weighted mean") {
  Pose a, b;
  a.t = Vec3(1.0, 0.0, 0.0);
  b.t = Vec3(0.0, 3.0, 0.0);
  const Pose avg = average_poses({{a, 1.0}, {b, 3.0}});
  CHECK((avg.t - Vec3(0.25, 2.25, 0.0)).norm() < 1e-12);
}

TEST_CASE("average_poses invariant to weight rescaling and permutation") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<WeightedPose> set;
  for (int i = 0; i < 5; ++i) {
    Pose p;
    p.R = so3_exp<double>(Vec3(0.1 * gauss(rng), 0.1 * gauss(rng), 0.1 * gauss(rng)));
    p.t = Vec3(gauss(rng), gauss(rng), gauss(rng));
    set.push_back({p, 0.2 + std::abs(gauss(rng))});
  }
  const Pose base = average_poses(set);

  auto scaled = set;
  for (auto& wp : scaled) wp.weight *= 17.0;
  const Pose s = average_poses(scaled);
  CHECK(rotation_error(s, base) < 1e-10);
  CHECK((s.t - base.t).norm() < 1e-10);

  auto shuffled = set;
  std::reverse(shuffled.begin(), shuffled.end());
  const Pose sh = average_poses(shuffled);
  CHECK(rotation_error(sh, base) < 1e-10);
  CHECK((sh.t - base.t).norm() < 1e-10);
}

TEST_CASE("average_poses result is a proper rotation") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<WeightedPose> set;
  for (int i = 0; i < 4; ++i) {
    Pose p;
    p.R = so3_exp<double>(Vec3(gauss(rng), gauss(rng), gauss(rng)));
    set.push_back({p, 1.0});
  }
  const Pose avg = average_poses(set);
  CHECK((avg.R.transpose() * avg.R - Mat3::Identity()).norm() < 1e-10);
  CHECK(std::abs(avg.R.determinant() - 1.0) < 1e-10);
}

TEST_CASE("average_poses degenerate antipodal tie throws") {
  // Two equal-weight rotations 180 degrees apart about z: the quaternion
  // outer-product matrix has a tied principal eigenpair.
  CHECK_THROWS_AS(average_poses({{rot_z(0.0), 1.0}, {rot_z(kPi), 1.0}}),
                  DegenerateRotationSet);
}

TEST_CASE("perturb basics") {
  const Pose base = rot_z(0.2, Vec3(0.5, 0.0, 1.0));
  const Pose same = perturb(base, 0.0, 0.0, 7);
  CHECK(rotation_error(same, base) < 1e-12);
  CHECK(translation_error(same, base) < 1e-12);

  const Pose a = perturb(base, 0.1, 0.2, 42);
  const Pose b = perturb(base, 0.1, 0.2, 42);
  CHECK((a.R - b.R).norm() == 0.0);
  CHECK((a.t - b.t).norm() == 0.0);
  const Pose c = perturb(base, 0.1, 0.2, 43);
  CHECK(rotation_error(a, c) > 0.0);
}

TEST_CASE("perturb Monte Carlo statistics over 10000 samples") {
  const Pose base;
  const double rot_mag = 0.2;
  const double trans_mag = 0.5;
  double rot_sum = 0.0;
  double trans_sum = 0.0;
  Vec3 trans_mean = Vec3::Zero();
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Pose p = perturb(base, rot_mag, trans_mag, 10000 + i);
    rot_sum += rotation_error(p, base);
    const Vec6 delta = se3_log(p);
    trans_sum += delta.head<3>().norm();
    trans_mean += delta.head<3>();
  }
  // Rotation magnitude is fixed at rot_mag by construction.
  CHECK(std::abs(rot_sum / n - rot_mag) / rot_mag < 0.02);
  // Uniform in the ball: mean radius is 3/4 of the max radius.
  CHECK(std::abs(trans_sum / n - 0.75 * trans_mag) / (0.75 * trans_mag) < 0.02);
  // Directions are isotropic.
  CHECK((trans_mean / n).norm() < 0.02 * trans_mag);
}

TEST_SUITE_END();
