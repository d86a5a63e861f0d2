#include <doctest.h>

#include <random>

#include "featalign/features.hpp"

using namespace featalign;

TEST_SUITE_BEGIN("features");

namespace {

FeatureLevel random_level(int w, int h, int d, double stride, unsigned seed,
                          bool normalized = true) {
  FeatureLevel level(w, h, d, stride);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < d; ++c) level.at(x, y, c) = gauss(rng);
      level.unc_at(x, y) = uni(rng);
    }
  if (normalized) normalize_channels_inplace(level);
  return level;
}

}  // namespace

TEST_CASE("normalize_channels basics") {
  FeatureLevel level(2, 1, 3, 1.0);
  level.at(0, 0, 0) = 3.0;
  level.at(0, 0, 1) = 4.0;
  // cell (1, 0) stays all-zero
  const FeatureLevel out = normalize_channels(level);
  CHECK(out.at(0, 0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(out.at(0, 0, 1) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(out.at(0, 0, 2) == 0.0);
  CHECK(out.at(1, 0, 0) == 0.0);
  CHECK(out.at(1, 0, 1) == 0.0);
}

TEST_CASE("normalize_channels random grid: all norms in {0} u [1 +- 1e-6]") {
  FeatureLevel level = random_level(13, 9, 5, 1.0, 77, false);
  // Zero out one cell to exercise the degenerate guard.
  for (int c = 0; c < 5; ++c) level.at(4, 3, c) = 0.0;
  normalize_channels_inplace(level);
  for (int y = 0; y < level.height; ++y)
    for (int x = 0; x < level.width; ++x) {
      double n2 = 0.0;
      for (int c = 0; c < level.channels; ++c) n2 += level.at(x, y, c) * level.at(x, y, c);
      const double n = std::sqrt(n2);
      CHECK((n == 0.0 || std::abs(n - 1.0) < 1e-6));
    }
}

TEST_CASE("confidence_from_uncertainty") {
  CHECK(confidence_from_uncertainty(0.0) == 1.0);
  CHECK(confidence_from_uncertainty(1.0) == 0.5);
  CHECK(confidence_from_uncertainty(1e6) == doctest::Approx(1e-6).epsilon(1e-6));
}

TEST_CASE("interpolate reproduces stored values at interior cell centers") {
  const FeatureLevel level = random_level(12, 10, 4, 2.0, 5);
  for (int y = 2; y < level.height - 2; ++y)
    for (int x = 2; x < level.width - 2; ++x) {
      const Vec2 p((x + 0.5) * level.stride - 0.5, (y + 0.5) * level.stride - 0.5);
      const auto r = interpolate<double>(level, p);
      REQUIRE(r.valid);
      for (int c = 0; c < level.channels; ++c)
        CHECK(r.feature[c] == doctest::Approx(level.at(x, y, c)).epsilon(1e-12));
      CHECK(value(r.uncertainty) ==
            doctest::Approx(level.unc_at(x, y)).epsilon(1e-12));
    }
}

TEST_CASE("interpolate at cell-midpoint is the mean of four cells") {
  const FeatureLevel level = random_level(10, 10, 3, 1.0, 9);
  const int x = 4, y = 5;
  const Vec2 p(x + 0.5, y + 0.5);  // stride 1: centers at integer pixels
  const auto r = interpolate<double>(level, p);
  REQUIRE(r.valid);
  for (int c = 0; c < 3; ++c) {
    const double mean = 0.25 * (level.at(x, y, c) + level.at(x + 1, y, c) +
                                level.at(x, y + 1, c) + level.at(x + 1, y + 1, c));
    CHECK(r.feature[c] == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("interpolate border policy") {
  const FeatureLevel level = random_level(100, 100, 2, 1.0, 13);
  CHECK(!interpolate<double>(level, Vec2(1.0, 10.0)).valid);
  CHECK(!interpolate<double>(level, Vec2(50.0, 1.9)).valid);
  CHECK(!interpolate<double>(level, Vec2(97.5, 50.0)).valid);
  CHECK(!interpolate<double>(level, Vec2(-3.0, 50.0)).valid);
  CHECK(interpolate<double>(level, Vec2(2.0, 2.0)).valid);
  CHECK(interpolate<double>(level, Vec2(97.0, 97.0)).valid);
  const auto invalid = interpolate<double>(level, Vec2(1.0, 10.0));
  CHECK(invalid.feature.norm() == 0.0);
  CHECK(invalid.grad.norm() == 0.0);
}

TEST_CASE("interpolate gradient matches finite differences, 50 instances") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double h = 1e-4;
  for (int trial = 0; trial < 50; ++trial) {
    const double stride = trial % 2 == 0 ? 1.0 : 4.0;
    const FeatureLevel level = random_level(24, 20, 3, stride, 100 + trial);
    // Sample well inside a cell so the FD probe does not straddle the
    // one-sided gradient discontinuity at cell boundaries.
    const int cx = 2 + int(uni(rng) * (level.width - 5));
    const int cy = 2 + int(uni(rng) * (level.height - 5));
    const double fx = 0.2 + 0.6 * uni(rng);
    const double fy = 0.2 + 0.6 * uni(rng);
    const Vec2 p((cx + fx + 0.5) * stride - 0.5, (cy + fy + 0.5) * stride - 0.5);
    const auto r = interpolate<double>(level, p);
    REQUIRE(r.valid);
    CHECK(!r.near_cell_boundary);
    for (int axis = 0; axis < 2; ++axis) {
      Vec2 hi = p, lo = p;
      hi[axis] += h;
      lo[axis] -= h;
      const auto rh = interpolate<double>(level, hi);
      const auto rl = interpolate<double>(level, lo);
      REQUIRE(rh.valid);
      REQUIRE(rl.valid);
      for (int c = 0; c < level.channels; ++c) {
        const double fd = (rh.feature[c] - rl.feature[c]) / (2 * h);
        const double denom = std::max(1.0, std::abs(fd));
        CHECK(std::abs(r.grad(c, axis) - fd) / denom < 1e-5);
      }
    }
  }
}

TEST_CASE("near_cell_boundary flag") {
  const FeatureLevel level = random_level(20, 20, 2, 1.0, 31);
  CHECK(interpolate<double>(level, Vec2(5.0, 5.0)).near_cell_boundary);
  CHECK(!interpolate<double>(level, Vec2(5.4, 5.6)).near_cell_boundary);
}

TEST_CASE("bilinear weights nonnegative, sum to one (constant field)") {
  FeatureLevel level(16, 16, 1, 1.0);
  for (auto& v : level.features) v = 1.0;
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> uni(2.0, 13.0);
  for (int i = 0; i < 200; ++i) {
    const auto r = interpolate<double>(level, Vec2(uni(rng), uni(rng)));
    REQUIRE(r.valid);
    CHECK(r.feature[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

namespace {

// A reference view whose pyramid is a single constant-per-cell level sized so
// the projected point lands in the interior.
ReferenceView make_flat_ref(const Eigen::VectorXd& descriptor, double uncertainty) {
  ReferenceView ref;
  FeatureLevel level(32, 32, int(descriptor.size()), 1.0);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      for (int c = 0; c < level.channels; ++c) level.at(x, y, c) = descriptor[c];
      level.unc_at(x, y) = uncertainty;
    }
  ref.pyramid.levels.push_back(normalize_channels(level));
  ref.camera = Camera{32.0, 32.0, 15.5, 15.5, 32, 32};
  ref.pose = Pose::Identity();
  return ref;
}

}  // namespace

TEST_CASE("aggregate_reference single reference") {
  Eigen::VectorXd d(3);
  d << 1.0, 2.0, 2.0;
  const std::vector<Point3> points = {Point3(0.0, 0.0, 2.0)};
  const auto scene = aggregate_reference(points, {make_flat_ref(d, 0.0)});
  REQUIRE(scene.size() == 1);
  REQUIRE(scene.features[0].has_level(0));
  const auto& lf = *scene.features[0].per_level[0];
  CHECK((lf.descriptor - d.normalized()).norm() < 1e-12);
  CHECK(lf.confidence == doctest::Approx(1.0));
}

TEST_CASE("aggregate_reference identical descriptors ignore confidences") {
  Eigen::VectorXd d(3);
  d << 0.0, 3.0, 4.0;
  const std::vector<Point3> points = {Point3(0.0, 0.0, 2.0)};
  const auto scene = aggregate_reference(
      points, {make_flat_ref(d, 0.2), make_flat_ref(d, 5.0)});
  const auto& lf = *scene.features[0].per_level[0];
  CHECK((lf.descriptor - d.normalized()).norm() < 1e-12);
  // Aggregated confidence is the max over observations.
  CHECK(lf.confidence == doctest::Approx(1.0 / 1.2).epsilon(1e-12));
}

TEST_CASE("aggregate_reference hand-computed weighted mean") {
  Eigen::VectorXd d1(2), d2(2), d3(2);
  d1 << 1.0, 0.0;
  d2 << 0.0, 1.0;
  d3 << -1.0, 0.0;
  // Confidences 0.5, 0.5, ~0 via uncertainties 1, 1, 1e12.
  const std::vector<Point3> points = {Point3(0.0, 0.0, 2.0)};
  const auto scene = aggregate_reference(
      points,
      {make_flat_ref(d1, 1.0), make_flat_ref(d2, 1.0), make_flat_ref(d3, 1e12)});
  const auto& lf = *scene.features[0].per_level[0];
  // Weighted mean of the first two, renormalized: (1,1)/sqrt(2).
  const Eigen::Vector2d expect = Eigen::Vector2d(1.0, 1.0).normalized();
  CHECK((lf.descriptor - expect).norm() < 1e-6);
  CHECK(lf.confidence == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("aggregate_reference drops invisible points, throws on empty") {
  Eigen::VectorXd d(2);
  d << 1.0, 1.0;
  const auto ref = make_flat_ref(d, 0.0);
  const std::vector<Point3> points = {Point3(0.0, 0.0, 2.0),
                                      Point3(0.0, 0.0, -5.0)};
  const auto scene = aggregate_reference(points, {ref});
  CHECK(scene.size() == 1);
  CHECK_THROWS_AS(
      aggregate_reference({Point3(0.0, 0.0, -5.0)}, {ref}), EmptyModel);
}

TEST_CASE("aggregate_reference top_k limits references in list order") {
  Eigen::VectorXd d1(2), d2(2);
  d1 << 1.0, 0.0;
  d2 << 0.0, 1.0;
  const std::vector<Point3> points = {Point3(0.0, 0.0, 2.0)};
  const auto scene = aggregate_reference(
      points, {make_flat_ref(d1, 0.0), make_flat_ref(d2, 0.0)}, 1);
  const auto& lf = *scene.features[0].per_level[0];
  CHECK((lf.descriptor - Eigen::Vector2d(1.0, 0.0)).norm() < 1e-12);
}

TEST_SUITE_END();
