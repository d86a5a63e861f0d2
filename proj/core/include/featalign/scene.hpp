#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "featalign/features.hpp"
#include "featalign/geometry.hpp"

namespace featalign {

enum class FieldType { kRandomSmooth, kQuadraticBasin, kBimodal };
enum class UncertaintyPattern { kZero, kRandom, kOccluderPatch };

struct PyramidSpec {
  std::vector<double> strides = {16.0, 4.0, 1.0};  // coarse to fine
  std::vector<int> dims = {16, 16, 8};

  int num_levels() const { return static_cast<int>(strides.size()); }
};

struct SceneSpec {
  int n_points = 200;
  double extent = 4.0;  // side of the visible plane patch, world units
  FieldType field = FieldType::kRandomSmooth;
  UncertaintyPattern uncertainty = UncertaintyPattern::kZero;
  PyramidSpec pyramid;
  Camera camera{256.0, 256.0, 127.5, 127.5, 256, 256};
  double depth = 4.0;  // distance of the ground-truth camera to the plane
  std::uint64_t seed = 0;
  int n_refs = 3;
  double ref_rot_jitter = 0.03;    // radians
  double ref_trans_jitter = 0.08;  // world units
  int n_sinusoids = 24;            // per channel, capped at 32
  double bandwidth = 0.1;          // cycles per cell at each level
  double feature_noise = 0.0;      // additive query noise before normalization
  std::vector<double> scales = {1.0};  // query image scales to render
};

/// One analytic scalar field on the world plane z = 0: a linear term plus a
/// band-limited sum of sinusoids.
struct ChannelField {
  struct Wave {
    double kx = 0.0, ky = 0.0, amp = 0.0, phase = 0.0;
  };
  double ax = 0.0, ay = 0.0, b = 0.0;
  std::vector<Wave> waves;

  double eval(double X, double Y) const {
    double v = ax * X + ay * Y + b;
    for (const auto& w : waves) v += w.amp * std::sin(w.kx * X + w.ky * Y + w.phase);
    return v;
  }
};

/// Analytic world model shared by all rendered views of a scene.
struct WorldFields {
  std::vector<std::vector<ChannelField>> features;  // [level][channel]
  std::vector<ChannelField> uncertainty;            // [level]
};

struct GeneratedScene {
  SceneSpec spec;
  WorldFields fields;
  Camera camera;
  Pose gt;                             // ground-truth query pose
  std::vector<Point3> raw_points;      // before aggregation
  std::vector<ReferenceView> refs;
  ScenePoints scene;                   // aggregated model
  std::vector<FeaturePyramid> query;   // one pyramid per spec.scales entry
  double diameter = 0.0;               // scene diameter, for error thresholds
};

/// Intersect the ray through full-resolution pixel p of the given view with
/// the world plane z = 0.
Vec2 pixel_to_plane(const Pose& pose, const Camera& cam, const Vec2& p);

/// Render the world fields as seen from the given pose into a normalized
/// feature pyramid (camera already at the desired image scale).
FeaturePyramid render_view(const WorldFields& fields, const Pose& pose,
                           const Camera& cam, const PyramidSpec& pyramid,
                           double noise = 0.0, std::uint64_t noise_seed = 0);

/// Deterministic synthetic scene: world-anchored analytic feature fields, a
/// planar 3D point set sampled in the query frustum, jittered posed reference
/// views, and the query pyramid(s) rendered at the ground-truth pose.
GeneratedScene generate(const SceneSpec& spec);

struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;  // full-res pixels, half-open

  bool empty() const { return x1 <= x0 || y1 <= y0; }
  bool contains(double x, double y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
};

/// Replace features inside rect (full-resolution pixels) by seeded unit-norm
/// noise and set the uncertainty there to uncertainty_value, at every level
/// covering the rect.
FeaturePyramid render_occluder(FeaturePyramid pyramid, const Rect& rect,
                               double uncertainty_value, std::uint64_t seed = 1234);

}  // namespace featalign
