#include "featalign/scene.hpp"

#include <cmath>

#include "featalign/errors.hpp"

namespace featalign {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<ChannelField> make_level_fields(const SceneSpec& spec, int level,
                                            std::mt19937_64& rng) {
  const int d = spec.pyramid.dims[level];
  const double stride = spec.pyramid.strides[level];
  // World-units size of one cell at image scale 1; caps the field bandwidth
  // so bilinear sampling error stays within the regression bound.
  const double cell = stride * spec.depth / spec.camera.fx;
  const double k_max = 2.0 * kPi * spec.bandwidth / cell;
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  std::vector<ChannelField> fields(d);
  const int n_waves = std::min(spec.n_sinusoids, 32);
  const bool finest = level == spec.pyramid.num_levels() - 1;

  switch (spec.field) {
    case FieldType::kQuadraticBasin:
      // Smooth injective map of the plane; after channel normalization the
      // residual vanishes only at the true location, giving one wide basin.
      fields[0].ax = 1.0 / spec.extent;
      if (d > 1) fields[1].ay = 1.0 / spec.extent;
      if (d > 2) fields[2].b = 1.0;
      break;
    case FieldType::kBimodal:
      if (finest) {
        // Periodic in X with period extent/4: the finest level alone has
        // indistinguishable alias minima one period apart. A weak Y ramp
        // keeps the remaining directions observable.
        const double period = spec.extent / 4.0;
        for (int c = 0; c < d; ++c) {
          auto& f = fields[c];
          f.waves.push_back({2.0 * kPi / period, 0.0, 1.0, 0.7 * c});
          f.ay = 0.1 / spec.extent;
          f.b = 0.3;
        }
        break;
      }
      [[fallthrough]];
    case FieldType::kRandomSmooth:
      for (int c = 0; c < d; ++c) {
        auto& f = fields[c];
        f.b = 0.2 * (uni(rng) - 0.5);
        for (int m = 0; m < n_waves; ++m) {
          const double angle = 2.0 * kPi * uni(rng);
          const double mag = (0.2 + 0.8 * uni(rng)) * k_max;
          const double amp = (0.5 + 0.5 * uni(rng)) / std::sqrt(double(n_waves));
          const double phase = 2.0 * kPi * uni(rng);
          f.waves.push_back({mag * std::cos(angle), mag * std::sin(angle), amp, phase});
        }
      }
      break;
  }
  return fields;
}

ChannelField make_uncertainty_field(const SceneSpec& spec, int level,
                                    std::mt19937_64& rng) {
  ChannelField f;
  if (spec.uncertainty != UncertaintyPattern::kRandom) return f;  // zero
  const double stride = spec.pyramid.strides[level];
  const double cell = stride * spec.depth / spec.camera.fx;
  const double k_max = 2.0 * kPi * spec.bandwidth / cell;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  f.b = 1.0;
  for (int m = 0; m < 8; ++m) {
    const double angle = 2.0 * kPi * uni(rng);
    const double mag = (0.2 + 0.8 * uni(rng)) * k_max;
    f.waves.push_back({mag * std::cos(angle), mag * std::sin(angle), 0.25, 2.0 * kPi * uni(rng)});
  }
  return f;
}

}  // namespace

Vec2 pixel_to_plane(const Pose& pose, const Camera& cam, const Vec2& p) {
  const Vec3 dir_cam((p.x() - cam.cx) / cam.fx, (p.y() - cam.cy) / cam.fy, 1.0);
  const Vec3 origin = -(pose.R.transpose() * pose.t);
  const Vec3 dir = pose.R.transpose() * dir_cam;
  const double s = -origin.z() / dir.z();
  return {origin.x() + s * dir.x(), origin.y() + s * dir.y()};
}

FeaturePyramid render_view(const WorldFields& fields, const Pose& pose,
                           const Camera& cam, const PyramidSpec& pyramid,
                           double noise, std::uint64_t noise_seed) {
  FeaturePyramid out;
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int l = 0; l < pyramid.num_levels(); ++l) {
    const double stride = pyramid.strides[l];
    const int w = static_cast<int>(std::ceil(cam.width / stride));
    const int h = static_cast<int>(std::ceil(cam.height / stride));
    FeatureLevel level(w, h, pyramid.dims[l], stride);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Vec2 p((x + 0.5) * stride - 0.5, (y + 0.5) * stride - 0.5);
        const Vec2 XY = pixel_to_plane(pose, cam, p);
        for (int c = 0; c < level.channels; ++c) {
          double v = fields.features[l][c].eval(XY.x(), XY.y());
          if (noise > 0.0) v += noise * gauss(rng);
          level.at(x, y, c) = v;
        }
        level.unc_at(x, y) = std::max(0.0, fields.uncertainty[l].eval(XY.x(), XY.y()));
      }
    }
    normalize_channels_inplace(level);
    out.levels.push_back(std::move(level));
  }
  return out;
}

GeneratedScene generate(const SceneSpec& spec) {
  if (spec.n_points < 6) throw InfeasibleSpec("need at least 6 points");
  if (spec.extent <= 0.0) throw InfeasibleSpec("extent must be positive");
  if (spec.pyramid.strides.size() != spec.pyramid.dims.size() ||
      spec.pyramid.strides.empty())
    throw InfeasibleSpec("pyramid strides/dims mismatch");

  GeneratedScene out;
  out.spec = spec;
  out.camera = spec.camera;
  out.diameter = spec.extent;
  // World plane is z = 0; the ground-truth camera sits at (0, 0, -depth)
  // looking along +z with identity rotation.
  out.gt.R = Mat3::Identity();
  out.gt.t = Vec3(0.0, 0.0, spec.depth);

  std::mt19937_64 rng(spec.seed);
  const int n_levels = spec.pyramid.num_levels();
  for (int l = 0; l < n_levels; ++l)
    out.fields.features.push_back(make_level_fields(spec, l, rng));
  for (int l = 0; l < n_levels; ++l)
    out.fields.uncertainty.push_back(make_uncertainty_field(spec, l, rng));

  // Reference poses jittered around the ground truth.
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int r = 0; r < spec.n_refs; ++r) {
    Vec6 delta;
    Vec3 w(gauss(rng), gauss(rng), gauss(rng));
    Vec3 v(gauss(rng), gauss(rng), gauss(rng));
    if (w.norm() > 0) w = w.normalized() * spec.ref_rot_jitter * uni(rng);
    if (v.norm() > 0) v = v.normalized() * spec.ref_trans_jitter * uni(rng);
    delta << v, w;
    ReferenceView ref;
    ref.pose = left_update(out.gt, delta);
    ref.camera = spec.camera;
    ref.pyramid = render_view(out.fields, ref.pose, ref.camera, spec.pyramid);
    out.refs.push_back(std::move(ref));
  }

  // Points on the world plane, sampled uniformly over the query view.
  const double margin = 8.0;
  for (int i = 0; i < spec.n_points; ++i) {
    const double px = margin + uni(rng) * (spec.camera.width - 1.0 - 2.0 * margin);
    const double py = margin + uni(rng) * (spec.camera.height - 1.0 - 2.0 * margin);
    const Vec2 XY = pixel_to_plane(out.gt, spec.camera, Vec2(px, py));
    out.raw_points.emplace_back(XY.x(), XY.y(), 0.0);
  }

  // Query pyramids at the ground-truth pose, one per image scale.
  for (size_t si = 0; si < spec.scales.size(); ++si) {
    const Camera cam_s = scale_camera(spec.camera, spec.scales[si]);
    out.query.push_back(render_view(out.fields, out.gt, cam_s, spec.pyramid,
                                    spec.feature_noise, spec.seed * 131 + si + 1));
  }

  try {
    out.scene = aggregate_reference(out.raw_points, out.refs);
  } catch (const EmptyModel&) {
    throw InfeasibleSpec("no point visible in any reference view");
  }
  return out;
}

FeaturePyramid render_occluder(FeaturePyramid pyramid, const Rect& rect,
                               double uncertainty_value, std::uint64_t seed) {
  if (rect.empty()) return pyramid;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& level : pyramid.levels) {
    for (int y = 0; y < level.height; ++y) {
      for (int x = 0; x < level.width; ++x) {
        const double px = (x + 0.5) * level.stride - 0.5;
        const double py = (y + 0.5) * level.stride - 0.5;
        if (!rect.contains(px, py)) continue;
        double n2 = 0.0;
        for (int c = 0; c < level.channels; ++c) {
          const double v = gauss(rng);
          level.at(x, y, c) = v;
          n2 += v * v;
        }
        const double n = std::sqrt(n2);
        if (n > 1e-12)
          for (int c = 0; c < level.channels; ++c) level.at(x, y, c) /= n;
        level.unc_at(x, y) = uncertainty_value;
      }
    }
  }
  return pyramid;
}

}  // namespace featalign
