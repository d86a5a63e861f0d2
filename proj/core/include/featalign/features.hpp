#pragma once

#include <Eigen/Core>
#include <cmath>
#include <optional>
#include <vector>

#include "featalign/errors.hpp"
#include "featalign/geometry.hpp"

namespace featalign {

// Lookups within this many full-resolution pixels of the image border are
// invalid.
inline constexpr double kBorderMargin = 2.0;

/// One level of a feature pyramid: a WxHxD feature grid with a WxH
/// uncertainty grid. Cell (i, j) is centered at full-resolution pixel
/// ((i + 0.5) * stride - 0.5, (j + 0.5) * stride - 0.5).
struct FeatureLevel {
  int width = 0;
  int height = 0;
  int channels = 0;
  double stride = 1.0;
  std::vector<double> features;     // row-major, channel-last
  std::vector<double> uncertainty;  // row-major

  FeatureLevel() = default;
  FeatureLevel(int w, int h, int d, double s)
      : width(w),
        height(h),
        channels(d),
        stride(s),
        features(static_cast<size_t>(w) * h * d, 0.0),
        uncertainty(static_cast<size_t>(w) * h, 0.0) {}

  double& at(int x, int y, int c) {
    return features[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c) const {
    return features[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double& unc_at(int x, int y) { return uncertainty[static_cast<size_t>(y) * width + x]; }
  double unc_at(int x, int y) const {
    return uncertainty[static_cast<size_t>(y) * width + x];
  }

  double full_width() const { return width * stride; }
  double full_height() const { return height * stride; }
};

/// Levels ordered coarse to fine (strides strictly decreasing).
struct FeaturePyramid {
  std::vector<FeatureLevel> levels;

  int num_levels() const { return static_cast<int>(levels.size()); }
};

/// L2-normalize every cell's feature vector; cells with norm below 1e-12 are
/// left as zero.
FeatureLevel normalize_channels(FeatureLevel level);
void normalize_channels_inplace(FeatureLevel& level);
void normalize_channels_inplace(FeaturePyramid& pyramid);

template <class S>
S confidence_from_uncertainty(const S& u) {
  return S(1) / (S(1) + u);
}

template <class S>
struct InterpResult {
  Eigen::Matrix<S, Eigen::Dynamic, 1> feature;
  Eigen::Matrix<S, Eigen::Dynamic, 2> grad;  // d(feature)/d(full-res pixel)
  S uncertainty{0};
  bool valid = false;
  // True when the lookup sits within 1e-6 cells of a bilinear cell boundary,
  // where the spatial gradient is one-sided.
  bool near_cell_boundary = false;
};

/// Bilinear lookup of features and uncertainty at full-resolution pixel p,
/// with the exact spatial derivative of the bilinear surface. Invalid when p
/// lies outside the image or within kBorderMargin pixels of any border.
template <class S>
InterpResult<S> interpolate(const FeatureLevel& level, const Vec2T<S>& p) {
  InterpResult<S> out;
  out.feature.setZero(level.channels);
  out.grad.setZero(level.channels, 2);
  const double px = value(p.x());
  const double py = value(p.y());
  const double xmax = level.full_width() - 1.0 - kBorderMargin;
  const double ymax = level.full_height() - 1.0 - kBorderMargin;
  if (!(px >= kBorderMargin && px <= xmax && py >= kBorderMargin && py <= ymax)) {
    return out;
  }
  const S inv_s = S(1.0 / level.stride);
  const S gx = (p.x() + S(0.5)) * inv_s - S(0.5);
  const S gy = (p.y() + S(0.5)) * inv_s - S(0.5);
  const int ix = static_cast<int>(std::floor(value(gx)));
  const int iy = static_cast<int>(std::floor(value(gy)));
  const S fx = gx - S(static_cast<double>(ix));
  const S fy = gy - S(static_cast<double>(iy));

  const auto clampi = [](int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); };
  const int x0 = clampi(ix, level.width);
  const int x1 = clampi(ix + 1, level.width);
  const int y0 = clampi(iy, level.height);
  const int y1 = clampi(iy + 1, level.height);

  const S w00 = (S(1) - fx) * (S(1) - fy);
  const S w10 = fx * (S(1) - fy);
  const S w01 = (S(1) - fx) * fy;
  const S w11 = fx * fy;

  for (int c = 0; c < level.channels; ++c) {
    const double f00 = level.at(x0, y0, c);
    const double f10 = level.at(x1, y0, c);
    const double f01 = level.at(x0, y1, c);
    const double f11 = level.at(x1, y1, c);
    out.feature[c] = w00 * S(f00) + w10 * S(f10) + w01 * S(f01) + w11 * S(f11);
    // d/dgx, d/dgy of the bilinear surface, rescaled to full-res pixels.
    out.grad(c, 0) =
        ((S(1) - fy) * S(f10 - f00) + fy * S(f11 - f01)) * inv_s;
    out.grad(c, 1) =
        ((S(1) - fx) * S(f01 - f00) + fx * S(f11 - f10)) * inv_s;
  }
  out.uncertainty = w00 * S(level.unc_at(x0, y0)) + w10 * S(level.unc_at(x1, y0)) +
                    w01 * S(level.unc_at(x0, y1)) + w11 * S(level.unc_at(x1, y1));
  const double fxv = value(fx);
  const double fyv = value(fy);
  out.near_cell_boundary = fxv < 1e-6 || fxv > 1.0 - 1e-6 || fyv < 1e-6 ||
                           fyv > 1.0 - 1e-6;
  out.valid = true;
  return out;
}

/// Per-level aggregated reference descriptor for one 3D point. Levels with no
/// valid observation are absent.
struct PointFeatures {
  struct LevelFeature {
    Eigen::VectorXd descriptor;  // unit norm
    double confidence = 0.0;     // in [0, 1], max over observations
  };
  std::vector<std::optional<LevelFeature>> per_level;

  bool has_level(int l) const {
    return l < static_cast<int>(per_level.size()) && per_level[l].has_value();
  }
};

/// The 3D model: points plus their aggregated reference features.
struct ScenePoints {
  std::vector<Point3> points;
  std::vector<PointFeatures> features;

  size_t size() const { return points.size(); }
};

/// A posed reference view with its (normalized) feature pyramid.
struct ReferenceView {
  FeaturePyramid pyramid;
  Pose pose;
  Camera camera;
};

/// Confidence-weighted aggregation of reference descriptors per 3D point and
/// level. Uses at most top_k references (in list order). Points with no valid
/// observation at any level are omitted; throws EmptyModel if none survive.
ScenePoints aggregate_reference(const std::vector<Point3>& points,
                                const std::vector<ReferenceView>& refs,
                                int top_k = -1);

}  // namespace featalign
