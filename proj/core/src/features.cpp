#include "featalign/features.hpp"

#include <cmath>

namespace featalign {

void normalize_channels_inplace(FeatureLevel& level) {
  for (int y = 0; y < level.height; ++y) {
    for (int x = 0; x < level.width; ++x) {
      double n2 = 0.0;
      for (int c = 0; c < level.channels; ++c) {
        const double v = level.at(x, y, c);
        n2 += v * v;
      }
      const double n = std::sqrt(n2);
      if (n < 1e-12) continue;
      for (int c = 0; c < level.channels; ++c) level.at(x, y, c) /= n;
    }
  }
}

FeatureLevel normalize_channels(FeatureLevel level) {
  normalize_channels_inplace(level);
  return level;
}

void normalize_channels_inplace(FeaturePyramid& pyramid) {
  for (auto& level : pyramid.levels) normalize_channels_inplace(level);
}

ScenePoints aggregate_reference(const std::vector<Point3>& points,
                                const std::vector<ReferenceView>& refs,
                                int top_k) {
  const int n_refs = static_cast<int>(refs.size());
  const int k = (top_k < 0 || top_k > n_refs) ? n_refs : top_k;
  const int n_levels = refs.empty() ? 0 : refs.front().pyramid.num_levels();

  ScenePoints out;
  for (const auto& P : points) {
    PointFeatures pf;
    pf.per_level.resize(n_levels);
    bool any = false;
    for (int l = 0; l < n_levels; ++l) {
      Eigen::VectorXd acc;
      double weight_sum = 0.0;
      double conf = 0.0;
      for (int r = 0; r < k; ++r) {
        const auto& ref = refs[r];
        const Vec3 Pc = transform(ref.pose, P);
        const auto p = project(ref.camera, Pc);
        if (!p) continue;
        const auto interp = interpolate<double>(ref.pyramid.levels[l], *p);
        if (!interp.valid) continue;
        const double u = confidence_from_uncertainty(interp.uncertainty);
        if (acc.size() == 0) acc = Eigen::VectorXd::Zero(interp.feature.size());
        acc += u * interp.feature;
        weight_sum += u;
        conf = std::max(conf, u);
      }
      if (weight_sum <= 0.0) continue;
      acc /= weight_sum;
      const double n = acc.norm();
      if (n < 1e-12) continue;
      pf.per_level[l] = PointFeatures::LevelFeature{acc / n, conf};
      any = true;
    }
    if (any) {
      out.points.push_back(P);
      out.features.push_back(std::move(pf));
    }
  }
  if (out.points.empty()) throw EmptyModel();
  return out;
}

}  // namespace featalign
