#include "featalign/training_data.hpp"

#include <random>

namespace featalign {

SceneSpec fitting_scene_spec() {
  SceneSpec spec;
  spec.camera = Camera{96.0, 96.0, 47.5, 47.5, 96, 96};
  spec.depth = 4.0;
  spec.extent = 4.0;
  spec.n_points = 60;
  spec.pyramid.strides = {8.0, 1.0};
  spec.pyramid.dims = {6, 4};
  spec.n_sinusoids = 12;
  spec.n_refs = 2;
  spec.feature_noise = 0.05;
  spec.scales = {1.0};
  return spec;
}

SolverConfig fitting_config() {
  SolverConfig config;
  config.max_iters_per_level = 15;
  config.image_pyramid_scales = {1.0};
  return config;
}

std::vector<TrainSample> make_train_samples(const SceneSpec& base, int n,
                                            std::uint64_t seed, bool planar,
                                            double rot_max, double trans_max) {
  std::vector<TrainSample> samples;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    SceneSpec spec = base;
    spec.seed = rng();
    const auto gen = generate(spec);
    TrainSample sample;
    sample.scene = gen.scene;
    sample.query = gen.query;
    sample.camera = gen.camera;
    sample.gt = gen.gt;
    // Magnitude ramps over the set so easy and hard initializations are both
    // represented.
    const double factor = n > 1 ? (0.2 + 0.8 * double(i) / double(n - 1)) : 1.0;
    Vec6 delta = Vec6::Zero();
    if (planar) {
      const double angle = 2.0 * 3.14159265358979323846 * uni(rng);
      delta[0] = std::cos(angle) * factor * trans_max;
      delta[2] = std::sin(angle) * factor * trans_max;
    } else {
      Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
      Vec3 axis(gauss(rng), gauss(rng), gauss(rng));
      if (dir.norm() > 0) dir.normalize();
      if (axis.norm() > 0) axis.normalize();
      delta.head<3>() = dir * factor * trans_max;
      delta.tail<3>() = axis * factor * rot_max;
    }
    sample.init = left_update(sample.gt, delta);
    samples.push_back(std::move(sample));
  }
  return samples;
}

}  // namespace featalign
