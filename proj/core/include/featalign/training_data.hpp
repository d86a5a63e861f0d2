#pragma once

#include <cstdint>
#include <vector>

#include "featalign/learning.hpp"
#include "featalign/scene.hpp"

namespace featalign {

/// Desk-scale synthetic training episodes for damping fitting. Each sample
/// gets its own seeded scene from `base` and an initial pose perturbed up to
/// (rot_max, trans_max); magnitudes ramp across the set. With planar = true
/// the initial offset is restricted to x/z translation, emulating a
/// car-mounted motion distribution.
std::vector<TrainSample> make_train_samples(const SceneSpec& base, int n,
                                            std::uint64_t seed, bool planar,
                                            double rot_max, double trans_max);

/// Small scene spec used for fitting runs (two levels, few channels).
SceneSpec fitting_scene_spec();

/// Solver configuration used while fitting (truncated iteration budget,
/// single image scale).
SolverConfig fitting_config();

}  // namespace featalign
