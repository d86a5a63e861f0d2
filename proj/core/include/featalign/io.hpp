#pragma once

#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "featalign/analysis.hpp"
#include "featalign/features.hpp"
#include "featalign/geometry.hpp"
#include "featalign/initpose.hpp"
#include "featalign/learning.hpp"
#include "featalign/solver.hpp"

namespace featalign {

nlohmann::json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const nlohmann::json& j);

// Pose text form: {"q": [w, x, y, z], "t": [x, y, z]}. The quaternion is
// normalized on load and rejected when its norm deviates from 1 by > 1e-3.
nlohmann::json pose_to_json(const Pose& pose);
Pose pose_from_json(const nlohmann::json& j);

nlohmann::json camera_to_json(const Camera& cam);
Camera camera_from_json(const nlohmann::json& j);

nlohmann::json config_to_json(const SolverConfig& config);
SolverConfig config_from_json(const nlohmann::json& j);

// {"lambda_min": -6, "lambda_max": 5, "theta": [[6 reals] per level]}
nlohmann::json damping_to_json(const DampingParams& params);
DampingParams damping_from_json(const nlohmann::json& j);

// Retrieval prior: JSON list of {"pose": ..., "weight": ...}.
nlohmann::json prior_to_json(const std::vector<WeightedPose>& prior);
std::vector<WeightedPose> prior_from_json(const nlohmann::json& j);

// FMAP little-endian binary blob: magic "FMAP", u32 version=1, u32 L, then
// per level u32 W, H, D, f32 stride, W*H*D f32 features (row-major,
// channel-last), W*H f32 uncertainties.
void write_fmap(const std::filesystem::path& path, const FeaturePyramid& pyramid);
FeaturePyramid read_fmap(const std::filesystem::path& path);

// Point list as consecutive f32 (x, y, z) triplets.
void write_points(const std::filesystem::path& path, const std::vector<Point3>& points);
std::vector<Point3> read_points(const std::filesystem::path& path);

/// The 3D map side of a scene: camera, posed reference pyramids, points.
struct MapBundle {
  Camera camera;
  std::vector<ReferenceView> refs;
  std::vector<Point3> points;
  std::optional<Pose> gt_pose;
  double diameter = 0.0;
};

void save_map(const std::filesystem::path& manifest_path, const MapBundle& map);
MapBundle load_map(const std::filesystem::path& manifest_path);

/// Query feature maps, one pyramid per image scale.
struct QueryBundle {
  Camera camera;
  std::vector<double> scales;
  std::vector<FeaturePyramid> pyramids;
};

void save_query(const std::filesystem::path& manifest_path, const QueryBundle& query);
QueryBundle load_query(const std::filesystem::path& manifest_path);

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& result);
void write_history_csv(const std::filesystem::path& path,
                       const std::vector<FitHistoryEntry>& history);

// P5 grayscale, score * 255.
void write_pgm(const std::filesystem::path& path,
               const BasinRaster::LevelScores& raster);

// FNV-1a 64-bit content digest, hex encoded.
std::string file_digest(const std::filesystem::path& path);

}  // namespace featalign
