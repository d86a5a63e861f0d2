#include "featalign/io.hpp"

#include <Eigen/Geometry>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>

#include "featalign/errors.hpp"

namespace featalign {

using nlohmann::json;
namespace fs = std::filesystem;

json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": parse error at byte " +
                     std::to_string(e.byte) + ": " + e.what());
  }
}

void save_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json pose_to_json(const Pose& pose) {
  const Eigen::Quaterniond q(pose.R);
  return json{{"q", {q.w(), q.x(), q.y(), q.z()}},
              {"t", {pose.t.x(), pose.t.y(), pose.t.z()}}};
}

Pose pose_from_json(const json& j) {
  try {
    const auto& qj = j.at("q");
    const auto& tj = j.at("t");
    if (qj.size() != 4 || tj.size() != 3) throw InputError("pose: bad q/t size");
    Eigen::Quaterniond q(qj[0].get<double>(), qj[1].get<double>(),
                         qj[2].get<double>(), qj[3].get<double>());
    if (std::abs(q.norm() - 1.0) > 1e-3)
      throw InputError("pose: quaternion norm deviates from 1 by more than 1e-3");
    q.normalize();
    Pose out;
    out.R = q.toRotationMatrix();
    out.t = Vec3(tj[0].get<double>(), tj[1].get<double>(), tj[2].get<double>());
    return out;
  } catch (const json::exception& e) {
    throw InputError(std::string("pose: ") + e.what());
  }
}

json camera_to_json(const Camera& cam) {
  return json{{"fx", cam.fx},       {"fy", cam.fy},     {"cx", cam.cx},
              {"cy", cam.cy},       {"width", cam.width}, {"height", cam.height}};
}

Camera camera_from_json(const json& j) {
  try {
    Camera cam;
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    if (cam.fx <= 0 || cam.fy <= 0 || cam.width < 1 || cam.height < 1)
      throw InputError("camera: invalid intrinsics");
    return cam;
  } catch (const json::exception& e) {
    throw InputError(std::string("camera: ") + e.what());
  }
}

json config_to_json(const SolverConfig& config) {
  return json{{"max_iters_per_level", config.max_iters_per_level},
              {"cost_scale", config.cost_scale},
              {"step_tol", config.step_tol},
              {"grad_tol", config.grad_tol},
              {"image_pyramid_scales", config.image_pyramid_scales}};
}

SolverConfig config_from_json(const json& j) {
  try {
    SolverConfig config;
    config.max_iters_per_level = j.value("max_iters_per_level", config.max_iters_per_level);
    config.cost_scale = j.value("cost_scale", config.cost_scale);
    config.step_tol = j.value("step_tol", config.step_tol);
    config.grad_tol = j.value("grad_tol", config.grad_tol);
    if (j.contains("image_pyramid_scales"))
      config.image_pyramid_scales = j.at("image_pyramid_scales").get<std::vector<double>>();
    if (config.max_iters_per_level < 1 || config.step_tol <= 0 || config.grad_tol <= 0)
      throw InputError("config: invalid values");
    return config;
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
}

json damping_to_json(const DampingParams& params) {
  json theta = json::array();
  for (const auto& th : params.theta) {
    json row = json::array();
    for (int i = 0; i < 6; ++i) row.push_back(th[i]);
    theta.push_back(row);
  }
  return json{{"lambda_min", params.lambda_min},
              {"lambda_max", params.lambda_max},
              {"theta", theta}};
}

DampingParams damping_from_json(const json& j) {
  try {
    DampingParams params;
    params.lambda_min = j.value("lambda_min", params.lambda_min);
    params.lambda_max = j.value("lambda_max", params.lambda_max);
    params.theta.clear();
    for (const auto& row : j.at("theta")) {
      if (row.size() != 6) throw InputError("damping: theta rows must have 6 entries");
      Vec6 th;
      for (int i = 0; i < 6; ++i) th[i] = row[i].get<double>();
      params.theta.push_back(th);
    }
    return params;
  } catch (const json::exception& e) {
    throw InputError(std::string("damping: ") + e.what());
  }
}

json prior_to_json(const std::vector<WeightedPose>& prior) {
  json out = json::array();
  for (const auto& wp : prior)
    out.push_back(json{{"pose", pose_to_json(wp.pose)}, {"weight", wp.weight}});
  return out;
}

std::vector<WeightedPose> prior_from_json(const json& j) {
  try {
    std::vector<WeightedPose> out;
    for (const auto& e : j)
      out.push_back({pose_from_json(e.at("pose")), e.at("weight").get<double>()});
    return out;
  } catch (const json::exception& e) {
    throw InputError(std::string("prior: ") + e.what());
  }
}

namespace {

template <class T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::ifstream& in, const fs::path& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in)
    throw InputError(path.string() + ": truncated at byte " +
                     std::to_string(static_cast<long long>(in.tellg())));
  return v;
}

}  // namespace

void write_fmap(const fs::path& path, const FeaturePyramid& pyramid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write("FMAP", 4);
  write_raw<std::uint32_t>(out, 1);
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(pyramid.levels.size()));
  for (const auto& level : pyramid.levels) {
    write_raw<std::uint32_t>(out, level.width);
    write_raw<std::uint32_t>(out, level.height);
    write_raw<std::uint32_t>(out, level.channels);
    write_raw<float>(out, static_cast<float>(level.stride));
    for (const double v : level.features) write_raw<float>(out, static_cast<float>(v));
    for (const double v : level.uncertainty) write_raw<float>(out, static_cast<float>(v));
  }
}

FeaturePyramid read_fmap(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "FMAP")
    throw InputError(path.string() + ": bad magic at byte 0");
  const auto version = read_raw<std::uint32_t>(in, path);
  if (version != 1)
    throw InputError(path.string() + ": unsupported FMAP version at byte 4");
  const auto n_levels = read_raw<std::uint32_t>(in, path);
  FeaturePyramid pyramid;
  double prev_stride = 0.0;
  for (std::uint32_t l = 0; l < n_levels; ++l) {
    const auto w = read_raw<std::uint32_t>(in, path);
    const auto h = read_raw<std::uint32_t>(in, path);
    const auto d = read_raw<std::uint32_t>(in, path);
    const auto stride = static_cast<double>(read_raw<float>(in, path));
    if (w == 0 || h == 0 || d == 0 || stride <= 0.0)
      throw InputError(path.string() + ": invalid level header (level " +
                       std::to_string(l) + ")");
    if (l > 0 && stride >= prev_stride)
      throw InputError(path.string() + ": strides must strictly decrease");
    prev_stride = stride;
    FeatureLevel level(int(w), int(h), int(d), stride);
    for (auto& v : level.features) v = read_raw<float>(in, path);
    for (auto& v : level.uncertainty) {
      v = read_raw<float>(in, path);
      if (v < 0.0) throw InputError(path.string() + ": negative uncertainty");
    }
    pyramid.levels.push_back(std::move(level));
  }
  return pyramid;
}

void write_points(const fs::path& path, const std::vector<Point3>& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& P : points)
    for (int i = 0; i < 3; ++i) write_raw<float>(out, static_cast<float>(P[i]));
}

std::vector<Point3> read_points(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes % 12 != 0)
    throw InputError(path.string() + ": size is not a multiple of 12 bytes");
  std::vector<Point3> points(bytes / 12);
  for (auto& P : points)
    for (int i = 0; i < 3; ++i) P[i] = read_raw<float>(in, path);
  return points;
}

void save_map(const fs::path& manifest_path, const MapBundle& map) {
  const fs::path dir = manifest_path.parent_path();
  const std::string stem = manifest_path.stem().string();
  json refs = json::array();
  for (size_t i = 0; i < map.refs.size(); ++i) {
    const std::string blob = stem + "_ref" + std::to_string(i) + ".fmap";
    write_fmap(dir / blob, map.refs[i].pyramid);
    refs.push_back(json{{"fmap", blob},
                        {"pose", pose_to_json(map.refs[i].pose)},
                        {"camera", camera_to_json(map.refs[i].camera)}});
  }
  const std::string points_blob = stem + "_points.bin";
  write_points(dir / points_blob, map.points);
  json j{{"camera", camera_to_json(map.camera)},
         {"references", refs},
         {"points_file", points_blob},
         {"diameter", map.diameter}};
  if (map.gt_pose) j["gt_pose"] = pose_to_json(*map.gt_pose);
  save_json(manifest_path, j);
}

MapBundle load_map(const fs::path& manifest_path) {
  const json j = load_json(manifest_path);
  const fs::path dir = manifest_path.parent_path();
  try {
    MapBundle map;
    map.camera = camera_from_json(j.at("camera"));
    map.diameter = j.value("diameter", 0.0);
    if (j.contains("gt_pose")) map.gt_pose = pose_from_json(j.at("gt_pose"));
    map.points = read_points(dir / j.at("points_file").get<std::string>());
    for (const auto& r : j.at("references")) {
      ReferenceView ref;
      ref.pyramid = read_fmap(dir / r.at("fmap").get<std::string>());
      ref.pose = pose_from_json(r.at("pose"));
      ref.camera = r.contains("camera") ? camera_from_json(r.at("camera")) : map.camera;
      map.refs.push_back(std::move(ref));
    }
    return map;
  } catch (const json::exception& e) {
    throw InputError(manifest_path.string() + ": " + e.what());
  }
}

void save_query(const fs::path& manifest_path, const QueryBundle& query) {
  const fs::path dir = manifest_path.parent_path();
  const std::string stem = manifest_path.stem().string();
  json scales = json::array();
  for (size_t i = 0; i < query.scales.size(); ++i) {
    const std::string blob = stem + "_s" + std::to_string(i) + ".fmap";
    write_fmap(dir / blob, query.pyramids[i]);
    scales.push_back(json{{"scale", query.scales[i]}, {"fmap", blob}});
  }
  save_json(manifest_path,
            json{{"camera", camera_to_json(query.camera)}, {"scales", scales}});
}

QueryBundle load_query(const fs::path& manifest_path) {
  const json j = load_json(manifest_path);
  const fs::path dir = manifest_path.parent_path();
  try {
    QueryBundle query;
    query.camera = camera_from_json(j.at("camera"));
    for (const auto& s : j.at("scales")) {
      query.scales.push_back(s.at("scale").get<double>());
      query.pyramids.push_back(read_fmap(dir / s.at("fmap").get<std::string>()));
    }
    if (query.scales.empty())
      throw InputError(manifest_path.string() + ": no scales");
    return query;
  } catch (const json::exception& e) {
    throw InputError(manifest_path.string() + ": " + e.what());
  }
}

void write_sweep_csv(const fs::path& path, const SweepResult& result) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "bin_lo,bin_hi,trials,successes,rate\n";
  char buf[128];
  for (size_t b = 0; b + 1 < result.bin_edges.size(); ++b) {
    if (result.trials[b] > 0) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d,%d,%.17g\n",
                    result.bin_edges[b], result.bin_edges[b + 1], result.trials[b],
                    result.successes[b], result.rate(b));
    } else {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,0,0,\n", result.bin_edges[b],
                    result.bin_edges[b + 1]);
    }
    out << buf;
  }
}

void write_history_csv(const fs::path& path,
                       const std::vector<FitHistoryEntry>& history) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "step,train_loss,val_loss\n";
  char buf[128];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", e.step, e.train_loss,
                  e.val_loss);
    out << buf;
  }
}

void write_pgm(const fs::path& path, const BasinRaster::LevelScores& raster) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << "P5\n" << raster.width << " " << raster.height << "\n255\n";
  for (const double v : raster.scores) {
    const int byte = std::clamp(static_cast<int>(std::lround(v * 255.0)), 0, 255);
    out.put(static_cast<char>(byte));
  }
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
  return hex;
}

}  // namespace featalign
