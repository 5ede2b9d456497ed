// On-disk dataset format and loading.
//
// Layout under a dataset directory:
//   manifest.json
//   rgb/{view:05}.png     8-bit RGB
//   depth/{view:05}.png   16-bit grayscale, value = round(depth / depth_scale)
//   seg/{view:05}.png     8-bit grayscale, surface_class ids {0,1,2,3}
//   prior/{view:05}.png   optional, same encoding as depth, 0 = no prior
//
// Poses round-trip bit exactly through the JSON manifest (doubles are printed
// with a shortest-round-trip representation).

#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "png_io.hpp"
#include "scene.hpp"

namespace voxray {

struct missing_file_error : std::runtime_error {
  explicit missing_file_error(const std::string& path)
      : std::runtime_error("missing dataset file: " + path) {}
};
struct malformed_manifest_error : std::runtime_error {
  explicit malformed_manifest_error(const std::string& what)
      : std::runtime_error("malformed manifest: " + what) {}
};
struct non_rigid_pose_error : std::runtime_error {
  non_rigid_pose_error() : std::runtime_error("camera-to-world matrix is not rigid") {}
};
struct depth_overflow_error : std::runtime_error {
  depth_overflow_error() : std::runtime_error("depth exceeds 16-bit range at this depth_scale") {}
};

struct manifest_view {
  int id = 0;
  std::string split;  // "train" | "eval"
  std::string rgb_file, depth_file, seg_file;
  std::optional<std::string> prior_file;
  camera_intrinsics intrinsics;
  rigid_pose pose;
};

struct dataset_manifest {
  std::string scene;
  std::string units = "meters";
  double room_height = 0;
  double depth_scale = 0.001;  // meters per stored unit
  std::vector<manifest_view> views;
};

// A view as loaded for training/evaluation: ground truth plus optional prior.
struct dataset_view {
  view_record record;
  image<double> prior;  // empty if absent; 0 = no prior at that pixel
  std::string split;
  int id = 0;
};

inline image<uint16_t> quantize_depth(const image<double>& depth, double depth_scale) {
  image<uint16_t> out(depth.width(), depth.height());
  for (int y = 0; y < depth.height(); y++)
    for (int x = 0; x < depth.width(); x++) {
      double units = depth.at(x, y) / depth_scale;
      if (units > 65535.0) throw depth_overflow_error{};
      out.at(x, y) = uint16_t(std::lround(std::max(0.0, units)));
    }
  return out;
}

inline image<double> dequantize_depth(const image<uint16_t>& stored, double depth_scale) {
  image<double> out(stored.width(), stored.height());
  for (int y = 0; y < stored.height(); y++)
    for (int x = 0; x < stored.width(); x++) out.at(x, y) = stored.at(x, y) * depth_scale;
  return out;
}

namespace detail {

inline std::string view_file_name(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d.png", id);
  return buf;
}

inline nlohmann::ordered_json intrinsics_to_json(const camera_intrinsics& k) {
  return {{"width", k.width}, {"height", k.height}, {"fx", k.fx},
          {"fy", k.fy},       {"cx", k.cx},         {"cy", k.cy}};
}

inline camera_intrinsics intrinsics_from_json(const nlohmann::json& j) {
  camera_intrinsics k;
  k.width = j.at("width");
  k.height = j.at("height");
  k.fx = j.at("fx");
  k.fy = j.at("fy");
  k.cx = j.at("cx");
  k.cy = j.at("cy");
  return k;
}

inline nlohmann::ordered_json pose_to_json(const rigid_pose& p) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (int r = 0; r < 3; r++)
    for (int c = 0; c < 3; c++) rows.push_back(p.rotation.m[r][c]);
  // row-major 4x4, last row 0 0 0 1
  nlohmann::ordered_json m = nlohmann::ordered_json::array();
  for (int r = 0; r < 3; r++) {
    for (int c = 0; c < 3; c++) m.push_back(p.rotation.m[r][c]);
    m.push_back(p.translation[r]);
  }
  for (double v : {0.0, 0.0, 0.0, 1.0}) m.push_back(v);
  return m;
}

inline rigid_pose pose_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 16) throw malformed_manifest_error("camera_to_world must have 16 entries");
  rigid_pose p;
  for (int r = 0; r < 3; r++) {
    for (int c = 0; c < 3; c++) p.rotation.m[r][c] = j[r * 4 + c];
    p.translation[r] = j[r * 4 + 3];
  }
  for (int c = 0; c < 3; c++) {
    double expect = c == 3 ? 1.0 : 0.0;
    if (double(j[12 + c]) != expect) throw malformed_manifest_error("last matrix row must be 0 0 0 1");
  }
  if (double(j[15]) != 1.0) throw malformed_manifest_error("last matrix row must be 0 0 0 1");
  if (!is_rigid(p.rotation, 1e-6)) throw non_rigid_pose_error{};
  return p;
}

}  // namespace detail

inline nlohmann::ordered_json manifest_to_json(const dataset_manifest& m) {
  nlohmann::ordered_json j;
  j["scene"] = m.scene;
  j["units"] = m.units;
  j["room_height"] = m.room_height;
  j["depth_scale"] = m.depth_scale;
  auto views = nlohmann::ordered_json::array();
  for (auto& v : m.views) {
    nlohmann::ordered_json jv;
    jv["id"] = v.id;
    jv["split"] = v.split;
    jv["rgb"] = v.rgb_file;
    jv["depth"] = v.depth_file;
    jv["seg"] = v.seg_file;
    if (v.prior_file) jv["prior"] = *v.prior_file;
    jv["intrinsics"] = detail::intrinsics_to_json(v.intrinsics);
    jv["camera_to_world"] = detail::pose_to_json(v.pose);
    views.push_back(std::move(jv));
  }
  j["views"] = std::move(views);
  return j;
}

inline dataset_manifest manifest_from_json(const nlohmann::json& j) {
  dataset_manifest m;
  try {
    m.scene = j.at("scene");
    m.units = j.at("units");
    m.room_height = j.at("room_height");
    m.depth_scale = j.at("depth_scale");
    for (auto& jv : j.at("views")) {
      manifest_view v;
      v.id = jv.at("id");
      v.split = jv.at("split");
      if (v.split != "train" && v.split != "eval")
        throw malformed_manifest_error("split must be train or eval");
      v.rgb_file = jv.at("rgb");
      v.depth_file = jv.at("depth");
      v.seg_file = jv.at("seg");
      if (jv.contains("prior")) v.prior_file = jv.at("prior").get<std::string>();
      v.intrinsics = detail::intrinsics_from_json(jv.at("intrinsics"));
      v.pose = detail::pose_from_json(jv.at("camera_to_world"));
      m.views.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw malformed_manifest_error(e.what());
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& dir, const dataset_manifest& m) {
  std::ofstream out(dir / "manifest.json");
  out << manifest_to_json(m).dump(2) << "\n";
}

inline dataset_manifest read_manifest(const std::filesystem::path& dir) {
  auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw missing_file_error(path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw malformed_manifest_error(e.what());
  }
  return manifest_from_json(j);
}

// Write a complete dataset. Priors, when present per view, must match image
// dimensions; absent priors simply omit the file and the manifest entry.
inline dataset_manifest write_dataset(const std::vector<dataset_view>& views,
                                      const std::string& scene_name, double room_height,
                                      const std::filesystem::path& out_dir,
                                      double depth_scale = 0.001) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "rgb");
  fs::create_directories(out_dir / "depth");
  fs::create_directories(out_dir / "seg");
  bool any_prior = false;
  for (auto& v : views)
    if (!v.prior.empty()) any_prior = true;
  if (any_prior) fs::create_directories(out_dir / "prior");

  dataset_manifest m;
  m.scene = scene_name;
  m.room_height = room_height;
  m.depth_scale = depth_scale;
  for (auto& v : views) {
    auto name = detail::view_file_name(v.id);
    manifest_view mv;
    mv.id = v.id;
    mv.split = v.split;
    mv.rgb_file = "rgb/" + name;
    mv.depth_file = "depth/" + name;
    mv.seg_file = "seg/" + name;
    mv.intrinsics = v.record.intrinsics;
    mv.pose = v.record.pose;
    save_png_rgb8((out_dir / mv.rgb_file).string(), v.record.rgb);
    save_png_gray16((out_dir / mv.depth_file).string(), quantize_depth(v.record.depth, depth_scale));
    save_png_gray8((out_dir / mv.seg_file).string(), v.record.seg);
    if (!v.prior.empty()) {
      mv.prior_file = "prior/" + name;
      save_png_gray16((out_dir / *mv.prior_file).string(), quantize_depth(v.prior, depth_scale));
    }
    m.views.push_back(std::move(mv));
  }
  write_manifest(out_dir, m);
  return m;
}

inline std::pair<dataset_manifest, std::vector<dataset_view>> read_dataset(
    const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  dataset_manifest m = read_manifest(dir);
  std::vector<dataset_view> views;
  for (auto& mv : m.views) {
    for (const std::string* f : {&mv.rgb_file, &mv.depth_file, &mv.seg_file}) {
      if (!fs::exists(dir / *f)) throw missing_file_error((dir / *f).string());
    }
    if (mv.prior_file && !fs::exists(dir / *mv.prior_file))
      throw missing_file_error((dir / *mv.prior_file).string());

    dataset_view v;
    v.id = mv.id;
    v.split = mv.split;
    v.record.intrinsics = mv.intrinsics;
    v.record.pose = mv.pose;
    v.record.rgb = load_png_rgb8((dir / mv.rgb_file).string());
    v.record.depth = dequantize_depth(load_png_gray16((dir / mv.depth_file).string()), m.depth_scale);
    v.record.seg = load_png_gray8((dir / mv.seg_file).string());
    for (uint8_t id : v.record.seg)
      if (id > 3) throw malformed_manifest_error("segmentation class id out of range");
    if (v.record.rgb.width() != mv.intrinsics.width || v.record.rgb.height() != mv.intrinsics.height)
      throw malformed_manifest_error("image dimensions do not match intrinsics");
    if (mv.prior_file)
      v.prior = dequantize_depth(load_png_gray16((dir / *mv.prior_file).string()), m.depth_scale);
    views.push_back(std::move(v));
  }
  return {std::move(m), std::move(views)};
}

}  // namespace voxray
