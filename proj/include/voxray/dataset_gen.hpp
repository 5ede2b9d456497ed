// Full dataset generation: render every rig view of a scene and write it out,
// with a train/eval split that holds out whole stations.

#pragma once

#include <filesystem>

#include "camera.hpp"
#include "dataset.hpp"
#include "scene.hpp"

namespace voxray {

struct camera_inside_object_error : std::runtime_error {
  camera_inside_object_error() : std::runtime_error("rig station falls inside a scene object") {}
};

namespace detail {

inline bool point_in_primitive(const primitive& obj, vec3d p) {
  if (auto* b = std::get_if<box_primitive>(&obj.shape))
    return p.x > b->min_corner.x && p.x < b->max_corner.x && p.y > b->min_corner.y &&
           p.y < b->max_corner.y && p.z > b->min_corner.z && p.z < b->max_corner.z;
  auto& s = std::get<sphere_primitive>(obj.shape);
  return length_squared(p - s.center) < s.radius * s.radius;
}

}  // namespace detail

// Deterministic station-level split: about a quarter of the stations (at
// least one, never all) are held out for evaluation.
inline std::vector<std::string> station_splits(int station_count, uint64_t seed) {
  std::vector<int> order(station_count);
  for (int i = 0; i < station_count; i++) order[i] = i;
  rng gen(hash_combine(seed, 0x73706c6974ull));
  for (int i = station_count - 1; i > 0; i--)
    std::swap(order[i], order[gen.uniform_index(uint64_t(i) + 1)]);
  int eval_count = std::max(1, station_count / 4);
  if (eval_count >= station_count) eval_count = std::max(1, station_count - 1);
  std::vector<std::string> split(station_count, "train");
  for (int i = 0; i < eval_count; i++) split[order[i]] = "eval";
  if (station_count == 1) split[0] = "train";
  return split;
}

inline std::vector<dataset_view> render_rig_views(const scene_description& scene,
                                                  const rig_config& rig,
                                                  const camera_intrinsics& k) {
  auto poses = generate_rig_poses(rig, scene.room_width, scene.room_depth);
  int station_count = rig.stations_x * rig.stations_y;
  auto splits = station_splits(station_count, rig.seed);

  for (auto& rp : poses)
    for (auto& obj : scene.objects)
      if (detail::point_in_primitive(obj, rp.pose.translation)) throw camera_inside_object_error{};

  std::vector<dataset_view> views;
  views.reserve(poses.size());
  for (size_t i = 0; i < poses.size(); i++) {
    dataset_view v;
    v.id = int(i);
    v.split = splits[poses[i].station];
    v.record = render_view(scene, k, poses[i].pose);
    views.push_back(std::move(v));
  }
  return views;
}

inline dataset_manifest generate_dataset(const scene_description& scene, const rig_config& rig,
                                         const camera_intrinsics& k,
                                         const std::filesystem::path& out_dir,
                                         double depth_scale = 0.001) {
  auto views = render_rig_views(scene, rig, k);
  return write_dataset(views, scene.name, scene.room_height, out_dir, depth_scale);
}

}  // namespace voxray
