// Pinhole camera model and the 360-degree unstitched capture rig.
//
// Camera frame convention: x right, y down, z forward (camera looks along +z
// of its own frame). Rays go through pixel centers, i.e. pixel (px, py) maps
// to image plane point (px + 0.5, py + 0.5).

#pragma once

#include <stdexcept>
#include <vector>

#include "geometry.hpp"
#include "math.hpp"
#include "rng.hpp"

namespace voxray {

struct camera_intrinsics {
  int width = 0, height = 0;   // pixels
  double fx = 0, fy = 0;       // focal lengths, pixels
  double cx = 0, cy = 0;       // principal point, pixels
};

struct invalid_fov_error : std::runtime_error {
  invalid_fov_error() : std::runtime_error("field of view must be in (0, 180) degrees") {}
};
struct pixel_out_of_bounds_error : std::runtime_error {
  pixel_out_of_bounds_error() : std::runtime_error("pixel index outside image") {}
};

inline camera_intrinsics intrinsics_from_fov(int width, int height, double fov_h_deg,
                                             double fov_v_deg) {
  if (!(fov_h_deg > 0 && fov_h_deg < 180 && fov_v_deg > 0 && fov_v_deg < 180))
    throw invalid_fov_error{};
  camera_intrinsics k;
  k.width = width;
  k.height = height;
  k.fx = (width / 2.0) / std::tan(radians(fov_h_deg) / 2);
  k.fy = (height / 2.0) / std::tan(radians(fov_v_deg) / 2);
  k.cx = width / 2.0;
  k.cy = height / 2.0;
  return k;
}

// Ray through the center of pixel (px, py) in world space.
inline ray pixel_to_ray(const camera_intrinsics& k, const rigid_pose& pose, int px, int py) {
  if (px < 0 || px >= k.width || py < 0 || py >= k.height) throw pixel_out_of_bounds_error{};
  vec3d dir_cam{(px + 0.5 - k.cx) / k.fx, (py + 0.5 - k.cy) / k.fy, 1.0};
  return {pose.translation, normalize(pose.rotation * dir_cam)};
}

// Inverse of pixel_to_ray for points in front of the camera; returns
// continuous pixel coordinates (so the center of pixel (px, py) comes back as
// (px + 0.5, py + 0.5)).
inline std::optional<std::pair<double, double>> project_point(const camera_intrinsics& k,
                                                              const rigid_pose& pose,
                                                              vec3d world_point) {
  vec3d cam = transpose(pose.rotation) * (world_point - pose.translation);
  if (cam.z <= 0) return std::nullopt;
  return std::make_pair(k.fx * cam.x / cam.z + k.cx, k.fy * cam.y / cam.z + k.cy);
}

struct rig_config {
  int stations_x = 2, stations_y = 2;      // grid counts
  double station_spacing = 2.0;            // meters between grid points
  double camera_height = 1.9;              // meters above the floor
  double position_noise_std = 0.05;        // meters, x/y only (tripod height is exact)
  uint64_t seed = 0;
  int sweep_count = 15;
  double sweep_step_deg = 24.0;
  int ceiling_view_count = 5;
  double fov_h_deg = 27.0;
  double fov_v_deg = 40.0;
};

struct station_outside_room_error : std::runtime_error {
  station_outside_room_error() : std::runtime_error("rig station outside room bounds") {}
};

struct rig_pose {
  int station = 0;
  rigid_pose pose;
};

namespace detail {

// Build a camera-to-world rotation from a forward direction and the desired
// world direction of "image down" (y axis). down is re-orthogonalized.
inline mat3d look_rotation(vec3d forward, vec3d down_hint) {
  vec3d z = normalize(forward);
  vec3d y = normalize(down_hint - dot(down_hint, z) * z);
  vec3d x = cross(y, z);
  return mat3d::from_columns(x, y, z);
}

}  // namespace detail

// Station-wise 360 capture: a horizontal sweep of sweep_count yawed views plus
// ceiling_view_count upward views (one straight up, the rest tilted from
// vertical toward yaw 0/90/180/270 so they overlap the sweep ring).
inline std::vector<rig_pose> generate_rig_poses(const rig_config& rig, double room_width,
                                                double room_depth) {
  constexpr double margin = 0.5;
  rng gen(hash_combine(rig.seed, 0x7269675f706f7365ull));

  std::vector<rig_pose> poses;
  int station = 0;
  for (int iy = 0; iy < rig.stations_y; iy++) {
    for (int ix = 0; ix < rig.stations_x; ix++, station++) {
      double gx = (ix - (rig.stations_x - 1) / 2.0) * rig.station_spacing;
      double gy = (iy - (rig.stations_y - 1) / 2.0) * rig.station_spacing;
      if (std::abs(gx) > room_width / 2 - margin || std::abs(gy) > room_depth / 2 - margin)
        throw station_outside_room_error{};
      vec3d origin{gx + gen.normal(0, rig.position_noise_std),
                   gy + gen.normal(0, rig.position_noise_std), rig.camera_height};
      // keep the noisy station inside the margin as well
      origin.x = clamp(origin.x, -room_width / 2 + margin, room_width / 2 - margin);
      origin.y = clamp(origin.y, -room_depth / 2 + margin, room_depth / 2 - margin);

      for (int k = 0; k < rig.sweep_count; k++) {
        double yaw = radians(k * rig.sweep_step_deg);
        vec3d forward{std::cos(yaw), std::sin(yaw), 0};
        poses.push_back({station, {detail::look_rotation(forward, {0, 0, -1}), origin}});
      }
      // straight up, image-down pointing toward yaw 0
      poses.push_back({station, {detail::look_rotation({0, 0, 1}, {1, 0, 0}), origin}});
      // tilted from vertical so the frame bottom overlaps the sweep ring
      double tilt = radians(90.0 - rig.fov_v_deg / 2 - 5.0);
      for (int k = 0; k + 1 < rig.ceiling_view_count; k++) {
        double yaw = radians(90.0 * k);
        vec3d forward{std::sin(tilt) * std::cos(yaw), std::sin(tilt) * std::sin(yaw),
                      std::cos(tilt)};
        // image down = direction of decreasing elevation
        vec3d down{std::cos(tilt) * std::cos(yaw), std::cos(tilt) * std::sin(yaw),
                   -std::sin(tilt)};
        poses.push_back({station, {detail::look_rotation(forward, down), origin}});
      }
    }
  }
  return poses;
}

}  // namespace voxray
