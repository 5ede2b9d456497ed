// Rays, planes, rigid poses, and plane estimation.
//
// All quantities are metric (meters) and double precision. Plane normals are
// kept unit length and canonically oriented (see orient_canonical) so that two
// estimates of the same plane compare equal.

#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "math.hpp"

namespace voxray {

struct ray {
  vec3d origin;
  vec3d direction;  // unit length
};

inline vec3d ray_at(const ray& r, double t) { return r.origin + t * r.direction; }

// Plane { x : dot(normal, x) == offset }, normal unit length.
struct plane {
  vec3d normal;
  double offset = 0;
};

inline double signed_distance(const plane& p, vec3d x) { return dot(p.normal, x) - p.offset; }

// Camera-to-world rigid transform.
struct rigid_pose {
  mat3d rotation;  // orthonormal, det +1
  vec3d translation;
};

inline vec3d transform_point(const rigid_pose& p, vec3d x) { return p.rotation * x + p.translation; }
inline vec3d transform_direction(const rigid_pose& p, vec3d d) { return p.rotation * d; }

inline rigid_pose inverse(const rigid_pose& p) {
  mat3d rt = transpose(p.rotation);
  return {rt, -(rt * p.translation)};
}

inline bool is_rigid(const mat3d& r, double tol = 1e-7) {
  mat3d should_be_identity = transpose(r) * r;
  for (int i = 0; i < 3; i++)
    for (int j = 0; j < 3; j++) {
      double expect = i == j ? 1.0 : 0.0;
      if (std::abs(should_be_identity.m[i][j] - expect) > tol) return false;
    }
  return determinant(r) > 0;
}

struct collinear_error : std::runtime_error {
  collinear_error() : std::runtime_error("points are collinear") {}
};
struct degenerate_points_error : std::runtime_error {
  degenerate_points_error() : std::runtime_error("point set does not span a plane") {}
};

constexpr double parallel_threshold = 1e-9;  // on |dot(normal, direction)|

// Smallest positive ray parameter hitting the plane, or nullopt when the ray
// is parallel or the hit lies behind the origin.
inline std::optional<double> ray_plane_intersect(const ray& r, const plane& p) {
  double denom = dot(p.normal, r.direction);
  if (std::abs(denom) < parallel_threshold) return std::nullopt;
  double t = (p.offset - dot(p.normal, r.origin)) / denom;
  if (t <= 0) return std::nullopt;
  return t;
}

// Deterministic normal orientation: z component >= 0, ties broken by x then y.
// Components within 1e-9 of zero do not decide the sign, so estimates of the
// same plane orient consistently despite rounding noise.
inline vec3d orient_canonical(vec3d n) {
  constexpr double eps = 1e-9;
  if (n.z > eps) return n;
  if (n.z < -eps) return -n;
  if (n.x > eps) return n;
  if (n.x < -eps) return -n;
  return n.y >= 0 ? n : -n;
}

inline plane make_plane(vec3d normal, vec3d point_on_plane) {
  vec3d n = orient_canonical(normalize(normal));
  return {n, dot(n, point_on_plane)};
}

inline plane plane_from_three_points(vec3d p1, vec3d p2, vec3d p3) {
  vec3d n = cross(p2 - p1, p3 - p1);
  double scale = std::max({length(p2 - p1), length(p3 - p1), length(p3 - p2)});
  if (length(n) < 1e-9 * scale) throw collinear_error{};
  return make_plane(n, p1);
}

struct plane_fit {
  plane estimate;
  double rms_residual = 0;  // RMS point-to-plane distance, meters
};

// Total least squares: the plane normal is the smallest principal direction of
// the centered point cloud.
inline plane_fit fit_plane_least_squares(std::span<const vec3d> points) {
  if (points.size() < 3) throw degenerate_points_error{};
  vec3d centroid{};
  for (auto& p : points) centroid += p;
  centroid = centroid / double(points.size());

  mat3d cov{};
  cov.m = {{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}};
  for (auto& p : points) {
    vec3d d = p - centroid;
    cov.m[0][0] += d.x * d.x; cov.m[0][1] += d.x * d.y; cov.m[0][2] += d.x * d.z;
    cov.m[1][1] += d.y * d.y; cov.m[1][2] += d.y * d.z;
    cov.m[2][2] += d.z * d.z;
  }
  cov.m[1][0] = cov.m[0][1]; cov.m[2][0] = cov.m[0][2]; cov.m[2][1] = cov.m[1][2];

  vec3d evals;
  mat3d evecs;
  symmetric_eigen3(cov, evals, evecs);
  // spreads = sqrt of mean squared extent along principal directions
  double n = double(points.size());
  double spread0 = std::sqrt(std::max(0.0, evals.x) / n);
  double spread1 = std::sqrt(std::max(0.0, evals.y) / n);
  if (spread0 < 1e-9 && spread1 < 1e-9) throw degenerate_points_error{};

  plane pl = make_plane(evecs.col(0), centroid);
  double ss = 0;
  for (auto& p : points) {
    double d = signed_distance(pl, p);
    ss += d * d;
  }
  return {pl, std::sqrt(ss / n)};
}

inline plane_fit fit_plane_least_squares(const std::vector<vec3d>& points) {
  return fit_plane_least_squares(std::span<const vec3d>(points));
}

inline plane parallel_plane_at_distance(const plane& p, double signed_dist) {
  return {p.normal, p.offset + signed_dist};
}

}  // namespace voxray
