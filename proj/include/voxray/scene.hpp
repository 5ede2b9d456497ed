// Procedural indoor scenes and the analytic ray tracer that provides ground
// truth RGB, Euclidean depth, and architectural segmentation.
//
// Rooms are axis-aligned shells with the floor at z = 0 and the origin at the
// center of the floor. Shading is Lambertian with one fixed directional light
// and an ambient floor, so surface color is view independent and a radiance
// field can fit it exactly.

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "camera.hpp"
#include "geometry.hpp"
#include "image.hpp"
#include "math.hpp"
#include "rng.hpp"

namespace voxray {

// Segmentation class ids, fixed across the whole pipeline.
enum class surface_class : uint8_t { other = 0, floor = 1, ceiling = 2, wall = 3 };

struct solid_pattern {
  vec3d albedo;
};
struct checker_pattern {
  vec3d albedo_a, albedo_b;
  double cell_size = 0.25;  // meters
};
struct gradient_pattern {
  vec3d albedo_a, albedo_b;
  int axis = 2;  // world axis the gradient runs along
};
using surface_pattern = std::variant<solid_pattern, checker_pattern, gradient_pattern>;

struct box_primitive {
  vec3d min_corner, max_corner;
};
struct sphere_primitive {
  vec3d center;
  double radius = 0;
};

struct primitive {
  std::variant<box_primitive, sphere_primitive> shape;
  surface_pattern pattern;
};

struct scene_description {
  std::string name;
  double room_width = 0, room_depth = 0, room_height = 0;  // meters
  vec3d wall_albedo, floor_albedo, ceiling_albedo;
  std::vector<primitive> objects;
};

struct unknown_preset_error : std::runtime_error {
  explicit unknown_preset_error(const std::string& name)
      : std::runtime_error("unknown scene preset: " + name) {}
};
struct origin_outside_room_error : std::runtime_error {
  origin_outside_room_error() : std::runtime_error("ray origin outside room shell") {}
};

namespace detail {

inline std::pair<vec3d, vec3d> primitive_bounds(const primitive& obj) {
  if (auto* b = std::get_if<box_primitive>(&obj.shape)) return {b->min_corner, b->max_corner};
  auto& s = std::get<sphere_primitive>(obj.shape);
  vec3d r{s.radius, s.radius, s.radius};
  return {s.center - r, s.center + r};
}

inline bool inside_room(const scene_description& scene, vec3d p, double slack = 0) {
  return std::abs(p.x) < scene.room_width / 2 + slack &&
         std::abs(p.y) < scene.room_depth / 2 + slack && p.z > -slack &&
         p.z < scene.room_height + slack;
}

}  // namespace detail

// Objects must not protrude from the shell: strictly inside in x/y, resting on
// the floor (z = 0) is allowed, strictly below the ceiling.
inline bool scene_is_valid(const scene_description& scene) {
  if (scene.room_width <= 0 || scene.room_depth <= 0 || scene.room_height <= 0) return false;
  const double hx = scene.room_width / 2, hy = scene.room_depth / 2;
  for (auto& obj : scene.objects) {
    auto [lo, hi] = detail::primitive_bounds(obj);
    if (!(lo.x > -hx && hi.x < hx && lo.y > -hy && hi.y < hy && lo.z >= 0 &&
          hi.z < scene.room_height))
      return false;
  }
  return true;
}

// Seeded presets. bedroom_like and livingroom_like follow the 6x8x3.8 m and
// 10x10x3.4 m footprints; empty_room reuses the bedroom shell without objects.
inline scene_description build_scene(const std::string& preset, uint64_t seed) {
  rng gen(hash_combine(seed, 0x7363656e65ull));
  scene_description scene;
  scene.wall_albedo = {0.74, 0.76, 0.80};
  scene.floor_albedo = {0.45, 0.34, 0.22};
  scene.ceiling_albedo = {0.88, 0.87, 0.84};

  auto jitter = [&](double lo, double hi) { return gen.uniform(lo, hi); };

  if (preset == "empty_room") {
    scene.name = preset;
    scene.room_width = 6;
    scene.room_depth = 8;
    scene.room_height = 3.8;
    return scene;
  }
  if (preset == "bedroom_like") {
    scene.name = preset;
    scene.room_width = 6;
    scene.room_depth = 8;
    scene.room_height = 3.8;
    // large bed: the main occluder
    double bx = jitter(-0.4, 0.4), by = jitter(-1.2, -0.4);
    scene.objects.push_back(
        {box_primitive{{bx - 0.9, by - 1.1, 0.0}, {bx + 0.9, by + 1.1, 0.55}},
         checker_pattern{{0.70, 0.15, 0.15}, {0.92, 0.88, 0.80}, 0.35}});
    // wardrobe against the -x wall
    double wy = jitter(1.2, 2.4);
    scene.objects.push_back(
        {box_primitive{{-2.95, wy - 0.8, 0.0}, {-2.35, wy + 0.8, 2.2}},
         gradient_pattern{{0.35, 0.22, 0.12}, {0.55, 0.40, 0.25}, 2}});
    // nightstands
    for (double sx : {bx - 1.25, bx + 1.25}) {
      scene.objects.push_back(
          {box_primitive{{sx - 0.25, by - 1.55, 0.0}, {sx + 0.25, by - 1.05, 0.5}},
           solid_pattern{{0.30, 0.30, 0.35}}});
    }
    // rug: a thin textured slab that gives the floor a feature-rich region
    scene.objects.push_back(
        {box_primitive{{bx - 1.6, by + 1.3, 0.0}, {bx + 1.6, by + 3.1, 0.02}},
         checker_pattern{{0.20, 0.35, 0.45}, {0.80, 0.75, 0.65}, 0.3}});
    // lamp sphere near the +x wall
    double ly = jitter(2.2, 3.0);
    scene.objects.push_back(
        {sphere_primitive{{2.4, ly, 1.1}, 0.30}, solid_pattern{{0.95, 0.85, 0.45}}});
    return scene;
  }
  if (preset == "livingroom_like") {
    scene.name = preset;
    scene.room_width = 10;
    scene.room_depth = 10;
    scene.room_height = 3.4;
    // sofa: two boxes in an L
    double sx = jitter(-0.6, 0.6), sy = jitter(-3.6, -2.8);
    scene.objects.push_back(
        {box_primitive{{sx - 1.4, sy - 0.5, 0.0}, {sx + 1.4, sy + 0.5, 0.85}},
         checker_pattern{{0.25, 0.30, 0.55}, {0.45, 0.50, 0.70}, 0.4}});
    scene.objects.push_back(
        {box_primitive{{sx - 1.4, sy + 0.5, 0.0}, {sx - 0.5, sy + 1.6, 0.85}},
         checker_pattern{{0.25, 0.30, 0.55}, {0.45, 0.50, 0.70}, 0.4}});
    // low table
    scene.objects.push_back(
        {box_primitive{{sx - 0.6, sy + 1.9, 0.0}, {sx + 0.6, sy + 2.9, 0.45}},
         gradient_pattern{{0.50, 0.35, 0.20}, {0.70, 0.55, 0.35}, 0}});
    // shelf against the +x wall
    double shy = jitter(0.5, 2.0);
    scene.objects.push_back(
        {box_primitive{{4.45, shy - 1.2, 0.0}, {4.95, shy + 1.2, 2.4}},
         checker_pattern{{0.30, 0.20, 0.12}, {0.60, 0.50, 0.38}, 0.3}});
    // rug
    scene.objects.push_back(
        {box_primitive{{sx - 2.0, sy + 0.8, 0.0}, {sx + 2.0, sy + 3.4, 0.02}},
         checker_pattern{{0.55, 0.20, 0.20}, {0.85, 0.80, 0.70}, 0.35}});
    // plant spheres
    scene.objects.push_back(
        {sphere_primitive{{-4.0, 3.8, 1.5}, 0.45}, solid_pattern{{0.20, 0.55, 0.25}}});
    scene.objects.push_back(
        {sphere_primitive{{3.6, -3.9, 0.5}, 0.5}, solid_pattern{{0.80, 0.75, 0.30}}});
    return scene;
  }
  throw unknown_preset_error{preset};
}

struct trace_result {
  vec3d color;           // [0,1]^3
  double depth = 0;      // Euclidean meters
  surface_class cls = surface_class::other;
};

namespace detail {

// fixed directional light (unit vector toward the light) and ambient floor
inline const vec3d scene_light = normalize(vec3d{0.35, -0.20, 0.91});
constexpr double scene_ambient = 0.3;

inline vec3d evaluate_pattern(const surface_pattern& pattern, vec3d p,
                              const std::pair<vec3d, vec3d>& bounds) {
  if (auto* s = std::get_if<solid_pattern>(&pattern)) return s->albedo;
  if (auto* c = std::get_if<checker_pattern>(&pattern)) {
    auto cell = [&](double v) { return (long long)std::floor(v / c->cell_size); };
    bool odd = (cell(p.x) + cell(p.y) + cell(p.z)) & 1;
    return odd ? c->albedo_b : c->albedo_a;
  }
  auto& g = std::get<gradient_pattern>(pattern);
  double lo = bounds.first[g.axis], hi = bounds.second[g.axis];
  double t = hi > lo ? clamp((p[g.axis] - lo) / (hi - lo), 0.0, 1.0) : 0.0;
  return lerp(g.albedo_a, g.albedo_b, t);
}

inline vec3d shade(vec3d albedo, vec3d normal, vec3d ray_dir) {
  // make the normal face the viewer
  vec3d n = dot(normal, ray_dir) < 0 ? normal : -normal;
  double diffuse = std::max(0.0, dot(n, scene_light));
  double factor = clamp(scene_ambient + 0.7 * diffuse, 0.0, 1.0);
  return clamp(factor * albedo, 0.0, 1.0);
}

struct hit {
  double t = 0;
  vec3d normal;
};

// Slab test against an axis-aligned box from strictly outside (rays starting
// inside an object are not supported; cameras never sit inside furniture).
inline std::optional<hit> intersect_box(const ray& r, const box_primitive& b) {
  double t_near = -1e300, t_far = 1e300;
  vec3d normal;
  for (int a = 0; a < 3; a++) {
    double o = r.origin[a], d = r.direction[a];
    double lo = b.min_corner[a], hi = b.max_corner[a];
    if (std::abs(d) < 1e-15) {
      if (o < lo || o > hi) return std::nullopt;
      continue;
    }
    double t0 = (lo - o) / d, t1 = (hi - o) / d;
    vec3d face_normal{};
    face_normal[a] = d > 0 ? -1.0 : 1.0;
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) {
      t_near = t0;
      normal = face_normal;
    }
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return std::nullopt;
  }
  if (t_near <= 1e-9) return std::nullopt;
  return hit{t_near, normal};
}

inline std::optional<hit> intersect_sphere(const ray& r, const sphere_primitive& s) {
  vec3d oc = r.origin - s.center;
  double b = dot(oc, r.direction);
  double c = dot(oc, oc) - s.radius * s.radius;
  double disc = b * b - c;
  if (disc < 0) return std::nullopt;
  double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t <= 1e-9) t = -b + sq;
  if (t <= 1e-9) return std::nullopt;
  return hit{t, normalize(ray_at(r, t) - s.center)};
}

}  // namespace detail

// Nearest-hit trace against the room shell and all primitives.
inline trace_result trace_ray(const scene_description& scene, const ray& r) {
  if (!detail::inside_room(scene, r.origin, -1e-12)) throw origin_outside_room_error{};

  // room shell: from inside, the ray exits through exactly one face
  double best_t = 1e300;
  vec3d best_normal;
  surface_class best_class = surface_class::other;
  const double hx = scene.room_width / 2, hy = scene.room_depth / 2;
  struct face {
    int axis;
    double coord;
    vec3d normal;  // inward
    surface_class cls;
  };
  const face faces[6] = {
      {0, +hx, {-1, 0, 0}, surface_class::wall}, {0, -hx, {1, 0, 0}, surface_class::wall},
      {1, +hy, {0, -1, 0}, surface_class::wall}, {1, -hy, {0, 1, 0}, surface_class::wall},
      {2, 0.0, {0, 0, 1}, surface_class::floor}, {2, scene.room_height, {0, 0, -1}, surface_class::ceiling}};
  for (auto& f : faces) {
    double d = r.direction[f.axis];
    if (std::abs(d) < 1e-15) continue;
    double t = (f.coord - r.origin[f.axis]) / d;
    if (t > 1e-9 && t < best_t) {
      best_t = t;
      best_normal = f.normal;
      best_class = f.cls;
    }
  }

  vec3d albedo = best_class == surface_class::floor     ? scene.floor_albedo
                 : best_class == surface_class::ceiling ? scene.ceiling_albedo
                                                        : scene.wall_albedo;
  const primitive* hit_obj = nullptr;
  for (auto& obj : scene.objects) {
    std::optional<detail::hit> h;
    if (auto* b = std::get_if<box_primitive>(&obj.shape))
      h = detail::intersect_box(r, *b);
    else
      h = detail::intersect_sphere(r, std::get<sphere_primitive>(obj.shape));
    if (h && h->t < best_t) {
      best_t = h->t;
      best_normal = h->normal;
      best_class = surface_class::other;
      hit_obj = &obj;
    }
  }
  if (hit_obj)
    albedo = detail::evaluate_pattern(hit_obj->pattern, ray_at(r, best_t),
                                      detail::primitive_bounds(*hit_obj));

  return {detail::shade(albedo, best_normal, r.direction), best_t, best_class};
}

// One camera view: ground-truth images plus the camera that produced them.
struct view_record {
  image<vec3d> rgb;          // [0,1]
  image<double> depth;       // Euclidean meters
  image<uint8_t> seg;        // surface_class ids
  camera_intrinsics intrinsics;
  rigid_pose pose;
};

inline view_record render_view(const scene_description& scene, const camera_intrinsics& k,
                               const rigid_pose& pose) {
  view_record view;
  view.rgb = image<vec3d>(k.width, k.height);
  view.depth = image<double>(k.width, k.height);
  view.seg = image<uint8_t>(k.width, k.height);
  view.intrinsics = k;
  view.pose = pose;
  for (int y = 0; y < k.height; y++) {
    for (int x = 0; x < k.width; x++) {
      auto result = trace_ray(scene, pixel_to_ray(k, pose, x, y));
      view.rgb.at(x, y) = result.color;
      view.depth.at(x, y) = result.depth;
      view.seg.at(x, y) = uint8_t(result.cls);
    }
  }
  return view;
}

}  // namespace voxray
