// Dense depth priors for planar architectural surfaces.
//
// Floor and ceiling planes come from calibration (floor at z = 0) or from
// three tripod camera positions plus the camera height. Wall planes are
// estimated from border pixels where walls meet the floor or ceiling: border
// rays lifted into the known horizontal planes give 3D points on those
// planes, and a plane fit through both seam point sets defines the wall.
// Per-pixel priors are then Euclidean ray-plane intersection distances.
//
// Rasterized segmentation quantizes the seams: a wall-side border ray lifted
// into the floor plane lands slightly outside the true wall, a floor-side
// border ray lands slightly inside. A least-squares fit over such points
// inherits that one-sided pixel-scale bias. Each adjacent pixel pair,
// however, brackets the seam exactly, so the dataset-level pipeline refines
// every wall plane by maximizing the separation margin between all inside
// and outside lift points. That recovers wall planes to far below pixel
// scale, which is what makes sub-millimeter prior maps possible at low
// resolution.

#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "camera.hpp"
#include "geometry.hpp"
#include "image.hpp"
#include "scene.hpp"

namespace voxray {

struct ambiguous_floor_error : std::runtime_error {
  ambiguous_floor_error()
      : std::runtime_error("floor plane ambiguous: sample ray hits both or neither candidate") {}
};
struct invalid_calibration_error : std::runtime_error {
  explicit invalid_calibration_error(const std::string& what)
      : std::runtime_error("invalid calibration: " + what) {}
};

struct calibration_input {
  enum class mode_t { calibrated, uncalibrated };
  mode_t mode = mode_t::calibrated;
  double room_height = 0;
  // uncalibrated mode only:
  double camera_height = 0;
  std::vector<vec3d> camera_positions;
};

inline void validate(const calibration_input& calib) {
  if (calib.room_height <= 0) throw invalid_calibration_error("room_height must be positive");
  if (calib.mode == calibration_input::mode_t::uncalibrated) {
    if (!(calib.room_height > calib.camera_height && calib.camera_height > 0))
      throw invalid_calibration_error("need room_height > camera_height > 0");
    if (calib.camera_positions.size() < 3)
      throw invalid_calibration_error("need at least three camera positions");
  }
}

struct floor_ceiling_planes {
  plane floor;
  plane ceiling;
};

// Calibrated: z = 0 and z = room_height. Uncalibrated: fit the camera plane,
// take parallel candidates one camera height away on both sides, and keep the
// candidate the sample floor ray actually hits; the ceiling is the parallel
// plane at room_height - camera_height on the opposite side.
inline floor_ceiling_planes estimate_floor_ceiling_planes(const calibration_input& calib,
                                                          const ray& sample_floor_ray) {
  validate(calib);
  if (calib.mode == calibration_input::mode_t::calibrated) {
    return {plane{{0, 0, 1}, 0.0}, plane{{0, 0, 1}, calib.room_height}};
  }
  plane cam_plane;
  try {
    if (calib.camera_positions.size() == 3)
      cam_plane = plane_from_three_points(calib.camera_positions[0], calib.camera_positions[1],
                                          calib.camera_positions[2]);
    else
      cam_plane = fit_plane_least_squares(calib.camera_positions).estimate;
  } catch (const degenerate_points_error&) {
    throw collinear_error{};
  }
  plane below = parallel_plane_at_distance(cam_plane, -calib.camera_height);
  plane above = parallel_plane_at_distance(cam_plane, +calib.camera_height);
  bool hits_below = ray_plane_intersect(sample_floor_ray, below).has_value();
  bool hits_above = ray_plane_intersect(sample_floor_ray, above).has_value();
  if (hits_below == hits_above) throw ambiguous_floor_error{};
  double rel = calib.room_height - calib.camera_height;
  if (hits_below) return {below, parallel_plane_at_distance(cam_plane, +rel)};
  return {above, parallel_plane_at_distance(cam_plane, -rel)};
}

// A border pixel pair brackets a seam: "inner" is the architectural-class ray
// lifted into its own plane (room side of the wall), "outer" is the adjacent
// wall ray lifted into the same plane (beyond the wall).
struct border_bracket {
  vec3d inner;
  vec3d outer;
  bool on_ceiling = false;  // which horizontal plane the pair lies in
  ray wall_ray;             // the wall-side pixel ray that produced `outer`
};

inline vec3d bracket_midpoint(const border_bracket& b) { return 0.5 * (b.inner + b.outer); }

struct wall_component {
  int id = 0;
  int pixel_count = 0;
  std::vector<vec3d> border_points;  // wall-side lifts (outer points)
  int floor_border_count = 0;
  int ceiling_border_count = 0;
  std::vector<border_bracket> brackets;
  bool discarded = false;  // too few border points to define a plane
  std::string discard_reason;
};

struct wall_extraction {
  image<int> component_ids;  // -1 where not wall
  std::vector<wall_component> components;
};

// 4-connected wall components and their floor/ceiling border points.
inline wall_extraction extract_wall_borders(const image<uint8_t>& seg,
                                            const floor_ceiling_planes& planes,
                                            const camera_intrinsics& k, const rigid_pose& pose) {
  const int w = seg.width(), h = seg.height();
  wall_extraction out;
  out.component_ids = image<int>(w, h, -1);

  auto is_class = [&](int x, int y, surface_class c) {
    return x >= 0 && x < w && y >= 0 && y < h && seg.at(x, y) == uint8_t(c);
  };

  for (int sy = 0; sy < h; sy++) {
    for (int sx = 0; sx < w; sx++) {
      if (seg.at(sx, sy) != uint8_t(surface_class::wall) || out.component_ids.at(sx, sy) >= 0)
        continue;
      wall_component comp;
      comp.id = int(out.components.size());
      std::deque<std::pair<int, int>> queue{{sx, sy}};
      out.component_ids.at(sx, sy) = comp.id;
      while (!queue.empty()) {
        auto [x, y] = queue.front();
        queue.pop_front();
        comp.pixel_count++;
        const int nx[4] = {x - 1, x + 1, x, x};
        const int ny[4] = {y, y, y - 1, y + 1};
        bool is_floor_border = false, is_ceiling_border = false;
        vec3d inner_floor{}, inner_ceiling{};
        for (int n = 0; n < 4; n++) {
          if (is_class(nx[n], ny[n], surface_class::wall)) {
            if (out.component_ids.at(nx[n], ny[n]) < 0) {
              out.component_ids.at(nx[n], ny[n]) = comp.id;
              queue.push_back({nx[n], ny[n]});
            }
            continue;
          }
          auto lift_neighbor = [&](const plane& p) -> std::optional<vec3d> {
            ray r = pixel_to_ray(k, pose, nx[n], ny[n]);
            auto t = ray_plane_intersect(r, p);
            if (!t) return std::nullopt;
            return ray_at(r, *t);
          };
          if (is_class(nx[n], ny[n], surface_class::floor)) {
            if (auto p = lift_neighbor(planes.floor)) {
              is_floor_border = true;
              inner_floor = *p;
            }
          } else if (is_class(nx[n], ny[n], surface_class::ceiling)) {
            if (auto p = lift_neighbor(planes.ceiling)) {
              is_ceiling_border = true;
              inner_ceiling = *p;
            }
          }
        }
        ray wall_ray = pixel_to_ray(k, pose, x, y);
        if (is_floor_border) {
          if (auto t = ray_plane_intersect(wall_ray, planes.floor)) {
            comp.border_points.push_back(ray_at(wall_ray, *t));
            comp.floor_border_count++;
            comp.brackets.push_back({inner_floor, ray_at(wall_ray, *t), false, wall_ray});
          }
        }
        if (is_ceiling_border) {
          if (auto t = ray_plane_intersect(wall_ray, planes.ceiling)) {
            comp.border_points.push_back(ray_at(wall_ray, *t));
            comp.ceiling_border_count++;
            comp.brackets.push_back({inner_ceiling, ray_at(wall_ray, *t), true, wall_ray});
          }
        }
      }
      // discard rule: too few points, or a single border that is too thin
      int total = int(comp.border_points.size());
      bool single_border = comp.floor_border_count == 0 || comp.ceiling_border_count == 0;
      int on_single = std::max(comp.floor_border_count, comp.ceiling_border_count);
      if (total < 3) {
        comp.discarded = true;
        comp.discard_reason = "fewer than 3 border points";
      } else if (single_border && on_single < 2) {
        comp.discarded = true;
        comp.discard_reason = "single border with fewer than 2 points";
      }
      out.components.push_back(std::move(comp));
    }
  }
  return out;
}

struct wall_fit {
  bool accepted = false;
  plane estimate;
  double rms_residual = 0;
  std::string reject_reason;
};

constexpr double wall_fit_residual_threshold = 0.02;  // meters
constexpr double wall_max_normal_z = 0.5;             // reject near-horizontal fits

// Least squares per component with one outlier-rejection refit. Components
// whose border points fail to define a credible wall plane are rejected with
// a reason; rejection is a recorded outcome, not an error.
inline std::vector<wall_fit> fit_wall_planes(const std::vector<wall_component>& components,
                                             double residual_threshold = wall_fit_residual_threshold) {
  std::vector<wall_fit> fits(components.size());
  for (size_t i = 0; i < components.size(); i++) {
    auto& comp = components[i];
    auto& fit = fits[i];
    if (comp.discarded) {
      fit.reject_reason = comp.discard_reason;
      continue;
    }
    std::vector<vec3d> points = comp.border_points;
    plane_fit attempt;
    try {
      attempt = fit_plane_least_squares(points);
      if (attempt.rms_residual > residual_threshold && points.size() > 3) {
        // drop the single worst point and retry once
        size_t worst = 0;
        double worst_dist = -1;
        for (size_t j = 0; j < points.size(); j++) {
          double d = std::abs(signed_distance(attempt.estimate, points[j]));
          if (d > worst_dist) {
            worst_dist = d;
            worst = j;
          }
        }
        points.erase(points.begin() + long(worst));
        attempt = fit_plane_least_squares(points);
      }
    } catch (const degenerate_points_error&) {
      fit.reject_reason = "border points degenerate (collinear)";
      continue;
    }
    if (attempt.rms_residual > residual_threshold) {
      fit.estimate = attempt.estimate;
      fit.rms_residual = attempt.rms_residual;
      fit.reject_reason = "residual above threshold";
      continue;
    }
    if (std::abs(attempt.estimate.normal.z) > wall_max_normal_z) {
      fit.estimate = attempt.estimate;
      fit.rms_residual = attempt.rms_residual;
      fit.reject_reason = "fit is near-horizontal";
      continue;
    }
    fit.accepted = true;
    fit.estimate = attempt.estimate;
    fit.rms_residual = attempt.rms_residual;
  }
  return fits;
}

// ---------------------------------------------------------------------------
// Dataset-level wall model
//
// One physical wall is rarely seen with both of its seams in a single view,
// so per-view fits cannot seed every wall. Instead the pipeline clusters
// bracket midpoints into straight seam lines inside the known floor and
// ceiling planes and then pairs a floor line with a ceiling line to span each
// wall. The near-horizontal guard (|normal_z| <= 0.5) rules out pairings of
// seam lines that belong to different walls.

struct wall_plane_info {
  plane estimate;           // canonical orientation
  plane outward;            // normal pointing out of the room
  size_t support_pairs = 0;
  double margin = 0;        // separation margin after refinement, meters
};

struct wall_plane_set {
  std::vector<wall_plane_info> walls;
};

namespace detail {

// brackets wider than this are occlusion artifacts, not seam observations
constexpr double max_seam_bracket_width = 0.30;

struct plane_basis {
  vec3d origin, u, v;  // orthonormal in-plane axes
};

inline plane_basis basis_of(const plane& p) {
  vec3d n = p.normal;
  vec3d u = normalize(std::abs(n.z) > 0.9 ? cross(n, vec3d{1, 0, 0}) : cross(n, vec3d{0, 0, 1}));
  return {p.offset * n, u, cross(n, u)};
}

struct line2 {
  double nx = 0, ny = 0;  // unit line normal, canonical half-circle
  double rho = 0;         // n . point for points on the line
  double rms = 0;
  double extent = 0;
  bool ok = false;
};

inline line2 fit_line2(const std::vector<std::pair<double, double>>& pts) {
  line2 out;
  if (pts.size() < 2) return out;
  double mx = 0, my = 0;
  for (auto& [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= double(pts.size());
  my /= double(pts.size());
  double a = 0, b = 0, c = 0;
  for (auto& [x, y] : pts) {
    double dx = x - mx, dy = y - my;
    a += dx * dx;
    b += dx * dy;
    c += dy * dy;
  }
  double tr = a + c, det = std::sqrt((a - c) * (a - c) + 4 * b * b);
  double lambda_max = (tr + det) / 2, lambda_min = (tr - det) / 2;
  double theta = 0.5 * std::atan2(2 * b, a - c);  // major axis angle
  out.nx = -std::sin(theta);
  out.ny = std::cos(theta);
  if (out.ny < 0 || (out.ny == 0 && out.nx < 0)) {
    out.nx = -out.nx;
    out.ny = -out.ny;
  }
  out.rho = out.nx * mx + out.ny * my;
  out.rms = std::sqrt(std::max(0.0, lambda_min) / double(pts.size()));
  out.extent = 2 * std::sqrt(std::max(0.0, lambda_max) / double(pts.size()));
  out.ok = true;
  return out;
}

struct seam_line {
  line2 line;
  std::vector<vec3d> midpoints;           // 3D member bracket midpoints
  std::vector<std::pair<double, double>> pts2d;
};

// Cluster bracket midpoints into straight seam lines within one horizontal
// plane. A component may span several walls (image corners), so its midpoints
// are first ordered by azimuth around the camera footprint and greedily split
// into straight runs; the straightness tolerance follows the local pixel
// footprint, which the bracket width measures directly.
inline std::vector<seam_line> extract_seam_lines(const std::vector<wall_extraction>& extractions,
                                                 const std::vector<vec3d>& camera_positions,
                                                 const plane& horizontal, bool ceiling_kind) {
  auto basis = basis_of(horizontal);
  auto to2d = [&](vec3d p) {
    vec3d d = p - basis.origin;
    return std::make_pair(dot(d, basis.u), dot(d, basis.v));
  };

  std::vector<seam_line> lines;
  auto same_line = [](const line2& a, const line2& b) {
    double d = a.nx * b.nx + a.ny * b.ny;
    double s = d >= 0 ? 1.0 : -1.0;
    return std::abs(d) > std::cos(0.03) && std::abs(a.rho - s * b.rho) < 0.10;
  };

  auto add_candidate = [&](const std::vector<std::pair<double, double>>& pts,
                           const std::vector<vec3d>& mids, double mean_width) {
    if (pts.size() < 6) return;
    line2 cand = fit_line2(pts);
    if (!cand.ok || cand.rms > std::max(0.02, 0.6 * mean_width)) return;
    if (cand.extent < std::max(0.3, 3.0 * mean_width)) return;
    seam_line* target = nullptr;
    for (auto& l : lines)
      if (same_line(l.line, cand)) {
        target = &l;
        break;
      }
    if (!target) {
      lines.push_back({});
      target = &lines.back();
      target->line = cand;
    }
    target->pts2d.insert(target->pts2d.end(), pts.begin(), pts.end());
    target->midpoints.insert(target->midpoints.end(), mids.begin(), mids.end());
  };

  for (size_t vi = 0; vi < extractions.size(); vi++) {
    auto cam2d = to2d(camera_positions[vi]);
    for (auto& comp : extractions[vi].components) {
      struct entry {
        double azimuth;
        std::pair<double, double> pt;
        vec3d mid;
        double width;
      };
      std::vector<entry> entries;
      for (auto& br : comp.brackets) {
        if (br.on_ceiling != ceiling_kind) continue;
        // wide brackets come from occluded seams; the midpoints of a straight
        // occluder edge also form a line, so they must not seed candidates
        if (length(br.outer - br.inner) > max_seam_bracket_width) continue;
        vec3d m = bracket_midpoint(br);
        auto q = to2d(m);
        entries.push_back({std::atan2(q.second - cam2d.second, q.first - cam2d.first), q, m,
                           length(br.outer - br.inner)});
      }
      if (entries.size() < 6) continue;
      std::stable_sort(entries.begin(), entries.end(),
                       [](const entry& a, const entry& b) { return a.azimuth < b.azimuth; });

      // greedy straight-run segmentation along the seam polyline
      std::vector<std::pair<double, double>> run;
      std::vector<vec3d> run_mids;
      double width_sum = 0;
      auto flush = [&]() {
        if (!run.empty()) add_candidate(run, run_mids, width_sum / double(run.size()));
        run.clear();
        run_mids.clear();
        width_sum = 0;
      };
      for (auto& e : entries) {
        run.push_back(e.pt);
        run_mids.push_back(e.mid);
        width_sum += e.width;
        if (run.size() >= 6) {
          line2 probe = fit_line2(run);
          if (probe.rms > std::max(0.02, 0.6 * width_sum / double(run.size()))) {
            // the newest point bent the run: close it without that point
            run.pop_back();
            run_mids.pop_back();
            width_sum -= e.width;
            flush();
            run.push_back(e.pt);
            run_mids.push_back(e.mid);
            width_sum += e.width;
          }
        }
      }
      flush();
    }
  }

  // consolidate: globally re-partition every midpoint onto its nearest line,
  // refit, and drop lines that lose their support. Contaminated runs from
  // corner regions dissolve into the true lines here.
  std::vector<std::pair<vec3d, double>> all_mids;  // midpoint, bracket width
  for (auto& ex : extractions)
    for (auto& comp : ex.components)
      for (auto& br : comp.brackets)
        if (br.on_ceiling == ceiling_kind &&
            length(br.outer - br.inner) <= max_seam_bracket_width)
          all_mids.push_back({bracket_midpoint(br), length(br.outer - br.inner)});

  for (int round = 0; round < 3 && !lines.empty(); round++) {
    for (auto& l : lines) {
      l.pts2d.clear();
      l.midpoints.clear();
    }
    for (auto& [m, width] : all_mids) {
      auto q = to2d(m);
      seam_line* best = nullptr;
      double best_dist = std::max(0.03, 0.75 * width);
      for (auto& l : lines) {
        double d = std::abs(l.line.nx * q.first + l.line.ny * q.second - l.line.rho);
        if (d < best_dist) {
          best_dist = d;
          best = &l;
        }
      }
      if (best) {
        best->pts2d.push_back(q);
        best->midpoints.push_back(m);
      }
    }
    std::vector<seam_line> kept;
    for (auto& l : lines) {
      if (l.pts2d.size() < 25) continue;
      l.line = fit_line2(l.pts2d);
      bool duplicate = false;
      for (auto& k : kept)
        if (same_line(k.line, l.line)) duplicate = true;
      if (!duplicate) kept.push_back(std::move(l));
    }
    lines = std::move(kept);
  }
  return lines;
}

// k-th order statistics of the inner/outer projections. Using the 3rd
// extreme instead of the 1st tolerates a couple of contaminated pairs per
// side; the inward and outward biases cancel at the band midpoint.
struct projection_band {
  double max_inner = -1e300;
  double min_outer = 1e300;
  double width() const { return min_outer - max_inner; }
};

inline projection_band band_of(const std::vector<border_bracket>& pairs, vec3d m, int k = 3) {
  std::array<double, 3> top_inner{-1e300, -1e300, -1e300};  // descending
  std::array<double, 3> low_outer{1e300, 1e300, 1e300};     // ascending
  k = std::min<int>(k, 3);
  for (auto& b : pairs) {
    double pi = dot(m, b.inner);
    for (int i = 0; i < 3; i++)
      if (pi > top_inner[i]) {
        for (int j = 2; j > i; j--) top_inner[j] = top_inner[j - 1];
        top_inner[i] = pi;
        break;
      }
    double po = dot(m, b.outer);
    for (int i = 0; i < 3; i++)
      if (po < low_outer[i]) {
        for (int j = 2; j > i; j--) low_outer[j] = low_outer[j - 1];
        low_outer[i] = po;
        break;
      }
  }
  return {top_inner[k - 1], low_outer[k - 1]};
}

// Maximize the separation band between inside and outside lift points over
// unit normals near the seed. The true wall plane keeps the band nonnegative.
inline std::pair<vec3d, double> max_margin_normal(const std::vector<border_bracket>& pairs,
                                                  vec3d seed_outward) {
  const int k = pairs.size() >= 500 ? 3 : 2;
  auto margin_of = [&](vec3d m) { return band_of(pairs, m, k).width(); };
  vec3d m0 = normalize(seed_outward);
  vec3d u = normalize(std::abs(m0.z) < 0.9 ? cross(m0, vec3d{0, 0, 1}) : cross(m0, vec3d{1, 0, 0}));
  vec3d v = cross(m0, u);

  auto direction = [&](double a, double b) { return normalize(m0 + a * u + b * v); };

  constexpr double golden = 0.6180339887498949;
  auto golden_max = [&](auto&& f, double lo, double hi, int iters) {
    double x1 = hi - golden * (hi - lo), x2 = lo + golden * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int i = 0; i < iters; i++) {
      if (f1 < f2) {
        lo = x1; x1 = x2; f1 = f2;
        x2 = lo + golden * (hi - lo); f2 = f(x2);
      } else {
        hi = x2; x2 = x1; f2 = f1;
        x1 = hi - golden * (hi - lo); f1 = f(x1);
      }
    }
    double x = (lo + hi) / 2;
    return std::make_pair(x, f(x));
  };

  const double range = 0.06;  // radians of tilt to search around the seed
  auto outer = [&](double a) {
    return golden_max([&](double b) { return margin_of(direction(a, b)); }, -range, range, 40).second;
  };
  double best_a = golden_max(outer, -range, range, 40).first;
  auto [best_b, best_margin] =
      golden_max([&](double b) { return margin_of(direction(best_a, b)); }, -range, range, 40);
  if (best_margin <= 0) return {direction(best_a, best_b), best_margin};

  // The max-margin point sits anywhere in the feasible wedge of separating
  // planes; centering each tilt axis within its zero-margin boundaries
  // halves the worst-case angular error (which dominates depth error at the
  // room extremes).
  auto feasible_interval = [&](auto&& w_of, double center) {
    double lo = -range, hi = range;
    double a = center, b = -range;  // find lower boundary in [-range, center]
    if (w_of(-range) < 0) {
      for (int i = 0; i < 50; i++) {
        double m = (a + b) / 2;
        (w_of(m) >= 0 ? a : b) = m;
      }
      lo = a;
    }
    a = center;
    b = range;
    if (w_of(range) < 0) {
      for (int i = 0; i < 50; i++) {
        double m = (a + b) / 2;
        (w_of(m) >= 0 ? a : b) = m;
      }
      hi = a;
    }
    return (lo + hi) / 2;
  };
  // Probe the feasible wedge (margin >= 0) along eight directions from the
  // max-margin point and average the boundary midpoints; this approximates
  // the wedge center far better than the max-margin corner itself.
  double center_a = best_a, center_b = best_b;
  for (int round = 0; round < 2; round++) {
    double sum_a = 0, sum_b = 0;
    int used = 0;
    for (int k = 0; k < 8; k++) {
      double phi = k * pi / 4;
      double da = std::cos(phi), db = std::sin(phi);
      auto w_of = [&](double s) { return margin_of(direction(center_a + s * da, center_b + s * db)); };
      double s_mid = feasible_interval(w_of, 0.0);
      sum_a += center_a + s_mid * da;
      sum_b += center_b + s_mid * db;
      used++;
    }
    if (!used) break;
    double na = sum_a / used, nb = sum_b / used;
    if (margin_of(direction(na, nb)) < 0) break;
    center_a = na;
    center_b = nb;
  }
  double centered_margin = margin_of(direction(center_a, center_b));
  if (centered_margin >= 0) return {direction(center_a, center_b), centered_margin};
  return {direction(best_a, best_b), best_margin};
}

// Tilt refinement by interval regression. The global band constrains the
// plane through its four extreme points only; here the pairs are bucketed
// along the seam direction (per horizontal plane), each bucket yields a local
// band, and a weighted least-squares fit of offset + two tilts through the
// band centers pools all buckets. Returns a refined outward plane, or the
// input when the data is too thin.
inline plane interval_regression_plane(const std::vector<border_bracket>& pairs,
                                       const plane& polished_outward) {
  vec3d m = polished_outward.normal;
  vec3d up{0, 0, 1};
  vec3d along = cross(m, up);
  if (length(along) < 0.5) return polished_outward;  // wall guard should prevent this
  along = normalize(along);
  vec3d vert = cross(m, along);  // spans the remaining tilt direction

  struct bucket {
    double lo = -1e300, hi = 1e300;  // band on the plane offset at (u, v)
    double u_sum = 0, v_sum = 0;
    size_t n = 0;
    double min_width = 1e300;
  };
  double u_min = 1e300, u_max = -1e300;
  for (auto& b : pairs) {
    double u = dot(along, bracket_midpoint(b));
    u_min = std::min(u_min, u);
    u_max = std::max(u_max, u);
  }
  if (!(u_max > u_min)) return polished_outward;
  constexpr int slots = 12;
  std::array<bucket, 2 * slots> buckets;  // [ceiling? * slots + slot]
  for (auto& b : pairs) {
    vec3d mid = bracket_midpoint(b);
    double u = dot(along, mid);
    int slot = std::min(slots - 1, int((u - u_min) / (u_max - u_min) * slots));
    bucket& bk = buckets[(b.on_ceiling ? slots : 0) + slot];
    bk.lo = std::max(bk.lo, dot(m, b.inner));
    bk.hi = std::min(bk.hi, dot(m, b.outer));
    bk.u_sum += u;
    bk.v_sum += dot(vert, mid);
    bk.n++;
    bk.min_width = std::min(bk.min_width, length(b.outer - b.inner));
  }

  // Every bucket band provably contains the true plane, so the model
  // parameters (off, alpha, beta) with off + alpha*u_s + beta*v_s in
  // [lo_s, hi_s] form a small convex polytope. Enumerate its vertices from
  // the constraint planes and average the feasible ones; that centers the
  // estimate far better than fitting the band midpoints.
  struct half_space {
    double u, v, bound;
    bool upper;  // off + alpha*u + beta*v <= bound (upper) or >= bound
  };
  std::vector<half_space> constraints;
  int floor_buckets = 0, ceiling_buckets = 0;
  for (size_t bi = 0; bi < buckets.size(); bi++) {
    auto& bk = buckets[bi];
    if (bk.n < 4 || bk.hi <= bk.lo) continue;
    (bi < slots ? floor_buckets : ceiling_buckets)++;
    double u = bk.u_sum / double(bk.n), v = bk.v_sum / double(bk.n);
    constraints.push_back({u, v, bk.hi, true});
    constraints.push_back({u, v, bk.lo, false});
  }
  // without both seams the vertical tilt is unconstrained
  if (constraints.size() < 8 || floor_buckets < 2 || ceiling_buckets < 2)
    return polished_outward;

  auto feasible = [&](double off, double alpha, double beta) {
    for (auto& c : constraints) {
      double val = off + alpha * c.u + beta * c.v;
      if (c.upper ? val > c.bound + 1e-12 : val < c.bound - 1e-12) return false;
    }
    return true;
  };

  double sum_off = 0, sum_alpha = 0, sum_beta = 0;
  size_t vertices = 0;
  const size_t nc = constraints.size();
  for (size_t i = 0; i < nc; i++) {
    for (size_t j = i + 1; j < nc; j++) {
      for (size_t l = j + 1; l < nc; l++) {
        // solve the 3x3 system  off + alpha*u + beta*v = bound  for the triple
        const half_space* cs[3] = {&constraints[i], &constraints[j], &constraints[l]};
        mat3d a;
        a.m = {{{1, cs[0]->u, cs[0]->v}, {1, cs[1]->u, cs[1]->v}, {1, cs[2]->u, cs[2]->v}}};
        double det = determinant(a);
        if (std::abs(det) < 1e-9) continue;
        auto col_solve = [&](int col) {
          mat3d t = a;
          for (int r = 0; r < 3; r++) t.m[r][col] = cs[r]->bound;
          return determinant(t) / det;
        };
        double off = col_solve(0), alpha = col_solve(1), beta = col_solve(2);
        if (std::abs(alpha) > 0.02 || std::abs(beta) > 0.02) continue;
        if (!feasible(off, alpha, beta)) continue;
        sum_off += off;
        sum_alpha += alpha;
        sum_beta += beta;
        vertices++;
      }
    }
  }
  if (vertices < 3) return polished_outward;
  double off = sum_off / double(vertices);
  double alpha = sum_alpha / double(vertices);
  double beta = sum_beta / double(vertices);
  // plane: m.x = off + alpha*(along.x) + beta*(vert.x)  =>  (m - alpha*along - beta*vert).x = off
  vec3d n = normalize(m - alpha * along - beta * vert);
  return {n, off * dot(n, m) / dot(m, m)};
}

}  // namespace detail

// Build one plane per physical wall: extract seam lines in the floor and the
// ceiling plane, pair them up across planes, seed a plane per pairing, then
// refine each plane with every border bracket observed anywhere.
inline wall_plane_set build_wall_plane_set(const std::vector<wall_extraction>& extractions,
                                           const std::vector<vec3d>& camera_positions,
                                           const floor_ceiling_planes& fc,
                                           vec3d room_interior_point,
                                           size_t min_pairs_for_refine = 50,
                                           size_t min_support_pairs = 30) {
  auto floor_lines = detail::extract_seam_lines(extractions, camera_positions, fc.floor, false);
  auto ceiling_lines = detail::extract_seam_lines(extractions, camera_positions, fc.ceiling, true);

  // candidate pairings ordered by how vertical the spanned plane is
  struct pairing {
    size_t f, c;
    double abs_nz;
    plane seed;
  };
  std::vector<pairing> pairings;
  for (size_t fi = 0; fi < floor_lines.size(); fi++) {
    for (size_t ci = 0; ci < ceiling_lines.size(); ci++) {
      auto& fl = floor_lines[fi].line;
      auto& cl = ceiling_lines[ci].line;
      double dirdot = std::abs(fl.nx * cl.nx + fl.ny * cl.ny);
      if (dirdot < std::cos(0.05)) continue;
      std::vector<vec3d> pts = floor_lines[fi].midpoints;
      pts.insert(pts.end(), ceiling_lines[ci].midpoints.begin(), ceiling_lines[ci].midpoints.end());
      plane_fit fit;
      try {
        fit = fit_plane_least_squares(pts);
      } catch (const degenerate_points_error&) {
        continue;
      }
      if (fit.rms_residual > 0.05) continue;
      if (std::abs(fit.estimate.normal.z) > wall_max_normal_z) continue;
      pairings.push_back({fi, ci, std::abs(fit.estimate.normal.z), fit.estimate});
    }
  }
  std::stable_sort(pairings.begin(), pairings.end(),
                   [](const pairing& a, const pairing& b) { return a.abs_nz < b.abs_nz; });

  struct cluster {
    plane seed;
    std::vector<border_bracket> pairs;
  };
  std::vector<cluster> clusters;
  auto same_plane = [](const plane& a, const plane& b) {
    double s = dot(a.normal, b.normal);
    return std::abs(s) > 0.999 && std::abs(a.offset - (s >= 0 ? b.offset : -b.offset)) < 0.05;
  };
  std::vector<bool> floor_used(floor_lines.size(), false), ceiling_used(ceiling_lines.size(), false);
  for (auto& p : pairings) {
    if (floor_used[p.f] || ceiling_used[p.c]) continue;
    floor_used[p.f] = true;
    ceiling_used[p.c] = true;
    bool duplicate = false;
    for (auto& cl : clusters)
      if (same_plane(cl.seed, p.seed)) duplicate = true;
    if (!duplicate) clusters.push_back({p.seed, {}});
  }

  // outward seed orientation per cluster: room interior on the negative side
  std::vector<plane> outward_seed;
  for (auto& cl : clusters) {
    vec3d n = signed_distance(cl.seed, room_interior_point) < 0 ? cl.seed.normal : -cl.seed.normal;
    outward_seed.push_back({n, dot(n, cl.seed.normal) > 0 ? cl.seed.offset : -cl.seed.offset});
  }

  // Assign + refine against a set of outward plane hypotheses. A pair
  // constrains the wall its wall ray exits through (the first outward plane
  // crossing; exact for convex rooms), which keeps corner pairs from ever
  // attaching to the neighboring wall with inverted sides.
  auto assign_and_refine = [&](std::vector<plane> hypotheses) {
    constexpr double straddle_slack = 0.002;  // allowance for hypothesis error
    std::vector<std::vector<border_bracket>> assigned(hypotheses.size());
    std::vector<size_t> claims(hypotheses.size(), 0), violations(hypotheses.size(), 0);
    for (auto& ex : extractions) {
      for (auto& comp : ex.components) {
        for (auto& b : comp.brackets) {
          int exit_wall = -1;
          double exit_t = 1e300;
          for (size_t ci = 0; ci < hypotheses.size(); ci++) {
            double denom = dot(hypotheses[ci].normal, b.wall_ray.direction);
            if (denom <= parallel_threshold) continue;
            double t = (hypotheses[ci].offset - dot(hypotheses[ci].normal, b.wall_ray.origin)) / denom;
            if (t > 0 && t < exit_t) {
              exit_t = t;
              exit_wall = int(ci);
            }
          }
          if (exit_wall < 0) continue;
          auto& h = hypotheses[exit_wall];
          if (std::abs(signed_distance(h, bracket_midpoint(b))) > 0.10) continue;
          claims[exit_wall]++;
          if (!(signed_distance(h, b.inner) <= straddle_slack &&
                signed_distance(h, b.outer) >= -straddle_slack)) {
            if (signed_distance(h, b.inner) > 0.01 || signed_distance(h, b.outer) < -0.01)
              violations[exit_wall]++;
            continue;
          }
          assigned[exit_wall].push_back(b);
        }
      }
    }
    std::vector<wall_plane_info> walls;
    for (size_t ci = 0; ci < hypotheses.size(); ci++) {
      auto& pairs = assigned[ci];
      if (pairs.size() < min_support_pairs) continue;  // spurious cluster
      // a plane crossing a real wall contradicts the pairs it captures there
      if (violations[ci] > 15 && violations[ci] > claims[ci] / 5) continue;
      wall_plane_info info;
      info.support_pairs = pairs.size();
      vec3d outward_n = hypotheses[ci].normal;
      double outward_off = hypotheses[ci].offset;
      if (pairs.size() >= min_pairs_for_refine) {
        auto [m, margin] = detail::max_margin_normal(pairs, outward_n);
        if (margin >= 0) {
          auto band = detail::band_of(pairs, m, pairs.size() >= 500 ? 3 : 2);
          outward_n = m;
          outward_off = (band.max_inner + band.min_outer) / 2;
          info.margin = margin;
          plane refined = detail::interval_regression_plane(pairs, {outward_n, outward_off});
          outward_n = refined.normal;
          outward_off = refined.offset;
        }
      }
      info.outward = {outward_n, outward_off};
      vec3d canon = orient_canonical(outward_n);
      info.estimate = {canon, dot(canon, outward_n) > 0 ? outward_off : -outward_off};
      walls.push_back(info);
    }
    return walls;
  };

  std::vector<plane> hypotheses;
  for (size_t ci = 0; ci < clusters.size(); ci++) hypotheses.push_back(outward_seed[ci]);
  auto walls = assign_and_refine(hypotheses);

  // merge near-duplicate refined planes (keep the better-supported one) and
  // re-run assignment so their evidence pools into a single estimate
  std::stable_sort(walls.begin(), walls.end(),
                   [](const wall_plane_info& a, const wall_plane_info& b) {
                     return a.support_pairs > b.support_pairs;
                   });
  std::vector<plane> merged;
  for (auto& w : walls) {
    bool duplicate = false;
    for (auto& m : merged) {
      double s = dot(m.normal, w.outward.normal);
      if (s > 0.999 && std::abs(m.offset - w.outward.offset) < 0.05) duplicate = true;
    }
    if (!duplicate) merged.push_back(w.outward);
  }
  walls = assign_and_refine(merged);
  // one more pass: with near-final planes the exit assignment is stable and
  // the interval refinement sees its final pair sets
  merged.clear();
  for (auto& w : walls) merged.push_back(w.outward);
  walls = assign_and_refine(merged);

  wall_plane_set out;
  out.walls = std::move(walls);
  return out;
}

// ---------------------------------------------------------------------------
// Prior maps

struct prior_map {
  image<double> depth;          // meters; 0 = no prior
  image<uint8_t> source_class;  // surface_class id the prior came from; 0 = none
  std::vector<wall_fit> component_fits;  // per-view component outcomes
};

namespace detail {

// Exit distance through the wall set for a ray inside a convex room, with the
// hit constrained to lie between floor and ceiling.
inline std::optional<double> wall_exit_distance(const ray& r, const wall_plane_set& walls,
                                                const floor_ceiling_planes& fc) {
  double best = 1e300;
  for (auto& w : walls.walls) {
    double denom = dot(w.outward.normal, r.direction);
    if (denom <= parallel_threshold) continue;  // moving away from this wall
    double t = (w.outward.offset - dot(w.outward.normal, r.origin)) / denom;
    if (t > 0 && t < best) best = t;
  }
  if (best >= 1e300) return std::nullopt;
  vec3d p = ray_at(r, best);
  if (signed_distance(fc.floor, p) < -1e-6) return std::nullopt;
  if (signed_distance(fc.ceiling, p) > 1e-6) return std::nullopt;
  return best;
}

}  // namespace detail

// Per-pixel priors with an explicit wall model (the dataset pipeline path).
inline prior_map compute_prior_map_with_walls(const image<uint8_t>& seg,
                                              const camera_intrinsics& k, const rigid_pose& pose,
                                              const floor_ceiling_planes& fc,
                                              const wall_plane_set& walls) {
  prior_map out;
  out.depth = image<double>(seg.width(), seg.height(), 0.0);
  out.source_class = image<uint8_t>(seg.width(), seg.height(), 0);
  for (int y = 0; y < seg.height(); y++) {
    for (int x = 0; x < seg.width(); x++) {
      auto cls = surface_class(seg.at(x, y));
      if (cls == surface_class::other) continue;
      ray r = pixel_to_ray(k, pose, x, y);
      std::optional<double> t;
      if (cls == surface_class::floor)
        t = ray_plane_intersect(r, fc.floor);
      else if (cls == surface_class::ceiling)
        t = ray_plane_intersect(r, fc.ceiling);
      else
        t = detail::wall_exit_distance(r, walls, fc);
      if (t && *t > 0) {
        out.depth.at(x, y) = *t;
        out.source_class.at(x, y) = uint8_t(cls);
      }
    }
  }
  return out;
}

// Self-contained per-view priors: wall planes come from this view's own
// components (and wall pixels of rejected components get no prior). The
// sample floor ray for the uncalibrated floor/ceiling construction is taken
// from the view itself.
inline prior_map compute_prior_map(const image<uint8_t>& seg, const camera_intrinsics& k,
                                   const rigid_pose& pose, const calibration_input& calib) {
  validate(calib);
  std::optional<ray> floor_ray;
  for (int y = 0; y < seg.height() && !floor_ray; y++)
    for (int x = 0; x < seg.width() && !floor_ray; x++)
      if (seg.at(x, y) == uint8_t(surface_class::floor)) floor_ray = pixel_to_ray(k, pose, x, y);
  // calibrated mode ignores the sample ray
  ray sample = floor_ray.value_or(ray{{0, 0, 1}, {0, 0, -1}});
  if (!floor_ray && calib.mode == calibration_input::mode_t::uncalibrated)
    throw ambiguous_floor_error{};
  auto fc = estimate_floor_ceiling_planes(calib, sample);

  auto extraction = extract_wall_borders(seg, fc, k, pose);
  auto fits = fit_wall_planes(extraction.components);

  prior_map out;
  out.depth = image<double>(seg.width(), seg.height(), 0.0);
  out.source_class = image<uint8_t>(seg.width(), seg.height(), 0);
  out.component_fits = fits;
  for (int y = 0; y < seg.height(); y++) {
    for (int x = 0; x < seg.width(); x++) {
      auto cls = surface_class(seg.at(x, y));
      if (cls == surface_class::other) continue;
      ray r = pixel_to_ray(k, pose, x, y);
      std::optional<double> t;
      if (cls == surface_class::floor)
        t = ray_plane_intersect(r, fc.floor);
      else if (cls == surface_class::ceiling)
        t = ray_plane_intersect(r, fc.ceiling);
      else {
        int comp = extraction.component_ids.at(x, y);
        if (comp >= 0 && fits[comp].accepted) t = ray_plane_intersect(r, fits[comp].estimate);
      }
      if (t && *t > 0) {
        out.depth.at(x, y) = *t;
        out.source_class.at(x, y) = uint8_t(cls);
      }
    }
  }
  return out;
}

struct dataset_priors {
  std::vector<prior_map> per_view;  // aligned with the input views
  floor_ceiling_planes fc;
  wall_plane_set walls;
};

// Dataset pipeline: estimate floor/ceiling once, extract borders everywhere,
// build the merged wall model, then intersect every architectural pixel.
inline dataset_priors compute_dataset_priors(const std::vector<dataset_view>& views,
                                             const calibration_input& calib) {
  validate(calib);
  std::optional<ray> floor_ray;
  for (auto& v : views) {
    for (int y = 0; y < v.record.seg.height() && !floor_ray; y++)
      for (int x = 0; x < v.record.seg.width() && !floor_ray; x++)
        if (v.record.seg.at(x, y) == uint8_t(surface_class::floor))
          floor_ray = pixel_to_ray(v.record.intrinsics, v.record.pose, x, y);
    if (floor_ray) break;
  }
  if (!floor_ray) throw ambiguous_floor_error{};
  auto fc = estimate_floor_ceiling_planes(calib, *floor_ray);

  std::vector<wall_extraction> extractions;
  std::vector<std::vector<wall_fit>> fits;
  std::vector<vec3d> cameras;
  vec3d interior{};
  extractions.reserve(views.size());
  for (auto& v : views) {
    extractions.push_back(
        extract_wall_borders(v.record.seg, fc, v.record.intrinsics, v.record.pose));
    fits.push_back(fit_wall_planes(extractions.back().components));
    cameras.push_back(v.record.pose.translation);
    interior += v.record.pose.translation;
  }
  interior = interior / double(views.size());

  dataset_priors out;
  out.fc = fc;
  out.walls = build_wall_plane_set(extractions, cameras, fc, interior);
  out.per_view.reserve(views.size());
  for (size_t i = 0; i < views.size(); i++) {
    auto pm = compute_prior_map_with_walls(views[i].record.seg, views[i].record.intrinsics,
                                           views[i].record.pose, fc, out.walls);
    pm.component_fits = fits[i];
    out.per_view.push_back(std::move(pm));
  }
  return out;
}

struct prior_accuracy {
  double rmse = 0;          // meters, over pixels that have a prior
  double coverage = 0;      // covered / architectural pixels
  size_t covered_pixels = 0;
  size_t architectural_pixels = 0;
};

inline prior_accuracy evaluate_priors(const std::vector<dataset_view>& views,
                                      const std::vector<prior_map>& priors) {
  prior_accuracy acc;
  double ss = 0;
  for (size_t i = 0; i < views.size(); i++) {
    auto& seg = views[i].record.seg;
    auto& depth = views[i].record.depth;
    auto& prior = priors[i].depth;
    for (int y = 0; y < seg.height(); y++)
      for (int x = 0; x < seg.width(); x++) {
        if (seg.at(x, y) == uint8_t(surface_class::other)) continue;
        acc.architectural_pixels++;
        if (prior.at(x, y) <= 0) continue;
        acc.covered_pixels++;
        double err = prior.at(x, y) - depth.at(x, y);
        ss += err * err;
      }
  }
  if (acc.covered_pixels > 0) acc.rmse = std::sqrt(ss / double(acc.covered_pixels));
  if (acc.architectural_pixels > 0)
    acc.coverage = double(acc.covered_pixels) / double(acc.architectural_pixels);
  return acc;
}

}  // namespace voxray
