// Training objectives: photometric MSE, depth MSE, the boundary loss that
// pulls per-ray weight distributions toward a Gaussian at the prior depth,
// bilateral / joint-bilateral patch regularization, and the plain patch
// smoothness baseline. Every loss returns its value and exact gradients with
// respect to the rendered quantities it touches.

#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "math.hpp"

namespace voxray {

struct count_mismatch_error : std::runtime_error {
  count_mismatch_error() : std::runtime_error("input counts differ") {}
};
struct dimension_mismatch_error : std::runtime_error {
  dimension_mismatch_error() : std::runtime_error("patch/guide dimensions differ") {}
};
struct empty_batch_error : std::runtime_error {
  empty_batch_error() : std::runtime_error("patch batch is empty") {}
};

struct loss_weights {
  double lambda_color = 1;
  double lambda_depth = 0;
  double lambda_reg = 0;
};

struct boundl_config {
  double gaussian_sigma = 0.001;  // meters
};

enum class filter_guide { depth, rgb };

struct filter_config {
  int kernel = 9;              // odd
  double sigma_space = 75;     // pixels
  double sigma_range = 10;     // units of the guide signal
  filter_guide guide = filter_guide::depth;
};

// Sum over rays of squared L2 color error; gradient 2(rendered - truth).
template <typename T>
T color_loss(std::span<const vec3<T>> rendered, std::span<const vec3<T>> truth,
             std::span<vec3<T>> d_rendered) {
  if (rendered.size() != truth.size() || rendered.size() != d_rendered.size())
    throw count_mismatch_error{};
  T value = 0;
  for (size_t i = 0; i < rendered.size(); i++) {
    vec3<T> diff = rendered[i] - truth[i];
    value += dot(diff, diff);
    d_rendered[i] = T(2) * diff;
  }
  return value;
}

// Sum over masked rays of squared depth error; unmasked rays contribute
// nothing and get zero gradient.
template <typename T>
T depth_mse_loss(std::span<const T> rendered, std::span<const T> prior,
                 std::span<const uint8_t> mask, std::span<T> d_rendered) {
  if (rendered.size() != prior.size() || rendered.size() != mask.size() ||
      rendered.size() != d_rendered.size())
    throw count_mismatch_error{};
  T value = 0;
  for (size_t i = 0; i < rendered.size(); i++) {
    if (!mask[i]) {
      d_rendered[i] = 0;
      continue;
    }
    T diff = rendered[i] - prior[i];
    value += diff * diff;
    d_rendered[i] = 2 * diff;
  }
  return value;
}

// Boundary loss for one ray: sum_i (w_i - g_i)^2 with Gaussian targets
// g_i = exp(-(t_i - D)^2 / (2 sigma^2)). Gradient goes to the weights.
template <typename T>
T bound_loss_ray(std::span<const T> t, std::span<const T> weight, T prior_depth,
                 const boundl_config& config, std::span<T> d_weight) {
  if (t.size() != weight.size() || t.size() != d_weight.size()) throw count_mismatch_error{};
  const T inv_two_sigma_sq = T(1) / T(2 * config.gaussian_sigma * config.gaussian_sigma);
  T value = 0;
  for (size_t i = 0; i < t.size(); i++) {
    T dt = t[i] - prior_depth;
    T target = std::exp(-dt * dt * inv_two_sigma_sq);
    T diff = weight[i] - target;
    value += diff * diff;
    d_weight[i] = 2 * diff;
  }
  return value;
}

// Edge-preserving filter of a square depth patch. The window is clipped at
// patch borders and renormalized; guide=rgb is the joint bilateral variant.
template <typename T>
std::vector<T> bilateral_filter(std::span<const T> depth, int size,
                                std::span<const vec3<T>> rgb_guide, const filter_config& config) {
  if (depth.size() != size_t(size) * size) throw dimension_mismatch_error{};
  if (config.guide == filter_guide::rgb && rgb_guide.size() != depth.size())
    throw dimension_mismatch_error{};
  const int half = config.kernel / 2;
  const double inv_two_ss = 1.0 / (2 * config.sigma_space * config.sigma_space);
  const double inv_two_sr = 1.0 / (2 * config.sigma_range * config.sigma_range);

  std::vector<T> out(depth.size());
  for (int y = 0; y < size; y++) {
    for (int x = 0; x < size; x++) {
      const size_t q = size_t(y) * size + x;
      // accumulate relative to the center value so constant patches are
      // exact fixed points despite rounding
      double weight_sum = 0, diff_sum = 0;
      for (int ky = std::max(0, y - half); ky <= std::min(size - 1, y + half); ky++) {
        for (int kx = std::max(0, x - half); kx <= std::min(size - 1, x + half); kx++) {
          const size_t p = size_t(ky) * size + kx;
          double dx = kx - x, dy = ky - y;
          double range_sq;
          if (config.guide == filter_guide::depth) {
            double dd = double(depth[q]) - double(depth[p]);
            range_sq = dd * dd;
          } else {
            vec3d dc = vec3d(rgb_guide[q]) - vec3d(rgb_guide[p]);
            range_sq = dot(dc, dc);
          }
          double w = std::exp(-(dx * dx + dy * dy) * inv_two_ss) * std::exp(-range_sq * inv_two_sr);
          weight_sum += w;
          diff_sum += w * (double(depth[p]) - double(depth[q]));
        }
      }
      out[q] = T(double(depth[q]) + diff_sum / weight_sum);
    }
  }
  return out;
}

// One rendered patch: depths and colors in row-major order plus where it
// came from.
template <typename T>
struct rendered_patch {
  int view = 0;
  int x0 = 0, y0 = 0;        // top-left pixel
  std::vector<T> depth;      // S*S
  std::vector<vec3<T>> rgb;  // S*S
};

template <typename T>
struct patch_batch {
  int patch_size = 16;
  std::vector<rendered_patch<T>> patches;
};

// Mean over patches of the per-pixel MSE between the rendered depth patch
// and its filtered version. The filtered patch is a detached target: the
// gradient sees it as a constant.
template <typename T>
T patch_reg_loss(const patch_batch<T>& batch, const filter_config& config,
                 std::vector<std::vector<T>>& d_depth) {
  if (batch.patches.empty()) throw empty_batch_error{};
  const int s = batch.patch_size;
  const T pixel_norm = T(1) / T(s * s);
  const T patch_norm = T(1) / T(batch.patches.size());
  d_depth.assign(batch.patches.size(), {});
  T value = 0;
  for (size_t p = 0; p < batch.patches.size(); p++) {
    auto& patch = batch.patches[p];
    auto filtered = bilateral_filter<T>(patch.depth, s, patch.rgb, config);
    auto& grad = d_depth[p];
    grad.resize(patch.depth.size());
    T patch_value = 0;
    for (size_t i = 0; i < patch.depth.size(); i++) {
      T diff = patch.depth[i] - filtered[i];
      patch_value += diff * diff;
      grad[i] = 2 * diff * pixel_norm * patch_norm;
    }
    value += patch_value * pixel_norm;
  }
  return value * patch_norm;
}

// Depth smoothness over horizontally and vertically adjacent pixel pairs,
// averaged over patches.
template <typename T>
T regnerf_patch_loss(const patch_batch<T>& batch, std::vector<std::vector<T>>& d_depth) {
  if (batch.patches.empty()) throw empty_batch_error{};
  const int s = batch.patch_size;
  const T patch_norm = T(1) / T(batch.patches.size());
  d_depth.assign(batch.patches.size(), {});
  T value = 0;
  for (size_t p = 0; p < batch.patches.size(); p++) {
    auto& patch = batch.patches[p];
    auto& grad = d_depth[p];
    grad.assign(patch.depth.size(), T(0));
    auto at = [&](int x, int y) -> T { return patch.depth[size_t(y) * s + x]; };
    T patch_value = 0;
    for (int y = 0; y < s; y++) {
      for (int x = 0; x < s; x++) {
        if (x + 1 < s) {
          T diff = at(x, y) - at(x + 1, y);
          patch_value += diff * diff;
          grad[size_t(y) * s + x] += 2 * diff * patch_norm;
          grad[size_t(y) * s + x + 1] -= 2 * diff * patch_norm;
        }
        if (y + 1 < s) {
          T diff = at(x, y) - at(x, y + 1);
          patch_value += diff * diff;
          grad[size_t(y) * s + x] += 2 * diff * patch_norm;
          grad[size_t((y + 1)) * s + x] -= 2 * diff * patch_norm;
        }
      }
    }
    value += patch_value;
  }
  return value * patch_norm;
}

struct loss_parts {
  double color = 0;
  double depth = 0;
  double reg = 0;
};

inline double total_loss(const loss_parts& parts, const loss_weights& weights) {
  return weights.lambda_color * parts.color + weights.lambda_depth * parts.depth +
         weights.lambda_reg * parts.reg;
}

}  // namespace voxray
