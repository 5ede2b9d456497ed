// Training loop: seeded ray/patch batching, loss scheduling, gradient
// reduction, Adam updates.
//
// Reproducibility contract: every ray and patch draws from its own counter-
// derived RNG stream, gradients accumulate into a fixed number of block
// buffers addressed by ray index (never by thread), and blocks are reduced
// in index order. Two runs with the same seed produce bitwise-identical
// checkpoints at any thread count.

#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "depth_priors.hpp"
#include "losses.hpp"
#include "parallel.hpp"
#include "volume_render.hpp"
#include "voxel_field.hpp"

namespace voxray {

enum class train_mode {
  rgb_only,
  depth_mse,
  depth_boundl,
  patch_bilateral,
  patch_joint_bilateral,
  patch_regnerf,
  boundl_plus_joint,
};

inline const char* to_string(train_mode m) {
  switch (m) {
    case train_mode::rgb_only: return "rgb_only";
    case train_mode::depth_mse: return "depth_mse";
    case train_mode::depth_boundl: return "depth_boundl";
    case train_mode::patch_bilateral: return "patch_bilateral";
    case train_mode::patch_joint_bilateral: return "patch_joint_bilateral";
    case train_mode::patch_regnerf: return "patch_regnerf";
    case train_mode::boundl_plus_joint: return "boundl_plus_joint";
  }
  return "?";
}

struct config_invalid_error : std::runtime_error {
  explicit config_invalid_error(const std::string& what)
      : std::runtime_error("invalid train config: " + what) {}
};
struct missing_priors_error : std::runtime_error {
  missing_priors_error()
      : std::runtime_error("train mode needs depth priors but the dataset has none") {}
};
struct image_too_small_error_t : std::runtime_error {
  image_too_small_error_t() : std::runtime_error("images smaller than the patch size") {}
};

inline std::optional<train_mode> parse_train_mode(const std::string& name) {
  for (auto m : {train_mode::rgb_only, train_mode::depth_mse, train_mode::depth_boundl,
                 train_mode::patch_bilateral, train_mode::patch_joint_bilateral,
                 train_mode::patch_regnerf, train_mode::boundl_plus_joint})
    if (name == to_string(m)) return m;
  return std::nullopt;
}

inline bool mode_uses_depth(train_mode m) {
  return m == train_mode::depth_mse || m == train_mode::depth_boundl ||
         m == train_mode::boundl_plus_joint;
}
inline bool mode_uses_boundl(train_mode m) {
  return m == train_mode::depth_boundl || m == train_mode::boundl_plus_joint;
}
inline bool mode_uses_patches(train_mode m) {
  return m == train_mode::patch_bilateral || m == train_mode::patch_joint_bilateral ||
         m == train_mode::patch_regnerf || m == train_mode::boundl_plus_joint;
}

struct train_config {
  train_mode mode = train_mode::rgb_only;
  int iterations = 2000;
  int rays_per_batch = 4096;
  int patches_per_batch = 4;
  int patch_size = 16;
  loss_weights weights{10.0, 10.0, 1e-7};
  boundl_config boundl{0.001};
  filter_config filter{};
  double lr_start = 0.15;
  double lr_end = 0.015;
  uint64_t seed = 0;
  int field_resolution = 64;  // nodes per axis
  int samples_per_ray = 128;
  double near_plane = 0.05;
  int phase_switch_iteration = -1;  // patch modes; -1 = 60% of iterations
  int log_interval = 50;

  int resolved_phase_switch() const {
    return phase_switch_iteration >= 0 ? phase_switch_iteration : iterations * 6 / 10;
  }
};

struct train_log_entry {
  int iteration = 0;
  double color = 0, depth = 0, reg = 0;
  double total = 0;
  double lambda_reg_active = 0;
  double lr = 0;
  double seconds = 0;  // wall time since training start
};

// ---------------------------------------------------------------------------
// Batching

struct ray_batch {
  std::vector<ray> rays;
  std::vector<vec3d> gt_rgb;
  std::vector<double> prior_depth;  // 0 where absent
  std::vector<uint8_t> mask;
};

struct patch_location {
  int view = 0;  // index into the train view list
  int x0 = 0, y0 = 0;
};

// Uniform over every train-split pixel; prior depth and mask attached.
inline ray_batch sample_ray_batch(const std::vector<const dataset_view*>& train_views,
                                  size_t count, rng& gen) {
  std::vector<size_t> prefix(train_views.size() + 1, 0);
  for (size_t i = 0; i < train_views.size(); i++)
    prefix[i + 1] = prefix[i] + train_views[i]->record.rgb.pixel_count();
  const size_t total = prefix.back();

  ray_batch batch;
  batch.rays.reserve(count);
  batch.gt_rgb.reserve(count);
  batch.prior_depth.reserve(count);
  batch.mask.reserve(count);
  for (size_t i = 0; i < count; i++) {
    size_t flat = gen.uniform_index(total);
    size_t view = 0;
    while (flat >= prefix[view + 1]) view++;
    size_t local = flat - prefix[view];
    const auto& v = *train_views[view];
    int px = int(local % v.record.rgb.width());
    int py = int(local / v.record.rgb.width());
    batch.rays.push_back(pixel_to_ray(v.record.intrinsics, v.record.pose, px, py));
    batch.gt_rgb.push_back(v.record.rgb.at(px, py));
    double prior = v.prior.empty() ? 0.0 : v.prior.at(px, py);
    batch.prior_depth.push_back(prior);
    batch.mask.push_back(prior > 0 ? 1 : 0);
  }
  return batch;
}

// Patch corners uniform over valid positions; never crosses image borders.
inline std::vector<patch_location> sample_patch_batch(
    const std::vector<const dataset_view*>& train_views, size_t count, int patch_size, rng& gen) {
  for (auto* v : train_views)
    if (v->record.rgb.width() < patch_size || v->record.rgb.height() < patch_size)
      throw image_too_small_error_t{};
  std::vector<patch_location> out;
  out.reserve(count);
  for (size_t i = 0; i < count; i++) {
    patch_location loc;
    loc.view = int(gen.uniform_index(train_views.size()));
    const auto& rec = train_views[loc.view]->record;
    loc.x0 = int(gen.uniform_index(uint64_t(rec.rgb.width() - patch_size + 1)));
    loc.y0 = int(gen.uniform_index(uint64_t(rec.rgb.height() - patch_size + 1)));
    out.push_back(loc);
  }
  return out;
}

// ---------------------------------------------------------------------------

// Scene bounds derived from the data itself: back-projected depth samples
// plus camera origins, padded by 5 percent.
inline std::pair<vec3d, vec3d> scene_bounds(const std::vector<dataset_view>& views) {
  vec3d lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  auto extend = [&](vec3d p) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  };
  for (auto& v : views) {
    extend(v.record.pose.translation);
    for (int y = 0; y < v.record.depth.height(); y += 4)
      for (int x = 0; x < v.record.depth.width(); x += 4)
        extend(ray_at(pixel_to_ray(v.record.intrinsics, v.record.pose, x, y),
                      v.record.depth.at(x, y)));
  }
  vec3d pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

template <typename T>
struct train_result {
  voxel_field<T> field;
  adam_state<T> adam;
  std::vector<train_log_entry> log;
  double far_plane = 0;
};

// Optional observer: called with the current field every `interval`
// iterations (and after the last one).
template <typename T>
struct train_observer {
  int interval = 0;
  std::function<void(int iteration, const voxel_field<T>&)> callback;
};

template <typename T>
train_result<T> train(const std::vector<dataset_view>& views, const train_config& config,
                      const train_observer<T>* observer = nullptr) {
  if (config.iterations <= 0) throw config_invalid_error("iterations must be positive");
  if (config.rays_per_batch <= 0) throw config_invalid_error("rays_per_batch must be positive");
  if (mode_uses_patches(config.mode) && config.patches_per_batch <= 0)
    throw config_invalid_error("patch modes need patches_per_batch > 0");
  if (config.field_resolution < 2) throw config_invalid_error("field_resolution must be >= 2");

  std::vector<const dataset_view*> train_views;
  for (auto& v : views)
    if (v.split == "train") train_views.push_back(&v);
  if (train_views.empty()) throw config_invalid_error("no train-split views");

  if (mode_uses_depth(config.mode)) {
    bool any_prior = false;
    for (auto* v : train_views)
      if (!v->prior.empty()) any_prior = true;
    if (!any_prior) throw missing_priors_error{};
  }

  auto [bbox_lo, bbox_hi] = scene_bounds(views);
  const double far = length(bbox_hi - bbox_lo);
  const int res = config.field_resolution;

  train_result<T> result{
      init_field<T>(res, res, res, bbox_lo, bbox_hi, config.seed),
      adam_state<T>(0),
      {},
      far,
  };
  result.adam = adam_state<T>(result.field.parameter_count());

  constexpr size_t reduction_blocks = 4;  // fixed: part of the determinism contract
  const size_t param_count = result.field.parameter_count();
  std::vector<std::vector<T>> block_grads(reduction_blocks, std::vector<T>(param_count, T(0)));
  std::vector<T> grad(param_count, T(0));

  struct block_losses {
    double color = 0, depth = 0, reg = 0;
  };
  std::vector<block_losses> per_block(reduction_blocks);

  const int n_samples = config.samples_per_ray;
  const int phase_switch = config.resolved_phase_switch();
  const auto t_start = std::chrono::steady_clock::now();

  for (int iter = 0; iter < config.iterations; iter++) {
    double progress = config.iterations > 1 ? double(iter) / (config.iterations - 1) : 1.0;
    double lr = config.lr_end + 0.5 * (config.lr_start - config.lr_end) * (1 + std::cos(pi * progress));

    uint64_t iter_seed = hash_combine(config.seed, uint64_t(iter));
    rng batch_gen(hash_combine(iter_seed, 0x726179ull));
    ray_batch batch = sample_ray_batch(train_views, size_t(config.rays_per_batch), batch_gen);

    const bool patches_active = mode_uses_patches(config.mode) && iter >= phase_switch;
    const double lambda_reg = patches_active ? config.weights.lambda_reg : 0.0;
    std::vector<patch_location> patch_locs;
    filter_config patch_filter = config.filter;
    patch_filter.guide = (config.mode == train_mode::patch_joint_bilateral ||
                          config.mode == train_mode::boundl_plus_joint)
                             ? filter_guide::rgb
                             : filter_guide::depth;
    if (patches_active) {
      rng patch_gen(hash_combine(iter_seed, 0x7061746368ull));
      patch_locs = sample_patch_batch(train_views, size_t(config.patches_per_batch),
                                      config.patch_size, patch_gen);
    }

    for (auto& b : per_block) b = {};
    parallel_blocks(reduction_blocks, reduction_blocks, [&](size_t block, size_t, size_t) {
      std::fill(block_grads[block].begin(), block_grads[block].end(), T(0));
    });
    parallel_blocks(size_t(config.rays_per_batch), reduction_blocks,
                    [&](size_t block, size_t begin, size_t end) {
      auto& grads = block_grads[block];
      auto& losses = per_block[block];
      ray_samples<T> ws;
      backward_buffers<T> bw;
      std::vector<T> d_weight;
      std::vector<typename voxel_field<T>::query_cache> caches;
      for (size_t r = begin; r < end; r++) {
        rng ray_gen(hash_combine(iter_seed, 0x1000000ull + r));
        sample_stratified<T>(config.near_plane, far, n_samples, &ray_gen, ws.t);
        fill_deltas<T>(std::span<const T>(ws.t), far, ws.delta);
        ws.resize(n_samples);
        caches.resize(n_samples);
        for (int i = 0; i < n_samples; i++) {
          vec3d p = ray_at(batch.rays[r], double(ws.t[i]));
          auto sample = result.field.query_cached(vec3<T>(p), caches[i]);
          ws.sigma[i] = sample.sigma;
          ws.color[i] = sample.color;
        }
        compute_weights(ws);
        auto out = render(ws);

        render_upstream<T> up;
        vec3<T> color_diff = out.color - vec3<T>(batch.gt_rgb[r]);
        losses.color += double(dot(color_diff, color_diff));
        up.d_color = T(2 * config.weights.lambda_color) * color_diff;

        if (batch.mask[r] && config.mode == train_mode::depth_mse) {
          T diff = out.depth - T(batch.prior_depth[r]);
          losses.depth += double(diff * diff);
          up.d_depth = T(2 * config.weights.lambda_depth) * diff;
        } else if (batch.mask[r] && mode_uses_boundl(config.mode)) {
          d_weight.resize(ws.size());
          T value = bound_loss_ray<T>(ws.t, ws.weight, T(batch.prior_depth[r]), config.boundl,
                                      d_weight);
          losses.depth += double(value);
          for (auto& g : d_weight) g *= T(config.weights.lambda_depth);
          up.d_weight = d_weight;
        }

        render_backward(ws, up, bw);
        for (int i = 0; i < n_samples; i++)
          result.field.accumulate_cached_gradient(caches[i], bw.d_sigma[i], bw.d_color[i], grads);
      }
    });

    if (patches_active) {
      parallel_blocks(patch_locs.size(), std::min(reduction_blocks, patch_locs.size()),
                      [&](size_t block, size_t begin, size_t end) {
        auto& grads = block_grads[block];
        auto& losses = per_block[block];
        backward_buffers<T> bw;
        const int s = config.patch_size;
        std::vector<ray_samples<T>> pixel_ws(size_t(s) * s);
        std::vector<std::vector<typename voxel_field<T>::query_cache>> pixel_caches(size_t(s) * s);
        for (size_t p = begin; p < end; p++) {
          auto& loc = patch_locs[p];
          const auto& rec = train_views[loc.view]->record;
          patch_batch<T> single;
          single.patch_size = s;
          single.patches.resize(1);
          auto& patch = single.patches[0];
          patch.view = loc.view;
          patch.x0 = loc.x0;
          patch.y0 = loc.y0;
          patch.depth.resize(size_t(s) * s);
          patch.rgb.resize(size_t(s) * s);
          for (int y = 0; y < s; y++) {
            for (int x = 0; x < s; x++) {
              const size_t idx = size_t(y) * s + x;
              rng pix_gen(hash_combine(iter_seed, 0x2000000ull + (p << 16) + idx));
              ray pr = pixel_to_ray(rec.intrinsics, rec.pose, loc.x0 + x, loc.y0 + y);
              auto& ws = pixel_ws[idx];
              auto& caches = pixel_caches[idx];
              sample_stratified<T>(config.near_plane, far, n_samples, &pix_gen, ws.t);
              fill_deltas<T>(std::span<const T>(ws.t), far, ws.delta);
              ws.resize(n_samples);
              caches.resize(n_samples);
              for (int i = 0; i < n_samples; i++) {
                vec3d pos = ray_at(pr, double(ws.t[i]));
                auto sample = result.field.query_cached(vec3<T>(pos), caches[i]);
                ws.sigma[i] = sample.sigma;
                ws.color[i] = sample.color;
              }
              compute_weights(ws);
              auto out = render(ws);
              patch.depth[idx] = out.depth;
              patch.rgb[idx] = out.color;
            }
          }
          std::vector<std::vector<T>> d_depth;
          T value = config.mode == train_mode::patch_regnerf
                        ? regnerf_patch_loss(single, d_depth)
                        : patch_reg_loss(single, patch_filter, d_depth);
          // patch_reg_loss averages over its batch; here each patch is its
          // own batch of one, so rescale to the mean over all patches
          losses.reg += double(value) / double(patch_locs.size());
          const T scale = T(config.weights.lambda_reg / double(patch_locs.size()));
          for (size_t idx = 0; idx < size_t(s) * s; idx++) {
            T g = d_depth[0][idx] * scale;
            if (g == T(0)) continue;
            render_upstream<T> up;
            up.d_depth = g;
            render_backward(pixel_ws[idx], up, bw);
            for (int i = 0; i < n_samples; i++)
              result.field.accumulate_cached_gradient(pixel_caches[idx][i], bw.d_sigma[i],
                                                      bw.d_color[i], grads);
          }
        }
      });
    }

    // ordered reduction: block 0 first, always
    parallel_for(param_count, [&](size_t begin, size_t end) {
      for (size_t e = begin; e < end; e++) {
        T sum = 0;
        for (size_t b = 0; b < reduction_blocks; b++) sum += block_grads[b][e];
        grad[e] = sum;
      }
    });

    result.adam.step++;
    const uint64_t step = result.adam.step;
    parallel_for(param_count, [&](size_t begin, size_t end) {
      adam_step_range<T>(result.field.parameters(), grad, result.adam, lr, step, begin, end);
    });

    if (iter % config.log_interval == 0 || iter == config.iterations - 1) {
      block_losses total{};
      for (auto& b : per_block) {
        total.color += b.color;
        total.depth += b.depth;
        total.reg += b.reg;
      }
      train_log_entry entry;
      entry.iteration = iter;
      entry.color = total.color;
      entry.depth = total.depth;
      entry.reg = total.reg;
      loss_weights active = config.weights;
      active.lambda_reg = lambda_reg;
      if (!mode_uses_depth(config.mode)) active.lambda_depth = 0;
      entry.lambda_reg_active = lambda_reg;
      entry.total = total_loss({total.color, total.depth, total.reg}, active);
      entry.lr = lr;
      entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
      result.log.push_back(entry);
    }
    if (observer && observer->callback && observer->interval > 0 &&
        ((iter + 1) % observer->interval == 0 || iter == config.iterations - 1)) {
      observer->callback(iter + 1, result.field);
    }
  }
  return result;
}

// Deterministic full-frame render of a trained field.
template <typename T>
std::pair<image<vec3d>, image<double>> render_field_view(const voxel_field<T>& field,
                                                         const camera_intrinsics& k,
                                                         const rigid_pose& pose, double near_plane,
                                                         double far_plane, int samples_per_ray) {
  image<vec3d> rgb(k.width, k.height);
  image<double> depth(k.width, k.height);
  parallel_for(size_t(k.height), [&](size_t y_begin, size_t y_end) {
    ray_samples<T> ws;
    for (size_t y = y_begin; y < y_end; y++) {
      for (int x = 0; x < k.width; x++) {
        auto out = render_pixel(field, pixel_to_ray(k, pose, x, int(y)), near_plane, far_plane,
                                samples_per_ray, nullptr, ws);
        rgb.at(x, int(y)) = vec3d(vec3<double>{double(out.color.x), double(out.color.y),
                                               double(out.color.z)});
        depth.at(x, int(y)) = double(out.depth);
      }
    }
  });
  return {std::move(rgb), std::move(depth)};
}

}  // namespace voxray
