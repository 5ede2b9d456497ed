#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "voxray/losses.hpp"
#include "voxray/rng.hpp"

using namespace voxray;

namespace {

// plain clipped-window Gaussian blur, the sigma_range -> infinity limit
std::vector<double> gaussian_blur_oracle(std::span<const double> depth, int size, int kernel,
                                         double sigma_space) {
  int half = kernel / 2;
  std::vector<double> out(depth.size());
  for (int y = 0; y < size; y++)
    for (int x = 0; x < size; x++) {
      double ws = 0, vs = 0;
      for (int ky = std::max(0, y - half); ky <= std::min(size - 1, y + half); ky++)
        for (int kx = std::max(0, x - half); kx <= std::min(size - 1, x + half); kx++) {
          double d2 = double(kx - x) * (kx - x) + double(ky - y) * (ky - y);
          double w = std::exp(-d2 / (2 * sigma_space * sigma_space));
          ws += w;
          vs += w * depth[size_t(ky) * size + kx];
        }
      out[size_t(y) * size + x] = vs / ws;
    }
  return out;
}

// independent double-loop bilateral reference (value-accumulating form)
std::vector<double> bilateral_oracle(std::span<const double> depth, int size,
                                     std::span<const vec3<double>> rgb, const filter_config& cfg) {
  int half = cfg.kernel / 2;
  std::vector<double> out(depth.size());
  for (int y = 0; y < size; y++)
    for (int x = 0; x < size; x++) {
      size_t q = size_t(y) * size + x;
      double ws = 0, vs = 0;
      for (int ky = y - half; ky <= y + half; ky++)
        for (int kx = x - half; kx <= x + half; kx++) {
          if (kx < 0 || ky < 0 || kx >= size || ky >= size) continue;
          size_t p = size_t(ky) * size + kx;
          double spatial = double(kx - x) * (kx - x) + double(ky - y) * (ky - y);
          double range;
          if (cfg.guide == filter_guide::depth) {
            range = (depth[q] - depth[p]) * (depth[q] - depth[p]);
          } else {
            vec3d d = vec3d(rgb[q]) - vec3d(rgb[p]);
            range = dot(d, d);
          }
          double w = std::exp(-spatial / (2 * cfg.sigma_space * cfg.sigma_space)) *
                     std::exp(-range / (2 * cfg.sigma_range * cfg.sigma_range));
          ws += w;
          vs += w * depth[p];
        }
      out[q] = vs / ws;
    }
  return out;
}

}  // namespace

TEST_CASE("color loss") {
  std::vector<vec3<double>> rendered{{0.5, 0.5, 0.5}};
  std::vector<vec3<double>> truth{{0.5, 0.5, 0.5}};
  std::vector<vec3<double>> grad(1);
  CHECK(color_loss<double>(rendered, truth, grad) == 0.0);

  rendered[0] = {0.6, 0.5, 0.5};
  double v = color_loss<double>(rendered, truth, grad);
  CHECK(v == Catch::Approx(0.01).epsilon(1e-12));
  CHECK(grad[0].x == Catch::Approx(0.2).epsilon(1e-12));
  CHECK(grad[0].y == 0.0);

  // permutation invariance of the value
  rng gen(3);
  std::vector<vec3<double>> a, b;
  for (int i = 0; i < 20; i++) {
    a.push_back({gen.uniform(0, 1), gen.uniform(0, 1), gen.uniform(0, 1)});
    b.push_back({gen.uniform(0, 1), gen.uniform(0, 1), gen.uniform(0, 1)});
  }
  std::vector<vec3<double>> g(20);
  double before = color_loss<double>(a, b, g);
  std::reverse(a.begin(), a.end());
  std::reverse(b.begin(), b.end());
  double after = color_loss<double>(a, b, g);
  CHECK(before == Catch::Approx(after).epsilon(1e-12));

  std::vector<vec3<double>> short_truth(5);
  CHECK_THROWS_AS(color_loss<double>(a, short_truth, g), count_mismatch_error);
}

TEST_CASE("depth mse loss") {
  std::vector<double> rendered{2.5}, prior{2.5}, grad(1);
  std::vector<uint8_t> mask{1};
  CHECK(depth_mse_loss<double>(rendered, prior, mask, grad) == 0.0);

  rendered[0] = 2.0;
  double v = depth_mse_loss<double>(rendered, prior, mask, grad);
  CHECK(v == Catch::Approx(0.25).epsilon(1e-12));
  CHECK(grad[0] == Catch::Approx(-1.0).epsilon(1e-12));

  mask[0] = 0;
  CHECK(depth_mse_loss<double>(rendered, prior, mask, grad) == 0.0);
  CHECK(grad[0] == 0.0);
}

TEST_CASE("boundary loss unit values") {
  boundl_config cfg{0.1};
  std::vector<double> t{1, 2, 3};
  std::vector<double> grad(3);

  std::vector<double> w{0, 1, 0};
  double v = bound_loss_ray<double>(t, w, 2.0, cfg, grad);
  CHECK(v < 1e-12);  // off-surface targets are e^-50

  w = {0.5, 0.5, 0};
  v = bound_loss_ray<double>(t, w, 2.0, cfg, grad);
  CHECK(v == Catch::Approx(0.5).margin(1e-12));
  CHECK(grad[0] == Catch::Approx(1.0).margin(1e-12));   // 2(0.5 - ~0)
  CHECK(grad[1] == Catch::Approx(-1.0).margin(1e-12));  // 2(0.5 - 1)

  // a unit weight exactly at the prior depth contributes nothing
  w = {0, 1, 0};
  std::vector<double> t2{1.5, 2.0, 2.5};
  boundl_config tight{0.05};
  v = bound_loss_ray<double>(t2, w, 2.0, tight, grad);
  CHECK(v < 1e-12);
  CHECK(grad[1] == 0.0);  // (1 - e^0) exactly
}

TEST_CASE("boundary loss sigma -> 0 limit") {
  boundl_config cfg{1e-12};
  std::vector<double> t{1, 2, 3};
  std::vector<double> w{0.3, 0.4, 0.2};
  std::vector<double> grad(3);
  double v = bound_loss_ray<double>(t, w, 2.5, cfg, grad);  // grid misses D
  double sum_sq = 0.3 * 0.3 + 0.4 * 0.4 + 0.2 * 0.2;
  CHECK(v == Catch::Approx(sum_sq).epsilon(1e-12));
}

TEST_CASE("bilateral filter properties") {
  const int s = 16;
  filter_config cfg;
  cfg.kernel = 9;
  cfg.sigma_space = 3;
  cfg.sigma_range = 0.1;
  cfg.guide = filter_guide::depth;

  SECTION("constant patches are exact fixed points") {
    std::vector<double> depth(s * s, 2.75);
    auto out = bilateral_filter<double>(depth, s, {}, cfg);
    for (double v : out) CHECK(v == 2.75);
  }

  SECTION("step edges survive a small range sigma") {
    std::vector<double> depth(s * s);
    for (int y = 0; y < s; y++)
      for (int x = 0; x < s; x++) depth[size_t(y) * s + x] = x < s / 2 ? 1.0 : 5.0;
    auto out = bilateral_filter<double>(depth, s, {}, cfg);
    for (size_t i = 0; i < depth.size(); i++) CHECK(std::abs(out[i] - depth[i]) < 1e-6);
  }

  SECTION("sigma_range -> infinity reproduces a plain Gaussian blur") {
    rng gen(7);
    std::vector<double> depth(s * s);
    for (auto& d : depth) d = gen.uniform(1, 3);
    auto wide = cfg;
    wide.sigma_range = 1e9;
    auto out = bilateral_filter<double>(depth, s, {}, wide);
    auto blur = gaussian_blur_oracle(depth, s, cfg.kernel, cfg.sigma_space);
    for (size_t i = 0; i < depth.size(); i++) CHECK(std::abs(out[i] - blur[i]) < 1e-6);
  }

  SECTION("matches the double-loop reference, depth and rgb guides") {
    rng gen(13);
    std::vector<double> depth(s * s);
    std::vector<vec3<double>> rgb(s * s);
    for (auto& d : depth) d = gen.uniform(0.5, 4);
    for (auto& c : rgb) c = {gen.uniform(0, 1), gen.uniform(0, 1), gen.uniform(0, 1)};

    auto out = bilateral_filter<double>(depth, s, rgb, cfg);
    auto expected = bilateral_oracle(depth, s, rgb, cfg);
    for (size_t i = 0; i < depth.size(); i++) CHECK(std::abs(out[i] - expected[i]) < 1e-6);

    auto joint = cfg;
    joint.guide = filter_guide::rgb;
    joint.sigma_range = 0.25;
    auto out_joint = bilateral_filter<double>(depth, s, rgb, joint);
    auto expected_joint = bilateral_oracle(depth, s, rgb, joint);
    for (size_t i = 0; i < depth.size(); i++)
      CHECK(std::abs(out_joint[i] - expected_joint[i]) < 1e-6);
  }

  SECTION("output is a convex combination of inputs") {
    rng gen(29);
    std::vector<double> depth(s * s);
    for (auto& d : depth) d = gen.uniform(0, 10);
    auto out = bilateral_filter<double>(depth, s, {}, cfg);
    double lo = *std::min_element(depth.begin(), depth.end());
    double hi = *std::max_element(depth.begin(), depth.end());
    for (double v : out) {
      CHECK(v >= lo - 1e-12);
      CHECK(v <= hi + 1e-12);
    }
  }

  SECTION("dimension mismatch") {
    std::vector<double> depth(s * s);
    auto bad = cfg;
    bad.guide = filter_guide::rgb;
    CHECK_THROWS_AS(bilateral_filter<double>(depth, s, {}, bad), dimension_mismatch_error);
  }
}

TEST_CASE("patch regularization loss") {
  filter_config cfg;
  cfg.kernel = 9;
  cfg.sigma_space = 3;
  cfg.sigma_range = 0.1;

  patch_batch<double> batch;
  batch.patch_size = 16;

  SECTION("constant patches give zero") {
    rendered_patch<double> p;
    p.depth.assign(256, 1.5);
    p.rgb.assign(256, {0.5, 0.5, 0.5});
    batch.patches.push_back(p);
    std::vector<std::vector<double>> grad;
    CHECK(patch_reg_loss(batch, cfg, grad) == 0.0);
  }

  SECTION("noise patch equals the independently computed residual") {
    rng gen(47);
    rendered_patch<double> p;
    for (int i = 0; i < 256; i++) {
      p.depth.push_back(gen.uniform(1, 2));
      p.rgb.push_back({gen.uniform(0, 1), gen.uniform(0, 1), gen.uniform(0, 1)});
    }
    batch.patches.push_back(p);
    std::vector<std::vector<double>> grad;
    double v = patch_reg_loss(batch, cfg, grad);
    CHECK(v >= 0.0);

    auto filtered = bilateral_oracle(p.depth, 16, p.rgb, cfg);
    double expected = 0;
    for (int i = 0; i < 256; i++) {
      double d = p.depth[i] - filtered[i];
      expected += d * d;
    }
    expected /= 256.0;
    CHECK(v == Catch::Approx(expected).epsilon(1e-9));

    // gradient treats the filtered patch as a constant target
    const double h = 1e-6;
    for (int i = 0; i < 256; i += 37) {
      auto frozen_loss = [&](double depth_i) {
        double sum = 0;
        for (int j = 0; j < 256; j++) {
          double dj = (j == i ? depth_i : p.depth[j]) - filtered[j];
          sum += dj * dj;
        }
        return sum / 256.0;
      };
      double fd = (frozen_loss(p.depth[i] + h) - frozen_loss(p.depth[i] - h)) / (2 * h);
      CHECK(grad[0][i] == Catch::Approx(fd).epsilon(1e-5));
    }
  }

  SECTION("empty batch throws") {
    std::vector<std::vector<double>> grad;
    CHECK_THROWS_AS(patch_reg_loss(batch, cfg, grad), empty_batch_error);
  }
}

TEST_CASE("patch smoothness baseline") {
  patch_batch<double> batch;
  batch.patch_size = 2;
  rendered_patch<double> p;
  p.depth = {1, 2, 1, 2};
  p.rgb.assign(4, {0, 0, 0});
  batch.patches.push_back(p);
  std::vector<std::vector<double>> grad;
  CHECK(regnerf_patch_loss(batch, grad) == Catch::Approx(2.0).epsilon(1e-12));

  // invariant under a constant shift
  for (auto& d : batch.patches[0].depth) d += 7.5;
  CHECK(regnerf_patch_loss(batch, grad) == Catch::Approx(2.0).epsilon(1e-12));

  batch.patches[0].depth = {3, 3, 3, 3};
  CHECK(regnerf_patch_loss(batch, grad) == 0.0);

  // gradient by finite differences on a random patch
  rng gen(51);
  batch.patch_size = 4;
  batch.patches[0].depth.clear();
  for (int i = 0; i < 16; i++) batch.patches[0].depth.push_back(gen.uniform(0, 2));
  batch.patches[0].rgb.assign(16, {0, 0, 0});
  double base_unused = regnerf_patch_loss(batch, grad);
  (void)base_unused;
  const double h = 1e-6;
  for (int i = 0; i < 16; i++) {
    auto b2 = batch;
    b2.patches[0].depth[i] += h;
    std::vector<std::vector<double>> g2;
    double up = regnerf_patch_loss(b2, g2);
    b2.patches[0].depth[i] -= 2 * h;
    double down = regnerf_patch_loss(b2, g2);
    CHECK(grad[0][i] == Catch::Approx((up - down) / (2 * h)).margin(1e-6));
  }
}

TEST_CASE("total loss composition") {
  loss_weights w;
  w.lambda_color = 10;
  w.lambda_depth = 10;
  w.lambda_reg = 0;
  loss_parts parts{0.02, 0.005, 0.0};
  CHECK(total_loss(parts, w) == Catch::Approx(0.25).epsilon(1e-12));

  loss_weights zero;
  zero.lambda_color = 0;
  CHECK(total_loss(parts, zero) == 0.0);

  w.lambda_depth = 20;
  CHECK(total_loss(parts, w) == Catch::Approx(0.2 + 0.1 + 0.0).epsilon(1e-12));
}
