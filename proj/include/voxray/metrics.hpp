// Image quality metrics: PSNR (capped), SSIM with the canonical 11x11
// Gaussian window, and masked depth RMSE.

#pragma once

#include <stdexcept>

#include "image.hpp"
#include "math.hpp"

namespace voxray {

struct metric_shape_error : std::runtime_error {
  metric_shape_error() : std::runtime_error("image shapes differ") {}
};
struct image_too_small_error : std::runtime_error {
  image_too_small_error() : std::runtime_error("image smaller than the SSIM window") {}
};
struct empty_mask_error : std::runtime_error {
  empty_mask_error() : std::runtime_error("depth mask selects no pixels") {}
};

// 10*log10(1/MSE) for images in [0,1], capped at 100 dB for exact matches.
inline double psnr(const image<vec3d>& a, const image<vec3d>& b) {
  if (!a.same_shape(b)) throw metric_shape_error{};
  double sum_sq = 0;
  for (int y = 0; y < a.height(); y++)
    for (int x = 0; x < a.width(); x++) {
      vec3d d = a.at(x, y) - b.at(x, y);
      sum_sq += dot(d, d);
    }
  double mse = sum_sq / (3.0 * a.pixel_count());
  if (mse < 1e-10) return 100.0;
  return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

// 11-tap Gaussian, sigma 1.5, normalized
inline const std::array<double, 11>& ssim_kernel() {
  static const std::array<double, 11> k = [] {
    std::array<double, 11> v{};
    double sum = 0;
    for (int i = 0; i < 11; i++) {
      double d = i - 5;
      v[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
      sum += v[i];
    }
    for (auto& x : v) x /= sum;
    return v;
  }();
  return k;
}

// separable valid-region convolution of one channel
inline image<double> gaussian_valid(const image<double>& src) {
  auto& k = ssim_kernel();
  image<double> horizontal(src.width() - 10, src.height());
  for (int y = 0; y < src.height(); y++)
    for (int x = 0; x < horizontal.width(); x++) {
      double s = 0;
      for (int i = 0; i < 11; i++) s += k[i] * src.at(x + i, y);
      horizontal.at(x, y) = s;
    }
  image<double> out(horizontal.width(), src.height() - 10);
  for (int y = 0; y < out.height(); y++)
    for (int x = 0; x < out.width(); x++) {
      double s = 0;
      for (int i = 0; i < 11; i++) s += k[i] * horizontal.at(x, y + i);
      out.at(x, y) = s;
    }
  return out;
}

inline double ssim_channel(const image<double>& a, const image<double>& b) {
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  image<double> a_sq(a.width(), a.height()), b_sq(a.width(), a.height()),
      ab(a.width(), a.height());
  for (int y = 0; y < a.height(); y++)
    for (int x = 0; x < a.width(); x++) {
      a_sq.at(x, y) = a.at(x, y) * a.at(x, y);
      b_sq.at(x, y) = b.at(x, y) * b.at(x, y);
      ab.at(x, y) = a.at(x, y) * b.at(x, y);
    }
  auto mu_a = gaussian_valid(a), mu_b = gaussian_valid(b);
  auto mu_aa = gaussian_valid(a_sq), mu_bb = gaussian_valid(b_sq), mu_ab = gaussian_valid(ab);
  double total = 0;
  for (int y = 0; y < mu_a.height(); y++)
    for (int x = 0; x < mu_a.width(); x++) {
      double ma = mu_a.at(x, y), mb = mu_b.at(x, y);
      double va = mu_aa.at(x, y) - ma * ma;
      double vb = mu_bb.at(x, y) - mb * mb;
      double cov = mu_ab.at(x, y) - ma * mb;
      double num = (2 * ma * mb + c1) * (2 * cov + c2);
      double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
      total += num / den;
    }
  return total / double(mu_a.pixel_count());
}

}  // namespace detail

// Standard SSIM per channel, averaged, over valid window positions.
inline double ssim(const image<vec3d>& a, const image<vec3d>& b) {
  if (!a.same_shape(b)) throw metric_shape_error{};
  if (a.width() < 11 || a.height() < 11) throw image_too_small_error{};
  double total = 0;
  for (int c = 0; c < 3; c++) {
    image<double> ca(a.width(), a.height()), cb(a.width(), a.height());
    for (int y = 0; y < a.height(); y++)
      for (int x = 0; x < a.width(); x++) {
        ca.at(x, y) = a.at(x, y)[c];
        cb.at(x, y) = b.at(x, y)[c];
      }
    total += detail::ssim_channel(ca, cb);
  }
  return total / 3.0;
}

inline double depth_rmse(const image<double>& rendered, const image<double>& truth,
                         const image<uint8_t>& mask) {
  if (!rendered.same_shape(truth) || !rendered.same_shape(mask)) throw metric_shape_error{};
  double sum_sq = 0;
  size_t count = 0;
  for (int y = 0; y < rendered.height(); y++)
    for (int x = 0; x < rendered.width(); x++) {
      if (!mask.at(x, y)) continue;
      double d = rendered.at(x, y) - truth.at(x, y);
      sum_sq += d * d;
      count++;
    }
  if (count == 0) throw empty_mask_error{};
  return std::sqrt(sum_sq / double(count));
}

}  // namespace voxray
