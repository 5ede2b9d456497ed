// Evaluation of a trained field against ground truth views: PSNR, SSIM, and
// depth RMSE over prior-covered pixels.

#pragma once

#include <optional>

#include "metrics.hpp"
#include "trainer.hpp"

namespace voxray {

struct view_metrics {
  int id = 0;
  double psnr_db = 0;
  double ssim_value = 0;
  std::optional<double> depth_rmse_m;  // absent when the view has no priors
};

struct eval_report {
  std::vector<view_metrics> per_view;
  double mean_psnr = 0;
  double mean_ssim = 0;
  std::optional<double> mean_depth_rmse;
  int samples_per_ray = 0;
  std::string split;
};

template <typename T>
eval_report evaluate_field(const voxel_field<T>& field, const std::vector<dataset_view>& views,
                           const std::string& split, double near_plane, int samples_per_ray) {
  const double far = length(field.bbox_max() - field.bbox_min());
  eval_report report;
  report.samples_per_ray = samples_per_ray;
  report.split = split;
  double rmse_sum = 0;
  int rmse_count = 0;
  for (auto& v : views) {
    if (!split.empty() && v.split != split) continue;
    auto [rgb, depth] =
        render_field_view(field, v.record.intrinsics, v.record.pose, near_plane, far,
                          samples_per_ray);
    view_metrics m;
    m.id = v.id;
    m.psnr_db = psnr(rgb, v.record.rgb);
    m.ssim_value = ssim(rgb, v.record.rgb);
    if (!v.prior.empty()) {
      image<uint8_t> mask(v.prior.width(), v.prior.height());
      size_t covered = 0;
      for (int y = 0; y < mask.height(); y++)
        for (int x = 0; x < mask.width(); x++) {
          mask.at(x, y) = v.prior.at(x, y) > 0 ? 1 : 0;
          covered += mask.at(x, y);
        }
      if (covered > 0) {
        m.depth_rmse_m = depth_rmse(depth, v.record.depth, mask);
        rmse_sum += *m.depth_rmse_m;
        rmse_count++;
      }
    }
    report.per_view.push_back(m);
    report.mean_psnr += m.psnr_db;
    report.mean_ssim += m.ssim_value;
  }
  if (!report.per_view.empty()) {
    report.mean_psnr /= double(report.per_view.size());
    report.mean_ssim /= double(report.per_view.size());
  }
  if (rmse_count > 0) report.mean_depth_rmse = rmse_sum / rmse_count;
  return report;
}

}  // namespace voxray
