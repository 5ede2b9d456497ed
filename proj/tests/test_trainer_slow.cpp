// Desk-scale end-to-end training check: boundary-loss supervision on the
// empty room carves geometry that reproduces the priors to a few centimeters.
// Slow (a couple of minutes); kept out of the fast unit suites.

#include <catch2/catch_amalgamated.hpp>

#include "voxray/voxray.hpp"

using namespace voxray;

TEST_CASE("boundary-loss training reproduces prior depth on the empty room") {
  auto scene = build_scene("empty_room", 1);
  rig_config rig;
  rig.stations_x = 2;
  rig.stations_y = 2;
  rig.station_spacing = 2.6;
  rig.camera_height = 1.9;
  rig.seed = 1;
  auto views = render_rig_views(scene, rig, intrinsics_from_fov(160, 288, 27, 40));

  calibration_input calib;
  calib.mode = calibration_input::mode_t::calibrated;
  calib.room_height = scene.room_height;
  auto priors = compute_dataset_priors(views, calib);
  for (size_t i = 0; i < views.size(); i++) views[i].prior = priors.per_view[i].depth;

  train_config cfg;
  cfg.mode = train_mode::depth_boundl;
  cfg.iterations = 2000;
  cfg.rays_per_batch = 4096;
  cfg.field_resolution = 96;
  cfg.samples_per_ray = 128;
  cfg.seed = 1;
  cfg.weights.lambda_color = 10;
  cfg.weights.lambda_depth = 10;
  cfg.boundl.gaussian_sigma = 0.09;
  cfg.log_interval = 500;
  auto result = train<float>(views, cfg);

  // mean absolute rendered-vs-prior depth over architectural eval pixels
  double sum_abs = 0;
  size_t count = 0;
  for (auto& v : views) {
    if (v.split != "eval") continue;
    auto [rgb, depth] = render_field_view(result.field, v.record.intrinsics, v.record.pose,
                                          cfg.near_plane, result.far_plane, cfg.samples_per_ray);
    for (int y = 0; y < depth.height(); y++)
      for (int x = 0; x < depth.width(); x++) {
        if (v.prior.at(x, y) <= 0) continue;
        sum_abs += std::abs(depth.at(x, y) - v.prior.at(x, y));
        count++;
      }
  }
  REQUIRE(count > 0);
  double mean_abs = sum_abs / double(count);
  INFO("mean |rendered - prior| = " << mean_abs << " m over " << count << " pixels");
  CHECK(mean_abs < 0.05);
}
