// Command line driver: dataset generation, depth priors, training,
// rendering, evaluation, and multi-mode comparison reports.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "voxray/voxray.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace voxray;

namespace {

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string dataset_hash(const fs::path& dir) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                (unsigned long long)fnv1a64(file_bytes(dir / "manifest.json")));
  return buf;
}

// simple blue -> cyan -> yellow -> red ramp for depth visualization
vec3d depth_color(double t) {
  t = clamp(t, 0.0, 1.0);
  const vec3d stops[4] = {{0.05, 0.05, 0.45}, {0.0, 0.7, 0.7}, {0.95, 0.85, 0.1}, {0.8, 0.05, 0.05}};
  double s = t * 3;
  int i = std::min(2, int(s));
  return lerp(stops[i], stops[i + 1], s - i);
}

struct train_flags {
  std::string mode = "rgb_only";
  train_config cfg;
  std::string precision = "float32";

  void add_to(CLI::App* cmd) {
    cmd->add_option("--mode", mode,
                    "rgb_only|depth_mse|depth_boundl|patch_bilateral|patch_joint_bilateral|"
                    "patch_regnerf|boundl_plus_joint");
    cmd->add_option("--iterations", cfg.iterations, "training iterations");
    cmd->add_option("--rays", cfg.rays_per_batch, "rays per batch");
    cmd->add_option("--patches", cfg.patches_per_batch, "patches per batch (patch modes)");
    cmd->add_option("--patch-size", cfg.patch_size, "patch side length");
    cmd->add_option("--lambda-color", cfg.weights.lambda_color, "photometric loss weight");
    cmd->add_option("--lambda-depth", cfg.weights.lambda_depth, "depth loss weight");
    cmd->add_option("--lambda-reg", cfg.weights.lambda_reg, "patch regularization weight");
    cmd->add_option("--boundl-sigma", cfg.boundl.gaussian_sigma,
                    "boundary loss Gaussian sigma, meters");
    cmd->add_option("--filter-kernel", cfg.filter.kernel, "bilateral kernel size (odd)");
    cmd->add_option("--filter-sigma-space", cfg.filter.sigma_space, "spatial sigma, pixels");
    cmd->add_option("--filter-sigma-range", cfg.filter.sigma_range, "range sigma, signal units");
    cmd->add_option("--lr", cfg.lr_start, "initial learning rate");
    cmd->add_option("--lr-end", cfg.lr_end, "final learning rate (cosine schedule)");
    cmd->add_option("--seed", cfg.seed, "RNG seed");
    cmd->add_option("--resolution", cfg.field_resolution, "voxel nodes per axis");
    cmd->add_option("--samples", cfg.samples_per_ray, "samples per ray");
    cmd->add_option("--near", cfg.near_plane, "near plane, meters");
    cmd->add_option("--phase-switch", cfg.phase_switch_iteration,
                    "iteration enabling patch regularization (-1: 60% of iterations)");
    cmd->add_option("--log-interval", cfg.log_interval, "iterations between log records");
    cmd->add_option("--precision", precision, "float32|float64")
        ->check(CLI::IsMember({"float32", "float64"}));
  }

  train_config resolve() const {
    auto parsed = parse_train_mode(mode);
    if (!parsed) throw config_invalid_error("unknown mode: " + mode);
    train_config out = cfg;
    out.mode = *parsed;
    return out;
  }
};

ordered_json config_echo(const train_config& cfg, const std::string& precision) {
  ordered_json j;
  j["mode"] = to_string(cfg.mode);
  j["iterations"] = cfg.iterations;
  j["rays_per_batch"] = cfg.rays_per_batch;
  j["patches_per_batch"] = cfg.patches_per_batch;
  j["patch_size"] = cfg.patch_size;
  j["lambda_color"] = cfg.weights.lambda_color;
  j["lambda_depth"] = cfg.weights.lambda_depth;
  j["lambda_reg"] = cfg.weights.lambda_reg;
  j["boundl_sigma"] = cfg.boundl.gaussian_sigma;
  j["filter_kernel"] = cfg.filter.kernel;
  j["filter_sigma_space"] = cfg.filter.sigma_space;
  j["filter_sigma_range"] = cfg.filter.sigma_range;
  j["lr_start"] = cfg.lr_start;
  j["lr_end"] = cfg.lr_end;
  j["seed"] = cfg.seed;
  j["field_resolution"] = cfg.field_resolution;
  j["samples_per_ray"] = cfg.samples_per_ray;
  j["near_plane"] = cfg.near_plane;
  j["phase_switch_iteration"] = cfg.resolved_phase_switch();
  j["precision"] = precision;
  return j;
}

template <typename T>
void run_training(const std::vector<dataset_view>& views, const train_config& cfg,
                  const fs::path& out_dir, const std::string& precision) {
  auto result = train<T>(views, cfg);
  fs::create_directories(out_dir);
  save_checkpoint(out_dir / "checkpoint.vxrf", result.field, result.adam);
  {
    std::ofstream log(out_dir / "train_log.jsonl");
    for (auto& e : result.log) {
      ordered_json j;
      j["iteration"] = e.iteration;
      j["color"] = e.color;
      j["depth"] = e.depth;
      j["reg"] = e.reg;
      j["total"] = e.total;
      j["lambda_reg_active"] = e.lambda_reg_active;
      j["lr"] = e.lr;
      j["seconds"] = e.seconds;
      log << j.dump() << "\n";
    }
  }
  {
    std::ofstream cfg_out(out_dir / "train_config.json");
    cfg_out << config_echo(cfg, precision).dump(2) << "\n";
  }
}

uint32_t checkpoint_scalar_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw checkpoint_error("cannot read " + path.string());
  char magic[4];
  uint32_t version = 0, scalar = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&scalar), 4);
  if (!in || std::memcmp(magic, "VXRF", 4) != 0)
    throw checkpoint_error("not a checkpoint file: " + path.string());
  return scalar;
}

template <typename T>
eval_report eval_checkpoint(const fs::path& ckpt, const std::vector<dataset_view>& views,
                            const std::string& split, double near_plane, int samples) {
  auto [field, adam] = load_checkpoint<T>(ckpt);
  (void)adam;
  return evaluate_field(field, views, split, near_plane, samples);
}

eval_report eval_any(const fs::path& ckpt, const std::vector<dataset_view>& views,
                     const std::string& split, double near_plane, int samples) {
  return checkpoint_scalar_bytes(ckpt) == 4
             ? eval_checkpoint<float>(ckpt, views, split, near_plane, samples)
             : eval_checkpoint<double>(ckpt, views, split, near_plane, samples);
}

ordered_json report_to_json(const eval_report& r, const fs::path& dataset_dir) {
  ordered_json j;
  j["dataset_hash"] = dataset_hash(dataset_dir);
  j["split"] = r.split;
  j["samples_per_ray"] = r.samples_per_ray;
  j["mean_psnr_db"] = r.mean_psnr;
  j["mean_ssim"] = r.mean_ssim;
  if (r.mean_depth_rmse)
    j["mean_depth_rmse_m"] = *r.mean_depth_rmse;
  else
    j["mean_depth_rmse_m"] = nullptr;
  j["lpips"] = "n/a";
  auto views = ordered_json::array();
  for (auto& v : r.per_view) {
    ordered_json jv;
    jv["id"] = v.id;
    jv["psnr_db"] = v.psnr_db;
    jv["ssim"] = v.ssim_value;
    if (v.depth_rmse_m)
      jv["depth_rmse_m"] = *v.depth_rmse_m;
    else
      jv["depth_rmse_m"] = nullptr;
    views.push_back(jv);
  }
  j["views"] = views;
  return j;
}

void write_report_txt(const fs::path& path, const eval_report& r, double seconds) {
  std::ofstream out(path);
  char line[256];
  out << "view    psnr_db     ssim    depth_rmse_m\n";
  for (auto& v : r.per_view) {
    if (v.depth_rmse_m)
      std::snprintf(line, sizeof(line), "%4d  %9.3f  %7.4f  %12.6f\n", v.id, v.psnr_db,
                    v.ssim_value, *v.depth_rmse_m);
    else
      std::snprintf(line, sizeof(line), "%4d  %9.3f  %7.4f  %12s\n", v.id, v.psnr_db,
                    v.ssim_value, "n/a");
    out << line;
  }
  std::snprintf(line, sizeof(line), "mean  %9.3f  %7.4f  %12.6f\n", r.mean_psnr, r.mean_ssim,
                r.mean_depth_rmse.value_or(0.0));
  out << line;
  std::snprintf(line, sizeof(line), "lpips: n/a   runtime_seconds: %.1f\n", seconds);
  out << line;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxel radiance fields with planar architectural depth priors"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from an INI file");

  // ---- generate ----
  auto* generate = app.add_subcommand("generate", "render a procedural scene into a dataset");
  std::string gen_preset, gen_out, gen_stations = "2x2";
  uint64_t gen_seed = 0;
  double gen_spacing = -1, gen_camera_height = -1, gen_noise = 0.05, gen_depth_scale = 0.001;
  int gen_width = 160, gen_height = 288;
  double gen_fov_h = 27, gen_fov_v = 40;
  generate->add_option("--preset", gen_preset, "empty_room|bedroom_like|livingroom_like")
      ->required();
  generate->add_option("--out", gen_out, "output dataset directory")->required();
  generate->add_option("--seed", gen_seed, "RNG seed");
  generate->add_option("--stations", gen_stations, "station grid, e.g. 2x2");
  generate->add_option("--spacing", gen_spacing, "station grid spacing, meters");
  generate->add_option("--camera-height", gen_camera_height, "tripod height, meters");
  generate->add_option("--noise", gen_noise, "station position noise std, meters");
  generate->add_option("--width", gen_width, "image width, pixels");
  generate->add_option("--height", gen_height, "image height, pixels");
  generate->add_option("--fov-h", gen_fov_h, "horizontal field of view, degrees");
  generate->add_option("--fov-v", gen_fov_v, "vertical field of view, degrees");
  generate->add_option("--depth-scale", gen_depth_scale, "meters per stored depth unit");

  // ---- priors ----
  auto* priors_cmd = app.add_subcommand("priors", "compute planar depth priors for a dataset");
  std::string priors_dataset, priors_mode = "calibrated";
  double priors_camera_height = -1, priors_room_height = -1;
  priors_cmd->add_option("--dataset", priors_dataset, "dataset directory")->required();
  priors_cmd->add_option("--mode", priors_mode, "calibrated|uncalibrated")
      ->check(CLI::IsMember({"calibrated", "uncalibrated"}));
  priors_cmd->add_option("--room-height", priors_room_height,
                         "room height, meters (default: manifest value)");
  priors_cmd->add_option("--camera-height", priors_camera_height,
                         "camera height, meters (uncalibrated mode)");

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "optimize a voxel field on a dataset");
  std::string train_dataset, train_out;
  train_flags tf;
  train_cmd->add_option("--dataset", train_dataset, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "run output directory")->required();
  tf.add_to(train_cmd);

  // ---- render ----
  auto* render_cmd = app.add_subcommand("render", "render views from a checkpoint");
  std::string render_ckpt, render_dataset, render_out, render_views = "eval";
  int render_samples = 128;
  double render_near = 0.05;
  render_cmd->add_option("--checkpoint", render_ckpt, "checkpoint file")->required();
  render_cmd->add_option("--dataset", render_dataset, "dataset directory (pose source)")
      ->required();
  render_cmd->add_option("--out", render_out, "output directory")->required();
  render_cmd->add_option("--views", render_views, "all|train|eval or comma-separated ids");
  render_cmd->add_option("--samples", render_samples, "samples per ray");
  render_cmd->add_option("--near", render_near, "near plane, meters");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "compute metrics for a checkpoint");
  std::string eval_ckpt, eval_dataset, eval_out = ".", eval_split = "eval";
  int eval_samples = 128;
  double eval_near = 0.05;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--dataset", eval_dataset, "dataset directory")->required();
  eval_cmd->add_option("--out", eval_out, "report output directory");
  eval_cmd->add_option("--split", eval_split, "train|eval");
  eval_cmd->add_option("--samples", eval_samples, "samples per ray");
  eval_cmd->add_option("--near", eval_near, "near plane, meters");

  // ---- compare ----
  auto* compare_cmd = app.add_subcommand("compare", "train + evaluate several modes");
  std::string cmp_dataset, cmp_out, cmp_modes = "rgb_only,depth_mse,depth_boundl";
  train_flags cmp_tf;
  int cmp_samples = 128;
  compare_cmd->add_option("--dataset", cmp_dataset, "dataset directory")->required();
  compare_cmd->add_option("--out", cmp_out, "output directory")->required();
  compare_cmd->add_option("--modes", cmp_modes, "comma-separated train modes");
  compare_cmd->add_option("--eval-samples", cmp_samples, "samples per ray at evaluation");
  cmp_tf.add_to(compare_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) {
      auto scene = build_scene(gen_preset, gen_seed);
      rig_config rig;
      if (std::sscanf(gen_stations.c_str(), "%dx%d", &rig.stations_x, &rig.stations_y) != 2)
        throw config_invalid_error("--stations must look like 2x2");
      rig.seed = gen_seed;
      rig.position_noise_std = gen_noise;
      rig.fov_h_deg = gen_fov_h;
      rig.fov_v_deg = gen_fov_v;
      rig.camera_height = gen_camera_height > 0 ? gen_camera_height : scene.room_height / 2;
      if (gen_spacing > 0)
        rig.station_spacing = gen_spacing;
      else
        rig.station_spacing = scene.name == "livingroom_like" ? 4.0 : 2.6;
      auto k = intrinsics_from_fov(gen_width, gen_height, gen_fov_h, gen_fov_v);
      auto manifest = generate_dataset(scene, rig, k, gen_out, gen_depth_scale);
      std::cout << "wrote " << manifest.views.size() << " views to " << gen_out << "\n";
    }

    if (*priors_cmd) {
      auto [manifest, views] = read_dataset(priors_dataset);
      calibration_input calib;
      calib.room_height = priors_room_height > 0 ? priors_room_height : manifest.room_height;
      if (priors_mode == "uncalibrated") {
        calib.mode = calibration_input::mode_t::uncalibrated;
        if (priors_camera_height <= 0)
          throw invalid_calibration_error("--camera-height required in uncalibrated mode");
        calib.camera_height = priors_camera_height;
        // three station positions: walk the views until three non-collinear origins appear
        for (auto& v : views) {
          bool duplicate = false;
          for (auto& p : calib.camera_positions)
            if (length(p - v.record.pose.translation) < 1e-9) duplicate = true;
          if (!duplicate) calib.camera_positions.push_back(v.record.pose.translation);
        }
      } else {
        calib.mode = calibration_input::mode_t::calibrated;
      }
      auto priors = compute_dataset_priors(views, calib);

      fs::create_directories(fs::path(priors_dataset) / "prior");
      for (size_t i = 0; i < views.size(); i++) {
        auto name = fs::path(manifest.views[i].rgb_file).filename().string();
        manifest.views[i].prior_file = "prior/" + name;
        save_png_gray16((fs::path(priors_dataset) / *manifest.views[i].prior_file).string(),
                        quantize_depth(priors.per_view[i].depth, manifest.depth_scale));
        views[i].prior = priors.per_view[i].depth;
      }
      write_manifest(priors_dataset, manifest);

      // accuracy report vs the stored (quantized) ground-truth depth
      auto acc = evaluate_priors(views, priors.per_view);
      ordered_json j;
      j["dataset_hash"] = dataset_hash(priors_dataset);
      j["mode"] = priors_mode;
      j["rmse_m"] = acc.rmse;
      j["coverage"] = acc.coverage;
      j["covered_pixels"] = acc.covered_pixels;
      j["architectural_pixels"] = acc.architectural_pixels;
      auto walls = ordered_json::array();
      for (auto& w : priors.walls.walls) {
        ordered_json jw;
        jw["normal"] = {w.estimate.normal.x, w.estimate.normal.y, w.estimate.normal.z};
        jw["offset"] = w.estimate.offset;
        jw["support_pairs"] = w.support_pairs;
        jw["margin_m"] = w.margin;
        walls.push_back(jw);
      }
      j["walls"] = walls;
      std::ofstream out(fs::path(priors_dataset) / "prior_report.json");
      out << j.dump(2) << "\n";
      std::cout << "priors: rmse " << acc.rmse << " m, coverage " << acc.coverage << "\n";
    }

    if (*train_cmd) {
      auto cfg = tf.resolve();
      auto [manifest, views] = read_dataset(train_dataset);
      if (tf.precision == "float64")
        run_training<double>(views, cfg, train_out, tf.precision);
      else
        run_training<float>(views, cfg, train_out, tf.precision);
      std::cout << "checkpoint written to " << train_out << "\n";
    }

    if (*render_cmd) {
      auto [manifest, views] = read_dataset(render_dataset);
      std::vector<int> ids;
      if (render_views == "all" || render_views == "train" || render_views == "eval") {
        for (auto& v : views)
          if (render_views == "all" || v.split == render_views) ids.push_back(v.id);
      } else {
        std::stringstream ss(render_views);
        std::string tok;
        while (std::getline(ss, tok, ',')) ids.push_back(std::stoi(tok));
      }
      fs::create_directories(render_out);
      uint32_t scalar = checkpoint_scalar_bytes(render_ckpt);
      auto render_all = [&](auto field) {
        double far = length(field.bbox_max() - field.bbox_min());
        for (int id : ids) {
          const dataset_view* view = nullptr;
          for (auto& v : views)
            if (v.id == id) view = &v;
          if (!view) throw malformed_manifest_error("no view with id " + std::to_string(id));
          auto [rgb, depth] = render_field_view(field, view->record.intrinsics, view->record.pose,
                                                render_near, far, render_samples);
          char name[32];
          std::snprintf(name, sizeof(name), "rgb_%05d.png", id);
          save_png_rgb8((fs::path(render_out) / name).string(), rgb);
          image<vec3d> depth_vis(depth.width(), depth.height());
          for (int y = 0; y < depth.height(); y++)
            for (int x = 0; x < depth.width(); x++)
              depth_vis.at(x, y) = depth_color(depth.at(x, y) / far);
          std::snprintf(name, sizeof(name), "depth_%05d.png", id);
          save_png_rgb8((fs::path(render_out) / name).string(), depth_vis);
        }
      };
      if (scalar == 4)
        render_all(load_checkpoint<float>(render_ckpt).first);
      else
        render_all(load_checkpoint<double>(render_ckpt).first);
      std::cout << "rendered " << ids.size() << " views to " << render_out << "\n";
    }

    if (*eval_cmd) {
      auto t0 = std::chrono::steady_clock::now();
      auto [manifest, views] = read_dataset(eval_dataset);
      auto report = eval_any(eval_ckpt, views, eval_split, eval_near, eval_samples);
      double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      fs::create_directories(eval_out);
      std::ofstream out(fs::path(eval_out) / "report.json");
      out << report_to_json(report, eval_dataset).dump(2) << "\n";
      write_report_txt(fs::path(eval_out) / "report.txt", report, seconds);
      std::cout << "psnr " << report.mean_psnr << " dB, ssim " << report.mean_ssim;
      if (report.mean_depth_rmse) std::cout << ", depth rmse " << *report.mean_depth_rmse << " m";
      std::cout << "\n";
    }

    if (*compare_cmd) {
      auto [manifest, views] = read_dataset(cmp_dataset);
      std::vector<std::string> modes;
      std::stringstream ss(cmp_modes);
      std::string tok;
      while (std::getline(ss, tok, ',')) modes.push_back(tok);

      ordered_json rows = ordered_json::array();
      std::string txt_table = "mode                      psnr_db     ssim    depth_rmse_m  lpips\n";
      for (auto& mode : modes) {
        train_flags row_tf = cmp_tf;
        row_tf.mode = mode;
        auto cfg = row_tf.resolve();
        fs::path run_dir = fs::path(cmp_out) / mode;
        if (row_tf.precision == "float64")
          run_training<double>(views, cfg, run_dir, row_tf.precision);
        else
          run_training<float>(views, cfg, run_dir, row_tf.precision);
        auto report =
            eval_any(run_dir / "checkpoint.vxrf", views, "eval", cfg.near_plane, cmp_samples);
        std::ofstream report_out(run_dir / "report.json");
        report_out << report_to_json(report, cmp_dataset).dump(2) << "\n";

        ordered_json row;
        row["mode"] = mode;
        row["psnr_db"] = report.mean_psnr;
        row["ssim"] = report.mean_ssim;
        if (report.mean_depth_rmse)
          row["depth_rmse_m"] = *report.mean_depth_rmse;
        else
          row["depth_rmse_m"] = nullptr;
        row["lpips"] = "n/a";
        rows.push_back(row);
        char line[256];
        std::snprintf(line, sizeof(line), "%-24s %9.3f  %7.4f  %12.6f  %5s\n", mode.c_str(),
                      report.mean_psnr, report.mean_ssim, report.mean_depth_rmse.value_or(0.0),
                      "n/a");
        txt_table += line;
      }
      ordered_json j;
      j["dataset_hash"] = dataset_hash(cmp_dataset);
      j["config"] = config_echo(cmp_tf.resolve(), cmp_tf.precision);
      j["rows"] = rows;
      fs::create_directories(cmp_out);
      std::ofstream out(fs::path(cmp_out) / "compare.json");
      out << j.dump(2) << "\n";
      std::ofstream txt(fs::path(cmp_out) / "compare.txt");
      txt << txt_table;
      std::cout << txt_table;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
