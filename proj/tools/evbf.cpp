// Copyright 2026 The evbf Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: dataset generation, training, evaluation, and
// rendering over the on-disk bundle/checkpoint contract.
//
// Exit codes: 0 success, 2 input/validation, 3 I/O, 4 numeric failure,
// 5 compatibility.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "evbf/eval.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace evbf;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitCompat = 5;

struct CliError : std::runtime_error {
  int code;
  CliError(int code, const std::string& msg)
      : std::runtime_error(msg), code(code) {}
};

bool deterministic_env() {
  const char* v = std::getenv("EVBF_DETERMINISTIC");
  return v && v[0] == '1';
}

// ---- strict config schema ----------------------------------------------

json schema() {
  // Leaves are null; objects list their allowed children.
  json train = {{"iterations", nullptr},
                {"lr_start", nullptr},
                {"lr_end", nullptr},
                {"batch_blur", nullptr},
                {"batch_event", nullptr},
                {"M", nullptr},
                {"n_coarse", nullptr},
                {"n_fine", nullptr},
                {"event_pair_window", nullptr},
                {"seed", nullptr},
                {"deterministic", nullptr},
                {"device", nullptr},
                {"use_event", nullptr},
                {"use_prior", nullptr},
                {"use_ecrf", nullptr},
                {"freeze_refiner", nullptr},
                {"log_every", nullptr},
                {"checkpoint_every", nullptr},
                {"weights",
                 {{"lambda_b", nullptr},
                  {"lambda_e", nullptr},
                  {"lambda_p_init", nullptr},
                  {"lambda_p_decay_iters", nullptr}}},
                {"field",
                 {{"L_x", nullptr},
                  {"L_d", nullptr},
                  {"grid_res", nullptr},
                  {"grid_channels", nullptr},
                  {"coarse_hidden", nullptr},
                  {"fine_hidden", nullptr},
                  {"near", nullptr},
                  {"far", nullptr},
                  {"sigma_bias", nullptr}}},
                {"refiner",
                 {{"L_t", nullptr},
                  {"hidden", nullptr},
                  {"t_min", nullptr},
                  {"t_max", nullptr},
                  {"out_scale", nullptr}}},
                {"ecrf", {{"hidden", nullptr}, {"clamp_eps", nullptr}}}};
  json bundle = {{"image_size", nullptr},   {"focal", nullptr},
                 {"scene_res", nullptr},    {"scene_seed", nullptr},
                 {"duration", nullptr},     {"orbit_radius", nullptr},
                 {"sweep_rad", nullptr},    {"speed_scale", nullptr},
                 {"traj_samples", nullptr}, {"n_frames", nullptr},
                 {"n_holdout", nullptr},    {"tau", nullptr},
                 {"oracle_substeps", nullptr}, {"quadrature_steps", nullptr},
                 {"sim_rate", nullptr},     {"theta_pos", nullptr},
                 {"theta_neg", nullptr},    {"noise_level", nullptr},
                 {"noise_seed", nullptr}};
  json eval = {{"reg_steps", nullptr},
               {"reg_lr", nullptr},
               {"reg_rays", nullptr},
               {"aligned", nullptr}};
  return {{"train", train}, {"bundle", bundle}, {"eval", eval}};
}

void check_keys(const json& doc, const json& allowed, const std::string& path) {
  if (!doc.is_object()) return;
  for (const auto& [key, value] : doc.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!allowed.contains(key))
      throw CliError(kExitValidation, "unknown config key: " + where);
    if (allowed.at(key).is_object()) check_keys(value, allowed.at(key), where);
  }
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw CliError(kExitValidation, "cannot open config " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const std::exception& e) {
    throw CliError(kExitValidation, std::string("config parse error: ") +
                                        e.what());
  }
  check_keys(j, schema(), "");
  return j;
}

BundleConfig bundle_config_from_json(const json& j) {
  BundleConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.focal = j.value("focal", c.focal);
  c.scene_res = j.value("scene_res", c.scene_res);
  c.scene_seed = j.value("scene_seed", c.scene_seed);
  c.duration = j.value("duration", c.duration);
  c.orbit_radius = j.value("orbit_radius", c.orbit_radius);
  c.sweep_rad = j.value("sweep_rad", c.sweep_rad);
  c.speed_scale = j.value("speed_scale", c.speed_scale);
  c.traj_samples = j.value("traj_samples", c.traj_samples);
  c.n_frames = j.value("n_frames", c.n_frames);
  c.n_holdout = j.value("n_holdout", c.n_holdout);
  c.tau = j.value("tau", c.tau);
  c.oracle_substeps = j.value("oracle_substeps", c.oracle_substeps);
  c.quadrature_steps = j.value("quadrature_steps", c.quadrature_steps);
  c.sim_rate = j.value("sim_rate", c.sim_rate);
  c.event_model.theta_pos = j.value("theta_pos", c.event_model.theta_pos);
  c.event_model.theta_neg = j.value("theta_neg", c.event_model.theta_neg);
  c.noise_level = j.value("noise_level", c.noise_level);
  c.noise_seed = j.value("noise_seed", c.noise_seed);
  return c;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  if (!f) throw CliError(kExitIo, "cannot write " + p.string());
  f << text;
  if (!f) throw CliError(kExitIo, "write failure on " + p.string());
}

DatasetBundle load_bundle_checked(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / "meta.json"))
    throw CliError(kExitValidation, "not a bundle directory: " + dir);
  try {
    return load_bundle(dir);
  } catch (const std::exception& e) {
    throw CliError(kExitIo, std::string("bundle load failed: ") + e.what());
  }
}

// Mean pixel displacement of the scene center over each frame's exposure, a
// quick blur-extent diagnostic.
double mean_blur_extent_px(const DatasetBundle& b) {
  const Vec3 probes[5] = {{0, 0, 0}, {0.3, 0, 0}, {-0.3, 0, 0},
                          {0, 0.3, 0}, {0, -0.3, 0}};
  auto project = [&](const Pose& pose, const Vec3& p) {
    const Vec3 pc = pose.inverse().apply(p);
    return Eigen::Vector2d(b.intr.fx * pc.x() / pc.z() + b.intr.cx,
                           b.intr.fy * pc.y() / pc.z() + b.intr.cy);
  };
  double sum = 0.0;
  for (const ExposureSpec& e : b.exposures) {
    const Pose a = slerp_interpolate(b.traj_true, e.t_begin());
    const Pose c = slerp_interpolate(b.traj_true, e.t_end());
    double d = 0.0;
    for (const Vec3& p : probes) d += (project(a, p) - project(c, p)).norm();
    sum += d / 5.0;
  }
  return b.exposures.empty() ? 0.0 : sum / b.exposures.size();
}

// ---- commands -----------------------------------------------------------

int cmd_gen_data(const std::string& config_path, const std::string& out,
                 int noise_level, long long seed, double speed_scale) {
  const json cfg_json = load_config(config_path);
  BundleConfig cfg = bundle_config_from_json(cfg_json.value("bundle", json::object()));
  if (noise_level >= 0) cfg.noise_level = noise_level;
  if (seed >= 0) cfg.noise_seed = static_cast<uint64_t>(seed);
  if (speed_scale > 0) cfg.speed_scale = speed_scale;
  if (cfg.noise_level < 0 || cfg.noise_level > 4)
    throw CliError(kExitValidation, "noise_level must be in [0, 4]");

  const DatasetBundle bundle = generate_dataset(cfg);
  try {
    save_bundle(bundle, out);
  } catch (const std::exception& e) {
    throw CliError(kExitIo, std::string("bundle write failed: ") + e.what());
  }
  std::cout << "events: " << bundle.events.size() << "\n"
            << "mean blur extent (px): " << mean_blur_extent_px(bundle) << "\n"
            << "trajectory length (m): " << bundle.traj_true.total_arc_length()
            << std::endl;
  return 0;
}

int cmd_train(const std::string& bundle_dir, const std::string& config_path,
              const std::string& out, const std::string& resume, int iters,
              bool frame_only, bool no_event, bool no_prior, bool no_ecrf,
              bool freeze_refiner) {
  const DatasetBundle bundle = load_bundle_checked(bundle_dir);
  const json cfg_json = load_config(config_path);
  TrainConfig cfg = train_config_from_json(cfg_json.value("train", json::object()));
  if (iters >= 0) cfg.iterations = iters;
  if (frame_only || no_event) cfg.use_event = false;
  if (frame_only || no_prior) cfg.use_prior = false;
  if (no_ecrf) cfg.use_ecrf = false;
  if (freeze_refiner) cfg.freeze_refiner = true;
  if (deterministic_env()) cfg.deterministic = true;

  TrainerState state;
  if (!resume.empty()) {
    try {
      state = load_checkpoint(resume);
    } catch (const std::exception& e) {
      throw CliError(kExitCompat, e.what());
    }
    if (state.intrinsics_hash != bundle.intrinsics_hash())
      throw CliError(kExitCompat, "checkpoint/bundle intrinsics mismatch");
    if (iters >= 0) state.config.iterations = iters;
  } else {
    state = init_trainer(bundle, cfg);
  }

  fs::create_directories(out);
  std::ofstream loss_csv(fs::path(out) / "loss.csv");
  loss_csv << "iter,total,blur,event,prior,lambda_p,lr\n";
  loss_csv.precision(12);
  const int ckpt_every = state.config.checkpoint_every;
  int last_ckpt = -1;
  try {
    train(state, bundle, nullptr, [&](const TrainLogEntry& e) {
      loss_csv << e.iter << ',' << e.total << ',' << e.blur << ',' << e.event
               << ',' << e.prior << ',' << e.lambda_p << ',' << e.lr << '\n';
      std::cout << "iter " << e.iter << " total " << e.total << std::endl;
      if (ckpt_every > 0 && e.iter - last_ckpt >= ckpt_every) {
        save_checkpoint(state,
                        (fs::path(out) / "checkpoint_latest.ckpt").string());
        last_ckpt = e.iter;
      }
    });
  } catch (const std::runtime_error& e) {
    throw CliError(kExitNumeric, e.what());
  }
  try {
    save_checkpoint(state, (fs::path(out) / "checkpoint.ckpt").string());
  } catch (const std::exception& e) {
    throw CliError(kExitIo, e.what());
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& bundle_dir,
             const std::string& out, bool no_align, const std::string& config_path) {
  const DatasetBundle bundle = load_bundle_checked(bundle_dir);
  TrainerState state;
  try {
    state = load_checkpoint(ckpt_path);
  } catch (const std::exception& e) {
    throw CliError(kExitCompat, e.what());
  }
  if (state.intrinsics_hash != bundle.intrinsics_hash())
    throw CliError(kExitCompat, "checkpoint/bundle intrinsics mismatch");
  if (deterministic_env()) state.config.deterministic = true;

  const json cfg_json = load_config(config_path);
  const json je = cfg_json.value("eval", json::object());
  EvalOptions opts;
  opts.aligned = !no_align && je.value("aligned", true);
  opts.reg.steps = je.value("reg_steps", opts.reg.steps);
  opts.reg.lr = je.value("reg_lr", opts.reg.lr);
  opts.reg.n_rays = je.value("reg_rays", opts.reg.n_rays);
  std::vector<Image> renders;
  opts.rendered_out = &renders;

  const EvalReport report = evaluate(state, bundle, opts);

  fs::create_directories(out);
  write_file(fs::path(out) / "report.json", report.to_json().dump(2) + "\n");
  write_file(fs::path(out) / "per_view.csv", report.per_view_csv());
  for (size_t i = 0; i < renders.size(); ++i) {
    char name[48];
    std::snprintf(name, sizeof(name), "holdout_render_%05d.png",
                  static_cast<int>(i));
    save_png(renders[i], (fs::path(out) / name).string());
  }
  std::cout << "mean PSNR: " << report.mean_psnr
            << "  mean SSIM: " << report.mean_ssim
            << "\nATE prior (cm): " << report.prior_error.ate_rmse_cm
            << "  refined (cm): " << report.refined_error.ate_rmse_cm
            << std::endl;
  return 0;
}

int cmd_render(const std::string& ckpt_path, const std::string& bundle_dir,
               const std::string& poses_path, const std::string& out,
               bool blur, double exposure, int M) {
  const DatasetBundle bundle = load_bundle_checked(bundle_dir);
  TrainerState state;
  try {
    state = load_checkpoint(ckpt_path);
  } catch (const std::exception& e) {
    throw CliError(kExitCompat, e.what());
  }
  if (state.intrinsics_hash != bundle.intrinsics_hash())
    throw CliError(kExitCompat, "checkpoint/bundle intrinsics mismatch");

  Trajectory poses;
  try {
    poses = load_trajectory_tum(poses_path);
  } catch (const std::exception& e) {
    throw CliError(kExitValidation, e.what());
  }
  for (const auto& s : poses.samples)
    if (s.t < state.config.refiner.t_min - 1e-9 ||
        s.t > state.config.refiner.t_max + 1e-9)
      throw CliError(kExitValidation, "pose timestamp outside trained support");

  RenderOptions opts;
  opts.n_coarse = state.config.n_coarse;
  opts.n_fine = state.config.n_fine;
  opts.background = bundle.background;
  opts.jitter = false;

  fs::create_directories(out);
  for (size_t i = 0; i < poses.samples.size(); ++i) {
    Image img(bundle.intr.width, bundle.intr.height);
    if (blur) {
      ExposureSpec exp;
      exp.t_center = poses.samples[i].t;
      exp.tau = exposure;
      Rng rng(state.config.seed);
      for (int y = 0; y < bundle.intr.height; ++y)
        for (int x = 0; x < bundle.intr.width; ++x)
          img.set_pixel(x, y,
                        render_blurred_pixel(state.model, bundle.traj_prior,
                                             bundle.intr, x, y, exp, M, opts,
                                             rng));
    } else {
      img = render_image(state.model.field, poses.samples[i].pose, bundle.intr,
                         opts, 0);
    }
    char name[32];
    std::snprintf(name, sizeof(name), "render_%05d.png", static_cast<int>(i));
    save_png(img, (fs::path(out) / name).string());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"event-assisted deblurring radiance field pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, bundle_dir, ckpt_path, poses_path, resume;
  int noise_level = -1, iters = -1, M = 7;
  long long seed = -1;
  double speed_scale = -1.0, exposure = 0.04;
  bool frame_only = false, no_event = false, no_prior = false, no_ecrf = false,
       freeze_refiner = false, no_align = false, blur = false;

  auto* gen = app.add_subcommand("gen-data", "synthesize a dataset bundle");
  gen->add_option("--config", config_path);
  gen->add_option("--out", out_dir)->required();
  gen->add_option("--noise-level", noise_level);
  gen->add_option("--seed", seed);
  gen->add_option("--speed-scale", speed_scale);

  auto* tr = app.add_subcommand("train", "train on a bundle");
  tr->add_option("--bundle", bundle_dir)->required();
  tr->add_option("--config", config_path);
  tr->add_option("--out", out_dir)->required();
  tr->add_option("--resume", resume);
  tr->add_option("--iters", iters);
  tr->add_flag("--frame-only", frame_only);
  tr->add_flag("--no-event", no_event);
  tr->add_flag("--no-prior", no_prior);
  tr->add_flag("--no-ecrf", no_ecrf);
  tr->add_flag("--freeze-refiner", freeze_refiner);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", ckpt_path)->required();
  ev->add_option("--bundle", bundle_dir)->required();
  ev->add_option("--config", config_path);
  ev->add_option("--out", out_dir)->required();
  ev->add_flag("--no-align", no_align);

  auto* rd = app.add_subcommand("render", "render poses from a checkpoint");
  rd->add_option("--checkpoint", ckpt_path)->required();
  rd->add_option("--bundle", bundle_dir)->required();
  rd->add_option("--poses", poses_path)->required();
  rd->add_option("--out", out_dir)->required();
  rd->add_flag("--blur", blur);
  rd->add_option("--exposure", exposure);
  rd->add_option("--M", M);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_data(config_path, out_dir, noise_level, seed, speed_scale);
    if (tr->parsed())
      return cmd_train(bundle_dir, config_path, out_dir, resume, iters,
                       frame_only, no_event, no_prior, no_ecrf, freeze_refiner);
    if (ev->parsed())
      return cmd_eval(ckpt_path, bundle_dir, out_dir, no_align, config_path);
    if (rd->parsed())
      return cmd_render(ckpt_path, bundle_dir, poses_path, out_dir, blur,
                        exposure, M);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return e.code;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitNumeric;
  }
  return 0;
}
