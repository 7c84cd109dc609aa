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

#include "evbf/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace evbf {

namespace {

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05d.png", i);
  return buf;
}

Pose look_at(const Vec3& position, const Vec3& target) {
  const Vec3 z = (target - position).normalized();  // camera forward
  Vec3 x = Vec3(0, 1, 0).cross(z);                  // world +y is image down
  if (x.norm() < 1e-9) x = Vec3(1, 0, 0);
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return Pose(Eigen::Quaterniond(r), position);
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  return json::parse(f);
}

}  // namespace

uint64_t DatasetBundle::intrinsics_hash() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %.9g %d %d", intr.fx, intr.fy,
                intr.cx, intr.cy, intr.width, intr.height);
  return fnv1a(buf);
}

Trajectory make_orbit_trajectory(const BundleConfig& cfg) {
  Trajectory traj;
  const double sweep = cfg.sweep_rad;
  for (int i = 0; i < cfg.traj_samples; ++i) {
    const double s = static_cast<double>(i) / (cfg.traj_samples - 1);
    const double t = s * cfg.duration;
    const double th = (s - 0.5) * sweep;
    const Vec3 p(cfg.orbit_radius * std::sin(th),
                 0.12 * std::sin(2.0 * th + 0.7),
                 -cfg.orbit_radius * std::cos(th));
    // The pan wobble keeps the camera from perfectly fixating the scene
    // center; without it the image barely moves and frames do not blur.
    // speed_scale accelerates only this rotational wobble so motion blur and
    // event rate grow without inflating the translation arc length (which
    // sets the magnitude of the drift-noise protocol).
    const double thw = th * cfg.speed_scale;
    const Vec3 target(0.45 * std::sin(5.0 * thw + 0.4),
                      0.28 * std::cos(3.1 * thw), 0.0);
    traj.samples.push_back({t, look_at(p, target)});
  }
  return traj;
}

DatasetBundle generate_dataset(const BundleConfig& cfg) {
  DatasetBundle b;
  b.cfg = cfg;
  b.intr.fx = b.intr.fy = cfg.focal;
  b.intr.cx = b.intr.cy = cfg.image_size / 2.0;
  b.intr.width = b.intr.height = cfg.image_size;
  b.intr.validate();
  b.event_model = cfg.event_model;
  b.event_model.validate();

  const VoxelScene scene = make_default_scene(cfg.scene_res, cfg.scene_seed);
  b.background = scene.background;
  b.traj_true = make_orbit_trajectory(cfg);
  b.traj_true.validate();

  // Frame centers leave half an exposure of margin at both ends; holdout
  // views sit between consecutive frame centers.
  const double t0 = b.traj_true.t_min() + 0.5 * cfg.tau + 1e-6;
  const double t1 = b.traj_true.t_max() - 0.5 * cfg.tau - 1e-6;
  for (int i = 0; i < cfg.n_frames; ++i) {
    ExposureSpec exp;
    exp.t_center = t0 + (t1 - t0) * i / (cfg.n_frames - 1);
    exp.tau = cfg.tau;
    exp.oracle_substeps = cfg.oracle_substeps;
    exp.validate(b.traj_true);
    b.exposures.push_back(exp);
    b.frames.push_back(
        synthesize_blur(scene, b.traj_true, exp, b.intr, cfg.quadrature_steps));
  }
  for (int h = 0; h < cfg.n_holdout; ++h) {
    const int i = (h + 1) * (cfg.n_frames - 1) / (cfg.n_holdout + 1);
    const double t =
        0.5 * (b.exposures[i].t_center + b.exposures[i + 1].t_center);
    b.holdout_times.push_back(t);
    const Pose pose = slerp_interpolate(b.traj_true, t);
    b.holdout.push_back(gamma_encode(
        render_sharp_oracle(scene, pose, b.intr, cfg.quadrature_steps)));
  }

  b.events = simulate_events(scene, b.traj_true, b.intr, b.event_model,
                             b.traj_true.t_min(), b.traj_true.t_max(),
                             cfg.sim_rate, cfg.quadrature_steps);

  for (size_t i = 0; i < b.frames.size(); ++i)
    b.priors.push_back(edi_deblur(b.frames[i], b.events, b.exposures[i],
                                  b.event_model, b.exposures[i].t_center));

  if (cfg.noise_level == 0) {
    b.traj_prior = b.traj_true;
  } else {
    b.traj_prior = perturb_trajectory(
        b.traj_true, NoiseLevelSpec::from_level(cfg.noise_level, cfg.noise_seed));
  }
  return b;
}

void save_bundle(const DatasetBundle& b, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "frames");
  fs::create_directories(root / "priors");
  fs::create_directories(root / "holdout");

  json frames_manifest = json::array();
  for (size_t i = 0; i < b.frames.size(); ++i) {
    const std::string name = frame_name(static_cast<int>(i));
    save_png(b.frames[i], (root / "frames" / name).string());
    save_png(b.priors[i], (root / "priors" / name).string());
    frames_manifest.push_back({{"file", name},
                               {"t_center", b.exposures[i].t_center},
                               {"tau", b.exposures[i].tau},
                               {"oracle_substeps", b.exposures[i].oracle_substeps}});
  }
  write_text(root / "frames" / "manifest.json", frames_manifest.dump(2));

  json holdout_manifest = json::array();
  for (size_t i = 0; i < b.holdout.size(); ++i) {
    const std::string name = frame_name(static_cast<int>(i));
    save_png(b.holdout[i], (root / "holdout" / name).string());
    holdout_manifest.push_back({{"file", name}, {"t", b.holdout_times[i]}});
  }
  write_text(root / "holdout" / "manifest.json", holdout_manifest.dump(2));

  save_events_evb(b.events, (root / "events.evb").string());
  save_trajectory_tum(b.traj_true, (root / "poses_true.txt").string());
  save_trajectory_tum(b.traj_prior, (root / "poses_prior.txt").string());

  json meta;
  meta["version"] = "evbf-bundle-1";
  meta["gamma"] = b.gamma;
  meta["intrinsics"] = {{"fx", b.intr.fx},     {"fy", b.intr.fy},
                        {"cx", b.intr.cx},     {"cy", b.intr.cy},
                        {"width", b.intr.width}, {"height", b.intr.height}};
  meta["intrinsics_hash"] = b.intrinsics_hash();
  meta["event_model"] = {{"theta_pos", b.event_model.theta_pos},
                         {"theta_neg", b.event_model.theta_neg},
                         {"log_eps", b.event_model.log_eps}};
  meta["event_count"] = b.events.size();
  meta["background"] = {b.background[0], b.background[1], b.background[2]};
  meta["noise"] = {{"level", b.cfg.noise_level}, {"seed", b.cfg.noise_seed}};
  meta["scene"] = {{"res", b.cfg.scene_res}, {"seed", b.cfg.scene_seed}};
  meta["capture"] = {{"duration", b.cfg.duration},
                     {"orbit_radius", b.cfg.orbit_radius},
                     {"sweep_rad", b.cfg.sweep_rad},
                     {"speed_scale", b.cfg.speed_scale},
                     {"traj_samples", b.cfg.traj_samples},
                     {"tau", b.cfg.tau},
                     {"n_frames", b.cfg.n_frames},
                     {"n_holdout", b.cfg.n_holdout},
                     {"oracle_substeps", b.cfg.oracle_substeps},
                     {"quadrature_steps", b.cfg.quadrature_steps},
                     {"sim_rate", b.cfg.sim_rate},
                     {"image_size", b.cfg.image_size},
                     {"focal", b.cfg.focal}};
  write_text(root / "meta.json", meta.dump(2));
}

DatasetBundle load_bundle(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::exists(root / "meta.json"))
    throw std::runtime_error("not a bundle directory: " + dir);
  const json meta = read_json(root / "meta.json");

  DatasetBundle b;
  b.gamma = meta.at("gamma").get<double>();
  const json& ji = meta.at("intrinsics");
  b.intr.fx = ji.at("fx");
  b.intr.fy = ji.at("fy");
  b.intr.cx = ji.at("cx");
  b.intr.cy = ji.at("cy");
  b.intr.width = ji.at("width");
  b.intr.height = ji.at("height");
  const json& je = meta.at("event_model");
  b.event_model.theta_pos = je.at("theta_pos");
  b.event_model.theta_neg = je.at("theta_neg");
  b.event_model.log_eps = je.at("log_eps");
  const json& jb = meta.at("background");
  b.background = Vec3(jb.at(0), jb.at(1), jb.at(2));
  b.cfg.noise_level = meta.at("noise").at("level");
  b.cfg.noise_seed = meta.at("noise").at("seed");
  b.cfg.scene_res = meta.at("scene").at("res");
  b.cfg.scene_seed = meta.at("scene").at("seed");
  const json& jc = meta.at("capture");
  b.cfg.duration = jc.at("duration");
  b.cfg.orbit_radius = jc.at("orbit_radius");
  b.cfg.sweep_rad = jc.at("sweep_rad");
  b.cfg.speed_scale = jc.at("speed_scale");
  b.cfg.traj_samples = jc.at("traj_samples");
  b.cfg.tau = jc.at("tau");
  b.cfg.n_frames = jc.at("n_frames");
  b.cfg.n_holdout = jc.at("n_holdout");
  b.cfg.oracle_substeps = jc.at("oracle_substeps");
  b.cfg.quadrature_steps = jc.at("quadrature_steps");
  b.cfg.sim_rate = jc.at("sim_rate");
  b.cfg.image_size = jc.at("image_size");
  b.cfg.focal = jc.at("focal");

  for (const json& f : read_json(root / "frames" / "manifest.json")) {
    ExposureSpec exp;
    exp.t_center = f.at("t_center");
    exp.tau = f.at("tau");
    exp.oracle_substeps = f.at("oracle_substeps");
    b.exposures.push_back(exp);
    const std::string name = f.at("file");
    b.frames.push_back(load_png((root / "frames" / name).string()));
    b.priors.push_back(load_png((root / "priors" / name).string()));
  }
  for (const json& h : read_json(root / "holdout" / "manifest.json")) {
    b.holdout_times.push_back(h.at("t").get<double>());
    const std::string name = h.at("file");
    b.holdout.push_back(load_png((root / "holdout" / name).string()));
  }
  b.events = load_events_evb((root / "events.evb").string());
  b.traj_true = load_trajectory_tum((root / "poses_true.txt").string());
  b.traj_prior = load_trajectory_tum((root / "poses_prior.txt").string());
  return b;
}

}  // namespace evbf
