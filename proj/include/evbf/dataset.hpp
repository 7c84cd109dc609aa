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

#pragma once

#include <string>
#include <vector>

#include "evbf/events.hpp"
#include "evbf/scene.hpp"

namespace evbf {

/// Everything needed to synthesize one bundle: scene, camera sweep, exposure,
/// event camera, and the drift-noise level of the trajectory prior.
struct BundleConfig {
  int image_size = 64;
  double focal = 70.0;  // pixels; principal point at the image center

  int scene_res = 48;
  uint64_t scene_seed = 1;

  double duration = 2.0;        // seconds of capture
  double orbit_radius = 1.7;    // meters from the scene center
  double sweep_rad = 1.5;       // total orbit angle
  double speed_scale = 6.0;  // pan-wobble rate multiplier (blur/event rate)
  int traj_samples = 121;

  int n_frames = 20;
  int n_holdout = 5;
  double tau = 0.04;  // exposure duration
  int oracle_substeps = 16;
  int quadrature_steps = 96;

  double sim_rate = 400.0;  // Hz, event-simulator sampling
  EventCameraModel event_model;

  int noise_level = 2;  // 0 = exact prior
  uint64_t noise_seed = 7;
};

struct DatasetBundle {
  BundleConfig cfg;
  CameraIntrinsics intr;
  std::vector<Image> frames;  // blurred, gamma-encoded
  std::vector<ExposureSpec> exposures;
  std::vector<Image> priors;  // EDI pseudo-sharp targets, gamma-encoded
  std::vector<Image> holdout;  // sharp references, gamma-encoded
  std::vector<double> holdout_times;
  EventStream events;
  Trajectory traj_true, traj_prior;
  EventCameraModel event_model;
  Vec3 background = Vec3::Zero();  // scene background, linear RGB
  double gamma = kGamma;

  /// Stable hash over intrinsics + image geometry, used for checkpoint
  /// compatibility checks.
  uint64_t intrinsics_hash() const;
};

/// Smooth look-at orbit around the scene center (the ground-truth capture
/// motion). speed_scale accelerates the pan wobble, not the orbit sweep.
Trajectory make_orbit_trajectory(const BundleConfig& cfg);

/// Renders blurred frames + sharp holdouts from the true trajectory,
/// simulates events, computes EDI priors, and perturbs the trajectory into
/// the drifted prior. Deterministic given the config seeds.
DatasetBundle generate_dataset(const BundleConfig& cfg);

void save_bundle(const DatasetBundle& bundle, const std::string& dir);
DatasetBundle load_bundle(const std::string& dir);

}  // namespace evbf
