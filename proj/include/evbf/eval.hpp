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

#include "evbf/trainer.hpp"

namespace evbf {

struct RegisterOptions {
  int steps = 60;
  double lr = 1e-3;
  int n_rays = 512;  // photometric subsample; <= 0 means every pixel
  uint64_t seed = 1;
};

struct RegisterResult {
  Pose pose;
  bool warning = false;  // divergence or uninformative (textureless) target
  double final_loss = 0.0;
};

/// Gradient-descends a 7-parameter local SE(3) correction (translation +
/// quaternion offset, the refiner's parameterization) on photometric MSE
/// between the rendered view and `reference` (gamma-encoded). Divergence
/// (loss rising 3 consecutive steps) returns the best pose so far with the
/// warning flag set.
RegisterResult register_test_pose(const ModelParams& model,
                                  const CameraIntrinsics& intr,
                                  const Image& reference, const Pose& init,
                                  const RenderOptions& opts,
                                  const RegisterOptions& reg);

struct ViewMetrics {
  int index = 0;
  double psnr_db = 0.0;
  double ssim_val = 0.0;
  bool reg_warning = false;
};

struct EvalReport {
  std::vector<ViewMetrics> per_view;
  double mean_psnr = 0.0, mean_ssim = 0.0;
  TrajectoryErrorReport prior_error, refined_error;
  uint64_t config_hash = 0;
  double wall_clock_sec = 0.0;  // forced to 0 in determinism mode

  nlohmann::json to_json() const;
  std::string per_view_csv() const;
};

struct EvalOptions {
  bool aligned = true;  // Sim(3) prealign for ATE
  RegisterOptions reg;
  std::vector<Image>* rendered_out = nullptr;  // optional holdout renders
};

/// Refined poses sampled at the prior trajectory's timestamps.
Trajectory refined_trajectory(const TrainerState& state,
                              const DatasetBundle& bundle);

/// Full protocol: trajectory metrics for prior and refined trajectories,
/// Procrustes transfer of the true holdout poses into the model frame,
/// photometric registration, rendering, and PSNR/SSIM per holdout view.
EvalReport evaluate(const TrainerState& state, const DatasetBundle& bundle,
                    const EvalOptions& opts);

}  // namespace evbf
