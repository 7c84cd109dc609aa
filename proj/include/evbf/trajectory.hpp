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

#include "evbf/geometry.hpp"

namespace evbf {

/// Time-stamped pose sequence, timestamps strictly increasing (seconds).
struct Trajectory {
  struct Sample {
    double t = 0.0;
    Pose pose;
  };
  std::vector<Sample> samples;

  bool empty() const { return samples.empty(); }
  size_t size() const { return samples.size(); }
  double t_min() const { return samples.front().t; }
  double t_max() const { return samples.back().t; }

  /// Throws std::invalid_argument on non-increasing timestamps or < 2 samples.
  void validate() const;

  /// Cumulative translation arc length (meters) at each sample, size() values.
  std::vector<double> cumulative_arc_length() const;
  double total_arc_length() const;
};

/// SLERP rotation / lerp translation between bracketing samples.
/// Out-of-range t throws std::out_of_range; < 2 samples std::invalid_argument.
Pose slerp_interpolate(const Trajectory& traj, double t);

/// Drift-noise level for the perturbed-trajectory protocol: accumulated error
/// per meter traveled, levels 1..4 -> (2cm,0.2deg) (4,0.4) (8,0.8) (12,1.2).
struct NoiseLevelSpec {
  int level = 0;       // 0 = no noise
  double eps_t = 0.0;  // cm per meter traveled
  double eps_r = 0.0;  // degrees per meter traveled
  uint64_t seed = 0;

  static NoiseLevelSpec from_level(int level, uint64_t seed);
};

/// Injects synthetic drift: 6 control points uniformly spaced by sample index,
/// random-direction perturbations with magnitude growing with traveled
/// distance, linearly interpolated (SLERP for rotation) between control points
/// and left-composed onto every pose. Deterministic given spec.seed.
Trajectory perturb_trajectory(const Trajectory& traj, const NoiseLevelSpec& spec);

struct AlignmentTransform {
  double scale = 1.0;
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();
  bool degenerate = false;

  Vec3 apply_point(const Vec3& p) const {
    return scale * (rotation * p) + translation;
  }
  Pose apply_pose(const Pose& p) const {
    return Pose(rotation * p.rotation, apply_point(p.translation));
  }
};

/// Closed-form similarity (or rigid, with_scale=false) minimizing squared
/// residuals of est translations mapped onto ref translations.
AlignmentTransform umeyama_align(const Trajectory& est, const Trajectory& ref,
                                 bool with_scale);

/// ATE RMSE over per-pose translation residuals, in centimeters.
double ate_rmse(const Trajectory& est, const Trajectory& ref, bool prealign);

/// Segment relative-pose errors: six equal-arc-length segments of ref, the
/// five internal boundaries as reference poses. Returns (translation % of
/// segment length, rotation deg per meter). `midpoints` switches the
/// reference poses from segment boundaries to segment centers.
struct RpeResult {
  double trans_pct = 0.0;
  double rot_deg_per_m = 0.0;
};
RpeResult rpe_segments(const Trajectory& est, const Trajectory& ref,
                       bool midpoints = false);

struct TrajectoryErrorReport {
  double ate_rmse_cm = 0.0;
  double rpe_trans_pct = 0.0;
  double rpe_rot_deg_per_m = 0.0;
};

TrajectoryErrorReport trajectory_errors(const Trajectory& est,
                                        const Trajectory& ref, bool prealign);

/// TUM text format: `timestamp tx ty tz qx qy qz qw` per line.
void save_trajectory_tum(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory_tum(const std::string& path);

}  // namespace evbf
