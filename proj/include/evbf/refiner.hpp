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

#include "evbf/mlp.hpp"
#include "evbf/trajectory.hpp"

namespace evbf {

/// Time-conditioned residual pose correction: t -> small SE(3) delta composed
/// on the left with the interpolated trajectory prior.
struct RefinerConfig {
  int L_t = 4;  // time-encoding frequencies; MLP input is 2*L_t
  std::vector<int> hidden = {64, 64};
  double t_min = 0.0, t_max = 1.0;  // normalization interval
  // The raw 7-vector head output is multiplied by this factor before it is
  // interpreted as an SE(3) offset.  Keeping it well below 1 tames the first
  // few Adam steps, whose per-weight magnitude is the full learning rate and
  // would otherwise translate into centimeter-scale pose jumps that the field
  // then memorizes.
  double out_scale = 0.01;
};

struct RefinerParams {
  RefinerConfig cfg;
  Mlp mlp;  // 2*L_t -> hidden -> 7 (translation 3 + quaternion offset 4)

  /// Output layer zero-initialized: the residual starts at exact identity.
  static RefinerParams init(const RefinerConfig& cfg, Rng& rng);
  RefinerParams zeros_like() const;

  template <typename F>
  void visit(F&& f) {
    mlp.visit("refiner", f);
  }
};

/// Normalizes t to [-1, 1] over [t_min, t_max]; sin/cos pairs at 2^0..2^(L-1).
Vec encode_time(double t, const RefinerConfig& cfg);

/// Maps a raw 7-vector (v, q_offset) to a pose: quaternion = normalize(
/// (1,0,0,0) + q_offset), translation = v. The shared parameterization for the
/// refiner head and photometric pose registration.
struct Pose7Cache {
  Eigen::Matrix<double, 7, 1> y = Eigen::Matrix<double, 7, 1>::Zero();
  Vec4 q_raw = Vec4(1, 0, 0, 0);
  double norm = 1.0;
  Vec4 q = Vec4(1, 0, 0, 0);
  Vec3 t = Vec3::Zero();
};
void pose_from_7(const Eigen::Matrix<double, 7, 1>& y, Pose7Cache& cache);
/// Returns dL/dy given dL/d(quaternion) and dL/d(translation).
Eigen::Matrix<double, 7, 1> pose_from_7_backward(const Pose7Cache& cache,
                                                 const Vec4& d_q,
                                                 const Vec3& d_t);

struct ResidualCache {
  Vec feat;
  Mlp::Cache mlp_cache;
  Pose7Cache p7;
};
void residual_pose_fwd(const RefinerParams& params, double t,
                       ResidualCache& cache);
Pose residual_pose(const RefinerParams& params, double t);
void residual_pose_backward(const RefinerParams& params,
                            const ResidualCache& cache, const Vec4& d_q,
                            const Vec3& d_t, RefinerParams& grad);

/// T_ref(t) = delta(t) * T_init(t) with T_init from SLERP on the prior.
struct RefinedPoseCache {
  ResidualCache res;
  Vec4 q_init = Vec4(1, 0, 0, 0);
  Vec3 t_init = Vec3::Zero();
  Vec4 q_ref = Vec4(1, 0, 0, 0);
  Vec3 t_ref = Vec3::Zero();
};
void refined_pose_fwd(const RefinerParams& params, const Trajectory& traj_init,
                      double t, RefinedPoseCache& cache);
Pose refined_pose(const RefinerParams& params, const Trajectory& traj_init,
                  double t);
void refined_pose_backward(const RefinerParams& params,
                           const RefinedPoseCache& cache, const Vec4& d_q_ref,
                           const Vec3& d_t_ref, RefinerParams& grad);

}  // namespace evbf
