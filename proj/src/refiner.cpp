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

#include "evbf/refiner.hpp"

#include <cmath>
#include <stdexcept>

namespace evbf {

RefinerParams RefinerParams::init(const RefinerConfig& cfg, Rng& rng) {
  if (cfg.L_t < 1 || !(cfg.t_min < cfg.t_max))
    throw std::invalid_argument("bad refiner config");
  RefinerParams p;
  p.cfg = cfg;
  std::vector<int> dims = {2 * cfg.L_t};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(7);
  p.mlp = Mlp(dims, rng);
  p.mlp.zero_output_layer();
  return p;
}

RefinerParams RefinerParams::zeros_like() const {
  RefinerParams p;
  p.cfg = cfg;
  p.mlp = mlp.zeros_like();
  return p;
}

Vec encode_time(double t, const RefinerConfig& cfg) {
  const double tn = 2.0 * (t - cfg.t_min) / (cfg.t_max - cfg.t_min) - 1.0;
  Vec out(2 * cfg.L_t);
  double f = 1.0;
  for (int k = 0; k < cfg.L_t; ++k, f *= 2.0) {
    out[2 * k] = std::sin(f * tn);
    out[2 * k + 1] = std::cos(f * tn);
  }
  return out;
}

void pose_from_7(const Eigen::Matrix<double, 7, 1>& y, Pose7Cache& cache) {
  cache.y = y;
  cache.t = y.head<3>();
  cache.q_raw = Vec4(1.0 + y[3], y[4], y[5], y[6]);
  cache.norm = cache.q_raw.norm();
  if (cache.norm < 1e-12)
    throw std::domain_error("degenerate quaternion offset");
  cache.q = cache.q_raw / cache.norm;
}

Eigen::Matrix<double, 7, 1> pose_from_7_backward(const Pose7Cache& cache,
                                                 const Vec4& d_q,
                                                 const Vec3& d_t) {
  Eigen::Matrix<double, 7, 1> dy;
  dy.head<3>() = d_t;
  // q = r / |r|  =>  dr = (I - q q^T) / |r| * dq.
  const Vec4 dr =
      (d_q - cache.q * cache.q.dot(d_q)) / cache.norm;
  dy.tail<4>() = dr;  // r = (1,0,0,0) + offset, identity shift is constant
  return dy;
}

void residual_pose_fwd(const RefinerParams& params, double t,
                       ResidualCache& cache) {
  cache.feat = encode_time(t, params.cfg);
  const Mat y = params.mlp.forward(cache.feat, &cache.mlp_cache);
  pose_from_7(params.cfg.out_scale * y.col(0), cache.p7);
}

Pose residual_pose(const RefinerParams& params, double t) {
  ResidualCache cache;
  residual_pose_fwd(params, t, cache);
  return Pose(vec_to_quat(cache.p7.q), cache.p7.t);
}

void residual_pose_backward(const RefinerParams& params,
                            const ResidualCache& cache, const Vec4& d_q,
                            const Vec3& d_t, RefinerParams& grad) {
  const Eigen::Matrix<double, 7, 1> dy =
      params.cfg.out_scale * pose_from_7_backward(cache.p7, d_q, d_t);
  params.mlp.backward(cache.mlp_cache, dy, grad.mlp);
}

void refined_pose_fwd(const RefinerParams& params, const Trajectory& traj_init,
                      double t, RefinedPoseCache& cache) {
  residual_pose_fwd(params, t, cache.res);
  const Pose init = slerp_interpolate(traj_init, t);
  cache.q_init = quat_to_vec(init.rotation);
  cache.t_init = init.translation;
  cache.q_ref = quat_mul(cache.res.p7.q, cache.q_init);
  cache.t_ref = quat_rotate(cache.res.p7.q, cache.t_init) + cache.res.p7.t;
}

Pose refined_pose(const RefinerParams& params, const Trajectory& traj_init,
                  double t) {
  RefinedPoseCache cache;
  refined_pose_fwd(params, traj_init, t, cache);
  return Pose(vec_to_quat(cache.q_ref), cache.t_ref);
}

void refined_pose_backward(const RefinerParams& params,
                           const RefinedPoseCache& cache, const Vec4& d_q_ref,
                           const Vec3& d_t_ref, RefinerParams& grad) {
  // q_ref = q_delta * q_init; t_ref = R(q_delta) t_init + t_delta.
  Vec4 d_qd = quat_mul_jac_left(cache.q_init).transpose() * d_q_ref;
  d_qd += quat_rotate_jac_q(cache.res.p7.q, cache.t_init).transpose() * d_t_ref;
  residual_pose_backward(params, cache.res, d_qd, d_t_ref, grad);
}

}  // namespace evbf
