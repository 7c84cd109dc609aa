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

#include "evbf/trajectory.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "evbf/rng.hpp"

namespace evbf {

void Trajectory::validate() const {
  if (samples.size() < 2)
    throw std::invalid_argument("trajectory needs at least 2 samples");
  for (size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].t > samples[i - 1].t))
      throw std::invalid_argument("trajectory timestamps must strictly increase");
  }
}

std::vector<double> Trajectory::cumulative_arc_length() const {
  std::vector<double> s(samples.size(), 0.0);
  for (size_t i = 1; i < samples.size(); ++i) {
    s[i] = s[i - 1] +
           (samples[i].pose.translation - samples[i - 1].pose.translation).norm();
  }
  return s;
}

double Trajectory::total_arc_length() const {
  return samples.empty() ? 0.0 : cumulative_arc_length().back();
}

Pose slerp_interpolate(const Trajectory& traj, double t) {
  traj.validate();
  if (t < traj.t_min() || t > traj.t_max())
    throw std::out_of_range("interpolation time outside trajectory support");
  auto it = std::lower_bound(
      traj.samples.begin(), traj.samples.end(), t,
      [](const Trajectory::Sample& s, double v) { return s.t < v; });
  if (it != traj.samples.end() && it->t == t) return it->pose;
  const Trajectory::Sample& hi = *it;
  const Trajectory::Sample& lo = *(it - 1);
  double u = (t - lo.t) / (hi.t - lo.t);
  Eigen::Quaterniond q = slerp_quat(lo.pose.rotation, hi.pose.rotation, u);
  Vec3 tr = (1.0 - u) * lo.pose.translation + u * hi.pose.translation;
  return Pose(q, tr);
}

NoiseLevelSpec NoiseLevelSpec::from_level(int level, uint64_t seed) {
  NoiseLevelSpec s;
  s.level = level;
  s.seed = seed;
  switch (level) {
    case 0: s.eps_t = 0.0;  s.eps_r = 0.0; break;
    case 1: s.eps_t = 2.0;  s.eps_r = 0.2; break;
    case 2: s.eps_t = 4.0;  s.eps_r = 0.4; break;
    case 3: s.eps_t = 8.0;  s.eps_r = 0.8; break;
    case 4: s.eps_t = 12.0; s.eps_r = 1.2; break;
    default:
      throw std::invalid_argument("noise level must be in 0..4");
  }
  return s;
}

Trajectory perturb_trajectory(const Trajectory& traj, const NoiseLevelSpec& spec) {
  traj.validate();
  const size_t n = traj.size();
  constexpr int kControls = 6;
  if (n < kControls)
    throw std::invalid_argument("perturb_trajectory needs at least 6 samples");

  if (spec.eps_t == 0.0 && spec.eps_r == 0.0) return traj;

  const std::vector<double> arc = traj.cumulative_arc_length();
  Rng rng(spec.seed);

  // Control perturbations, magnitudes proportional to traveled distance.
  std::vector<size_t> idx(kControls);
  std::vector<Vec3> dt(kControls);
  std::vector<Eigen::Quaterniond> dq(kControls);
  for (int k = 0; k < kControls; ++k) {
    idx[k] = static_cast<size_t>(std::llround(
        static_cast<double>(k) * (n - 1) / (kControls - 1)));
    const double s_k = arc[idx[k]];
    const Vec3 dir = rng.unit_vector();
    const Vec3 axis = rng.unit_vector();
    dt[k] = dir * (s_k * spec.eps_t * 0.01);  // cm/m -> m
    dq[k] = quat_from_axis_angle(axis, s_k * spec.eps_r * M_PI / 180.0);
  }

  Trajectory out = traj;
  for (size_t i = 0; i < n; ++i) {
    // Bracketing control points, interpolation linear in sample index.
    int k = 0;
    while (k + 1 < kControls - 1 && idx[k + 1] <= i) ++k;
    double u = (idx[k + 1] == idx[k])
                   ? 0.0
                   : (static_cast<double>(i) - idx[k]) /
                         (static_cast<double>(idx[k + 1]) - idx[k]);
    u = std::clamp(u, 0.0, 1.0);
    Vec3 ti = (1.0 - u) * dt[k] + u * dt[k + 1];
    Eigen::Quaterniond qi = slerp_quat(dq[k], dq[k + 1], u);
    out.samples[i].pose = compose(Pose(qi, ti), traj.samples[i].pose);
  }
  return out;
}

AlignmentTransform umeyama_align(const Trajectory& est, const Trajectory& ref,
                                 bool with_scale) {
  if (est.size() != ref.size() || est.empty())
    throw std::invalid_argument("umeyama_align needs matched non-empty trajectories");
  const size_t n = est.size();

  Vec3 mu_x = Vec3::Zero(), mu_y = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    mu_x += est.samples[i].pose.translation;
    mu_y += ref.samples[i].pose.translation;
  }
  mu_x /= static_cast<double>(n);
  mu_y /= static_cast<double>(n);

  Mat3 sigma = Mat3::Zero();
  double var_x = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Vec3 x = est.samples[i].pose.translation - mu_x;
    const Vec3 y = ref.samples[i].pose.translation - mu_y;
    sigma += y * x.transpose();
    var_x += x.squaredNorm();
  }
  sigma /= static_cast<double>(n);
  var_x /= static_cast<double>(n);

  AlignmentTransform a;
  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  // Coincident points, or collinear points (rank <= 1): rotation is not
  // observable. Fall back to a pure translation.
  if (var_x < 1e-18 || d[1] < 1e-12 * std::max(d[0], 1e-300)) {
    a.degenerate = true;
    a.translation = mu_y - mu_x;
    return a;
  }
  Mat3 s_fix = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0)
    s_fix(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * s_fix * svd.matrixV().transpose();
  a.rotation = Eigen::Quaterniond(r);
  if (a.rotation.w() < 0.0) a.rotation.coeffs() = -a.rotation.coeffs();
  if (with_scale) a.scale = (d.asDiagonal() * s_fix).trace() / var_x;
  a.translation = mu_y - a.scale * (r * mu_x);
  return a;
}

double ate_rmse(const Trajectory& est, const Trajectory& ref, bool prealign) {
  if (est.size() != ref.size() || est.empty())
    throw std::invalid_argument("ate_rmse needs matched trajectories");
  AlignmentTransform a;
  if (prealign) a = umeyama_align(est, ref, /*with_scale=*/true);
  double sq = 0.0;
  for (size_t i = 0; i < est.size(); ++i) {
    const Vec3 p = a.apply_point(est.samples[i].pose.translation);
    sq += (p - ref.samples[i].pose.translation).squaredNorm();
  }
  return std::sqrt(sq / static_cast<double>(est.size())) * 100.0;  // m -> cm
}

namespace {

// Timestamp at which ref reaches arc length s (linear in arc between samples).
double time_at_arc(const Trajectory& ref, const std::vector<double>& arc,
                   double s) {
  if (s <= 0.0) return ref.samples.front().t;
  for (size_t i = 1; i < arc.size(); ++i) {
    if (arc[i] >= s) {
      const double seg = arc[i] - arc[i - 1];
      const double u = seg > 0.0 ? (s - arc[i - 1]) / seg : 0.0;
      return ref.samples[i - 1].t +
             u * (ref.samples[i].t - ref.samples[i - 1].t);
    }
  }
  return ref.samples.back().t;
}

}  // namespace

RpeResult rpe_segments(const Trajectory& est, const Trajectory& ref,
                       bool midpoints) {
  if (est.size() != ref.size() || est.empty())
    throw std::invalid_argument("rpe_segments needs matched trajectories");
  const std::vector<double> arc = ref.cumulative_arc_length();
  const double total = arc.back();
  if (total <= 0.0) throw std::out_of_range("zero-length trajectory");

  const double seg = total / 6.0;
  RpeResult r;
  for (int k = 1; k <= 5; ++k) {
    const double s0 = midpoints ? (k - 0.5) * seg : k * seg;
    const double s1 = std::min(s0 + seg, total);
    const double t0 = time_at_arc(ref, arc, s0);
    const double t1 = time_at_arc(ref, arc, s1);
    const Pose delta_ref =
        compose(slerp_interpolate(ref, t0).inverse(), slerp_interpolate(ref, t1));
    const Pose delta_est =
        compose(slerp_interpolate(est, t0).inverse(), slerp_interpolate(est, t1));
    const Pose err = compose(delta_ref.inverse(), delta_est);
    const double len = s1 - s0;
    r.trans_pct += err.translation.norm() / len * 100.0;
    r.rot_deg_per_m += quat_angle(err.rotation) * 180.0 / M_PI / len;
  }
  r.trans_pct /= 5.0;
  r.rot_deg_per_m /= 5.0;
  return r;
}

TrajectoryErrorReport trajectory_errors(const Trajectory& est,
                                        const Trajectory& ref, bool prealign) {
  TrajectoryErrorReport rep;
  rep.ate_rmse_cm = ate_rmse(est, ref, prealign);
  const RpeResult rpe = rpe_segments(est, ref);
  rep.rpe_trans_pct = rpe.trans_pct;
  rep.rpe_rot_deg_per_m = rpe.rot_deg_per_m;
  return rep;
}

void save_trajectory_tum(const Trajectory& traj, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.precision(12);
  for (const auto& s : traj.samples) {
    const auto& q = s.pose.rotation;
    const auto& t = s.pose.translation;
    f << s.t << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x()
      << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
  }
}

Trajectory load_trajectory_tum(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  Trajectory traj;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw std::runtime_error("malformed TUM pose line: " + line);
    traj.samples.push_back(
        {t, Pose(Eigen::Quaterniond(qw, qx, qy, qz), Vec3(tx, ty, tz))});
  }
  return traj;
}

}  // namespace evbf
