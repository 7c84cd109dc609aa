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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "evbf/refiner.hpp"

using namespace evbf;

namespace {

Trajectory simple_trajectory() {
  Trajectory traj;
  for (int i = 0; i <= 10; ++i) {
    const double t = 0.1 * i;
    Trajectory::Sample s;
    s.t = t;
    s.pose.rotation = quat_from_axis_angle(Vec3::UnitY(), 0.4 * t);
    s.pose.translation = Vec3(t, 0.2 * std::sin(t), -1.5);
    traj.samples.push_back(s);
  }
  return traj;
}

RefinerParams perturbed_params(uint64_t seed) {
  Rng rng(seed);
  RefinerConfig cfg;
  cfg.L_t = 3;
  cfg.hidden = {16, 16};
  cfg.t_min = 0.0;
  cfg.t_max = 1.0;
  RefinerParams params = RefinerParams::init(cfg, rng);
  // Kick the output layer so the residual is non-trivial.
  for (auto& w : params.mlp.weights())
    for (int i = 0; i < w.size(); ++i) w.data()[i] += 0.05 * rng.normal();
  for (auto& b : params.mlp.biases())
    for (int i = 0; i < b.size(); ++i) b[i] += 0.05 * rng.normal();
  return params;
}

}  // namespace

TEST_CASE("time encoding layout and values") {
  RefinerConfig cfg;
  cfg.L_t = 2;
  cfg.t_min = 2.0;
  cfg.t_max = 4.0;
  // t at the middle of the interval normalizes to 0.
  Vec e = encode_time(3.0, cfg);
  REQUIRE(e.size() == 4);
  CHECK(e[0] == doctest::Approx(0.0));  // sin(0)
  CHECK(e[1] == doctest::Approx(1.0));  // cos(0)
  CHECK(e[2] == doctest::Approx(0.0));  // sin(0 * 2)
  CHECK(e[3] == doctest::Approx(1.0));
  // t at t_max normalizes to +1.
  e = encode_time(4.0, cfg);
  CHECK(e[0] == doctest::Approx(std::sin(1.0)));
  CHECK(e[1] == doctest::Approx(std::cos(1.0)));
  CHECK(e[2] == doctest::Approx(std::sin(2.0)));
  CHECK(e[3] == doctest::Approx(std::cos(2.0)));
}

TEST_CASE("freshly initialized refiner is the exact identity") {
  Rng rng(1);
  RefinerConfig cfg;
  const RefinerParams params = RefinerParams::init(cfg, rng);
  for (double t : {0.0, 0.31, 0.77, 1.0}) {
    const Pose d = residual_pose(params, t);
    CHECK(d.translation.norm() == 0.0);
    CHECK(quat_angle(d.rotation) == 0.0);
  }
  // Refined trajectory equals the prior at init.
  const Trajectory traj = simple_trajectory();
  for (double t : {0.0, 0.25, 0.5, 0.99}) {
    const Pose r = refined_pose(params, traj, t);
    const Pose p = slerp_interpolate(traj, t);
    CHECK((r.translation - p.translation).norm() < 1e-15);
    CHECK(quat_angle(r.rotation * p.rotation.conjugate()) < 1e-15);
  }
}

TEST_CASE("residual quaternions are unit and continuous in time") {
  const RefinerParams params = perturbed_params(2);
  Pose prev;
  for (int i = 0; i <= 1000; ++i) {
    const double t = i / 1000.0;
    const Pose d = residual_pose(params, t);
    CHECK(std::abs(d.rotation.norm() - 1.0) < 1e-12);
    if (i > 0) {
      CHECK(quat_angle(d.rotation * prev.rotation.conjugate()) < 0.05);
      CHECK((d.translation - prev.translation).norm() < 0.05);
    }
    prev = d;
  }
}

TEST_CASE("pose_from_7 normalization and degenerate input") {
  Eigen::Matrix<double, 7, 1> y;
  y << 0.1, -0.2, 0.3, 0.05, -0.02, 0.04, 0.01;
  Pose7Cache cache;
  pose_from_7(y, cache);
  CHECK(std::abs(cache.q.norm() - 1.0) < 1e-14);
  CHECK((cache.t - Vec3(0.1, -0.2, 0.3)).norm() == 0.0);
  // Quaternion (1 + y3, y4, y5, y6) normalized.
  Vec4 expect(1.05, -0.02, 0.04, 0.01);
  expect /= expect.norm();
  CHECK((cache.q - expect).norm() < 1e-14);
  // Offset that cancels the leading 1 exactly is rejected.
  y << 0, 0, 0, -1.0, 0, 0, 0;
  CHECK_THROWS_AS(pose_from_7(y, cache), std::domain_error);
}

TEST_CASE("pose_from_7 backward matches finite differences") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::Matrix<double, 7, 1> y;
    for (int i = 0; i < 7; ++i) y[i] = 0.3 * rng.normal();
    Vec4 d_q;
    Vec3 d_t;
    for (int i = 0; i < 4; ++i) d_q[i] = rng.normal();
    for (int i = 0; i < 3; ++i) d_t[i] = rng.normal();

    Pose7Cache cache;
    pose_from_7(y, cache);
    const Eigen::Matrix<double, 7, 1> g =
        pose_from_7_backward(cache, d_q, d_t);

    const double h = 1e-7;
    for (int i = 0; i < 7; ++i) {
      Eigen::Matrix<double, 7, 1> y2 = y, y3 = y;
      y2[i] += h;
      y3[i] -= h;
      Pose7Cache c2, c3;
      pose_from_7(y2, c2);
      pose_from_7(y3, c3);
      const double fd =
          (d_q.dot(c2.q) + d_t.dot(c2.t) - d_q.dot(c3.q) - d_t.dot(c3.t)) /
          (2 * h);
      CHECK(g[i] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("residual_pose_backward matches finite differences") {
  const RefinerParams params = perturbed_params(4);
  Rng rng(5);
  const double t = 0.37;
  Vec4 d_q;
  Vec3 d_t;
  for (int i = 0; i < 4; ++i) d_q[i] = rng.normal();
  for (int i = 0; i < 3; ++i) d_t[i] = rng.normal();

  ResidualCache cache;
  residual_pose_fwd(params, t, cache);
  RefinerParams grad = params.zeros_like();
  residual_pose_backward(params, cache, d_q, d_t, grad);

  auto probe = [&](const RefinerParams& p) {
    ResidualCache c;
    residual_pose_fwd(p, t, c);
    return d_q.dot(c.p7.q) + d_t.dot(c.p7.t);
  };
  const double h = 1e-6;
  for (size_t layer = 0; layer < params.mlp.weights().size(); ++layer) {
    for (int k = 0; k < 4; ++k) {
      RefinerParams p2 = params;
      auto& w = p2.mlp.weights()[layer];
      const int r = static_cast<int>(rng.uniform_index(w.rows()));
      const int c = static_cast<int>(rng.uniform_index(w.cols()));
      const double orig = w(r, c);
      w(r, c) = orig + h;
      const double vp = probe(p2);
      w(r, c) = orig - h;
      const double vm = probe(p2);
      const double fd = (vp - vm) / (2 * h);
      CHECK(grad.mlp.weights()[layer](r, c) ==
            doctest::Approx(fd).epsilon(1e-4));
    }
    RefinerParams p2 = params;
    auto& b = p2.mlp.biases()[layer];
    const int r = static_cast<int>(rng.uniform_index(b.size()));
    const double orig = b[r];
    b[r] = orig + h;
    const double vp = probe(p2);
    b[r] = orig - h;
    const double vm = probe(p2);
    CHECK(grad.mlp.biases()[layer][r] ==
          doctest::Approx((vp - vm) / (2 * h)).epsilon(1e-4));
  }
}

TEST_CASE("refined_pose composes the residual on the left") {
  const RefinerParams params = perturbed_params(6);
  const Trajectory traj = simple_trajectory();
  const double t = 0.63;
  const Pose delta = residual_pose(params, t);
  const Pose init = slerp_interpolate(traj, t);
  const Pose expect = compose(delta, init);
  const Pose got = refined_pose(params, traj, t);
  CHECK((got.translation - expect.translation).norm() < 1e-12);
  CHECK(quat_angle(got.rotation * expect.rotation.conjugate()) < 1e-12);
}

TEST_CASE("refined_pose_backward matches finite differences") {
  const RefinerParams params = perturbed_params(7);
  const Trajectory traj = simple_trajectory();
  Rng rng(8);
  const double t = 0.52;
  Vec4 d_q;
  Vec3 d_t;
  for (int i = 0; i < 4; ++i) d_q[i] = rng.normal();
  for (int i = 0; i < 3; ++i) d_t[i] = rng.normal();

  RefinedPoseCache cache;
  refined_pose_fwd(params, traj, t, cache);
  RefinerParams grad = params.zeros_like();
  refined_pose_backward(params, cache, d_q, d_t, grad);

  auto probe = [&](const RefinerParams& p) {
    RefinedPoseCache c;
    refined_pose_fwd(p, traj, t, c);
    return d_q.dot(c.q_ref) + d_t.dot(c.t_ref);
  };
  const double h = 1e-6;
  for (size_t layer = 0; layer < params.mlp.weights().size(); ++layer) {
    for (int k = 0; k < 5; ++k) {
      RefinerParams p2 = params;
      auto& w = p2.mlp.weights()[layer];
      const int r = static_cast<int>(rng.uniform_index(w.rows()));
      const int c = static_cast<int>(rng.uniform_index(w.cols()));
      const double orig = w(r, c);
      w(r, c) = orig + h;
      const double vp = probe(p2);
      w(r, c) = orig - h;
      const double vm = probe(p2);
      CHECK(grad.mlp.weights()[layer](r, c) ==
            doctest::Approx((vp - vm) / (2 * h)).epsilon(1e-4));
    }
  }
}
