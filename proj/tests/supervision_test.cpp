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
#include <map>

#include "doctest.h"
#include "evbf/losses.hpp"

using namespace evbf;

namespace {

CameraIntrinsics test_intrinsics() {
  CameraIntrinsics intr;
  intr.width = intr.height = 16;
  intr.fx = intr.fy = 18.0;
  intr.cx = intr.cy = 7.5;
  return intr;
}

FieldConfig tiny_field_config() {
  FieldConfig cfg;
  cfg.L_x = 2;
  cfg.L_d = 1;
  cfg.grid_res = 4;
  cfg.grid_channels = 2;
  cfg.coarse_hidden = {16};
  cfg.fine_hidden = {16};
  cfg.near = 0.5;
  cfg.far = 2.2;
  return cfg;
}

ModelParams make_model(uint64_t seed, bool constant_field) {
  Rng rng(seed);
  ModelParams m;
  m.field = FieldParams::init(tiny_field_config(), rng);
  RefinerConfig rcfg;
  rcfg.L_t = 3;
  rcfg.hidden = {12};
  m.refiner = RefinerParams::init(rcfg, rng);
  ECRFConfig ecfg;
  ecfg.hidden = {8};
  m.ecrf = ECRFParams::init(ecfg, rng);
  if (constant_field) {
    auto flatten = [](Mlp& mlp) {
      for (auto& w : mlp.weights()) w.setZero();
      for (auto& b : mlp.biases()) b.setZero();
      mlp.biases().back()[0] = 0.5;   // density logit
      mlp.biases().back()[1] = 0.3;
      mlp.biases().back()[2] = -0.2;
      mlp.biases().back()[3] = 0.1;
    };
    flatten(m.field.coarse_mlp);
    flatten(m.field.fine_mlp);
    m.field.coarse_grid.data.setZero();
    m.field.fine_grid.data.setZero();
  }
  return m;
}

Trajectory static_trajectory(double t0 = 0.0, double t1 = 1.0) {
  Trajectory traj;
  const Pose p(Eigen::Quaterniond::Identity(), Vec3(0.05, -0.02, -1.4));
  traj.samples.push_back({t0, p});
  traj.samples.push_back({t1, p});
  return traj;
}

Trajectory moving_trajectory() {
  Trajectory traj;
  for (int i = 0; i <= 8; ++i) {
    const double t = i / 8.0;
    Trajectory::Sample s;
    s.t = t;
    s.pose.rotation = quat_from_axis_angle(Vec3::UnitY(), 0.15 * t);
    s.pose.translation = Vec3(-0.05 + 0.1 * t, 0.02 * std::sin(3 * t), -1.4);
    traj.samples.push_back(s);
  }
  return traj;
}

RenderOptions loss_render_options() {
  RenderOptions opts;
  opts.n_coarse = 6;
  opts.n_fine = 6;
  opts.background = Vec3(0.35, 0.4, 0.45);
  opts.jitter = false;
  return opts;
}

// The loss-side prediction for a deterministic render: decode the exact gamma
// applied by render_blurred_pixel, re-encode with the smooth gamma the losses
// use internally.
Vec3 smooth_prediction(const Vec3& exact_gamma_color) {
  Vec3 out;
  for (int c = 0; c < 3; ++c)
    out[c] = gamma_encode_smooth(gamma_decode(exact_gamma_color[c]));
  return out;
}

}  // namespace

TEST_CASE("cosine prior-weight schedule anchors") {
  LossWeights w;
  CHECK(lambda_p_at(0, w) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(lambda_p_at(10000, w) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(lambda_p_at(20000, w) == 0.0);
  CHECK(lambda_p_at(50000, w) == 0.0);
  // Monotone non-increasing over the decay range.
  double prev = 1e9;
  for (int it = 0; it <= 20000; it += 500) {
    const double v = lambda_p_at(it, w);
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
}

TEST_CASE("exposure timestamp sampling") {
  ExposureSpec exp;
  exp.t_center = 1.0;
  exp.tau = 0.04;
  CHECK(sample_exposure_timestamps(exp, 1) == std::vector<double>{1.0});
  const auto t3 = sample_exposure_timestamps(exp, 3);
  REQUIRE(t3.size() == 3);
  CHECK(t3[0] == doctest::Approx(0.98).epsilon(1e-12));
  CHECK(t3[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t3[2] == doctest::Approx(1.02).epsilon(1e-12));
  const auto t7 = sample_exposure_timestamps(exp, 7);
  REQUIRE(t7.size() == 7);
  for (int i = 1; i < 7; ++i)
    CHECK(t7[i] - t7[i - 1] == doctest::Approx(0.04 / 6).epsilon(1e-12));
}

TEST_CASE("event pairing hand case") {
  EventStream ev;
  auto push = [&](int u, int v, double t, int p) {
    EventRecord e;
    e.u = static_cast<uint16_t>(u);
    e.v = static_cast<uint16_t>(v);
    e.t = t;
    e.p = static_cast<int8_t>(p);
    ev.push_back(e);
  };
  push(3, 4, 0.00, +1);  // no predecessor -> skipped
  push(3, 4, 0.02, +1);  // pairs with the first
  push(5, 5, 0.03, -1);  // different pixel, no predecessor
  push(3, 4, 0.06, -1);  // pairs with 0.02 (gap 0.04 < window)
  push(5, 5, 0.50, +1);  // predecessor 0.03 is older than the window
  const auto pairs = pair_events(ev, 0.05);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].u == 3);
  CHECK(pairs[0].t_prev == 0.00);
  CHECK(pairs[0].t_curr == 0.02);
  CHECK(pairs[0].polarity == +1);
  CHECK(pairs[1].t_prev == 0.02);
  CHECK(pairs[1].t_curr == 0.06);
  CHECK(pairs[1].polarity == -1);
}

TEST_CASE("event pairing against a brute-force oracle") {
  Rng rng(11);
  EventStream ev;
  double t = 0.0;
  for (int i = 0; i < 2000; ++i) {
    EventRecord e;
    t += rng.uniform(0.0, 0.01);
    e.t = t;
    e.u = static_cast<uint16_t>(rng.uniform_index(6));
    e.v = static_cast<uint16_t>(rng.uniform_index(6));
    e.p = rng.uniform() < 0.5 ? -1 : 1;
    ev.push_back(e);
  }
  const double window = 0.05;
  const auto pairs = pair_events(ev, window);

  // Oracle: for each event, scan backwards for the latest same-pixel event.
  std::vector<EventPairSample> expect;
  for (size_t i = 0; i < ev.size(); ++i) {
    for (size_t j = i; j-- > 0;) {
      if (ev[j].u == ev[i].u && ev[j].v == ev[i].v) {
        if (ev[i].t - ev[j].t <= window) {
          EventPairSample s;
          s.u = ev[i].u;
          s.v = ev[i].v;
          s.t_prev = ev[j].t;
          s.t_curr = ev[i].t;
          s.polarity = ev[i].p;
          expect.push_back(s);
        }
        break;
      }
    }
  }
  REQUIRE(pairs.size() == expect.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pairs[i].u == expect[i].u);
    CHECK(pairs[i].v == expect[i].v);
    CHECK(pairs[i].t_prev == expect[i].t_prev);
    CHECK(pairs[i].t_curr == expect[i].t_curr);
    CHECK(pairs[i].polarity == expect[i].polarity);
  }
}

TEST_CASE("smooth gamma tracks the exact gamma closely") {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform();
    CHECK(std::abs(gamma_encode_smooth(x) - gamma_encode(x)) < 2e-3);
    const double h = 1e-7;
    const double fd =
        (gamma_encode_smooth(x + h) - gamma_encode_smooth(x - h)) / (2 * h);
    CHECK(gamma_encode_smooth_grad(x) == doctest::Approx(fd).epsilon(1e-5));
  }
  CHECK(std::isfinite(gamma_encode_smooth_grad(0.0)));
  CHECK(std::isfinite(gamma_encode_smooth(0.0)));
}

TEST_CASE("blur loss: fixed point and one-channel-offset hand value") {
  const ModelParams model = make_model(1, /*constant_field=*/true);
  const Trajectory traj = static_trajectory();
  const CameraIntrinsics intr = test_intrinsics();
  const RenderOptions opts = loss_render_options();
  LossEvaluator eval(model, traj, intr, opts);

  ExposureSpec exp;
  exp.t_center = 0.5;
  exp.tau = 0.04;
  const std::vector<ExposureSpec> exposures = {exp};

  // A constant field renders identical coarse and fine colors, and a static
  // trajectory makes the M-average a single deterministic render.
  Rng r0(1);
  const Vec3 pred_exact = render_blurred_pixel(model, traj, intr, 8, 8,
                                               exp, 3, opts, r0);
  const Vec3 pred = smooth_prediction(pred_exact);

  RayBatchEntry entry;
  entry.u = entry.v = 8;
  entry.frame = 0;
  entry.observed = pred;
  Rng r1(2);
  CHECK(eval.loss_blur({&entry, 1}, exposures, 3, r1) ==
        doctest::Approx(0.0).epsilon(1e-10));

  // One channel off by 0.1 costs 0.01 per branch; coarse and fine branches
  // are identical here, so the total is 0.02.
  entry.observed = pred + Vec3(0.1, 0, 0);
  Rng r2(3);
  CHECK(eval.loss_blur({&entry, 1}, exposures, 3, r2) ==
        doctest::Approx(0.02).epsilon(1e-7));

  CHECK_THROWS(eval.loss_blur({}, exposures, 3, r2));
}

TEST_CASE("prior loss: fixed point and offset hand value") {
  const ModelParams model = make_model(2, /*constant_field=*/true);
  const Trajectory traj = static_trajectory();
  const CameraIntrinsics intr = test_intrinsics();
  const RenderOptions opts = loss_render_options();
  LossEvaluator eval(model, traj, intr, opts);

  ExposureSpec exp;
  exp.t_center = 0.4;
  exp.tau = 0.04;
  const std::vector<ExposureSpec> exposures = {exp};

  Rng r0(1);
  const Vec3 pred = smooth_prediction(
      render_blurred_pixel(model, traj, intr, 5, 9, exp, 1, opts, r0));

  RayBatchEntry entry;
  entry.u = 5;
  entry.v = 9;
  entry.frame = 0;
  entry.observed = Vec3::Zero();
  entry.prior = pred;
  Rng r1(2);
  CHECK(eval.loss_prior({&entry, 1}, exposures, r1) ==
        doctest::Approx(0.0).epsilon(1e-10));
  entry.prior = pred + Vec3(0, 0.1, 0);
  Rng r2(3);
  CHECK(eval.loss_prior({&entry, 1}, exposures, r2) ==
        doctest::Approx(0.02).epsilon(1e-7));

  entry.prior.reset();
  CHECK_THROWS(eval.loss_prior({&entry, 1}, exposures, r2));
}

TEST_CASE("event loss: identical renders give the threshold-squared floor") {
  const ModelParams model = make_model(3, /*constant_field=*/false);
  const Trajectory traj = static_trajectory();
  const CameraIntrinsics intr = test_intrinsics();
  const RenderOptions opts = loss_render_options();
  LossEvaluator eval(model, traj, intr, opts);

  EventCameraModel cam;
  EventPairSample pair;
  pair.u = 7;
  pair.v = 7;
  pair.t_prev = 0.3;
  pair.t_curr = 0.5;
  pair.polarity = +1;

  // Static trajectory + identity refiner: both timestamps render identically,
  // so delta log-brightness is 0 and each branch contributes (0.2)^2.
  for (bool use_ecrf : {true, false}) {
    Rng r(1);
    CHECK(eval.loss_event({&pair, 1}, cam, r, 1.0, nullptr, false, use_ecrf) ==
          doctest::Approx(0.08).epsilon(1e-10));
  }
  Rng r(1);
  CHECK_THROWS(eval.loss_event({}, cam, r));
}

TEST_CASE("total loss gradients match finite differences on a micro-batch") {
  ModelParams model = make_model(4, /*constant_field=*/false);
  // Move the eCRF off its exact-identity zero point so gradients reach its
  // hidden layers too.
  {
    Rng kick(99);
    model.ecrf.mlp.visit("ecrf", [&](const std::string&, auto&& v) {
      for (int i = 0; i < v.size(); ++i) v[i] += 0.02 * kick.normal();
    });
  }
  const Trajectory traj = moving_trajectory();
  const CameraIntrinsics intr = test_intrinsics();
  const RenderOptions opts = loss_render_options();

  ExposureSpec exp;
  exp.t_center = 0.5;
  exp.tau = 0.1;
  const std::vector<ExposureSpec> exposures = {exp};

  std::vector<RayBatchEntry> batch(2);
  batch[0].u = 6;
  batch[0].v = 7;
  batch[0].observed = Vec3(0.4, 0.5, 0.6);
  batch[0].prior = Vec3(0.5, 0.45, 0.5);
  batch[1].u = 10;
  batch[1].v = 5;
  batch[1].observed = Vec3(0.7, 0.3, 0.4);
  batch[1].prior = Vec3(0.6, 0.35, 0.45);

  std::vector<EventPairSample> pairs(2);
  pairs[0] = {6, 8, 0.30, 0.34, +1};
  pairs[1] = {9, 9, 0.55, 0.61, -1};
  EventCameraModel cam;

  const double lb = 1.0, le = 0.1, lp = 0.05;
  const int M = 2;
  auto total = [&](const ModelParams& m, ModelParams* grad) {
    LossEvaluator eval(m, traj, intr, opts);
    Rng r1(101), r2(102), r3(103);
    double L = 0.0;
    L += lb * eval.loss_blur(batch, exposures, M, r1, lb, grad);
    L += le * eval.loss_event(pairs, cam, r2, le, grad);
    L += lp * eval.loss_prior(batch, exposures, r3, lp, grad);
    return L;
  };

  ModelParams grad = model.zeros_like();
  total(model, &grad);

  // Collect named parameter views for sampling.
  struct Slot {
    double* p;
    double g;
  };
  std::vector<Slot> slots;
  {
    std::map<std::string, Eigen::Map<Vec>> gmap;
    grad.visit([&](const std::string& name, auto&& v) {
      gmap.emplace(name, Eigen::Map<Vec>(v.data(), v.size()));
    });
    Rng pick(55);
    model.visit([&](const std::string& name, auto&& v) {
      const auto it = gmap.find(name);
      REQUIRE(it != gmap.end());
      const int n_probe = name.rfind("field.", 0) == 0 ? 4 : 6;
      for (int k = 0; k < n_probe; ++k) {
        const size_t i = pick.uniform_index(static_cast<uint64_t>(v.size()));
        slots.push_back({&v[i], it->second[i]});
      }
    });
  }

  const double h = 1e-5;
  int nonzero_grads = 0;
  for (const Slot& s : slots) {
    const double orig = *s.p;
    *s.p = orig + h;
    const double vp = total(model, nullptr);
    *s.p = orig - h;
    const double vm = total(model, nullptr);
    *s.p = orig;
    const double fd = (vp - vm) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(s.g), 1e-5});
    CHECK(std::abs(fd - s.g) / scale < 1e-3);
    if (std::abs(s.g) > 1e-12) ++nonzero_grads;
  }
  // The batch must actually exercise every parameter group.
  CHECK(nonzero_grads > static_cast<int>(slots.size()) / 2);

  // Frozen refiner: no gradient reaches the refiner parameters.
  ModelParams frozen_grad = model.zeros_like();
  {
    LossEvaluator eval(model, traj, intr, opts);
    Rng r1(101), r2(102);
    eval.loss_blur(batch, exposures, M, r1, 1.0, &frozen_grad, true);
    eval.loss_event(pairs, cam, r2, 1.0, &frozen_grad, true);
  }
  double refiner_norm = 0.0;
  frozen_grad.refiner.visit([&](const std::string&, auto&& v) {
    refiner_norm += Eigen::Map<Vec>(v.data(), v.size()).squaredNorm();
  });
  CHECK(refiner_norm == 0.0);
  double field_norm = 0.0;
  frozen_grad.field.visit([&](const std::string&, auto&& v) {
    field_norm += Eigen::Map<Vec>(v.data(), v.size()).squaredNorm();
  });
  CHECK(field_norm > 0.0);
}

TEST_CASE("render_blurred_pixel: static camera equals a single render") {
  const ModelParams model = make_model(5, /*constant_field=*/false);
  const Trajectory traj = static_trajectory();
  const CameraIntrinsics intr = test_intrinsics();
  const RenderOptions opts = loss_render_options();
  ExposureSpec exp;
  exp.t_center = 0.5;
  exp.tau = 0.1;
  Rng r1(1), r2(2);
  const Vec3 m1 = render_blurred_pixel(model, traj, intr, 8, 8, exp, 1,
                                       opts, r1);
  const Vec3 m7 = render_blurred_pixel(model, traj, intr, 8, 8, exp, 7,
                                       opts, r2);
  CHECK((m1 - m7).norm() < 1e-12);
}
