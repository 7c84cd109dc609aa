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

#include "evbf/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "evbf/image.hpp"

using nlohmann::json;

namespace evbf {

namespace {

uint64_t fnv1a(const std::string& s, uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

bool deterministic_env() {
  const char* v = std::getenv("EVBF_DETERMINISTIC");
  return v && v[0] == '1';
}

}  // namespace

RegisterResult register_test_pose(const ModelParams& model,
                                  const CameraIntrinsics& intr,
                                  const Image& reference, const Pose& init,
                                  const RenderOptions& opts,
                                  const RegisterOptions& reg) {
  RegisterResult result;
  result.pose = init;

  // A constant-color target gives no photometric gradient: bail out early.
  double mean = 0.0, var = 0.0;
  for (double v : reference.data) mean += v;
  mean /= static_cast<double>(reference.data.size());
  for (double v : reference.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(reference.data.size());
  if (var < 1e-10) {
    result.warning = true;
    return result;
  }

  // Fixed pixel subset and midpoint sampling keep the objective smooth and
  // deterministic across steps.
  std::vector<std::pair<int, int>> pixels;
  const size_t npx = reference.npx();
  if (reg.n_rays <= 0 || static_cast<size_t>(reg.n_rays) >= npx) {
    for (int y = 0; y < intr.height; ++y)
      for (int x = 0; x < intr.width; ++x) pixels.emplace_back(x, y);
  } else {
    Rng rng(reg.seed);
    pixels.reserve(reg.n_rays);
    for (int i = 0; i < reg.n_rays; ++i)
      pixels.emplace_back(static_cast<int>(rng.uniform_index(intr.width)),
                          static_cast<int>(rng.uniform_index(intr.height)));
  }

  RenderOptions ropts = opts;
  ropts.jitter = false;
  FieldRenderer renderer(model.field, ropts);
  const Vec4 q_init = quat_to_vec(init.rotation);
  const Vec3 t_init = init.translation;

  Eigen::Matrix<double, 7, 1> y = Eigen::Matrix<double, 7, 1>::Zero();
  Eigen::Matrix<double, 7, 1> best_y = y;
  double best_loss = std::numeric_limits<double>::infinity();
  double prev_loss = best_loss;
  int rising = 0;
  Rng render_rng(reg.seed + 1);  // unused when jitter is off
  FieldParams scratch_grad = model.field.zeros_like();

  std::vector<Vec3> d_cams(pixels.size());
  for (size_t i = 0; i < pixels.size(); ++i)
    d_cams[i] =
        intr.pixel_direction(pixels[i].first + 0.5, pixels[i].second + 0.5);

  for (int step = 0; step <= reg.steps; ++step) {
    Pose7Cache p7;
    pose_from_7(y, p7);
    const Vec4 q_ref = quat_mul(p7.q, q_init);
    const Vec3 t_ref = quat_rotate(p7.q, t_init) + p7.t;

    std::vector<Ray> rays(pixels.size());
    for (size_t i = 0; i < pixels.size(); ++i) {
      rays[i].origin = t_ref;
      rays[i].direction = quat_rotate(q_ref, d_cams[i]);
      rays[i].near = model.field.cfg.near;
      rays[i].far = model.field.cfg.far;
    }
    FieldRenderer::Workspace ws;
    renderer.forward(rays, render_rng, ws);

    double loss = 0.0;
    std::vector<Vec3> d_fine(pixels.size(), Vec3::Zero());
    std::vector<Vec3> d_zero(pixels.size(), Vec3::Zero());
    const double inv_n = 1.0 / static_cast<double>(pixels.size());
    for (size_t i = 0; i < pixels.size(); ++i) {
      const double* ref = reference.px(pixels[i].first, pixels[i].second);
      const Vec3& c = ws.per_ray[i].fine_rgb_bg;
      for (int ch = 0; ch < 3; ++ch) {
        const double err = gamma_encode_smooth(c[ch]) - ref[ch];
        loss += inv_n * err * err;
        d_fine[i][ch] =
            inv_n * 2.0 * err * gamma_encode_smooth_grad(c[ch]);
      }
    }

    if (loss < best_loss) {
      best_loss = loss;
      best_y = y;
    }
    if (loss > prev_loss) {
      if (++rising >= 3) {
        result.warning = true;
        break;
      }
    } else {
      rising = 0;
    }
    prev_loss = loss;
    if (step == reg.steps) break;

    std::vector<RayGrad> d_rays;
    renderer.backward(ws, d_zero, d_fine, scratch_grad, &d_rays);
    Vec4 d_q = Vec4::Zero();
    Vec3 d_t = Vec3::Zero();
    for (size_t i = 0; i < pixels.size(); ++i) {
      d_q += quat_rotate_jac_q(q_ref, d_cams[i]).transpose() *
             d_rays[i].d_direction;
      d_t += d_rays[i].d_origin;
    }
    Vec4 d_qd = quat_mul_jac_left(q_init).transpose() * d_q;
    d_qd += quat_rotate_jac_q(p7.q, t_init).transpose() * d_t;
    const Eigen::Matrix<double, 7, 1> dy = pose_from_7_backward(p7, d_qd, d_t);
    y -= reg.lr * dy;
  }

  Pose7Cache p7;
  pose_from_7(best_y, p7);
  result.pose = Pose(vec_to_quat(quat_mul(p7.q, q_init)),
                     quat_rotate(p7.q, t_init) + p7.t);
  result.final_loss = best_loss;
  return result;
}

Trajectory refined_trajectory(const TrainerState& state,
                              const DatasetBundle& bundle) {
  Trajectory out;
  for (const Trajectory::Sample& s : bundle.traj_prior.samples)
    out.samples.push_back(
        {s.t, refined_pose(state.model.refiner, bundle.traj_prior, s.t)});
  return out;
}

json EvalReport::to_json() const {
  json j;
  json views = json::array();
  for (const ViewMetrics& v : per_view)
    views.push_back({{"index", v.index},
                     {"psnr", v.psnr_db},
                     {"ssim", v.ssim_val},
                     {"reg_warning", v.reg_warning}});
  j["per_view"] = views;
  j["mean_psnr"] = mean_psnr;
  j["mean_ssim"] = mean_ssim;
  auto traj_json = [](const TrajectoryErrorReport& e) {
    return json{{"ate_rmse_cm", e.ate_rmse_cm},
                {"rpe_trans_pct", e.rpe_trans_pct},
                {"rpe_rot_deg_per_m", e.rpe_rot_deg_per_m}};
  };
  j["prior"] = traj_json(prior_error);
  j["refined"] = traj_json(refined_error);
  j["config_hash"] = config_hash;
  j["wall_clock_sec"] = wall_clock_sec;
  return j;
}

std::string EvalReport::per_view_csv() const {
  std::ostringstream os;
  os << "index,psnr,ssim,reg_warning\n";
  os.precision(12);
  for (const ViewMetrics& v : per_view)
    os << v.index << ',' << v.psnr_db << ',' << v.ssim_val << ','
       << (v.reg_warning ? 1 : 0) << '\n';
  return os.str();
}

EvalReport evaluate(const TrainerState& state, const DatasetBundle& bundle,
                    const EvalOptions& opts) {
  const auto t_start = std::chrono::steady_clock::now();
  EvalReport report;

  const Trajectory refined = refined_trajectory(state, bundle);
  report.prior_error =
      trajectory_errors(bundle.traj_prior, bundle.traj_true, opts.aligned);
  report.refined_error =
      trajectory_errors(refined, bundle.traj_true, opts.aligned);

  // Transfer true holdout poses into the model's (refined) frame.
  const AlignmentTransform align =
      umeyama_align(bundle.traj_true, refined, true);

  RenderOptions ropts;
  ropts.n_coarse = state.config.n_coarse;
  ropts.n_fine = state.config.n_fine;
  ropts.background = bundle.background;
  ropts.jitter = false;

  for (size_t i = 0; i < bundle.holdout.size(); ++i) {
    const Pose true_pose =
        slerp_interpolate(bundle.traj_true, bundle.holdout_times[i]);
    const Pose init = align.apply_pose(true_pose);
    const RegisterResult reg = register_test_pose(
        state.model, bundle.intr, bundle.holdout[i], init, ropts, opts.reg);
    const Image render =
        render_image(state.model.field, reg.pose, bundle.intr, ropts, 0);
    ViewMetrics vm;
    vm.index = static_cast<int>(i);
    vm.psnr_db = psnr(render, bundle.holdout[i]);
    vm.ssim_val = ssim(render, bundle.holdout[i]);
    vm.reg_warning = reg.warning;
    report.per_view.push_back(vm);
    report.mean_psnr += vm.psnr_db;
    report.mean_ssim += vm.ssim_val;
    if (opts.rendered_out) opts.rendered_out->push_back(render);
  }
  if (!report.per_view.empty()) {
    report.mean_psnr /= static_cast<double>(report.per_view.size());
    report.mean_ssim /= static_cast<double>(report.per_view.size());
  }

  std::ostringstream hash_src;
  hash_src << train_config_to_json(state.config).dump() << '|'
           << state.intrinsics_hash;
  report.config_hash = fnv1a(hash_src.str());

  const bool det = state.config.deterministic || deterministic_env();
  report.wall_clock_sec =
      det ? 0.0
          : std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t_start)
                .count();
  return report;
}

}  // namespace evbf
