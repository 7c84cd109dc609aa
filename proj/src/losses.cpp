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

#include "evbf/losses.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "evbf/image.hpp"

namespace evbf {

namespace {
constexpr double kGammaFloor = 1e-6;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams p;
  p.field = field.zeros_like();
  p.refiner = refiner.zeros_like();
  p.ecrf = ecrf.zeros_like();
  return p;
}

double lambda_p_at(int iter, const LossWeights& weights) {
  if (iter < 0) throw std::invalid_argument("negative iteration");
  if (weights.lambda_p_decay_iters <= 0 || iter >= weights.lambda_p_decay_iters)
    return 0.0;
  const double phase =
      M_PI * static_cast<double>(iter) / weights.lambda_p_decay_iters;
  return weights.lambda_p_init * 0.5 * (1.0 + std::cos(phase));
}

std::vector<double> sample_exposure_timestamps(const ExposureSpec& exp, int M) {
  if (M < 1) throw std::invalid_argument("M must be >= 1");
  if (M == 1) return {exp.t_center};
  std::vector<double> ts(M);
  const double t0 = exp.t_begin();
  const double step = exp.tau / (M - 1);
  for (int m = 0; m < M; ++m) ts[m] = t0 + m * step;
  return ts;
}

std::vector<EventPairSample> pair_events(const std::vector<EventRecord>& stream,
                                         double window) {
  // last[pixel] = timestamp of the most recent event seen there.
  std::map<std::pair<int, int>, double> last;
  std::vector<EventPairSample> pairs;
  for (const EventRecord& e : stream) {
    const std::pair<int, int> key(e.u, e.v);
    auto it = last.find(key);
    if (it != last.end() && e.t - it->second <= window && e.t > it->second)
      pairs.push_back({e.u, e.v, it->second, e.t, e.p});
    last[key] = e.t;
  }
  return pairs;
}

double gamma_encode_smooth(double x) {
  return std::pow(std::max(x, 0.0) + kGammaFloor, 1.0 / kGamma);
}

double gamma_encode_smooth_grad(double x) {
  const double b = std::max(x, 0.0) + kGammaFloor;
  double g = (1.0 / kGamma) * std::pow(b, 1.0 / kGamma - 1.0);
  if (x < 0.0) g = 0.0;
  return g;
}

void LossEvaluator::render_batch(const std::vector<Request>& reqs, Rng& rng,
                                 RenderResult& out,
                                 FieldRenderer::Workspace& ws,
                                 std::vector<RefinedPoseCache>& nodes,
                                 std::vector<int>& node_of,
                                 std::vector<Vec3>& d_cams) const {
  std::map<double, int> node_index;
  nodes.clear();
  node_of.resize(reqs.size());
  d_cams.resize(reqs.size());
  for (size_t i = 0; i < reqs.size(); ++i) {
    auto [it, inserted] =
        node_index.try_emplace(reqs[i].t, static_cast<int>(nodes.size()));
    if (inserted) {
      nodes.emplace_back();
      refined_pose_fwd(model_.refiner, traj_, reqs[i].t, nodes.back());
    }
    node_of[i] = it->second;
  }
  std::vector<Ray> rays(reqs.size());
  for (size_t i = 0; i < reqs.size(); ++i) {
    const RefinedPoseCache& n = nodes[node_of[i]];
    d_cams[i] = intr_.pixel_direction(reqs[i].u, reqs[i].v);
    rays[i].origin = n.t_ref;
    rays[i].direction = quat_rotate(n.q_ref, d_cams[i]);
    rays[i].near = model_.field.cfg.near;
    rays[i].far = model_.field.cfg.far;
  }
  FieldRenderer renderer(model_.field, opts_);
  renderer.forward(rays, rng, ws);
  out.coarse.resize(reqs.size());
  out.fine.resize(reqs.size());
  for (size_t i = 0; i < reqs.size(); ++i) {
    out.coarse[i] = ws.per_ray[i].coarse_rgb_bg;
    out.fine[i] = ws.per_ray[i].fine_rgb_bg;
  }
}

void LossEvaluator::backward_batch(const std::vector<Request>& reqs,
                                   const FieldRenderer::Workspace& ws,
                                   const std::vector<RefinedPoseCache>& nodes,
                                   const std::vector<int>& node_of,
                                   const std::vector<Vec3>& d_cams,
                                   const std::vector<Vec3>& d_coarse,
                                   const std::vector<Vec3>& d_fine,
                                   ModelParams& grad,
                                   bool freeze_refiner) const {
  FieldRenderer renderer(model_.field, opts_);
  std::vector<RayGrad> d_rays;
  renderer.backward(ws, d_coarse, d_fine, grad.field,
                    freeze_refiner ? nullptr : &d_rays);
  if (freeze_refiner) return;
  std::vector<Vec4> d_q(nodes.size(), Vec4::Zero());
  std::vector<Vec3> d_t(nodes.size(), Vec3::Zero());
  for (size_t i = 0; i < reqs.size(); ++i) {
    const int n = node_of[i];
    d_q[n] += quat_rotate_jac_q(nodes[n].q_ref, d_cams[i]).transpose() *
              d_rays[i].d_direction;
    d_t[n] += d_rays[i].d_origin;
  }
  for (size_t n = 0; n < nodes.size(); ++n)
    refined_pose_backward(model_.refiner, nodes[n], d_q[n], d_t[n],
                          grad.refiner);
}

double LossEvaluator::loss_blur(std::span<const RayBatchEntry> batch,
                                std::span<const ExposureSpec> exposures, int M,
                                Rng& rng, double weight, ModelParams* grad,
                                bool freeze_refiner) const {
  if (batch.empty()) throw std::invalid_argument("empty blur batch");
  std::vector<Request> reqs;
  reqs.reserve(batch.size() * M);
  for (const RayBatchEntry& e : batch) {
    const std::vector<double> ts =
        sample_exposure_timestamps(exposures[e.frame], M);
    for (double t : ts) reqs.push_back({e.u + 0.5, e.v + 0.5, t});
  }

  RenderResult rr;
  FieldRenderer::Workspace ws;
  std::vector<RefinedPoseCache> nodes;
  std::vector<int> node_of;
  std::vector<Vec3> d_cams;
  render_batch(reqs, rng, rr, ws, nodes, node_of, d_cams);

  double loss = 0.0;
  std::vector<Vec3> d_coarse(reqs.size(), Vec3::Zero());
  std::vector<Vec3> d_fine(reqs.size(), Vec3::Zero());
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (size_t b = 0; b < batch.size(); ++b) {
    const size_t base = b * M;
    for (int branch = 0; branch < 2; ++branch) {
      const std::vector<Vec3>& colors = branch == 0 ? rr.coarse : rr.fine;
      std::vector<Vec3>& d_colors = branch == 0 ? d_coarse : d_fine;
      Vec3 mean = Vec3::Zero();
      for (int m = 0; m < M; ++m) mean += colors[base + m];
      mean /= M;
      for (int c = 0; c < 3; ++c) {
        const double err = gamma_encode_smooth(mean[c]) - batch[b].observed[c];
        loss += inv_b * err * err;
        if (grad) {
          const double dm = weight * inv_b * 2.0 * err *
                            gamma_encode_smooth_grad(mean[c]) / M;
          for (int m = 0; m < M; ++m) d_colors[base + m][c] += dm;
        }
      }
    }
  }
  if (grad)
    backward_batch(reqs, ws, nodes, node_of, d_cams, d_coarse, d_fine, *grad,
                   freeze_refiner);
  return loss;
}

double LossEvaluator::loss_prior(std::span<const RayBatchEntry> batch,
                                 std::span<const ExposureSpec> exposures,
                                 Rng& rng, double weight, ModelParams* grad,
                                 bool freeze_refiner) const {
  if (batch.empty()) throw std::invalid_argument("empty prior batch");
  std::vector<Request> reqs;
  reqs.reserve(batch.size());
  for (const RayBatchEntry& e : batch) {
    if (!e.prior) throw std::invalid_argument("batch entry lacks prior color");
    reqs.push_back({e.u + 0.5, e.v + 0.5, exposures[e.frame].t_center});
  }

  RenderResult rr;
  FieldRenderer::Workspace ws;
  std::vector<RefinedPoseCache> nodes;
  std::vector<int> node_of;
  std::vector<Vec3> d_cams;
  render_batch(reqs, rng, rr, ws, nodes, node_of, d_cams);

  double loss = 0.0;
  std::vector<Vec3> d_coarse(reqs.size(), Vec3::Zero());
  std::vector<Vec3> d_fine(reqs.size(), Vec3::Zero());
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (size_t b = 0; b < batch.size(); ++b) {
    for (int branch = 0; branch < 2; ++branch) {
      const Vec3& color = branch == 0 ? rr.coarse[b] : rr.fine[b];
      Vec3& d_color = branch == 0 ? d_coarse[b] : d_fine[b];
      for (int c = 0; c < 3; ++c) {
        const double err = gamma_encode_smooth(color[c]) - (*batch[b].prior)[c];
        loss += inv_b * err * err;
        if (grad)
          d_color[c] += weight * inv_b * 2.0 * err *
                        gamma_encode_smooth_grad(color[c]);
      }
    }
  }
  if (grad)
    backward_batch(reqs, ws, nodes, node_of, d_cams, d_coarse, d_fine, *grad,
                   freeze_refiner);
  return loss;
}

double LossEvaluator::loss_event(std::span<const EventPairSample> pairs,
                                 const EventCameraModel& cam, Rng& rng,
                                 double weight, ModelParams* grad,
                                 bool freeze_refiner, bool use_ecrf) const {
  if (pairs.empty()) throw std::invalid_argument("empty event batch");
  std::vector<Request> reqs;
  reqs.reserve(pairs.size() * 2);
  for (const EventPairSample& p : pairs) {
    reqs.push_back({p.u + 0.5, p.v + 0.5, p.t_prev});
    reqs.push_back({p.u + 0.5, p.v + 0.5, p.t_curr});
  }

  RenderResult rr;
  FieldRenderer::Workspace ws;
  std::vector<RefinedPoseCache> nodes;
  std::vector<int> node_of;
  std::vector<Vec3> d_cams;
  render_batch(reqs, rng, rr, ws, nodes, node_of, d_cams);

  double loss = 0.0;
  std::vector<Vec3> d_coarse(reqs.size(), Vec3::Zero());
  std::vector<Vec3> d_fine(reqs.size(), Vec3::Zero());
  const double inv_b = 1.0 / static_cast<double>(pairs.size());
  for (size_t b = 0; b < pairs.size(); ++b) {
    const EventPairSample& pr = pairs[b];
    const double theta = pr.polarity > 0 ? cam.theta_pos : cam.theta_neg;
    const double target = pr.polarity * theta;
    for (int branch = 0; branch < 2; ++branch) {
      const std::vector<Vec3>& colors = branch == 0 ? rr.coarse : rr.fine;
      std::vector<Vec3>& d_colors = branch == 0 ? d_coarse : d_fine;
      ECRFCache cache_prev, cache_curr;
      double l_prev, l_curr;
      if (use_ecrf) {
        l_prev = ecrf_log_luma(model_.ecrf, colors[2 * b], pr.polarity,
                               cam.log_eps, &cache_prev);
        l_curr = ecrf_log_luma(model_.ecrf, colors[2 * b + 1], pr.polarity,
                               cam.log_eps, &cache_curr);
      } else {
        l_prev = std::log(luma(colors[2 * b].cwiseMax(0.0)) + cam.log_eps);
        l_curr = std::log(luma(colors[2 * b + 1].cwiseMax(0.0)) + cam.log_eps);
      }
      const double err = (l_curr - l_prev) - target;
      loss += inv_b * err * err;
      if (grad) {
        const double d_err = weight * inv_b * 2.0 * err;
        if (use_ecrf) {
          d_colors[2 * b] += ecrf_log_luma_backward(model_.ecrf, cache_prev,
                                                    cam.log_eps, -d_err,
                                                    grad->ecrf);
          d_colors[2 * b + 1] += ecrf_log_luma_backward(model_.ecrf, cache_curr,
                                                        cam.log_eps, d_err,
                                                        grad->ecrf);
        } else {
          const Vec3 w(0.299, 0.587, 0.114);
          auto add = [&](int idx, double sign) {
            const Vec3 c = colors[idx].cwiseMax(0.0);
            const double denom = luma(c) + cam.log_eps;
            for (int ch = 0; ch < 3; ++ch)
              if (colors[idx][ch] > 0.0)
                d_colors[idx][ch] += sign * d_err * w[ch] / denom;
          };
          add(2 * b, -1.0);
          add(2 * b + 1, 1.0);
        }
      }
    }
  }
  if (grad)
    backward_batch(reqs, ws, nodes, node_of, d_cams, d_coarse, d_fine, *grad,
                   freeze_refiner);
  return loss;
}

Vec3 render_blurred_pixel(const ModelParams& model, const Trajectory& traj,
                          const CameraIntrinsics& intr, int u, int v,
                          const ExposureSpec& exp, int M,
                          const RenderOptions& opts, Rng& rng,
                          Vec3* coarse_out) {
  const std::vector<double> ts = sample_exposure_timestamps(exp, M);
  FieldRenderer renderer(model.field, opts);
  std::vector<Ray> rays(ts.size());
  const Vec3 d_cam = intr.pixel_direction(u + 0.5, v + 0.5);
  for (size_t m = 0; m < ts.size(); ++m) {
    const Pose pose = refined_pose(model.refiner, traj, ts[m]);
    rays[m].origin = pose.translation;
    rays[m].direction = pose.rotation * d_cam;
    rays[m].near = model.field.cfg.near;
    rays[m].far = model.field.cfg.far;
  }
  FieldRenderer::Workspace ws;
  renderer.forward(rays, rng, ws);
  Vec3 mean_c = Vec3::Zero(), mean_f = Vec3::Zero();
  for (size_t m = 0; m < ts.size(); ++m) {
    mean_c += ws.per_ray[m].coarse_rgb_bg;
    mean_f += ws.per_ray[m].fine_rgb_bg;
  }
  mean_c /= static_cast<double>(ts.size());
  mean_f /= static_cast<double>(ts.size());
  if (coarse_out)
    *coarse_out = Vec3(gamma_encode(mean_c[0]), gamma_encode(mean_c[1]),
                       gamma_encode(mean_c[2]));
  return Vec3(gamma_encode(mean_f[0]), gamma_encode(mean_f[1]),
              gamma_encode(mean_f[2]));
}

}  // namespace evbf
