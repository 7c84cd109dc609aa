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

#include <optional>
#include <span>
#include <vector>

#include "evbf/ecrf.hpp"
#include "evbf/events.hpp"
#include "evbf/field.hpp"
#include "evbf/refiner.hpp"

namespace evbf {

/// All learnable parameter groups, stepped jointly by the trainer.
struct ModelParams {
  FieldParams field;
  RefinerParams refiner;
  ECRFParams ecrf;

  ModelParams zeros_like() const;

  template <typename F>
  void visit(F&& f) {
    field.visit(f);
    refiner.visit(f);
    ecrf.visit(f);
  }
};

struct LossWeights {
  double lambda_b = 1.0;
  double lambda_e = 0.1;
  double lambda_p_init = 0.1;
  int lambda_p_decay_iters = 20000;
};

/// Cosine decay: lambda_p_init * 0.5 * (1 + cos(pi * iter / decay)) before
/// decay_iters, 0 after.
double lambda_p_at(int iter, const LossWeights& weights);

/// M uniformly spaced timestamps spanning the exposure, endpoints included
/// (M >= 2); M == 1 returns the center.
std::vector<double> sample_exposure_timestamps(const ExposureSpec& exp, int M);

/// One supervised pixel: observation from blurred frame `frame`, optional
/// sharp pseudo-target from the EDI prior image.
struct RayBatchEntry {
  int u = 0, v = 0;
  int frame = 0;
  Vec3 observed = Vec3::Zero();           // gamma-encoded blurred color
  std::optional<Vec3> prior;              // gamma-encoded EDI color
};

struct EventPairSample {
  int u = 0, v = 0;
  double t_prev = 0.0, t_curr = 0.0;
  int polarity = 0;  // of the current event
};

/// Pairs each event with the most recent same-pixel predecessor no older than
/// `window` seconds; events without one are skipped. Stream must be sorted.
std::vector<EventPairSample> pair_events(const std::vector<EventRecord>& stream,
                                         double window);

/// Gamma used inside differentiable losses: offset by a small floor so the
/// derivative stays finite at zero. The offset shifts values by < 2e-3.
double gamma_encode_smooth(double x);
double gamma_encode_smooth_grad(double x);

/// Shared renderer for the three loss branches: batches every requested
/// (pixel, timestamp) ray through one hierarchical render, with the backward
/// pass routed through ray origin/direction into the pose refiner.
class LossEvaluator {
 public:
  LossEvaluator(const ModelParams& model, const Trajectory& traj_prior,
                const CameraIntrinsics& intr, const RenderOptions& opts)
      : model_(model), traj_(traj_prior), intr_(intr), opts_(opts) {}

  /// Mean over entries of the squared error (summed over channels and over
  /// the coarse and fine branches) between the gamma-encoded M-sample linear
  /// average and the observed blurred color. If grad is non-null, accumulates
  /// weight * dLoss into it.
  double loss_blur(std::span<const RayBatchEntry> batch,
                   std::span<const ExposureSpec> exposures, int M, Rng& rng,
                   double weight = 1.0, ModelParams* grad = nullptr,
                   bool freeze_refiner = false) const;

  /// MSE between mid-exposure renders and the EDI prior colors.
  /// Throws if any entry lacks a prior color.
  double loss_prior(std::span<const RayBatchEntry> batch,
                    std::span<const ExposureSpec> exposures, Rng& rng,
                    double weight = 1.0, ModelParams* grad = nullptr,
                    bool freeze_refiner = false) const;

  /// Mean over pairs of (delta log-brightness - p * theta_p)^2, coarse and
  /// fine branches summed. use_ecrf=false bypasses the learned response.
  double loss_event(std::span<const EventPairSample> pairs,
                    const EventCameraModel& model, Rng& rng,
                    double weight = 1.0, ModelParams* grad = nullptr,
                    bool freeze_refiner = false, bool use_ecrf = true) const;

 private:
  struct Request {
    double u = 0.0, v = 0.0;  // pixel center coordinates
    double t = 0.0;
  };
  /// Renders all requests in one batch; d_* callbacks supply per-request
  /// color grads (already weighted) for the backward pass.
  struct RenderResult {
    std::vector<Vec3> coarse, fine;  // background-composited linear colors
  };
  void render_batch(const std::vector<Request>& reqs, Rng& rng,
                    RenderResult& out, FieldRenderer::Workspace& ws,
                    std::vector<RefinedPoseCache>& nodes,
                    std::vector<int>& node_of, std::vector<Vec3>& d_cams) const;
  void backward_batch(const std::vector<Request>& reqs,
                      const FieldRenderer::Workspace& ws,
                      const std::vector<RefinedPoseCache>& nodes,
                      const std::vector<int>& node_of,
                      const std::vector<Vec3>& d_cams,
                      const std::vector<Vec3>& d_coarse,
                      const std::vector<Vec3>& d_fine, ModelParams& grad,
                      bool freeze_refiner) const;

  const ModelParams& model_;
  const Trajectory& traj_;
  const CameraIntrinsics& intr_;
  RenderOptions opts_;
};

/// Eq.-style blurred pixel: average of M in-exposure fine renders at refined
/// poses, gamma-encoded. If coarse_out is non-null, receives the coarse
/// counterpart.
Vec3 render_blurred_pixel(const ModelParams& model, const Trajectory& traj,
                          const CameraIntrinsics& intr, int u, int v,
                          const ExposureSpec& exp, int M,
                          const RenderOptions& opts, Rng& rng,
                          Vec3* coarse_out = nullptr);

}  // namespace evbf
