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

#include <span>
#include <vector>

#include "evbf/encoding.hpp"
#include "evbf/grid.hpp"
#include "evbf/mlp.hpp"
#include "evbf/scene.hpp"

namespace evbf {

struct FieldConfig {
  int L_x = 6;  // position encoding frequencies
  int L_d = 2;  // direction encoding frequencies
  int grid_res = 32;
  int grid_channels = 8;
  std::vector<int> coarse_hidden = {64, 64, 64};
  std::vector<int> fine_hidden = {64, 64, 64, 64};
  double near = 0.8;
  double far = 3.0;
  Vec3 box_min = Vec3::Constant(-0.5);
  Vec3 box_max = Vec3::Constant(0.5);
  double sigma_bias = -1.5;  // density head bias at init (mostly transparent)

  int input_dim() const {
    return encoded_size(3, L_x) + grid_channels + encoded_size(3, L_d);
  }
};

/// Latent sharp scene: coarse/fine MLPs, each with an explicit trilinear
/// feature volume concatenated to its inputs.
struct FieldParams {
  FieldConfig cfg;
  Mlp coarse_mlp, fine_mlp;
  FeatureGrid coarse_grid, fine_grid;

  static FieldParams init(const FieldConfig& cfg, Rng& rng);
  FieldParams zeros_like() const;

  template <typename F>
  void visit(F&& f) {
    coarse_mlp.visit("field.coarse", f);
    fine_mlp.visit("field.fine", f);
    f("field.grid_coarse", Eigen::Map<Vec>(coarse_grid.data.data(),
                                           coarse_grid.data.size()));
    f("field.grid_fine",
      Eigen::Map<Vec>(fine_grid.data.data(), fine_grid.data.size()));
  }
};

enum class FieldLevel { kCoarse, kFine };

/// Single-point field evaluation (color in [0,1], density >= 0).
void query_field(const FieldParams& params, const Vec3& x, const Vec3& d,
                 FieldLevel level, Vec3* color, double* sigma);

struct RenderOutput {
  Vec3 color = Vec3::Zero();  // linear, background NOT composited
  Vec weights;                // per-sample, non-negative
  double tail = 1.0;          // residual transmittance
};

struct CompositeCache {
  Vec s;        // sigma * delta before capping
  Vec trans;    // T_i
  Vec weights;  // w_i
  double tail = 1.0;
};

/// Emission-absorption compositing over strictly increasing depths.
/// colors is 3xN, sigmas N. Throws std::invalid_argument on bad ordering.
RenderOutput composite(const Vec& depths, const Mat& colors, const Vec& sigmas,
                       double far, CompositeCache* cache = nullptr);

/// Reverse pass. d_color is dL/d(color); d_weights (size N or empty) carries
/// external gradients w.r.t. the per-sample weights; d_tail w.r.t. the tail.
/// Outputs accumulate into d_colors / d_sigmas / d_depths (pre-sized, N).
void composite_backward(const Vec& depths, const Mat& colors, const Vec& sigmas,
                        double far, const CompositeCache& cache,
                        const Vec3& d_color, const Vec& d_weights,
                        double d_tail, Mat& d_colors, Vec& d_sigmas,
                        Vec& d_depths);

struct RenderOptions {
  int n_coarse = 32;
  int n_fine = 32;
  Vec3 background = Vec3::Zero();
  bool jitter = true;  // stratified jitter; false = bin midpoints
};

struct RayGrad {
  Vec3 d_origin = Vec3::Zero();
  Vec3 d_direction = Vec3::Zero();
};

/// Batched hierarchical renderer with hand-rolled reverse-mode gradients.
/// The backward pass is exact (up to the a.e.-differentiability of trilinear
/// lookups and bin boundaries): it includes the dependence of the fine sample
/// placement on the coarse weights.
class FieldRenderer {
 public:
  struct LevelBatch {
    Mat x_pos;   // 3 x total
    Mat x_feat;  // input_dim x total
    Mlp::Cache mlp_cache;
    Mat y_raw;  // 4 x total (density logit; rgb logits)
    Vec sigma;
    Mat rgb;  // 3 x total
  };

  struct RayCache {
    Vec coarse_depths;       // n_coarse
    Vec fine_depths;         // n_fine, sorted
    std::vector<double> u;   // inverse-CDF draws
    std::vector<int> bin;    // bin per fine sample (pre-sort order == sorted)
    Vec pdf, cdf;            // n_coarse bins; cdf has n_coarse + 1 entries
    Vec merged_depths;       // n_coarse + n_fine
    std::vector<int> merged_src;  // >=0: fine sample index; -1: coarse-born
    CompositeCache coarse_comp, fine_comp;
    RenderOutput coarse_out, fine_out;
    Vec3 coarse_rgb_bg, fine_rgb_bg;  // with background composited
  };

  struct Workspace {
    std::vector<Ray> rays;
    std::vector<RayCache> per_ray;
    LevelBatch coarse, fine;
  };

  FieldRenderer(const FieldParams& params, const RenderOptions& opts)
      : params_(params), opts_(opts) {}

  void forward(std::span<const Ray> rays, Rng& rng, Workspace& ws) const;

  /// d_* are gradients w.r.t. the background-composited colors. `grad`
  /// accumulates; d_rays (optional) receives per-ray origin/direction grads.
  void backward(const Workspace& ws, std::span<const Vec3> d_coarse_rgb,
                std::span<const Vec3> d_fine_rgb, FieldParams& grad,
                std::vector<RayGrad>* d_rays) const;

  const RenderOptions& options() const { return opts_; }

 private:
  void run_level(FieldLevel level, const std::vector<Ray>& rays,
                 const std::vector<const Vec*>& depths, LevelBatch& batch) const;

  const FieldParams& params_;
  RenderOptions opts_;
};

/// Spec-facing single-ray wrapper.
void render_ray_hierarchical(const FieldParams& params, const Ray& ray,
                             int n_coarse, int n_fine, Rng& rng,
                             RenderOutput* coarse, RenderOutput* fine);

/// Forward-only full-image render (fine branch, background composited,
/// gamma-encoded).
Image render_image(const FieldParams& params, const Pose& pose,
                   const CameraIntrinsics& intr, const RenderOptions& opts,
                   uint64_t seed);

}  // namespace evbf
