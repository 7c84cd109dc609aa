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

#include "evbf/geometry.hpp"
#include "evbf/mlp.hpp"

namespace evbf {

/// Learnable event-camera response: a small polarity-conditioned MLP acting as
/// a residual in logit space, so the output stays strictly inside (0,1) and
/// the zero-initialized network is an exact identity on clamped inputs.
struct ECRFConfig {
  std::vector<int> hidden = {32, 32};
  double clamp_eps = 1e-4;  // input clamp into (0,1) before the logit
};

struct ECRFParams {
  ECRFConfig cfg;
  Mlp mlp;  // (r, g, b, polarity) -> 3 logit offsets

  static ECRFParams init(const ECRFConfig& cfg, Rng& rng);
  ECRFParams zeros_like() const;

  template <typename F>
  void visit(F&& f) {
    mlp.visit("ecrf", f);
  }
};

struct ECRFCache {
  Vec3 input;
  Vec3 clamped;
  Vec4 feat;  // (rgb, polarity)
  Mlp::Cache mlp_cache;
  Vec3 z;    // logit(clamped) + mlp output
  Vec3 out;  // sigmoid(z)
};

/// Corrected intensity in (0,1)^3, conditioned on event polarity (+1/-1).
Vec3 ecrf_apply(const ECRFParams& params, const Vec3& color, int polarity,
                ECRFCache* cache = nullptr);

/// Accumulates into grad; returns dL/d(color). Clamped channels get zero
/// direct color gradient (the MLP input path still contributes).
Vec3 ecrf_backward(const ECRFParams& params, const ECRFCache& cache,
                   const Vec3& d_out, ECRFParams& grad);

/// Log-brightness of the corrected color: log(luma(ecrf(color, p)) + log_eps).
double ecrf_log_luma(const ECRFParams& params, const Vec3& color, int polarity,
                     double log_eps, ECRFCache* cache = nullptr);

/// Chain rule for ecrf_log_luma; returns dL/d(color).
Vec3 ecrf_log_luma_backward(const ECRFParams& params, const ECRFCache& cache,
                            double log_eps, double d_value, ECRFParams& grad);

}  // namespace evbf
