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

#include "evbf/ecrf.hpp"

#include <cmath>

#include "evbf/image.hpp"

namespace evbf {

ECRFParams ECRFParams::init(const ECRFConfig& cfg, Rng& rng) {
  ECRFParams p;
  p.cfg = cfg;
  std::vector<int> dims = {4};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(3);
  p.mlp = Mlp(dims, rng);
  p.mlp.zero_output_layer();  // exact identity response at init
  return p;
}

ECRFParams ECRFParams::zeros_like() const {
  ECRFParams p;
  p.cfg = cfg;
  p.mlp = mlp.zeros_like();
  return p;
}

Vec3 ecrf_apply(const ECRFParams& params, const Vec3& color, int polarity,
                ECRFCache* cache) {
  ECRFCache local;
  ECRFCache& c = cache ? *cache : local;
  c.input = color;
  const double eps = params.cfg.clamp_eps;
  for (int i = 0; i < 3; ++i)
    c.clamped[i] = std::clamp(color[i], eps, 1.0 - eps);
  c.feat = Vec4(color[0], color[1], color[2], static_cast<double>(polarity));
  const Mat dz = params.mlp.forward(c.feat, &c.mlp_cache);
  for (int i = 0; i < 3; ++i) {
    c.z[i] = std::log(c.clamped[i] / (1.0 - c.clamped[i])) + dz(i, 0);
    c.out[i] = 1.0 / (1.0 + std::exp(-c.z[i]));
  }
  return c.out;
}

Vec3 ecrf_backward(const ECRFParams& params, const ECRFCache& cache,
                   const Vec3& d_out, ECRFParams& grad) {
  Vec3 dz;
  for (int i = 0; i < 3; ++i)
    dz[i] = d_out[i] * cache.out[i] * (1.0 - cache.out[i]);
  const Mat d_feat = params.mlp.backward(cache.mlp_cache, Mat(dz), grad.mlp);
  Vec3 d_color = d_feat.col(0).head<3>();
  const double eps = params.cfg.clamp_eps;
  for (int i = 0; i < 3; ++i) {
    const double x = cache.input[i];
    if (x > eps && x < 1.0 - eps)
      d_color[i] += dz[i] / (x * (1.0 - x));  // d logit/dx
  }
  return d_color;
}

double ecrf_log_luma(const ECRFParams& params, const Vec3& color, int polarity,
                     double log_eps, ECRFCache* cache) {
  ECRFCache local;
  ECRFCache& c = cache ? *cache : local;
  ecrf_apply(params, color, polarity, &c);
  return std::log(luma(c.out) + log_eps);
}

Vec3 ecrf_log_luma_backward(const ECRFParams& params, const ECRFCache& cache,
                            double log_eps, double d_value, ECRFParams& grad) {
  const double dl = d_value / (luma(cache.out) + log_eps);
  const Vec3 d_out(0.299 * dl, 0.587 * dl, 0.114 * dl);
  return ecrf_backward(params, cache, d_out, grad);
}

}  // namespace evbf
