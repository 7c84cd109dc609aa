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

#include "evbf/field.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace evbf {

namespace {

constexpr double kAlphaCap = 30.0;  // cap on sigma*delta inside compositing

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
inline double sigmoid(double x) {
  return x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

FieldParams FieldParams::init(const FieldConfig& cfg, Rng& rng) {
  FieldParams p;
  p.cfg = cfg;
  std::vector<int> cdims = {cfg.input_dim()};
  cdims.insert(cdims.end(), cfg.coarse_hidden.begin(), cfg.coarse_hidden.end());
  cdims.push_back(4);
  std::vector<int> fdims = {cfg.input_dim()};
  fdims.insert(fdims.end(), cfg.fine_hidden.begin(), cfg.fine_hidden.end());
  fdims.push_back(4);
  p.coarse_mlp = Mlp(cdims, rng, 0.1);
  p.fine_mlp = Mlp(fdims, rng, 0.1);
  p.coarse_mlp.biases().back()[0] = cfg.sigma_bias;
  p.fine_mlp.biases().back()[0] = cfg.sigma_bias;
  p.coarse_grid =
      FeatureGrid(cfg.grid_res, cfg.grid_channels, cfg.box_min, cfg.box_max, rng);
  p.fine_grid =
      FeatureGrid(cfg.grid_res, cfg.grid_channels, cfg.box_min, cfg.box_max, rng);
  return p;
}

FieldParams FieldParams::zeros_like() const {
  FieldParams p;
  p.cfg = cfg;
  p.coarse_mlp = coarse_mlp.zeros_like();
  p.fine_mlp = fine_mlp.zeros_like();
  p.coarse_grid = coarse_grid.zeros_like();
  p.fine_grid = fine_grid.zeros_like();
  return p;
}

namespace {

// Assembles the feature column [enc_pos | grid | enc_dir] for one sample.
void assemble_features(const FieldConfig& cfg, const FeatureGrid& grid,
                       const Vec3& x, const Vec3& d, double* col) {
  const int p_len = encoded_size(3, cfg.L_x);
  encode_sinusoidal<3>(x, cfg.L_x, col);
  grid.lookup(x, col + p_len);
  encode_sinusoidal<3>(d, cfg.L_d, col + p_len + cfg.grid_channels);
}

}  // namespace

void query_field(const FieldParams& params, const Vec3& x, const Vec3& d,
                 FieldLevel level, Vec3* color, double* sigma) {
  if (!x.allFinite() || !d.allFinite())
    throw std::domain_error("non-finite field query input");
  const bool coarse = (level == FieldLevel::kCoarse);
  const Mlp& mlp = coarse ? params.coarse_mlp : params.fine_mlp;
  const FeatureGrid& grid = coarse ? params.coarse_grid : params.fine_grid;
  Mat feat(params.cfg.input_dim(), 1);
  assemble_features(params.cfg, grid, x, d, feat.data());
  const Mat y = mlp.forward(feat);
  if (sigma) *sigma = softplus(y(0, 0));
  if (color) *color = Vec3(sigmoid(y(1, 0)), sigmoid(y(2, 0)), sigmoid(y(3, 0)));
}

RenderOutput composite(const Vec& depths, const Mat& colors, const Vec& sigmas,
                       double far, CompositeCache* cache) {
  const int n = static_cast<int>(depths.size());
  if (n == 0 || colors.cols() != n || sigmas.size() != n)
    throw std::invalid_argument("composite: shape mismatch");
  for (int i = 1; i < n; ++i)
    if (!(depths[i] > depths[i - 1]))
      throw std::invalid_argument("composite: depths must strictly increase");

  RenderOutput out;
  out.weights = Vec::Zero(n);
  CompositeCache local;
  CompositeCache& cc = cache ? *cache : local;
  cc.s = Vec::Zero(n);
  cc.trans = Vec::Zero(n);
  cc.weights = Vec::Zero(n);

  double trans = 1.0;
  for (int i = 0; i < n; ++i) {
    const double delta = (i + 1 < n) ? depths[i + 1] - depths[i] : far - depths[i];
    cc.s[i] = sigmas[i] * std::max(delta, 0.0);
    const double s = std::min(cc.s[i], kAlphaCap);
    const double alpha = -std::expm1(-s);
    cc.trans[i] = trans;
    const double w = trans * alpha;
    cc.weights[i] = w;
    out.weights[i] = w;
    out.color += w * colors.col(i);
    trans *= 1.0 - alpha;
  }
  cc.tail = trans;
  out.tail = trans;
  return out;
}

void composite_backward(const Vec& depths, const Mat& colors, const Vec& sigmas,
                        double far, const CompositeCache& cache,
                        const Vec3& d_color, const Vec& d_weights,
                        double d_tail, Mat& d_colors, Vec& d_sigmas,
                        Vec& d_depths) {
  const int n = static_cast<int>(depths.size());
  const bool has_w = d_weights.size() == n;

  // Suffix accumulator S_i = sum_{k>i} G_k w_k + d_tail * tail, where
  // G_k = d_color . c_k + d_weights_k. Using
  // d s_i = G_i T_i (1 - alpha_i) - S_i avoids dividing by (1 - alpha).
  double suffix = d_tail * cache.tail;
  for (int i = n - 1; i >= 0; --i) {
    const double g = d_color.dot(colors.col(i)) + (has_w ? d_weights[i] : 0.0);
    d_colors.col(i) += d_color * cache.weights[i];
    const double s = std::min(cache.s[i], kAlphaCap);
    const double em = std::exp(-s);  // 1 - alpha_i
    double ds = g * cache.trans[i] * em - suffix;
    if (cache.s[i] >= kAlphaCap) ds = 0.0;
    const double delta = (i + 1 < n) ? depths[i + 1] - depths[i] : far - depths[i];
    d_sigmas[i] += ds * std::max(delta, 0.0);
    if (delta > 0.0) {
      const double dd = ds * sigmas[i];  // dL/d(delta_i)
      d_depths[i] -= dd;
      if (i + 1 < n) d_depths[i + 1] += dd;
    }
    suffix += g * cache.weights[i];
  }
}

void FieldRenderer::run_level(FieldLevel level, const std::vector<Ray>& rays,
                              const std::vector<const Vec*>& depths,
                              LevelBatch& batch) const {
  const bool coarse = (level == FieldLevel::kCoarse);
  const Mlp& mlp = coarse ? params_.coarse_mlp : params_.fine_mlp;
  const FeatureGrid& grid = coarse ? params_.coarse_grid : params_.fine_grid;
  const FieldConfig& cfg = params_.cfg;

  Eigen::Index total = 0;
  for (const Vec* d : depths) total += d->size();
  batch.x_pos.resize(3, total);
  batch.x_feat.resize(cfg.input_dim(), total);

  Eigen::Index col = 0;
  for (size_t r = 0; r < rays.size(); ++r) {
    const Vec& t = *depths[r];
    for (Eigen::Index i = 0; i < t.size(); ++i, ++col) {
      const Vec3 x = rays[r].origin + t[i] * rays[r].direction;
      batch.x_pos.col(col) = x;
      assemble_features(cfg, grid, x, rays[r].direction,
                        batch.x_feat.col(col).data());
    }
  }

  batch.y_raw = mlp.forward(batch.x_feat, &batch.mlp_cache);
  batch.sigma.resize(total);
  batch.rgb.resize(3, total);
  for (Eigen::Index i = 0; i < total; ++i) {
    batch.sigma[i] = softplus(batch.y_raw(0, i));
    for (int c = 0; c < 3; ++c) batch.rgb(c, i) = sigmoid(batch.y_raw(1 + c, i));
  }
}

void FieldRenderer::forward(std::span<const Ray> rays, Rng& rng,
                            Workspace& ws) const {
  const int n_rays = static_cast<int>(rays.size());
  const int nc = opts_.n_coarse;
  const int nf = opts_.n_fine;
  if (nc < 1 || nf < 1) throw std::invalid_argument("need n_coarse, n_fine >= 1");
  ws.rays.assign(rays.begin(), rays.end());
  ws.per_ray.assign(n_rays, RayCache{});

  // Stratified coarse depths.
  for (int r = 0; r < n_rays; ++r) {
    RayCache& rc = ws.per_ray[r];
    rc.coarse_depths.resize(nc);
    const double near = rays[r].near, far = rays[r].far;
    for (int k = 0; k < nc; ++k) {
      const double jitter = opts_.jitter ? rng.uniform() : 0.5;
      rc.coarse_depths[k] = near + (far - near) * (k + jitter) / nc;
    }
  }

  std::vector<const Vec*> coarse_depths(n_rays);
  for (int r = 0; r < n_rays; ++r) coarse_depths[r] = &ws.per_ray[r].coarse_depths;
  run_level(FieldLevel::kCoarse, ws.rays, coarse_depths, ws.coarse);

  for (int r = 0; r < n_rays; ++r) {
    RayCache& rc = ws.per_ray[r];
    rc.coarse_out =
        composite(rc.coarse_depths, ws.coarse.rgb.middleCols(r * nc, nc),
                  ws.coarse.sigma.segment(r * nc, nc), rays[r].far,
                  &rc.coarse_comp);
    rc.coarse_rgb_bg = rc.coarse_out.color + rc.coarse_out.tail * opts_.background;
  }

  // Inverse-CDF fine sampling from the coarse weights.
  const double bin_eps = 0.01 / nc;
  for (int r = 0; r < n_rays; ++r) {
    RayCache& rc = ws.per_ray[r];
    const double far = rays[r].far;
    rc.pdf.resize(nc);
    rc.cdf.resize(nc + 1);
    double wsum = 0.0;
    for (int i = 0; i < nc; ++i) wsum += rc.coarse_out.weights[i] + bin_eps;
    rc.cdf[0] = 0.0;
    for (int i = 0; i < nc; ++i) {
      rc.pdf[i] = (rc.coarse_out.weights[i] + bin_eps) / wsum;
      rc.cdf[i + 1] = rc.cdf[i] + rc.pdf[i];
    }
    rc.cdf[nc] = 1.0;

    std::vector<std::pair<double, std::pair<double, int>>> fine;  // (t, (u, bin))
    fine.reserve(nf);
    for (int j = 0; j < nf; ++j) {
      const double u = opts_.jitter ? rng.uniform() : (j + 0.5) / nf;
      int k = static_cast<int>(
                  std::upper_bound(rc.cdf.data(), rc.cdf.data() + nc + 1, u) -
                  rc.cdf.data()) - 1;
      k = std::clamp(k, 0, nc - 1);
      const double bd0 = rc.coarse_depths[k];
      const double bd1 = (k + 1 < nc) ? rc.coarse_depths[k + 1] : far;
      const double frac = (u - rc.cdf[k]) / rc.pdf[k];
      fine.push_back({bd0 + frac * (bd1 - bd0), {u, k}});
    }
    std::sort(fine.begin(), fine.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    rc.fine_depths.resize(nf);
    rc.u.resize(nf);
    rc.bin.resize(nf);
    for (int j = 0; j < nf; ++j) {
      rc.fine_depths[j] = fine[j].first;
      rc.u[j] = fine[j].second.first;
      rc.bin[j] = fine[j].second.second;
    }

    // Merge with the coarse depths, de-tying degenerate coincidences.
    rc.merged_depths.resize(nc + nf);
    rc.merged_src.resize(nc + nf);
    int ic = 0, jf = 0, m = 0;
    while (ic < nc || jf < nf) {
      const bool take_fine =
          ic >= nc || (jf < nf && rc.fine_depths[jf] < rc.coarse_depths[ic]);
      if (take_fine) {
        rc.merged_depths[m] = rc.fine_depths[jf];
        rc.merged_src[m] = jf;
        ++jf;
      } else {
        rc.merged_depths[m] = rc.coarse_depths[ic];
        rc.merged_src[m] = -1;
        ++ic;
      }
      if (m > 0 && rc.merged_depths[m] <= rc.merged_depths[m - 1])
        rc.merged_depths[m] = rc.merged_depths[m - 1] * (1.0 + 1e-14) + 1e-300;
      ++m;
    }
  }

  std::vector<const Vec*> merged(n_rays);
  for (int r = 0; r < n_rays; ++r) merged[r] = &ws.per_ray[r].merged_depths;
  run_level(FieldLevel::kFine, ws.rays, merged, ws.fine);

  const int nm = nc + nf;
  for (int r = 0; r < n_rays; ++r) {
    RayCache& rc = ws.per_ray[r];
    rc.fine_out =
        composite(rc.merged_depths, ws.fine.rgb.middleCols(r * nm, nm),
                  ws.fine.sigma.segment(r * nm, nm), rays[r].far, &rc.fine_comp);
    rc.fine_rgb_bg = rc.fine_out.color + rc.fine_out.tail * opts_.background;
  }
}

namespace {

// Shared by both levels: head activations -> MLP -> feature decomposition.
// Accumulates parameter grads and per-column position/direction grads.
// d_depth (per ray, sized like the level's depth vector) receives the
// x-path depth gradient dot(dx, direction).
void level_backward(const FieldConfig& cfg, const Mlp& mlp,
                    const FeatureGrid& grid, const std::vector<Ray>& rays,
                    const std::vector<const Vec*>& depths,
                    const FieldRenderer::LevelBatch& batch, const Mat& d_rgb,
                    const Vec& d_sigma, Mlp& grad_mlp, FeatureGrid& grad_grid,
                    std::vector<Vec>& d_depth, std::vector<RayGrad>* d_rays) {
  const Eigen::Index total = batch.sigma.size();
  Mat dy(4, total);
  for (Eigen::Index i = 0; i < total; ++i) {
    dy(0, i) = d_sigma[i] * sigmoid(batch.y_raw(0, i));
    for (int c = 0; c < 3; ++c) {
      const double s = batch.rgb(c, i);
      dy(1 + c, i) = d_rgb(c, i) * s * (1.0 - s);
    }
  }
  const Mat d_feat = mlp.backward(batch.mlp_cache, dy, grad_mlp);

  const int p_len = encoded_size(3, cfg.L_x);
  Eigen::Index col = 0;
  for (size_t r = 0; r < rays.size(); ++r) {
    const Vec& t = *depths[r];
    const Vec3 dir = rays[r].direction;
    Vec3 d_origin = Vec3::Zero();
    Vec3 d_dir = Vec3::Zero();
    for (Eigen::Index i = 0; i < t.size(); ++i, ++col) {
      const Vec3 x = batch.x_pos.col(col);
      const double* df = d_feat.col(col).data();
      Vec3 dx = encode_sinusoidal_backward<3>(x, cfg.L_x, df);
      dx += grid.lookup_backward(x, df + p_len, grad_grid);
      const Vec3 dd = encode_sinusoidal_backward<3>(
          dir, cfg.L_d, df + p_len + cfg.grid_channels);
      d_depth[r][i] += dx.dot(dir);
      d_origin += dx;
      d_dir += t[i] * dx + dd;
    }
    if (d_rays) {
      (*d_rays)[r].d_origin += d_origin;
      (*d_rays)[r].d_direction += d_dir;
    }
  }
}

}  // namespace

void FieldRenderer::backward(const Workspace& ws,
                             std::span<const Vec3> d_coarse_rgb,
                             std::span<const Vec3> d_fine_rgb,
                             FieldParams& grad,
                             std::vector<RayGrad>* d_rays) const {
  const int n_rays = static_cast<int>(ws.rays.size());
  const int nc = opts_.n_coarse;
  const int nf = opts_.n_fine;
  const int nm = nc + nf;
  const FieldConfig& cfg = params_.cfg;

  if (d_rays) d_rays->assign(n_rays, RayGrad{});

  // (1) Fine composite backward.
  Mat d_rgb_f = Mat::Zero(3, static_cast<Eigen::Index>(n_rays) * nm);
  Vec d_sigma_f = Vec::Zero(static_cast<Eigen::Index>(n_rays) * nm);
  std::vector<Vec> d_depth_m(n_rays);
  const Vec no_weights;
  for (int r = 0; r < n_rays; ++r) {
    const RayCache& rc = ws.per_ray[r];
    d_depth_m[r] = Vec::Zero(nm);
    Mat dcol = Mat::Zero(3, nm);
    Vec dsig = Vec::Zero(nm);
    composite_backward(rc.merged_depths, ws.fine.rgb.middleCols(r * nm, nm),
                       ws.fine.sigma.segment(r * nm, nm), ws.rays[r].far,
                       rc.fine_comp, d_fine_rgb[r], no_weights,
                       d_fine_rgb[r].dot(opts_.background), dcol, dsig,
                       d_depth_m[r]);
    d_rgb_f.middleCols(r * nm, nm) = dcol;
    d_sigma_f.segment(r * nm, nm) = dsig;
  }

  // (2) Fine network/feature backward (adds the x-path depth gradient).
  std::vector<const Vec*> merged(n_rays);
  for (int r = 0; r < n_rays; ++r) merged[r] = &ws.per_ray[r].merged_depths;
  level_backward(cfg, params_.fine_mlp, params_.fine_grid, ws.rays, merged,
                 ws.fine, d_rgb_f, d_sigma_f, grad.fine_mlp, grad.fine_grid,
                 d_depth_m, d_rays);

  // (3) Fine-placement chain: merged depth grads -> fine sample grads ->
  // inverse-CDF -> coarse-weight grads.
  std::vector<Vec> d_wc(n_rays);
  for (int r = 0; r < n_rays; ++r) {
    const RayCache& rc = ws.per_ray[r];
    Vec d_tf = Vec::Zero(nf);
    for (int i = 0; i < nm; ++i)
      if (rc.merged_src[i] >= 0) d_tf[rc.merged_src[i]] += d_depth_m[r][i];

    Vec d_pdf = Vec::Zero(nc);
    Vec d_cdf = Vec::Zero(nc + 1);
    const double far = ws.rays[r].far;
    for (int j = 0; j < nf; ++j) {
      const int k = rc.bin[j];
      const double bd0 = rc.coarse_depths[k];
      const double bd1 = (k + 1 < nc) ? rc.coarse_depths[k + 1] : far;
      const double width = bd1 - bd0;
      const double frac = (rc.u[j] - rc.cdf[k]) / rc.pdf[k];
      d_pdf[k] -= d_tf[j] * width * frac / rc.pdf[k];
      d_cdf[k] -= d_tf[j] * width / rc.pdf[k];
    }
    // cdf[k] = sum_{i<k} pdf_i (cdf[0] and cdf[nc] are constants).
    double suffix = 0.0;
    for (int k = nc - 1; k >= 1; --k) {
      suffix += d_cdf[k];
      d_pdf[k - 1] += suffix;
    }
    // pdf_i = (w_i + eps) / W.
    double dot = 0.0;
    for (int i = 0; i < nc; ++i) dot += d_pdf[i] * rc.pdf[i];
    double wsum = 0.0;
    const double bin_eps = 0.01 / nc;
    for (int i = 0; i < nc; ++i) wsum += rc.coarse_out.weights[i] + bin_eps;
    d_wc[r] = Vec::Zero(nc);
    for (int i = 0; i < nc; ++i) d_wc[r][i] = (d_pdf[i] - dot) / wsum;
  }

  // (4) Coarse composite backward (color/tail loss path + weight path).
  Mat d_rgb_c = Mat::Zero(3, static_cast<Eigen::Index>(n_rays) * nc);
  Vec d_sigma_c = Vec::Zero(static_cast<Eigen::Index>(n_rays) * nc);
  std::vector<Vec> d_depth_c(n_rays);
  for (int r = 0; r < n_rays; ++r) {
    const RayCache& rc = ws.per_ray[r];
    d_depth_c[r] = Vec::Zero(nc);
    Mat dcol = Mat::Zero(3, nc);
    Vec dsig = Vec::Zero(nc);
    composite_backward(rc.coarse_depths, ws.coarse.rgb.middleCols(r * nc, nc),
                       ws.coarse.sigma.segment(r * nc, nc), ws.rays[r].far,
                       rc.coarse_comp, d_coarse_rgb[r], d_wc[r],
                       d_coarse_rgb[r].dot(opts_.background), dcol, dsig,
                       d_depth_c[r]);
    d_rgb_c.middleCols(r * nc, nc) = dcol;
    d_sigma_c.segment(r * nc, nc) = dsig;
  }

  // (5) Coarse network/feature backward. Coarse depths are functions of
  // near/far only, so their depth grads terminate here.
  std::vector<const Vec*> coarse_depths(n_rays);
  for (int r = 0; r < n_rays; ++r) coarse_depths[r] = &ws.per_ray[r].coarse_depths;
  level_backward(cfg, params_.coarse_mlp, params_.coarse_grid, ws.rays,
                 coarse_depths, ws.coarse, d_rgb_c, d_sigma_c, grad.coarse_mlp,
                 grad.coarse_grid, d_depth_c, d_rays);
}

void render_ray_hierarchical(const FieldParams& params, const Ray& ray,
                             int n_coarse, int n_fine, Rng& rng,
                             RenderOutput* coarse, RenderOutput* fine) {
  RenderOptions opts;
  opts.n_coarse = n_coarse;
  opts.n_fine = n_fine;
  FieldRenderer renderer(params, opts);
  FieldRenderer::Workspace ws;
  const Ray rays[1] = {ray};
  renderer.forward(rays, rng, ws);
  if (coarse) *coarse = ws.per_ray[0].coarse_out;
  if (fine) *fine = ws.per_ray[0].fine_out;
}

Image render_image(const FieldParams& params, const Pose& pose,
                   const CameraIntrinsics& intr, const RenderOptions& opts,
                   uint64_t seed) {
  FieldRenderer renderer(params, opts);
  Rng rng(seed);
  Image img(intr.width, intr.height);
  constexpr int kChunk = 256;
  std::vector<Ray> rays;
  std::vector<std::pair<int, int>> px;
  FieldRenderer::Workspace ws;
  auto flush = [&]() {
    if (rays.empty()) return;
    renderer.forward(rays, rng, ws);
    for (size_t i = 0; i < rays.size(); ++i)
      img.set_pixel(px[i].first, px[i].second,
                    ws.per_ray[i].fine_rgb_bg.cwiseMax(0.0));
    rays.clear();
    px.clear();
  };
  for (int y = 0; y < intr.height; ++y)
    for (int x = 0; x < intr.width; ++x) {
      rays.push_back(make_ray(pose, intr, x + 0.5, y + 0.5, params.cfg.near,
                              params.cfg.far));
      px.emplace_back(x, y);
      if (static_cast<int>(rays.size()) == kChunk) flush();
    }
  flush();
  return gamma_encode(img);
}

}  // namespace evbf
