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

#include "evbf/scene.hpp"

#include <cmath>
#include <stdexcept>

#include "evbf/rng.hpp"

namespace evbf {

void CameraIntrinsics::validate() const {
  if (fx <= 0 || fy <= 0) throw std::invalid_argument("focal lengths must be > 0");
  if (width <= 0 || height <= 0) throw std::invalid_argument("bad image size");
  if (cx < 0 || cx > width || cy < 0 || cy > height)
    throw std::invalid_argument("principal point outside image");
}

Ray make_ray(const Pose& cam_to_world, const CameraIntrinsics& intr, double u,
             double v, double near, double far) {
  Ray r;
  r.origin = cam_to_world.translation;
  r.direction = cam_to_world.rotation * intr.pixel_direction(u, v);
  r.near = near;
  r.far = far;
  return r;
}

void VoxelScene::validate() const {
  if (res < 8) throw std::invalid_argument("scene grid resolution must be >= 8");
  if (density.size() != cells() || color.size() != cells() * 3)
    throw std::invalid_argument("scene grid size mismatch");
  for (double d : density)
    if (d < 0.0) throw std::invalid_argument("densities must be non-negative");
}

void VoxelScene::sample(const Vec3& x, double* sigma, Vec3* rgb) const {
  const Vec3 ext = box_max - box_min;
  double w1[3];
  int i0[3];
  for (int a = 0; a < 3; ++a) {
    double t = (x[a] - box_min[a]) / ext[a] * (res - 1);
    t = std::clamp(t, 0.0, static_cast<double>(res - 1));
    i0[a] = std::min(static_cast<int>(t), res - 2);
    w1[a] = t - i0[a];
  }
  double s = 0.0;
  Vec3 c = Vec3::Zero();
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? w1[0] : 1 - w1[0]) * (dy ? w1[1] : 1 - w1[1]) *
                         (dz ? w1[2] : 1 - w1[2]);
        const size_t idx = cell_index(i0[0] + dx, i0[1] + dy, i0[2] + dz);
        s += w * density[idx];
        c += w * Vec3(color[3 * idx], color[3 * idx + 1], color[3 * idx + 2]);
      }
  if (sigma) *sigma = s;
  if (rgb) *rgb = c;
}

VoxelScene make_default_scene(int res, uint64_t seed) {
  VoxelScene scene;
  scene.res = res;
  scene.density.assign(scene.cells(), 0.0);
  scene.color.assign(scene.cells() * 3, 0.0);
  scene.background = Vec3(0.62, 0.67, 0.73);

  Rng rng(seed);
  struct Blob {
    Vec3 center;
    double radius;
    double peak;
    Vec3 color;
  };
  const Vec3 palette[6] = {
      {0.92, 0.25, 0.21}, {0.22, 0.60, 0.92}, {0.98, 0.80, 0.20},
      {0.30, 0.78, 0.35}, {0.85, 0.35, 0.80}, {0.95, 0.55, 0.15}};
  std::vector<Blob> blobs;
  for (int i = 0; i < 6; ++i) {
    Blob b;
    b.center = Vec3(rng.uniform(-0.32, 0.32), rng.uniform(-0.28, 0.18),
                    rng.uniform(-0.30, 0.30));
    b.radius = rng.uniform(0.09, 0.16);
    b.peak = rng.uniform(22.0, 34.0);
    b.color = palette[i];
    blobs.push_back(b);
  }

  const Vec3 ext = scene.box_max - scene.box_min;
  for (int k = 0; k < res; ++k)
    for (int j = 0; j < res; ++j)
      for (int i = 0; i < res; ++i) {
        const Vec3 p = scene.box_min +
                       Vec3((i + 0.0) / (res - 1) * ext[0],
                            (j + 0.0) / (res - 1) * ext[1],
                            (k + 0.0) / (res - 1) * ext[2]);
        double sigma = 0.0;
        Vec3 c = Vec3::Zero();
        double wsum = 0.0;
        // High-frequency luminance modulation shared by blobs and wall.
        // Luminance (not hue) texture keeps per-channel ratios close to the
        // luma ratio, which event-based deblurring relies on.
        const double tex =
            0.55 + 0.45 * std::sin(34.0 * p.x() + 11.0 * p.z()) *
                       std::sin(27.0 * p.y() - 9.0 * p.x());
        for (const Blob& b : blobs) {
          const double d2 = (p - b.center).squaredNorm();
          const double s = b.peak * std::exp(-d2 / (2.0 * b.radius * b.radius));
          sigma += s;
          c += s * (b.color * (0.45 + 0.55 * tex));
          wsum += s;
        }
        // Textured back wall (high y): low-frequency hue field times the
        // shared luminance texture so photometric gradients stay informative
        // both at coarse misalignments and under a few pixels of blur.
        if (p.y() > 0.38) {
          const double wall = 45.0 * std::min(1.0, (p.y() - 0.38) / 0.06);
          const double tx = 0.5 + 0.45 * std::sin(7.0 * p.x() + 2.0 * p.z());
          const double tz = 0.5 + 0.45 * std::sin(5.0 * p.z() - 1.3 * p.x());
          Vec3 wall_c(0.25 + 0.6 * tx, 0.35 + 0.35 * tz,
                      0.55 - 0.35 * tx * tz);
          wall_c *= 0.35 + 0.65 * tex;
          sigma += wall;
          c += wall * wall_c;
          wsum += wall;
        }
        if (wsum > 1e-12) c /= wsum;
        const size_t idx = scene.cell_index(i, j, k);
        scene.density[idx] = sigma;
        scene.color[3 * idx] = std::clamp(c[0], 0.0, 1.0);
        scene.color[3 * idx + 1] = std::clamp(c[1], 0.0, 1.0);
        scene.color[3 * idx + 2] = std::clamp(c[2], 0.0, 1.0);
      }
  return scene;
}

namespace {

// Slab test against the scene box; returns false on miss.
bool ray_box(const VoxelScene& scene, const Ray& r, double* t0, double* t1) {
  double lo = r.near, hi = r.far;
  for (int a = 0; a < 3; ++a) {
    const double inv = 1.0 / r.direction[a];
    double ta = (scene.box_min[a] - r.origin[a]) * inv;
    double tb = (scene.box_max[a] - r.origin[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    lo = std::max(lo, ta);
    hi = std::min(hi, tb);
    if (lo > hi) return false;
  }
  *t0 = lo;
  *t1 = hi;
  return true;
}

}  // namespace

Image render_sharp_oracle(const VoxelScene& scene, const Pose& pose,
                          const CameraIntrinsics& intr, int quadrature_steps) {
  scene.validate();
  intr.validate();
  if (quadrature_steps < 64)
    throw std::invalid_argument("oracle quadrature needs >= 64 steps");

  Image img(intr.width, intr.height, scene.background);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      Ray r = make_ray(pose, intr, x + 0.5, y + 0.5, 1e-3, 1e9);
      double t0, t1;
      if (!ray_box(scene, r, &t0, &t1) || t1 <= t0) continue;
      const double dt = (t1 - t0) / quadrature_steps;
      double trans = 1.0;
      Vec3 acc = Vec3::Zero();
      for (int s = 0; s < quadrature_steps; ++s) {
        const double tm = t0 + (s + 0.5) * dt;
        double sigma;
        Vec3 c;
        scene.sample(r.origin + tm * r.direction, &sigma, &c);
        const double alpha = 1.0 - std::exp(-sigma * dt);
        acc += trans * alpha * c;
        trans *= 1.0 - alpha;
        if (trans < 1e-6) break;
      }
      img.set_pixel(x, y, acc + trans * scene.background);
    }
  }
  return img;
}

void ExposureSpec::validate(const Trajectory& traj) const {
  if (tau <= 0.0) throw std::invalid_argument("exposure duration must be > 0");
  if (oracle_substeps < 8)
    throw std::invalid_argument("oracle_substeps must be >= 8");
  if (t_begin() < traj.t_min() || t_end() > traj.t_max())
    throw std::out_of_range("exposure interval outside trajectory support");
}

Image synthesize_blur(const VoxelScene& scene, const Trajectory& traj,
                      const ExposureSpec& exp, const CameraIntrinsics& intr,
                      int quadrature_steps) {
  exp.validate(traj);
  const int k = exp.oracle_substeps;
  Image acc(intr.width, intr.height);
  for (int m = 0; m < k; ++m) {
    const double t =
        (k == 1) ? exp.t_center
                 : exp.t_begin() + exp.tau * static_cast<double>(m) / (k - 1);
    const Image sharp =
        render_sharp_oracle(scene, slerp_interpolate(traj, t), intr, quadrature_steps);
    for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += sharp.data[i];
  }
  for (double& v : acc.data) v /= k;
  return gamma_encode(acc);
}

}  // namespace evbf
