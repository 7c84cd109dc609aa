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

#include <vector>

#include "evbf/geometry.hpp"
#include "evbf/image.hpp"
#include "evbf/trajectory.hpp"

namespace evbf {

struct CameraIntrinsics {
  double fx = 0, fy = 0;  // pixels
  double cx = 0, cy = 0;  // pixels
  int width = 0, height = 0;

  void validate() const;

  /// Unit camera-frame direction through pixel center (x right, y down, z fwd).
  Vec3 pixel_direction(double u, double v) const {
    return Vec3((u - cx) / fx, (v - cy) / fy, 1.0).normalized();
  }
};

/// Ray through pixel (u, v) of intrinsics `intr` from camera-to-world `pose`.
struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double near = 0.0;
  double far = 1.0;
};

Ray make_ray(const Pose& cam_to_world, const CameraIntrinsics& intr, double u,
             double v, double near, double far);

/// Analytic ground-truth scene: trilinear density/color grids over an
/// axis-aligned box; the brute-force oracle behind every rendering test.
struct VoxelScene {
  int res = 0;  // lattice is res^3
  Vec3 box_min = Vec3::Constant(-0.5);
  Vec3 box_max = Vec3::Constant(0.5);
  std::vector<double> density;  // res^3, >= 0, units 1/m
  std::vector<double> color;    // res^3 * 3, values in [0,1]
  Vec3 background = Vec3::Zero();

  void validate() const;
  size_t cells() const { return static_cast<size_t>(res) * res * res; }
  size_t cell_index(int i, int j, int k) const {
    return (static_cast<size_t>(k) * res + j) * res + i;
  }

  /// Trilinear lookup, positions clamped to the box.
  void sample(const Vec3& x, double* sigma, Vec3* rgb) const;
};

/// Deterministic procedural test scene (soft blobs + textured back wall).
VoxelScene make_default_scene(int res, uint64_t seed);

/// Per-pixel emission-absorption quadrature through the scene grids.
/// Output is linear radiometric RGB in [0,1]-ish (background composited).
Image render_sharp_oracle(const VoxelScene& scene, const Pose& pose,
                          const CameraIntrinsics& intr, int quadrature_steps);

/// Frame exposure: centered at t_center, duration tau, integrated with
/// `oracle_substeps` sharp renders when synthesizing blur.
struct ExposureSpec {
  double t_center = 0.0;
  double tau = 0.0;
  int oracle_substeps = 64;

  void validate(const Trajectory& traj) const;
  double t_begin() const { return t_center - 0.5 * tau; }
  double t_end() const { return t_center + 0.5 * tau; }
};

/// Mean of oracle_substeps sharp renders over the exposure (linear space),
/// gamma-encoded on output.
Image synthesize_blur(const VoxelScene& scene, const Trajectory& traj,
                      const ExposureSpec& exp, const CameraIntrinsics& intr,
                      int quadrature_steps);

}  // namespace evbf
