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

#include <Eigen/Core>

#include "evbf/geometry.hpp"
#include "evbf/rng.hpp"

namespace evbf {

/// Learnable C-channel trilinear feature lattice over an axis-aligned box.
/// Out-of-box lookups clamp to the boundary (position gradient is zero in the
/// clamped dimension).
struct FeatureGrid {
  int res = 0;
  int channels = 0;
  Vec3 box_min = Vec3::Constant(-0.5);
  Vec3 box_max = Vec3::Constant(0.5);
  Eigen::VectorXd data;  // channels-major per node: data[node * channels + c]

  FeatureGrid() = default;
  FeatureGrid(int res, int channels, const Vec3& bmin, const Vec3& bmax,
              Rng& rng, double init_scale = 0.1);

  size_t node_index(int i, int j, int k) const {
    return (static_cast<size_t>(k) * res + j) * res + i;
  }

  /// Writes `channels` values to out.
  void lookup(const Vec3& x, double* out) const;

  /// Accumulates node gradients into grad.data and returns dL/dx.
  /// d_out has `channels` entries.
  Vec3 lookup_backward(const Vec3& x, const double* d_out,
                       FeatureGrid& grad) const;

  FeatureGrid zeros_like() const;
};

}  // namespace evbf
