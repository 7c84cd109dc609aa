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

#include "evbf/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace evbf {

FeatureGrid::FeatureGrid(int res_, int channels_, const Vec3& bmin,
                         const Vec3& bmax, Rng& rng, double init_scale)
    : res(res_), channels(channels_), box_min(bmin), box_max(bmax) {
  if (res < 2 || channels < 1) throw std::invalid_argument("bad grid shape");
  data.resize(static_cast<Eigen::Index>(res) * res * res * channels);
  for (Eigen::Index i = 0; i < data.size(); ++i)
    data[i] = init_scale * rng.normal();
}

namespace {

struct Corner {
  int i0[3];
  double w1[3];
  bool clamped[3];
};

inline Corner locate(const FeatureGrid& g, const Vec3& x) {
  Corner c;
  for (int a = 0; a < 3; ++a) {
    const double t_raw =
        (x[a] - g.box_min[a]) / (g.box_max[a] - g.box_min[a]) * (g.res - 1);
    const double t = std::clamp(t_raw, 0.0, static_cast<double>(g.res - 1));
    c.clamped[a] = (t != t_raw);
    c.i0[a] = std::min(static_cast<int>(t), g.res - 2);
    c.w1[a] = t - c.i0[a];
  }
  return c;
}

}  // namespace

void FeatureGrid::lookup(const Vec3& x, double* out) const {
  const Corner c = locate(*this, x);
  for (int ch = 0; ch < channels; ++ch) out[ch] = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? c.w1[0] : 1 - c.w1[0]) *
                         (dy ? c.w1[1] : 1 - c.w1[1]) *
                         (dz ? c.w1[2] : 1 - c.w1[2]);
        const size_t base =
            node_index(c.i0[0] + dx, c.i0[1] + dy, c.i0[2] + dz) * channels;
        for (int ch = 0; ch < channels; ++ch) out[ch] += w * data[base + ch];
      }
}

Vec3 FeatureGrid::lookup_backward(const Vec3& x, const double* d_out,
                                  FeatureGrid& grad) const {
  const Corner c = locate(*this, x);
  const double wx[2] = {1 - c.w1[0], c.w1[0]};
  const double wy[2] = {1 - c.w1[1], c.w1[1]};
  const double wz[2] = {1 - c.w1[2], c.w1[2]};
  const double sx[2] = {-1.0, 1.0};
  Vec3 dpos = Vec3::Zero();
  Vec3 scale;  // d(lattice coord)/d(world coord)
  for (int a = 0; a < 3; ++a)
    scale[a] = c.clamped[a] ? 0.0 : (res - 1) / (box_max[a] - box_min[a]);

  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const size_t base =
            node_index(c.i0[0] + dx, c.i0[1] + dy, c.i0[2] + dz) * channels;
        double dot = 0.0;
        for (int ch = 0; ch < channels; ++ch)
          dot += d_out[ch] * data[base + ch];
        const double w = wx[dx] * wy[dy] * wz[dz];
        for (int ch = 0; ch < channels; ++ch)
          grad.data[base + ch] += w * d_out[ch];
        dpos[0] += dot * sx[dx] * wy[dy] * wz[dz] * scale[0];
        dpos[1] += dot * wx[dx] * sx[dy] * wz[dz] * scale[1];
        dpos[2] += dot * wx[dx] * wy[dy] * sx[dz] * scale[2];
      }
  return dpos;
}

FeatureGrid FeatureGrid::zeros_like() const {
  FeatureGrid g;
  g.res = res;
  g.channels = channels;
  g.box_min = box_min;
  g.box_max = box_max;
  g.data = Eigen::VectorXd::Zero(data.size());
  return g;
}

}  // namespace evbf
