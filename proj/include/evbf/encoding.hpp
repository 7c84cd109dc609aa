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
#include <cmath>

#include "evbf/geometry.hpp"

namespace evbf {

inline int encoded_size(int input_dim, int num_freq) {
  return input_dim + 2 * input_dim * num_freq;
}

/// Sinusoidal encoding: [x, then per frequency 2^k (k = 0..L-1), per axis:
/// sin(2^k x), cos(2^k x)]. Writes encoded_size(dim, L) values.
template <int Dim>
inline void encode_sinusoidal(const Eigen::Matrix<double, Dim, 1>& x, int L,
                              double* out) {
  for (int a = 0; a < Dim; ++a) out[a] = x[a];
  int o = Dim;
  double f = 1.0;
  for (int k = 0; k < L; ++k, f *= 2.0)
    for (int a = 0; a < Dim; ++a) {
      out[o++] = std::sin(f * x[a]);
      out[o++] = std::cos(f * x[a]);
    }
}

/// Chain rule through encode_sinusoidal: returns dL/dx given dL/d(encoding).
template <int Dim>
inline Eigen::Matrix<double, Dim, 1> encode_sinusoidal_backward(
    const Eigen::Matrix<double, Dim, 1>& x, int L, const double* d_out) {
  Eigen::Matrix<double, Dim, 1> dx;
  for (int a = 0; a < Dim; ++a) dx[a] = d_out[a];
  int o = Dim;
  double f = 1.0;
  for (int k = 0; k < L; ++k, f *= 2.0)
    for (int a = 0; a < Dim; ++a) {
      dx[a] += d_out[o++] * f * std::cos(f * x[a]);
      dx[a] -= d_out[o++] * f * std::sin(f * x[a]);
    }
  return dx;
}

/// Spec-facing wrapper: feature vector of length 3 + 6L.
inline Eigen::VectorXd encode_position(const Vec3& x, int L) {
  Eigen::VectorXd out(encoded_size(3, L));
  encode_sinusoidal<3>(x, L, out.data());
  return out;
}

}  // namespace evbf
