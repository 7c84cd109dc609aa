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

#include "evbf/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace evbf {

Mlp::Mlp(const std::vector<int>& dims, Rng& rng, double out_scale) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp needs >= 2 dims");
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    Mat w(dims[l + 1], dims[l]);
    const bool last = (l + 2 == dims.size());
    // He initialization for ReLU layers, scaled-down last layer.
    const double scale =
        (last ? out_scale : 1.0) * std::sqrt(2.0 / dims[l]);
    for (int i = 0; i < w.size(); ++i) w.data()[i] = scale * rng.normal();
    weights_.push_back(std::move(w));
    biases_.push_back(Vec::Zero(dims[l + 1]));
  }
}

Mat Mlp::forward(const Mat& x, Cache* cache) const {
  if (x.rows() != input_dim())
    throw std::invalid_argument("Mlp input dim mismatch");
  if (cache) {
    cache->inputs.clear();
    cache->inputs.reserve(weights_.size());
  }
  Mat a = x;
  for (size_t l = 0; l < weights_.size(); ++l) {
    if (cache) cache->inputs.push_back(a);
    Mat z = (weights_[l] * a).colwise() + biases_[l];
    if (l + 1 < weights_.size()) z = z.cwiseMax(0.0);  // ReLU
    a = std::move(z);
  }
  return a;
}

Mat Mlp::backward(const Cache& cache, const Mat& dy, Mlp& grad) const {
  Mat d = dy;
  for (size_t li = weights_.size(); li-- > 0;) {
    if (li + 1 < weights_.size()) {
      // Through the ReLU of layer li: recompute the mask from its output,
      // which is the cached input of layer li+1.
      d = d.cwiseProduct(
          (cache.inputs[li + 1].array() > 0.0).cast<double>().matrix());
    }
    grad.weights_[li].noalias() += d * cache.inputs[li].transpose();
    grad.biases_[li].noalias() += d.rowwise().sum();
    d = weights_[li].transpose() * d;
  }
  return d;
}

Mlp Mlp::zeros_like() const {
  Mlp m;
  for (const Mat& w : weights_) m.weights_.push_back(Mat::Zero(w.rows(), w.cols()));
  for (const Vec& b : biases_) m.biases_.push_back(Vec::Zero(b.size()));
  return m;
}

void Mlp::zero_output_layer() {
  weights_.back().setZero();
  biases_.back().setZero();
}

}  // namespace evbf
