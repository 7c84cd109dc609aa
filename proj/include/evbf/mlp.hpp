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
#include <string>
#include <vector>

#include "evbf/rng.hpp"

namespace evbf {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Fully connected ReLU network evaluated on column batches, with hand-rolled
/// reverse-mode gradients. Output layer is linear; heads apply their own
/// activations.
class Mlp {
 public:
  Mlp() = default;
  /// dims = {in, hidden..., out}.
  Mlp(const std::vector<int>& dims, Rng& rng, double out_scale = 1.0);

  struct Cache {
    std::vector<Mat> inputs;  // input to each layer (post-activation)
  };

  /// X is (in, batch); returns (out, batch).
  Mat forward(const Mat& x, Cache* cache = nullptr) const;

  /// dY is (out, batch); accumulates into `grad` (same shapes as *this) and
  /// returns dX.
  Mat backward(const Cache& cache, const Mat& dy, Mlp& grad) const;

  Mlp zeros_like() const;
  void zero_output_layer();

  int input_dim() const { return weights_.empty() ? 0 : static_cast<int>(weights_.front().cols()); }
  int output_dim() const { return weights_.empty() ? 0 : static_cast<int>(weights_.back().rows()); }

  std::vector<Mat>& weights() { return weights_; }
  std::vector<Vec>& biases() { return biases_; }
  const std::vector<Mat>& weights() const { return weights_; }
  const std::vector<Vec>& biases() const { return biases_; }

  /// Visits every parameter array as (suffix, flattened map).
  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    for (size_t l = 0; l < weights_.size(); ++l) {
      f(prefix + ".w" + std::to_string(l),
        Eigen::Map<Vec>(weights_[l].data(), weights_[l].size()));
      f(prefix + ".b" + std::to_string(l),
        Eigen::Map<Vec>(biases_[l].data(), biases_[l].size()));
    }
  }

 private:
  std::vector<Mat> weights_;  // layer l: (dims[l+1], dims[l])
  std::vector<Vec> biases_;
};

}  // namespace evbf
