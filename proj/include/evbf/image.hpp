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

#include <string>
#include <vector>

#include "evbf/geometry.hpp"

namespace evbf {

constexpr double kGamma = 2.2;
constexpr double kLogEps = 1e-5;

/// Row-major RGB image with double channels.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // size width*height*3, [r g b] per pixel

  Image() = default;
  Image(int w, int h, const Vec3& fill = Vec3::Zero());

  double* px(int x, int y) { return &data[3 * (y * width + x)]; }
  const double* px(int x, int y) const { return &data[3 * (y * width + x)]; }
  Vec3 pixel(int x, int y) const { return Vec3(px(x, y)[0], px(x, y)[1], px(x, y)[2]); }
  void set_pixel(int x, int y, const Vec3& c) {
    px(x, y)[0] = c[0]; px(x, y)[1] = c[1]; px(x, y)[2] = c[2];
  }
  size_t npx() const { return static_cast<size_t>(width) * height; }
};

inline double gamma_encode(double x) {
  return std::pow(std::max(x, 0.0), 1.0 / kGamma);
}
inline double gamma_decode(double x) {
  return std::pow(std::max(x, 0.0), kGamma);
}
Image gamma_encode(const Image& linear);
Image gamma_decode(const Image& encoded);

/// Rec.601 luma.
inline double luma(const Vec3& rgb) {
  return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
}

double mean_abs_diff(const Image& a, const Image& b);

/// 10*log10(1/MSE), values assumed in [0,1]; zero MSE capped at 99 dB.
double psnr(const Image& a, const Image& b);

/// Single-scale SSIM on luma, 11x11 Gaussian window sigma 1.5, L=1.
double ssim(const Image& a, const Image& b);

/// 8-bit PNG, values clamped to [0,1]. Encoding (gamma) is the caller's job.
void save_png(const Image& img, const std::string& path);
Image load_png(const std::string& path);

}  // namespace evbf
