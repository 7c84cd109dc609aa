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

#include "evbf/image.hpp"

#include <opencv2/imgcodecs.hpp>

#include <cmath>
#include <stdexcept>

namespace evbf {

Image::Image(int w, int h, const Vec3& fill) : width(w), height(h) {
  data.resize(static_cast<size_t>(w) * h * 3);
  for (size_t i = 0; i < npx(); ++i) {
    data[3 * i] = fill[0];
    data[3 * i + 1] = fill[1];
    data[3 * i + 2] = fill[2];
  }
}

Image gamma_encode(const Image& linear) {
  Image out = linear;
  for (double& v : out.data) v = gamma_encode(v);
  return out;
}

Image gamma_decode(const Image& encoded) {
  Image out = encoded;
  for (double& v : out.data) v = gamma_decode(v);
  return out;
}

static void check_shapes(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("image shape mismatch");
  if (a.width == 0 || a.height == 0)
    throw std::invalid_argument("empty image");
}

double mean_abs_diff(const Image& a, const Image& b) {
  check_shapes(a, b);
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  check_shapes(a, b);
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  check_shapes(a, b);
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  if (a.width < kWin || a.height < kWin)
    throw std::invalid_argument("image smaller than SSIM window");

  double w[kWin];
  double wsum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    wsum += w[i];
  }
  for (double& v : w) v /= wsum;

  std::vector<double> ga(a.npx()), gb(a.npx());
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      ga[y * a.width + x] = luma(a.pixel(x, y));
      gb[y * a.width + x] = luma(b.pixel(x, y));
    }

  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // L = 1
  double total = 0.0;
  int count = 0;
  for (int y0 = 0; y0 + kWin <= a.height; ++y0) {
    for (int x0 = 0; x0 + kWin <= a.width; ++x0) {
      double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
      for (int j = 0; j < kWin; ++j)
        for (int i = 0; i < kWin; ++i) {
          const double wij = w[i] * w[j];
          const double va = ga[(y0 + j) * a.width + x0 + i];
          const double vb = gb[(y0 + j) * a.width + x0 + i];
          mu_a += wij * va;
          mu_b += wij * vb;
          aa += wij * va * va;
          bb += wij * vb * vb;
          ab += wij * va * vb;
        }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      total += (2 * mu_a * mu_b + c1) * (2 * cov + c2) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++count;
    }
  }
  return total / count;
}

void save_png(const Image& img, const std::string& path) {
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double* p = img.px(x, y);
      auto to8 = [](double v) {
        return static_cast<uchar>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      };
      // OpenCV stores BGR.
      m.at<cv::Vec3b>(y, x) = cv::Vec3b(to8(p[2]), to8(p[1]), to8(p[0]));
    }
  if (!cv::imwrite(path, m))
    throw std::runtime_error("failed to write PNG: " + path);
}

Image load_png(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw std::runtime_error("failed to read PNG: " + path);
  Image img(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      const cv::Vec3b& p = m.at<cv::Vec3b>(y, x);
      img.set_pixel(x, y, Vec3(p[2] / 255.0, p[1] / 255.0, p[0] / 255.0));
    }
  return img;
}

}  // namespace evbf
