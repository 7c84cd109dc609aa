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

#include "evbf/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace evbf {

void EventCameraModel::validate() const {
  if (theta_pos <= 0.0 || theta_neg <= 0.0)
    throw std::invalid_argument("contrast thresholds must be > 0");
  if (log_eps <= 0.0) throw std::invalid_argument("log_eps must be > 0");
}

std::vector<std::pair<double, int>> detect_crossings(
    const std::vector<double>& times, const std::vector<double>& log_luma,
    const EventCameraModel& model) {
  model.validate();
  if (times.size() != log_luma.size() || times.size() < 2)
    throw std::invalid_argument("detect_crossings needs >= 2 matched samples");

  std::vector<std::pair<double, int>> out;
  double ref = log_luma[0];
  for (size_t i = 1; i < times.size(); ++i) {
    const double s0 = log_luma[i - 1];
    const double s1 = log_luma[i];
    // Emit every full threshold crossing inside this sample step, with the
    // reference level stepping to each crossed level in turn.
    while (s1 - ref >= model.theta_pos) {
      const double level = ref + model.theta_pos;
      const double u = (s1 == s0) ? 1.0 : std::clamp((level - s0) / (s1 - s0), 0.0, 1.0);
      out.emplace_back(times[i - 1] + u * (times[i] - times[i - 1]), +1);
      ref = level;
    }
    while (ref - s1 >= model.theta_neg) {
      const double level = ref - model.theta_neg;
      const double u = (s1 == s0) ? 1.0 : std::clamp((level - s0) / (s1 - s0), 0.0, 1.0);
      out.emplace_back(times[i - 1] + u * (times[i] - times[i - 1]), -1);
      ref = level;
    }
  }
  return out;
}

EventStream simulate_events(const VoxelScene& scene, const Trajectory& traj,
                            const CameraIntrinsics& intr,
                            const EventCameraModel& model, double t0, double t1,
                            double sim_rate, int quadrature_steps) {
  model.validate();
  traj.validate();
  if (t0 < traj.t_min() || t1 > traj.t_max() || t0 >= t1)
    throw std::out_of_range("event simulation window outside trajectory support");
  const int n = static_cast<int>(std::ceil(sim_rate * (t1 - t0))) + 1;
  if (n < 2) throw std::invalid_argument("sim_rate too low for the window");

  std::vector<double> times(n);
  const size_t npx = static_cast<size_t>(intr.width) * intr.height;
  std::vector<double> log_luma(npx * n);
  for (int s = 0; s < n; ++s) {
    times[s] = t0 + (t1 - t0) * static_cast<double>(s) / (n - 1);
    const Image img = render_sharp_oracle(scene, slerp_interpolate(traj, times[s]),
                                          intr, quadrature_steps);
    for (size_t i = 0; i < npx; ++i) {
      const Vec3 c(img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]);
      log_luma[i * n + s] = std::log(luma(c) + model.log_eps);
    }
  }

  EventStream events;
  std::vector<double> sig(n);
  for (int y = 0; y < intr.height; ++y)
    for (int x = 0; x < intr.width; ++x) {
      const size_t i = static_cast<size_t>(y) * intr.width + x;
      std::copy(log_luma.begin() + i * n, log_luma.begin() + (i + 1) * n,
                sig.begin());
      for (const auto& [t, p] : detect_crossings(times, sig, model)) {
        EventRecord e;
        e.u = static_cast<uint16_t>(x);
        e.v = static_cast<uint16_t>(y);
        e.t = t;
        e.p = static_cast<int8_t>(p);
        events.push_back(e);
      }
    }
  std::stable_sort(events.begin(), events.end(),
                   [](const EventRecord& a, const EventRecord& b) { return a.t < b.t; });
  return events;
}

Image edi_deblur(const Image& blurry, const EventStream& events,
                 const ExposureSpec& exp, const EventCameraModel& model,
                 double t_ref) {
  model.validate();
  if (t_ref < exp.t_begin() || t_ref > exp.t_end())
    throw std::out_of_range("EDI reference time outside the exposure interval");

  const Image lin = gamma_decode(blurry);
  // Per-pixel in-exposure events, kept in stream order (time-sorted).
  std::vector<std::vector<std::pair<double, double>>> per_px(lin.npx());
  for (const EventRecord& e : events) {
    if (e.t < exp.t_begin() || e.t > exp.t_end()) continue;
    if (e.u >= lin.width || e.v >= lin.height) continue;
    per_px[static_cast<size_t>(e.v) * lin.width + e.u].emplace_back(
        e.t, e.p * model.threshold(e.p));
  }

  Image out(lin.width, lin.height);
  for (int y = 0; y < lin.height; ++y)
    for (int x = 0; x < lin.width; ++x) {
      const auto& evs = per_px[static_cast<size_t>(y) * lin.width + x];
      // exp(E(s; t_ref)) is piecewise constant between event timestamps;
      // integrate it exactly over the exposure.
      double c_ref = 0.0;  // cumulative signed threshold sum at t_ref
      for (const auto& [t, w] : evs)
        if (t <= t_ref) c_ref += w;
      double integral = 0.0;
      double prev_t = exp.t_begin();
      double c = 0.0;
      for (const auto& [t, w] : evs) {
        integral += std::exp(std::clamp(c - c_ref, -50.0, 50.0)) * (t - prev_t);
        c += w;
        prev_t = t;
      }
      integral += std::exp(std::clamp(c - c_ref, -50.0, 50.0)) * (exp.t_end() - prev_t);
      if (!(integral > 1e-12 * exp.tau))
        throw std::domain_error("EDI denominator vanished at pixel (" +
                                std::to_string(x) + ", " + std::to_string(y) + ")");
      const double ratio = exp.tau / integral;
      const double* b = lin.px(x, y);
      out.set_pixel(x, y,
                    Vec3(std::clamp(b[0] * ratio, 0.0, 1.0),
                         std::clamp(b[1] * ratio, 0.0, 1.0),
                         std::clamp(b[2] * ratio, 0.0, 1.0)));
    }
  return gamma_encode(out);
}

namespace {

constexpr char kMagic[4] = {'E', 'V', 'B', '1'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_events_evb(const EventStream& events, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write(kMagic, 4);
  put<uint64_t>(f, events.size());
  put<uint32_t>(f, 0);  // reserved
  for (const EventRecord& e : events) {
    put<uint64_t>(f, static_cast<uint64_t>(std::llround(e.t * 1e6)));
    put<uint16_t>(f, e.u);
    put<uint16_t>(f, e.v);
    put<int8_t>(f, e.p);
  }
  if (!f) throw std::runtime_error("write failure: " + path);
}

EventStream load_events_evb(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad event file magic: " + path);
  const uint64_t count = get<uint64_t>(f);
  get<uint32_t>(f);
  EventStream events(count);
  for (uint64_t i = 0; i < count; ++i) {
    events[i].t = static_cast<double>(get<uint64_t>(f)) * 1e-6;
    events[i].u = get<uint16_t>(f);
    events[i].v = get<uint16_t>(f);
    events[i].p = get<int8_t>(f);
  }
  if (!f) throw std::runtime_error("truncated event file: " + path);
  return events;
}

void save_events_csv(const EventStream& events, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << "t_us,u,v,p\n";
  for (const EventRecord& e : events)
    f << static_cast<uint64_t>(std::llround(e.t * 1e6)) << ',' << e.u << ','
      << e.v << ',' << static_cast<int>(e.p) << '\n';
}

EventStream load_events_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string line;
  std::getline(f, line);  // header
  EventStream events;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    uint64_t t_us;
    int u, v, p;
    char comma;
    if (!(ss >> t_us >> comma >> u >> comma >> v >> comma >> p))
      throw std::runtime_error("malformed event CSV line: " + line);
    EventRecord e;
    e.t = static_cast<double>(t_us) * 1e-6;
    e.u = static_cast<uint16_t>(u);
    e.v = static_cast<uint16_t>(v);
    e.p = static_cast<int8_t>(p);
    events.push_back(e);
  }
  return events;
}

}  // namespace evbf
