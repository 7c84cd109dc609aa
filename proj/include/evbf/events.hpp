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

#include <cstdint>
#include <string>
#include <vector>

#include "evbf/image.hpp"
#include "evbf/scene.hpp"

namespace evbf {

struct EventRecord {
  uint16_t u = 0;  // column
  uint16_t v = 0;  // row
  double t = 0.0;  // seconds
  int8_t p = 1;    // polarity, strictly +1 or -1
};

using EventStream = std::vector<EventRecord>;

/// Ideal contrast-threshold camera: an event fires when log(luma + eps)
/// departs from the per-pixel reference level by the polarity's threshold.
struct EventCameraModel {
  double theta_pos = 0.2;
  double theta_neg = 0.2;
  double log_eps = kLogEps;

  void validate() const;
  double threshold(int polarity) const {
    return polarity > 0 ? theta_pos : theta_neg;
  }
};

/// Dense-sampling simulator over [t0, t1] at sim_rate Hz. Crossing timestamps
/// are linearly interpolated between samples; the reference level resets to
/// the crossed threshold level (ESIM semantics). Output globally time-sorted.
EventStream simulate_events(const VoxelScene& scene, const Trajectory& traj,
                            const CameraIntrinsics& intr,
                            const EventCameraModel& model, double t0, double t1,
                            double sim_rate, int quadrature_steps = 64);

/// Per-pixel crossing detector on an explicit log-luma signal; the core the
/// full simulator shares with the acceptance oracle.
/// `times` strictly increasing; returns (t, polarity) crossings in order.
std::vector<std::pair<double, int>> detect_crossings(
    const std::vector<double>& times, const std::vector<double>& log_luma,
    const EventCameraModel& model);

/// Event-based double integral deblurring. `blurry` is gamma-encoded; the
/// latent sharp frame at t_ref inside the exposure is recovered from the
/// in-exposure events and re-encoded. Throws std::domain_error (with pixel
/// coordinates) on a vanishing denominator.
Image edi_deblur(const Image& blurry, const EventStream& events,
                 const ExposureSpec& exp, const EventCameraModel& model,
                 double t_ref);

/// Binary `.evb` format: 16-byte header (magic "EVB1", u64 count, u32
/// reserved) then 13-byte little-endian records (t_us u64, u u16, v u16, p i8).
void save_events_evb(const EventStream& events, const std::string& path);
EventStream load_events_evb(const std::string& path);

/// CSV fallback: header line `t_us,u,v,p`.
void save_events_csv(const EventStream& events, const std::string& path);
EventStream load_events_csv(const std::string& path);

}  // namespace evbf
