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

#include <functional>
#include <string>

#include "evbf/dataset.hpp"
#include "evbf/losses.hpp"
#include "json.hpp"

namespace evbf {

struct TrainConfig {
  int iterations = 2000;
  double lr_start = 5e-3, lr_end = 5e-6;  // shared exponential schedule
  int batch_blur = 32;    // B_b; full-scale default 1024
  int batch_event = 32;   // B_e; full-scale default 2048
  int M = 7;              // in-exposure render samples
  int n_coarse = 24, n_fine = 24;
  LossWeights weights;
  double event_pair_window = 0.05;  // seconds
  uint64_t seed = 42;
  bool deterministic = true;
  std::string device = "cpu";  // hint only; execution is always CPU

  // Ablation axes.
  bool use_event = true;
  bool use_prior = true;
  bool use_ecrf = true;
  bool freeze_refiner = false;

  int log_every = 25;
  int checkpoint_every = 0;  // 0 = final only

  FieldConfig field;
  RefinerConfig refiner;  // t_min/t_max overwritten from the bundle
  ECRFConfig ecrf;
};

double lr_at(int iter, const TrainConfig& cfg);

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int step = 0;
  std::vector<Vec> m, v;  // one pair per parameter array, visit order
};

struct TrainLogEntry {
  int iter = 0;
  double total = 0.0, blur = 0.0, event = 0.0, prior = 0.0;
  double lambda_p = 0.0, lr = 0.0;
};

/// Full trainer state; serialized verbatim by checkpoints.
struct TrainerState {
  TrainConfig config;
  ModelParams model;
  AdamState adam;
  int iteration = 0;
  uint64_t intrinsics_hash = 0;
};

TrainerState init_trainer(const DatasetBundle& bundle, const TrainConfig& cfg);

/// Runs iterations [state.iteration, state.config.iterations). Appends to
/// `log` if given. Throws std::runtime_error naming the offending loss term
/// and iteration on non-finite loss.
void train(TrainerState& state, const DatasetBundle& bundle,
           std::vector<TrainLogEntry>* log = nullptr,
           const std::function<void(const TrainLogEntry&)>& on_log = nullptr);

/// Single archive: magic + JSON directory + raw little-endian doubles.
/// Round-trips bit-exactly, version "evbf-ckpt-1".
void save_checkpoint(const TrainerState& state, const std::string& path);
TrainerState load_checkpoint(const std::string& path);

/// Config (de)serialization shared by checkpoints and the CLI. Reading uses
/// defaults for absent keys; unknown-key rejection is the CLI's concern.
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace evbf
