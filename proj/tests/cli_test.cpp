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

// End-to-end tests for the command-line tool: exit-code contract, strict
// config validation, and determinism of dataset generation.  The binary
// path is injected at build time through EVBF_BIN.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "evbf/trajectory.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code;
  std::string err;
};

// Runs the CLI with stdout discarded and stderr captured to a scratch file.
RunResult run_cli(const std::string& args) {
  const fs::path err_path = fs::temp_directory_path() / "evbf_cli_err.txt";
  const std::string cmd = std::string(EVBF_BIN) + " " + args +
                          " > /dev/null 2> " + err_path.string();
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream f(err_path);
  std::stringstream ss;
  ss << f.rdbuf();
  r.err = ss.str();
  return r;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

// Small bundle + short training run so the full pipeline stays fast.
const char* kTinyConfig = R"({
  "bundle": {
    "image_size": 16, "focal": 18.0, "scene_res": 16,
    "duration": 1.0, "traj_samples": 41,
    "n_frames": 4, "n_holdout": 1, "tau": 0.04,
    "oracle_substeps": 8, "quadrature_steps": 64,
    "sim_rate": 150.0, "noise_level": 1
  },
  "train": {
    "iterations": 6, "batch_blur": 8, "batch_event": 8, "M": 2,
    "n_coarse": 8, "n_fine": 8, "log_every": 2,
    "field": {"L_x": 3, "L_d": 1, "grid_res": 8, "grid_channels": 2,
              "coarse_hidden": [24, 24], "fine_hidden": [24, 24]},
    "refiner": {"hidden": [16, 16]},
    "ecrf": {"hidden": [8]}
  },
  "eval": {"reg_steps": 4, "reg_rays": 32}
})";

bool same_file_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return fa && fb && sa.str() == sb.str();
}

}  // namespace

TEST_CASE("missing subcommand and bad flags are rejected") {
  CHECK(run_cli("").code != 0);
  CHECK(run_cli("frobnicate").code != 0);
  CHECK(run_cli("gen-data").code != 0);  // --out is required
}

TEST_CASE("unknown config keys are rejected with their path") {
  const fs::path dir = scratch_dir("evbf_cli_badcfg");
  write_text(dir / "cfg.json", R"({"bundle": {"image_sze": 16}})");
  RunResult r = run_cli("gen-data --config " + (dir / "cfg.json").string() +
                        " --out " + (dir / "b").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("bundle.image_sze") != std::string::npos);

  write_text(dir / "cfg2.json", R"({"train": {"weights": {"lambda_q": 1}}})");
  r = run_cli("gen-data --config " + (dir / "cfg2.json").string() + " --out " +
              (dir / "b").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("train.weights.lambda_q") != std::string::npos);

  write_text(dir / "cfg3.json", "{not json");
  r = run_cli("gen-data --config " + (dir / "cfg3.json").string() + " --out " +
              (dir / "b").string());
  CHECK(r.code == 2);
}

TEST_CASE("gen-data validates the noise level and is deterministic") {
  const fs::path dir = scratch_dir("evbf_cli_gen");
  write_text(dir / "cfg.json", kTinyConfig);
  const std::string cfg = " --config " + (dir / "cfg.json").string();

  CHECK(run_cli("gen-data" + cfg + " --noise-level 9 --out " +
                (dir / "bad").string())
            .code == 2);

  REQUIRE(run_cli("gen-data" + cfg + " --out " + (dir / "a").string()).code ==
          0);
  REQUIRE(run_cli("gen-data" + cfg + " --out " + (dir / "b").string()).code ==
          0);
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    const fs::path other = dir / "b" / entry.path().filename();
    REQUIRE(fs::exists(other));
    CHECK_MESSAGE(same_file_bytes(entry.path(), other),
                  entry.path().filename().string());
  }

  // A different noise seed must change the prior trajectory.
  REQUIRE(run_cli("gen-data" + cfg + " --seed 99 --out " +
                  (dir / "c").string())
              .code == 0);
  CHECK_FALSE(same_file_bytes(dir / "a" / "traj_prior.tum",
                              dir / "c" / "traj_prior.tum"));
}

TEST_CASE("train, eval, and render round trip through the exit-code contract") {
  const fs::path dir = scratch_dir("evbf_cli_pipe");
  write_text(dir / "cfg.json", kTinyConfig);
  const std::string cfg = " --config " + (dir / "cfg.json").string();
  const fs::path bundle = dir / "bundle";
  REQUIRE(run_cli("gen-data" + cfg + " --out " + bundle.string()).code == 0);

  // Training on something that is not a bundle is a validation error.
  CHECK(run_cli("train --bundle " + dir.string() + cfg + " --out " +
                (dir / "x").string())
            .code == 2);

  const fs::path run = dir / "run";
  REQUIRE(run_cli("train --bundle " + bundle.string() + cfg + " --out " +
                  run.string())
              .code == 0);
  const fs::path ckpt = run / "checkpoint.ckpt";
  REQUIRE(fs::exists(ckpt));
  CHECK(fs::exists(run / "loss.csv"));

  // A truncated checkpoint is a compatibility error.
  write_text(dir / "bad.ckpt", "EVBF");
  CHECK(run_cli("eval --checkpoint " + (dir / "bad.ckpt").string() +
                " --bundle " + bundle.string() + cfg + " --out " +
                (dir / "e").string())
            .code == 5);

  const fs::path eval_out = dir / "eval";
  REQUIRE(run_cli("eval --checkpoint " + ckpt.string() + " --bundle " +
                  bundle.string() + cfg + " --out " + eval_out.string())
              .code == 0);
  CHECK(fs::exists(eval_out / "report.json"));
  CHECK(fs::exists(eval_out / "per_view.csv"));
  CHECK(fs::exists(eval_out / "holdout_render_00000.png"));

  // Render rejects pose timestamps outside the trained time support.
  evbf::Trajectory good, bad;
  good.samples.push_back({0.5, evbf::Pose::identity()});
  bad.samples.push_back({10.0, evbf::Pose::identity()});
  evbf::save_trajectory_tum(good, (dir / "good.tum").string());
  evbf::save_trajectory_tum(bad, (dir / "bad.tum").string());
  CHECK(run_cli("render --checkpoint " + ckpt.string() + " --bundle " +
                bundle.string() + " --poses " + (dir / "bad.tum").string() +
                " --out " + (dir / "r").string())
            .code == 2);
  REQUIRE(run_cli("render --checkpoint " + ckpt.string() + " --bundle " +
                  bundle.string() + " --poses " + (dir / "good.tum").string() +
                  " --out " + (dir / "r").string())
              .code == 0);
  CHECK(fs::exists(dir / "r" / "render_00000.png"));

  // A checkpoint trained against different intrinsics is incompatible.
  write_text(dir / "cfg_big.json",
             R"({"bundle": {"image_size": 20, "focal": 18.0, "scene_res": 16,
                 "duration": 1.0, "traj_samples": 41, "n_frames": 4,
                 "n_holdout": 1, "oracle_substeps": 8,
                 "quadrature_steps": 64, "sim_rate": 150.0}})");
  const fs::path bundle2 = dir / "bundle2";
  REQUIRE(run_cli("gen-data --config " + (dir / "cfg_big.json").string() +
                  " --out " + bundle2.string())
              .code == 0);
  CHECK(run_cli("eval --checkpoint " + ckpt.string() + " --bundle " +
                bundle2.string() + cfg + " --out " + (dir / "e2").string())
            .code == 5);

  // Resuming from the final checkpoint with a larger target keeps going.
  CHECK(run_cli("train --bundle " + bundle.string() + cfg + " --resume " +
                ckpt.string() + " --iters 8 --out " + (dir / "run2").string())
            .code == 0);

  fs::remove_all(dir);
}
