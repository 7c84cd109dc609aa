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

#include "evbf/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

using nlohmann::json;

namespace evbf {

namespace {

constexpr char kCkptMagic[8] = {'E', 'V', 'B', 'F', 'C', 'K', 'P', 'T'};
constexpr const char* kCkptVersion = "evbf-ckpt-1";

struct NamedArray {
  std::string name;
  Eigen::Map<Vec> map;
};

std::vector<NamedArray> collect_arrays(ModelParams& model) {
  std::vector<NamedArray> out;
  model.visit([&](const std::string& name, Eigen::Map<Vec> v) {
    out.push_back({name, v});
  });
  return out;
}

}  // namespace

double lr_at(int iter, const TrainConfig& cfg) {
  const double frac =
      static_cast<double>(iter) / static_cast<double>(cfg.iterations);
  return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, frac);
}

TrainerState init_trainer(const DatasetBundle& bundle, const TrainConfig& cfg) {
  if (cfg.iterations < 0 || !(cfg.lr_start >= cfg.lr_end && cfg.lr_end > 0))
    throw std::invalid_argument("bad training schedule");
  TrainerState st;
  st.config = cfg;
  st.config.refiner.t_min = bundle.traj_prior.t_min();
  st.config.refiner.t_max = bundle.traj_prior.t_max();
  Rng rng(cfg.seed);
  st.model.field = FieldParams::init(st.config.field, rng);
  st.model.refiner = RefinerParams::init(st.config.refiner, rng);
  st.model.ecrf = ECRFParams::init(st.config.ecrf, rng);
  st.intrinsics_hash = bundle.intrinsics_hash();
  auto arrays = collect_arrays(st.model);
  st.adam.m.resize(arrays.size());
  st.adam.v.resize(arrays.size());
  for (size_t i = 0; i < arrays.size(); ++i) {
    st.adam.m[i] = Vec::Zero(arrays[i].map.size());
    st.adam.v[i] = Vec::Zero(arrays[i].map.size());
  }
  return st;
}

void train(TrainerState& state, const DatasetBundle& bundle,
           std::vector<TrainLogEntry>* log,
           const std::function<void(const TrainLogEntry&)>& on_log) {
  const TrainConfig& cfg = state.config;
  const std::vector<EventPairSample> all_pairs =
      pair_events(bundle.events, cfg.event_pair_window);

  RenderOptions opts;
  opts.n_coarse = cfg.n_coarse;
  opts.n_fine = cfg.n_fine;
  opts.background = bundle.background;
  opts.jitter = true;
  LossEvaluator eval(state.model, bundle.traj_prior, bundle.intr, opts);

  const int w = bundle.intr.width, h = bundle.intr.height;
  const int n_frames = static_cast<int>(bundle.frames.size());

  for (int k = state.iteration; k < cfg.iterations; ++k) {
    // Per-iteration stream derived from (seed, k) only, so a resumed run
    // replays the exact same batches as an uninterrupted one.
    Rng rng(cfg.seed * 0x9e3779b97f4a7c15ull + static_cast<uint64_t>(k) + 1);
    ModelParams grad = state.model.zeros_like();
    const double lp = lambda_p_at(k, cfg.weights);

    std::vector<RayBatchEntry> batch(cfg.batch_blur);
    for (RayBatchEntry& e : batch) {
      e.frame = static_cast<int>(rng.uniform_index(n_frames));
      e.u = static_cast<int>(rng.uniform_index(w));
      e.v = static_cast<int>(rng.uniform_index(h));
      const double* px = bundle.frames[e.frame].px(e.u, e.v);
      e.observed = Vec3(px[0], px[1], px[2]);
      const double* pp = bundle.priors[e.frame].px(e.u, e.v);
      e.prior = Vec3(pp[0], pp[1], pp[2]);
    }

    const double l_blur =
        eval.loss_blur(batch, bundle.exposures, cfg.M, rng, cfg.weights.lambda_b,
                       &grad, cfg.freeze_refiner);
    double l_event = 0.0;
    if (cfg.use_event && !all_pairs.empty()) {
      std::vector<EventPairSample> epairs(cfg.batch_event);
      for (EventPairSample& p : epairs)
        p = all_pairs[rng.uniform_index(all_pairs.size())];
      l_event = eval.loss_event(epairs, bundle.event_model, rng,
                                cfg.weights.lambda_e, &grad, cfg.freeze_refiner,
                                cfg.use_ecrf);
    }
    double l_prior = 0.0;
    if (cfg.use_prior && lp > 0.0)
      l_prior = eval.loss_prior(batch, bundle.exposures, rng, lp, &grad,
                                cfg.freeze_refiner);

    const double total = cfg.weights.lambda_b * l_blur +
                         cfg.weights.lambda_e * l_event + lp * l_prior;
    auto check = [&](double v, const char* term) {
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "non-finite " << term << " loss at iteration " << k;
        throw std::runtime_error(os.str());
      }
    };
    check(l_blur, "blur");
    check(l_event, "event");
    check(l_prior, "prior");

    // Adam over every parameter array with one shared schedule.
    const double lr = lr_at(k, cfg);
    auto params = collect_arrays(state.model);
    auto grads = collect_arrays(grad);
    AdamState& a = state.adam;
    a.step += 1;
    const double bc1 = 1.0 - std::pow(a.beta1, a.step);
    const double bc2 = 1.0 - std::pow(a.beta2, a.step);
    for (size_t i = 0; i < params.size(); ++i) {
      const auto& g = grads[i].map;
      a.m[i] = a.beta1 * a.m[i] + (1.0 - a.beta1) * g;
      a.v[i] = a.beta2 * a.v[i].array().matrix() +
               (1.0 - a.beta2) * g.cwiseProduct(g);
      params[i].map.array() -=
          lr * (a.m[i].array() / bc1) /
          ((a.v[i].array() / bc2).sqrt() + a.eps);
    }
    state.iteration = k + 1;

    if ((cfg.log_every > 0 && (k % cfg.log_every == 0)) ||
        k + 1 == cfg.iterations) {
      TrainLogEntry entry{k, total, l_blur, l_event, l_prior, lp, lr};
      if (log) log->push_back(entry);
      if (on_log) on_log(entry);
    }
  }
}

json train_config_to_json(const TrainConfig& c) {
  json j;
  j["iterations"] = c.iterations;
  j["lr_start"] = c.lr_start;
  j["lr_end"] = c.lr_end;
  j["batch_blur"] = c.batch_blur;
  j["batch_event"] = c.batch_event;
  j["M"] = c.M;
  j["n_coarse"] = c.n_coarse;
  j["n_fine"] = c.n_fine;
  j["event_pair_window"] = c.event_pair_window;
  j["seed"] = c.seed;
  j["deterministic"] = c.deterministic;
  j["device"] = c.device;
  j["use_event"] = c.use_event;
  j["use_prior"] = c.use_prior;
  j["use_ecrf"] = c.use_ecrf;
  j["freeze_refiner"] = c.freeze_refiner;
  j["log_every"] = c.log_every;
  j["checkpoint_every"] = c.checkpoint_every;
  j["weights"] = {{"lambda_b", c.weights.lambda_b},
                  {"lambda_e", c.weights.lambda_e},
                  {"lambda_p_init", c.weights.lambda_p_init},
                  {"lambda_p_decay_iters", c.weights.lambda_p_decay_iters}};
  j["field"] = {{"L_x", c.field.L_x},
                {"L_d", c.field.L_d},
                {"grid_res", c.field.grid_res},
                {"grid_channels", c.field.grid_channels},
                {"coarse_hidden", c.field.coarse_hidden},
                {"fine_hidden", c.field.fine_hidden},
                {"near", c.field.near},
                {"far", c.field.far},
                {"sigma_bias", c.field.sigma_bias}};
  j["refiner"] = {{"L_t", c.refiner.L_t},
                  {"hidden", c.refiner.hidden},
                  {"t_min", c.refiner.t_min},
                  {"t_max", c.refiner.t_max},
                  {"out_scale", c.refiner.out_scale}};
  j["ecrf"] = {{"hidden", c.ecrf.hidden}, {"clamp_eps", c.ecrf.clamp_eps}};
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.iterations = j.value("iterations", c.iterations);
  c.lr_start = j.value("lr_start", c.lr_start);
  c.lr_end = j.value("lr_end", c.lr_end);
  c.batch_blur = j.value("batch_blur", c.batch_blur);
  c.batch_event = j.value("batch_event", c.batch_event);
  c.M = j.value("M", c.M);
  c.n_coarse = j.value("n_coarse", c.n_coarse);
  c.n_fine = j.value("n_fine", c.n_fine);
  c.event_pair_window = j.value("event_pair_window", c.event_pair_window);
  c.seed = j.value("seed", c.seed);
  c.deterministic = j.value("deterministic", c.deterministic);
  c.device = j.value("device", c.device);
  c.use_event = j.value("use_event", c.use_event);
  c.use_prior = j.value("use_prior", c.use_prior);
  c.use_ecrf = j.value("use_ecrf", c.use_ecrf);
  c.freeze_refiner = j.value("freeze_refiner", c.freeze_refiner);
  c.log_every = j.value("log_every", c.log_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    c.weights.lambda_b = w.value("lambda_b", c.weights.lambda_b);
    c.weights.lambda_e = w.value("lambda_e", c.weights.lambda_e);
    c.weights.lambda_p_init = w.value("lambda_p_init", c.weights.lambda_p_init);
    c.weights.lambda_p_decay_iters =
        w.value("lambda_p_decay_iters", c.weights.lambda_p_decay_iters);
  }
  if (j.contains("field")) {
    const json& f = j.at("field");
    c.field.L_x = f.value("L_x", c.field.L_x);
    c.field.L_d = f.value("L_d", c.field.L_d);
    c.field.grid_res = f.value("grid_res", c.field.grid_res);
    c.field.grid_channels = f.value("grid_channels", c.field.grid_channels);
    c.field.coarse_hidden = f.value("coarse_hidden", c.field.coarse_hidden);
    c.field.fine_hidden = f.value("fine_hidden", c.field.fine_hidden);
    c.field.near = f.value("near", c.field.near);
    c.field.far = f.value("far", c.field.far);
    c.field.sigma_bias = f.value("sigma_bias", c.field.sigma_bias);
  }
  if (j.contains("refiner")) {
    const json& r = j.at("refiner");
    c.refiner.L_t = r.value("L_t", c.refiner.L_t);
    c.refiner.hidden = r.value("hidden", c.refiner.hidden);
    c.refiner.t_min = r.value("t_min", c.refiner.t_min);
    c.refiner.t_max = r.value("t_max", c.refiner.t_max);
    c.refiner.out_scale = r.value("out_scale", c.refiner.out_scale);
  }
  if (j.contains("ecrf")) {
    const json& e = j.at("ecrf");
    c.ecrf.hidden = e.value("hidden", c.ecrf.hidden);
    c.ecrf.clamp_eps = e.value("clamp_eps", c.ecrf.clamp_eps);
  }
  return c;
}

void save_checkpoint(const TrainerState& state, const std::string& path) {
  TrainerState& st = const_cast<TrainerState&>(state);  // visit is non-const
  auto arrays = collect_arrays(st.model);

  json meta;
  meta["version"] = kCkptVersion;
  meta["iteration"] = state.iteration;
  meta["intrinsics_hash"] = state.intrinsics_hash;
  meta["config"] = train_config_to_json(state.config);
  meta["adam"] = {{"beta1", state.adam.beta1},
                  {"beta2", state.adam.beta2},
                  {"eps", state.adam.eps},
                  {"step", state.adam.step}};
  json dir = json::array();
  for (const NamedArray& a : arrays)
    dir.push_back({{"name", a.name}, {"size", a.map.size()}});
  meta["arrays"] = dir;
  const std::string meta_str = meta.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path);
  f.write(kCkptMagic, 8);
  const uint64_t len = meta_str.size();
  f.write(reinterpret_cast<const char*>(&len), 8);
  f.write(meta_str.data(), static_cast<std::streamsize>(len));
  for (const NamedArray& a : arrays)
    f.write(reinterpret_cast<const char*>(a.map.data()),
            static_cast<std::streamsize>(a.map.size() * sizeof(double)));
  for (const Vec& m : state.adam.m)
    f.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
  for (const Vec& v : state.adam.v)
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!f) throw std::runtime_error("write failure on checkpoint " + path);
}

TrainerState load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 8);
  std::string meta_str(len, '\0');
  f.read(meta_str.data(), static_cast<std::streamsize>(len));
  const json meta = json::parse(meta_str);
  if (meta.at("version") != kCkptVersion)
    throw std::runtime_error("unsupported checkpoint version");

  TrainerState st;
  st.config = train_config_from_json(meta.at("config"));
  st.iteration = meta.at("iteration");
  st.intrinsics_hash = meta.at("intrinsics_hash");
  st.adam.beta1 = meta.at("adam").at("beta1");
  st.adam.beta2 = meta.at("adam").at("beta2");
  st.adam.eps = meta.at("adam").at("eps");
  st.adam.step = meta.at("adam").at("step");

  // Rebuild parameter storage with the right shapes, then overwrite bytes.
  Rng rng(0);
  st.model.field = FieldParams::init(st.config.field, rng);
  st.model.refiner = RefinerParams::init(st.config.refiner, rng);
  st.model.ecrf = ECRFParams::init(st.config.ecrf, rng);
  auto arrays = collect_arrays(st.model);
  const json& dir = meta.at("arrays");
  if (dir.size() != arrays.size())
    throw std::runtime_error("checkpoint array count mismatch");
  for (size_t i = 0; i < arrays.size(); ++i) {
    if (dir[i].at("name") != arrays[i].name ||
        dir[i].at("size").get<Eigen::Index>() != arrays[i].map.size())
      throw std::runtime_error("checkpoint array layout mismatch");
    f.read(reinterpret_cast<char*>(arrays[i].map.data()),
           static_cast<std::streamsize>(arrays[i].map.size() * sizeof(double)));
  }
  st.adam.m.resize(arrays.size());
  st.adam.v.resize(arrays.size());
  for (Vec& m : st.adam.m) {
    m = Vec::Zero(arrays[&m - st.adam.m.data()].map.size());
    f.read(reinterpret_cast<char*>(m.data()),
           static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  for (Vec& v : st.adam.v) {
    v = Vec::Zero(arrays[&v - st.adam.v.data()].map.size());
    f.read(reinterpret_cast<char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  return st;
}

}  // namespace evbf
