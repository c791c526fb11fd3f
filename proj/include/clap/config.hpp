#pragma once

#include <cstdlib>
#include <string>

#include "clap/encoders.hpp"
#include "clap/io.hpp"
#include "clap/params.hpp"
#include "clap/toml.hpp"

namespace clap {

struct TrainConfig {
  // rng / corpus
  uint64_t seed = 42;
  uint64_t corpus_seed = 1000;
  int64_t n_scenes = 64;
  int64_t n_objects_min = 2;
  int64_t n_objects_max = 5;
  uint64_t probe_seed = 5000;
  int64_t probe_train_scenes = 16;
  int64_t probe_test_scenes = 8;

  // sensors
  int64_t image_size = 64;
  int64_t lidar_azimuth = 64;
  int64_t lidar_elevations = 16;
  int64_t n_cameras = 2;

  // grid / model dims
  int64_t grid_d = 8, grid_h = 16, grid_w = 16;
  int64_t d_p = 32, d_i = 16, d_f = 32, d_k = 32, n_k = 32;
  int64_t head_hidden = 64;

  // optimization
  int64_t epochs = 8;
  int64_t batch_size = 1;
  double lr = 5e-5;
  std::string schedule = "cosine";
  double w_r = 2.0, w_proto = 1.0;
  double w_sur = 0.05, w_c = 0.05;
  double w_swav = 1.0, w_em = 0.1, w_gmm = 0.1;
  double mask_rate = 0.9;
  int64_t n_l = 512, n_c = 256, n_ray = 32;
  int64_t n_warmup = 4;
  int64_t n_sink = 3;
  double sinkhorn_eps = 0.05;
  double tau = 1.0;
  std::string curvature_mode = "frobenius";  // frobenius | vjp-ones
  std::string mode = "full";  // separate | joint-uniform | joint-curvature | full
  bool proto_all_cells = false;

  ModelDims dims() const {
    ModelDims d;
    d.d_p = d_p;
    d.d_i = d_i;
    d.d_f = d_f;
    d.d_k = d_k;
    d.n_k = n_k;
    d.head_hidden = head_hidden;
    return d;
  }

  void validate() const {
    check(lr > 0, "config: lr must be > 0");
    check(schedule == "cosine" || schedule == "constant", "config: unknown schedule '", schedule,
          "'");
    for (double w : {w_r, w_proto, w_sur, w_c, w_swav, w_em, w_gmm})
      check(w >= 0, "config: loss weights must be >= 0");
    check(mask_rate >= 0 && mask_rate < 1, "config: mask_rate must be in [0,1)");
    check(n_l >= 1 && n_ray >= 2, "config: need n_l >= 1 and n_ray >= 2");
    check(n_c >= 0, "config: n_c must be >= 0");
    check(n_k >= 2, "config: n_k must be >= 2");
    check(epochs >= 1 && batch_size >= 1, "config: epochs and batch_size must be >= 1");
    check(n_warmup >= 0 && n_sink >= 1, "config: n_warmup >= 0 and n_sink >= 1 required");
    check(tau > 0 && sinkhorn_eps > 0, "config: tau and sinkhorn_eps must be > 0");
    check(curvature_mode == "frobenius" || curvature_mode == "vjp-ones",
          "config: unknown curvature_mode '", curvature_mode, "'");
    check(mode == "separate" || mode == "joint-uniform" || mode == "joint-curvature" ||
              mode == "full",
          "config: unknown mode '", mode, "'");
    check(n_objects_min >= 0 && n_objects_max >= n_objects_min, "config: bad n_objects range");
    check(grid_d >= 3 && grid_h >= 3 && grid_w >= 3, "config: grid extents must be >= 3");
    check(image_size >= 8, "config: image_size must be >= 8");
    check(n_cameras >= 1, "config: n_cameras must be >= 1");
  }
};

namespace configdetail {

template <typename T>
void assign_int(T& dst, const TomlValue& v, const std::string& key) {
  check(std::holds_alternative<int64_t>(v), "config: ", key, " must be an integer");
  dst = static_cast<T>(std::get<int64_t>(v));
}

inline void assign_double(double& dst, const TomlValue& v, const std::string& key) {
  if (std::holds_alternative<int64_t>(v))
    dst = static_cast<double>(std::get<int64_t>(v));
  else if (std::holds_alternative<double>(v))
    dst = std::get<double>(v);
  else
    fail("config: ", key, " must be a number");
}

inline void assign_string(std::string& dst, const TomlValue& v, const std::string& key) {
  check(std::holds_alternative<std::string>(v), "config: ", key, " must be a string");
  dst = std::get<std::string>(v);
}

inline void assign_bool(bool& dst, const TomlValue& v, const std::string& key) {
  check(std::holds_alternative<bool>(v), "config: ", key, " must be a boolean");
  dst = std::get<bool>(v);
}

}  // namespace configdetail

inline void apply_config_entry(TrainConfig& cfg, const std::string& key, const TomlValue& v) {
  using namespace configdetail;
  if (key == "seed") assign_int(cfg.seed, v, key);
  else if (key == "corpus_seed") assign_int(cfg.corpus_seed, v, key);
  else if (key == "n_scenes") assign_int(cfg.n_scenes, v, key);
  else if (key == "n_objects_min") assign_int(cfg.n_objects_min, v, key);
  else if (key == "n_objects_max") assign_int(cfg.n_objects_max, v, key);
  else if (key == "probe_seed") assign_int(cfg.probe_seed, v, key);
  else if (key == "probe_train_scenes") assign_int(cfg.probe_train_scenes, v, key);
  else if (key == "probe_test_scenes") assign_int(cfg.probe_test_scenes, v, key);
  else if (key == "image_size") assign_int(cfg.image_size, v, key);
  else if (key == "lidar_azimuth") assign_int(cfg.lidar_azimuth, v, key);
  else if (key == "lidar_elevations") assign_int(cfg.lidar_elevations, v, key);
  else if (key == "n_cameras") assign_int(cfg.n_cameras, v, key);
  else if (key == "grid_d") assign_int(cfg.grid_d, v, key);
  else if (key == "grid_h") assign_int(cfg.grid_h, v, key);
  else if (key == "grid_w") assign_int(cfg.grid_w, v, key);
  else if (key == "d_p") assign_int(cfg.d_p, v, key);
  else if (key == "d_i") assign_int(cfg.d_i, v, key);
  else if (key == "d_f") assign_int(cfg.d_f, v, key);
  else if (key == "d_k") assign_int(cfg.d_k, v, key);
  else if (key == "n_k") assign_int(cfg.n_k, v, key);
  else if (key == "head_hidden") assign_int(cfg.head_hidden, v, key);
  else if (key == "epochs") assign_int(cfg.epochs, v, key);
  else if (key == "batch_size") assign_int(cfg.batch_size, v, key);
  else if (key == "lr") assign_double(cfg.lr, v, key);
  else if (key == "schedule") assign_string(cfg.schedule, v, key);
  else if (key == "w_r") assign_double(cfg.w_r, v, key);
  else if (key == "w_proto") assign_double(cfg.w_proto, v, key);
  else if (key == "w_sur") assign_double(cfg.w_sur, v, key);
  else if (key == "w_c") assign_double(cfg.w_c, v, key);
  else if (key == "w_swav") assign_double(cfg.w_swav, v, key);
  else if (key == "w_em") assign_double(cfg.w_em, v, key);
  else if (key == "w_gmm") assign_double(cfg.w_gmm, v, key);
  else if (key == "mask_rate") assign_double(cfg.mask_rate, v, key);
  else if (key == "n_l") assign_int(cfg.n_l, v, key);
  else if (key == "n_c") assign_int(cfg.n_c, v, key);
  else if (key == "n_ray") assign_int(cfg.n_ray, v, key);
  else if (key == "n_warmup") assign_int(cfg.n_warmup, v, key);
  else if (key == "n_sink") assign_int(cfg.n_sink, v, key);
  else if (key == "sinkhorn_eps") assign_double(cfg.sinkhorn_eps, v, key);
  else if (key == "tau") assign_double(cfg.tau, v, key);
  else if (key == "curvature_mode") assign_string(cfg.curvature_mode, v, key);
  else if (key == "mode") assign_string(cfg.mode, v, key);
  else if (key == "proto_all_cells") assign_bool(cfg.proto_all_cells, v, key);
  else fail("config: unknown key '", key, "'");
}

inline TrainConfig config_from_toml(const TomlMap& map) {
  TrainConfig cfg;
  for (const auto& [key, value] : map) apply_config_entry(cfg, key, value);
  return cfg;
}

inline std::string config_to_toml(const TrainConfig& c) {
  std::string s;
  auto put_i = [&](const char* k, int64_t v) { s += std::string(k) + " = " + std::to_string(v) + "\n"; };
  auto put_u = [&](const char* k, uint64_t v) { s += std::string(k) + " = " + std::to_string(v) + "\n"; };
  auto put_d = [&](const char* k, double v) { s += std::string(k) + " = " + format_double(v) + "\n"; };
  auto put_s = [&](const char* k, const std::string& v) { s += std::string(k) + " = \"" + v + "\"\n"; };
  auto put_b = [&](const char* k, bool v) { s += std::string(k) + std::string(" = ") + (v ? "true" : "false") + "\n"; };
  put_u("seed", c.seed);
  put_u("corpus_seed", c.corpus_seed);
  put_i("n_scenes", c.n_scenes);
  put_i("n_objects_min", c.n_objects_min);
  put_i("n_objects_max", c.n_objects_max);
  put_u("probe_seed", c.probe_seed);
  put_i("probe_train_scenes", c.probe_train_scenes);
  put_i("probe_test_scenes", c.probe_test_scenes);
  put_i("image_size", c.image_size);
  put_i("lidar_azimuth", c.lidar_azimuth);
  put_i("lidar_elevations", c.lidar_elevations);
  put_i("n_cameras", c.n_cameras);
  put_i("grid_d", c.grid_d);
  put_i("grid_h", c.grid_h);
  put_i("grid_w", c.grid_w);
  put_i("d_p", c.d_p);
  put_i("d_i", c.d_i);
  put_i("d_f", c.d_f);
  put_i("d_k", c.d_k);
  put_i("n_k", c.n_k);
  put_i("head_hidden", c.head_hidden);
  put_i("epochs", c.epochs);
  put_i("batch_size", c.batch_size);
  put_d("lr", c.lr);
  put_s("schedule", c.schedule);
  put_d("w_r", c.w_r);
  put_d("w_proto", c.w_proto);
  put_d("w_sur", c.w_sur);
  put_d("w_c", c.w_c);
  put_d("w_swav", c.w_swav);
  put_d("w_em", c.w_em);
  put_d("w_gmm", c.w_gmm);
  put_d("mask_rate", c.mask_rate);
  put_i("n_l", c.n_l);
  put_i("n_c", c.n_c);
  put_i("n_ray", c.n_ray);
  put_i("n_warmup", c.n_warmup);
  put_i("n_sink", c.n_sink);
  put_d("sinkhorn_eps", c.sinkhorn_eps);
  put_d("tau", c.tau);
  put_s("curvature_mode", c.curvature_mode);
  put_s("mode", c.mode);
  put_b("proto_all_cells", c.proto_all_cells);
  return s;
}

inline std::string config_hash(const TrainConfig& cfg) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(config_to_toml(cfg))));
  return buf;
}

inline TrainConfig load_config(const std::string& path) {
  return config_from_toml(parse_toml(read_text_file(path)));
}

// CLAP_SEED environment variable overrides the configured seed.
inline void apply_env_seed(TrainConfig& cfg) {
  const char* env = std::getenv("CLAP_SEED");
  if (!env || !*env) return;
  char* end = nullptr;
  unsigned long long v = std::strtoull(env, &end, 10);
  check(end && *end == '\0', "CLAP_SEED must be an unsigned integer, got '", env, "'");
  cfg.seed = static_cast<uint64_t>(v);
}

inline TrainConfig ablation_mode(TrainConfig cfg, const std::string& mode) {
  check(mode == "separate" || mode == "joint-uniform" || mode == "joint-curvature" ||
            mode == "full",
        "ablation_mode: unknown mode '", mode, "'");
  cfg.mode = mode;
  return cfg;
}

inline bool mode_uses_proto(const std::string& mode) { return mode == "full"; }
inline bool mode_uses_curvature(const std::string& mode) {
  return mode == "full" || mode == "joint-curvature";
}
inline bool mode_is_separate(const std::string& mode) { return mode == "separate"; }

}  // namespace clap
