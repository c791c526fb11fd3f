#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clap/common.hpp"
#include "clap/io.hpp"
#include "clap/rng.hpp"
#include "clap/tape.hpp"

namespace clap {

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Named parameter tensors, ordered by name so every traversal is stable.
struct ParamSet {
  std::map<std::string, TensorData> tensors;

  // Gaussian init scaled by fan-in/fan-out; the draw depends only on
  // (seed, name), never on registration order.
  void init(const std::string& name, const Shape& shape, uint64_t seed, double scale_override = -1) {
    check(!tensors.count(name), "param already registered: ", name);
    int64_t fan_in = shape.size() >= 2 ? shape[shape.size() - 2] : numel(shape);
    int64_t fan_out = shape.size() >= 2 ? shape.back() : numel(shape);
    double scale = scale_override >= 0 ? scale_override
                                       : std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    Rng rng(hash_mix(seed, fnv1a(name)));
    TensorData t(shape, std::vector<double>(static_cast<size_t>(numel(shape))));
    for (auto& v : t.values) v = scale * rng.normal();
    tensors.emplace(name, std::move(t));
  }

  void init_constant(const std::string& name, const Shape& shape, double value) {
    check(!tensors.count(name), "param already registered: ", name);
    tensors.emplace(name, TensorData::full(shape, value));
  }

  TensorData& at(const std::string& name) {
    auto it = tensors.find(name);
    check(it != tensors.end(), "unknown param: ", name);
    return it->second;
  }
  const TensorData& at(const std::string& name) const {
    auto it = tensors.find(name);
    check(it != tensors.end(), "unknown param: ", name);
    return it->second;
  }
  bool has(const std::string& name) const { return tensors.count(name) > 0; }
};

// Binds ParamSet tensors onto a tape on demand; records binding order for
// the gradient sweep.
struct ParamBinder {
  Tape& tape;
  ParamSet& params;
  std::map<std::string, Value> bound;
  std::vector<std::string> order;

  ParamBinder(Tape& t, ParamSet& p) : tape(t), params(p) {}

  Value operator()(const std::string& name) {
    auto it = bound.find(name);
    if (it != bound.end()) return it->second;
    Value v = tape.param(params.at(name), name);
    bound.emplace(name, v);
    order.push_back(name);
    return v;
  }
};

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t step_count = 0;
  std::map<std::string, std::vector<double>> m, v;

  void step(ParamSet& params, const std::map<std::string, TensorData>& grads, double lr) {
    ++step_count;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (const auto& [name, g] : grads) {
      TensorData& p = params.at(name);
      check(p.values.size() == g.values.size(), "grad size mismatch for ", name);
      auto& mm = m[name];
      auto& vv = v[name];
      if (mm.empty()) mm.assign(p.values.size(), 0.0);
      if (vv.empty()) vv.assign(p.values.size(), 0.0);
      for (size_t i = 0; i < p.values.size(); ++i) {
        double gi = g.values[i];
        mm[i] = beta1 * mm[i] + (1 - beta1) * gi;
        vv[i] = beta2 * vv[i] + (1 - beta2) * gi * gi;
        double mhat = mm[i] / bc1;
        double vhat = vv[i] / bc2;
        p.values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

// Cosine decay from base to exactly 0 at the final step.
inline double cosine_lr(double base, int64_t step, int64_t total_steps) {
  check(total_steps >= 1, "cosine_lr: total_steps must be >= 1");
  if (total_steps == 1) return base;
  double u = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  return 0.5 * base * (1.0 + std::cos(M_PI * u));
}

struct Checkpoint {
  ParamSet params;
  Adam opt;
  int64_t epoch = 0;
  int64_t step = 0;
  std::string config_hash;
};

namespace detail {
inline void append_doubles(std::string& blob, const std::vector<double>& v) {
  blob.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}
inline std::vector<double> read_doubles(const std::string& blob, size_t offset, size_t count) {
  check(offset + count * sizeof(double) <= blob.size(), "checkpoint blob truncated");
  std::vector<double> v(count);
  std::memcpy(v.data(), blob.data() + offset, count * sizeof(double));
  return v;
}
}  // namespace detail

// JSON header + raw little-endian double blob; save -> load -> save is
// byte-identical because all maps iterate in name order.
inline void save_checkpoint(const std::string& path_prefix, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = "clap-checkpoint-v1";
  header["epoch"] = ckpt.epoch;
  header["step"] = ckpt.step;
  header["config_hash"] = ckpt.config_hash;
  header["adam"] = {{"beta1", ckpt.opt.beta1},
                    {"beta2", ckpt.opt.beta2},
                    {"eps", ckpt.opt.eps},
                    {"step_count", ckpt.opt.step_count}};
  std::string blob;
  nlohmann::json plist = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.params.tensors) {
    nlohmann::json pj;
    pj["name"] = name;
    pj["shape"] = t.shape;
    pj["offset"] = blob.size();
    bool has_moments = ckpt.opt.m.count(name) > 0;
    detail::append_doubles(blob, t.values);
    pj["has_moments"] = has_moments;
    if (has_moments) {
      pj["offset_m"] = blob.size();
      detail::append_doubles(blob, ckpt.opt.m.at(name));
      pj["offset_v"] = blob.size();
      detail::append_doubles(blob, ckpt.opt.v.at(name));
    }
    plist.push_back(pj);
  }
  header["params"] = plist;
  write_text_file(path_prefix + ".json", header.dump(2) + "\n");
  write_text_file(path_prefix + ".bin", blob);
}

inline Checkpoint load_checkpoint(const std::string& path_prefix) {
  nlohmann::json header = nlohmann::json::parse(read_text_file(path_prefix + ".json"));
  check(header.at("format") == "clap-checkpoint-v1", "unknown checkpoint format in ",
        path_prefix, ".json");
  std::string blob = read_text_file(path_prefix + ".bin");
  Checkpoint ckpt;
  ckpt.epoch = header.at("epoch");
  ckpt.step = header.at("step");
  ckpt.config_hash = header.at("config_hash");
  ckpt.opt.beta1 = header.at("adam").at("beta1");
  ckpt.opt.beta2 = header.at("adam").at("beta2");
  ckpt.opt.eps = header.at("adam").at("eps");
  ckpt.opt.step_count = header.at("adam").at("step_count");
  for (const auto& pj : header.at("params")) {
    std::string name = pj.at("name");
    Shape shape = pj.at("shape").get<Shape>();
    size_t count = static_cast<size_t>(numel(shape));
    TensorData t(shape, detail::read_doubles(blob, pj.at("offset"), count));
    ckpt.params.tensors.emplace(name, std::move(t));
    if (pj.at("has_moments").get<bool>()) {
      ckpt.opt.m[name] = detail::read_doubles(blob, pj.at("offset_m"), count);
      ckpt.opt.v[name] = detail::read_doubles(blob, pj.at("offset_v"), count);
    }
  }
  return ckpt;
}

}  // namespace clap
