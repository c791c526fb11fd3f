#pragma once

#include <Eigen/Dense>
#include <vector>

#include "clap/trainer.hpp"

namespace clap {

// Per-voxel semantic label: 0 empty, 1 ground, 2 foreground, by majority of
// the contained points' ground-truth labels.
inline std::vector<int> voxel_labels(const SceneBundle& b) {
  int64_t n = b.grid.n_voxels();
  std::vector<int> ground(static_cast<size_t>(n), 0), fg(static_cast<size_t>(n), 0);
  for (int64_t i = 0; i < b.cloud.size(); ++i) {
    int64_t d, h, w;
    if (!b.grid.voxel_of(b.cloud.position(i), d, h, w)) continue;
    int64_t vi = b.grid.index(d, h, w);
    const ScenePrimitive* prim = b.cloud.primitive_id[static_cast<size_t>(i)] >= 0
        ? &b.scene.primitives[static_cast<size_t>(b.cloud.primitive_id[static_cast<size_t>(i)])]
        : nullptr;
    if (prim && prim->label == SemanticLabel::kForeground)
      ++fg[static_cast<size_t>(vi)];
    else
      ++ground[static_cast<size_t>(vi)];
  }
  std::vector<int> labels(static_cast<size_t>(n), 0);
  for (int64_t vi = 0; vi < n; ++vi) {
    size_t s = static_cast<size_t>(vi);
    if (ground[s] + fg[s] == 0) continue;
    labels[s] = fg[s] >= ground[s] ? 2 : 1;
  }
  return labels;
}

struct LogisticModel {
  Eigen::MatrixXd w;  // d x c
  Eigen::VectorXd b;  // c
};

// Deterministic full-batch softmax regression.
inline LogisticModel fit_logistic(const Eigen::MatrixXd& x, const std::vector<int>& y,
                                  int n_classes, int iters = 200, double lr = 0.5) {
  int64_t n = x.rows(), d = x.cols();
  check(n == static_cast<int64_t>(y.size()), "fit_logistic: feature/label count mismatch");
  LogisticModel m;
  m.w = Eigen::MatrixXd::Zero(d, n_classes);
  m.b = Eigen::VectorXd::Zero(n_classes);
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, n_classes);
  for (int64_t i = 0; i < n; ++i) onehot(i, y[static_cast<size_t>(i)]) = 1.0;
  for (int it = 0; it < iters; ++it) {
    Eigen::MatrixXd logits = (x * m.w).rowwise() + m.b.transpose();
    Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
    Eigen::MatrixXd p = (logits.colwise() - row_max).array().exp();
    Eigen::VectorXd z = p.rowwise().sum();
    p.array().colwise() /= z.array();
    Eigen::MatrixXd delta = (p - onehot) / static_cast<double>(n);
    m.w -= lr * (x.transpose() * delta);
    m.b -= lr * delta.colwise().sum().transpose();
  }
  return m;
}

inline std::vector<int> predict_logistic(const LogisticModel& m, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd logits = (x * m.w).rowwise() + m.b.transpose();
  std::vector<int> out(static_cast<size_t>(x.rows()));
  for (int64_t i = 0; i < x.rows(); ++i) {
    Eigen::Index best;
    logits.row(i).maxCoeff(&best);
    out[static_cast<size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

struct ProbeResult {
  double accuracy = 0;
  double mean_iou = 0;
  double iou[3] = {0, 0, 0};
  int64_t n_train = 0, n_eval = 0;
};

namespace probedetail {

// Class-balanced deterministic subsample: up to `per_class` indices per class.
inline std::vector<int64_t> balanced_subsample(const std::vector<int>& labels,
                                               const std::vector<int64_t>& candidates,
                                               int n_classes, int64_t per_class, uint64_t seed) {
  std::vector<std::vector<int64_t>> buckets(static_cast<size_t>(n_classes));
  for (int64_t i : candidates) buckets[static_cast<size_t>(labels[static_cast<size_t>(i)])].push_back(i);
  std::vector<int64_t> out;
  Rng rng = Rng(seed).fork(0xba1a);
  for (auto& bucket : buckets) {
    for (size_t i = bucket.size(); i > 1; --i)
      std::swap(bucket[i - 1], bucket[static_cast<size_t>(rng.index(i))]);
    int64_t take = std::min<int64_t>(per_class, static_cast<int64_t>(bucket.size()));
    out.insert(out.end(), bucket.begin(), bucket.begin() + take);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace probedetail

// Collect (feature, label) pairs from a set of scenes using the refined
// fusion volume as the per-voxel feature.
inline void collect_probe_data(ParamSet& params, const TrainConfig& cfg, uint64_t scene_seed_base,
                               int64_t n_scenes, int64_t per_class_per_scene, uint64_t sample_seed,
                               std::vector<std::vector<double>>& feats, std::vector<int>& labels) {
  for (int64_t s = 0; s < n_scenes; ++s) {
    SceneBundle b = build_scene_bundle(cfg, scene_seed_base + static_cast<uint64_t>(s));
    TensorData vol = forward_volume(params, cfg, b);
    std::vector<int> vl = voxel_labels(b);
    std::vector<int64_t> all(static_cast<size_t>(b.grid.n_voxels()));
    for (int64_t i = 0; i < b.grid.n_voxels(); ++i) all[static_cast<size_t>(i)] = i;
    std::vector<int64_t> chosen = probedetail::balanced_subsample(
        vl, all, 3, per_class_per_scene, hash_mix(sample_seed, static_cast<uint64_t>(s)));
    int64_t d_f = vol.shape[1];
    for (int64_t vi : chosen) {
      std::vector<double> row(static_cast<size_t>(d_f));
      for (int64_t c = 0; c < d_f; ++c)
        row[static_cast<size_t>(c)] = vol.values[static_cast<size_t>(vi * d_f + c)];
      feats.push_back(std::move(row));
      labels.push_back(vl[static_cast<size_t>(vi)]);
    }
  }
}

inline Eigen::MatrixXd standardize(std::vector<std::vector<double>>& rows, Eigen::VectorXd* mean_out,
                                   Eigen::VectorXd* std_out) {
  int64_t n = static_cast<int64_t>(rows.size());
  int64_t d = n > 0 ? static_cast<int64_t>(rows[0].size()) : 0;
  Eigen::MatrixXd x(n, d);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) x(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  Eigen::VectorXd mean = x.colwise().mean();
  Eigen::VectorXd sd = ((x.rowwise() - mean.transpose()).array().square().colwise().sum() /
                        std::max<double>(1.0, static_cast<double>(n - 1)))
                           .sqrt()
                           .transpose();
  for (int64_t j = 0; j < d; ++j)
    if (sd(j) < 1e-12) sd(j) = 1.0;
  x = (x.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
  if (mean_out) *mean_out = mean;
  if (std_out) *std_out = sd;
  return x;
}

// Frozen-feature linear probe over held-out scenes: fit on probe_train_scenes
// fresh scenes, evaluate on probe_test_scenes unseen ones, both class-balanced.
inline ProbeResult linear_probe(ParamSet& params, const TrainConfig& cfg) {
  std::vector<std::vector<double>> train_feats, eval_feats;
  std::vector<int> train_labels, eval_labels;
  collect_probe_data(params, cfg, cfg.probe_seed, cfg.probe_train_scenes, 64,
                     hash_mix(cfg.probe_seed, 0x7e57), train_feats, train_labels);
  collect_probe_data(params, cfg, cfg.probe_seed + 10000, cfg.probe_test_scenes, 64,
                     hash_mix(cfg.probe_seed, 0xe7a1), eval_feats, eval_labels);
  check(!train_feats.empty() && !eval_feats.empty(), "linear_probe: empty probe data");

  Eigen::VectorXd mean, sd;
  Eigen::MatrixXd xtr = standardize(train_feats, &mean, &sd);
  int64_t n_ev = static_cast<int64_t>(eval_feats.size());
  int64_t d = xtr.cols();
  Eigen::MatrixXd xev(n_ev, d);
  for (int64_t i = 0; i < n_ev; ++i)
    for (int64_t j = 0; j < d; ++j)
      xev(i, j) = (eval_feats[static_cast<size_t>(i)][static_cast<size_t>(j)] - mean(j)) / sd(j);

  LogisticModel m = fit_logistic(xtr, train_labels, 3, 300, 0.5);
  std::vector<int> pred = predict_logistic(m, xev);

  ProbeResult r;
  r.n_train = static_cast<int64_t>(train_labels.size());
  r.n_eval = n_ev;
  int64_t correct = 0;
  int64_t inter[3] = {0, 0, 0}, uni[3] = {0, 0, 0};
  for (int64_t i = 0; i < n_ev; ++i) {
    int gt = eval_labels[static_cast<size_t>(i)], pr = pred[static_cast<size_t>(i)];
    if (gt == pr) {
      ++correct;
      ++inter[gt];
      ++uni[gt];
    } else {
      ++uni[gt];
      ++uni[pr];
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n_ev);
  double iou_sum = 0;
  int iou_n = 0;
  for (int c = 0; c < 3; ++c) {
    r.iou[c] = uni[c] > 0 ? static_cast<double>(inter[c]) / static_cast<double>(uni[c]) : 1.0;
    iou_sum += r.iou[c];
    ++iou_n;
  }
  r.mean_iou = iou_sum / iou_n;
  return r;
}

}  // namespace clap
