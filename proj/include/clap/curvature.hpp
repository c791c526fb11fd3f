#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "clap/gradient.hpp"
#include "clap/io.hpp"
#include "clap/render.hpp"

namespace clap {

// Any differentiable SDF over a point batch {N,3} -> {N,1}; analytic oracles
// and the neural field both fit this signature.
using FieldFn = std::function<Value(Tape&, Value)>;

enum class CurvatureMode { kFrobenius, kVjpOnes };

struct CurvatureResult {
  std::vector<double> omega;
  std::vector<Vec3> normal;
  std::vector<uint8_t> degenerate;
};

// Normals via the tape gradient of the SDF; curvature as the norm of the
// normal field's derivative. Degenerate gradients (norm < 1e-8) are flagged
// and get omega = 0.
inline CurvatureResult estimate_curvature(const FieldFn& field, const std::vector<Vec3>& points,
                                          CurvatureMode mode, int64_t chunk = 256) {
  CurvatureResult res;
  int64_t total = static_cast<int64_t>(points.size());
  res.omega.resize(static_cast<size_t>(total));
  res.normal.resize(static_cast<size_t>(total));
  res.degenerate.assign(static_cast<size_t>(total), 0);

  for (int64_t start = 0; start < total; start += chunk) {
    int64_t m = std::min(chunk, total - start);
    std::vector<double> coords(static_cast<size_t>(m * 3));
    for (int64_t i = 0; i < m; ++i) {
      const Vec3& p = points[static_cast<size_t>(start + i)];
      coords[static_cast<size_t>(3 * i)] = p.x();
      coords[static_cast<size_t>(3 * i + 1)] = p.y();
      coords[static_cast<size_t>(3 * i + 2)] = p.z();
    }
    Tape t;
    Value p = t.input(TensorData({m, 3}, coords), "curvature_points");
    Value s = field(t, p);
    check(s.shape().size() == 2 && s.shape()[0] == m && s.shape()[1] == 1,
          "estimate_curvature: field must return {N,1}, got ", shape_str(s.shape()));
    Value n = gradient(t.sum(s), p);
    Value norm = t.l2norm(n, 1, true);
    std::vector<double> norm_vals = norm.data();
    Value n_hat = t.div(n, t.max_const(norm, 1e-12));
    std::vector<double> n_hat_vals = n_hat.data();

    std::vector<std::vector<double>> col_grads;
    if (mode == CurvatureMode::kFrobenius) {
      Value c0 = t.sum(t.slice(n_hat, 1, 0, 1));
      Value c1 = t.sum(t.slice(n_hat, 1, 1, 2));
      Value c2 = t.sum(t.slice(n_hat, 1, 2, 3));
      col_grads.push_back(gradient(c0, p).data());
      col_grads.push_back(gradient(c1, p).data());
      col_grads.push_back(gradient(c2, p).data());
    } else {
      col_grads.push_back(gradient(t.sum(n_hat), p).data());
    }

    for (int64_t i = 0; i < m; ++i) {
      size_t gi = static_cast<size_t>(start + i);
      size_t si = static_cast<size_t>(i);
      if (norm_vals[si] < 1e-8) {
        res.degenerate[gi] = 1;
        res.omega[gi] = 0.0;
        res.normal[gi] = Vec3::Zero();
        continue;
      }
      res.normal[gi] =
          Vec3(n_hat_vals[3 * si], n_hat_vals[3 * si + 1], n_hat_vals[3 * si + 2]);
      double acc = 0;
      for (const auto& g : col_grads)
        for (int k = 0; k < 3; ++k) acc += g[3 * si + static_cast<size_t>(k)] * g[3 * si + static_cast<size_t>(k)];
      res.omega[gi] = std::sqrt(acc);
    }
  }
  return res;
}

// Multinomial draw with replacement, probability proportional to the weights
// clipped at the 99.9th percentile. All-zero weights fall back to uniform
// (reported through the flag).
inline std::vector<int64_t> multinomial_sample(const std::vector<double>& weights, int64_t n,
                                               uint64_t seed, bool* uniform_fallback = nullptr) {
  check(n >= 1, "multinomial_sample: n must be >= 1");
  check(!weights.empty(), "multinomial_sample: empty weight vector");
  std::vector<double> w = weights;
  for (double x : w) check(x >= 0 && std::isfinite(x), "multinomial_sample: weights must be finite and >= 0");

  std::vector<double> sorted = w;
  std::sort(sorted.begin(), sorted.end());
  // nearest-rank percentile; small vectors keep their maximum unclipped
  size_t rank = static_cast<size_t>(std::ceil(0.999 * static_cast<double>(sorted.size())));
  double clip = sorted[std::min(rank > 0 ? rank - 1 : 0, sorted.size() - 1)];
  if (clip > 0)
    for (double& x : w) x = std::min(x, clip);

  double total = 0;
  for (double x : w) total += x;
  bool fallback = total <= 0;
  if (uniform_fallback) *uniform_fallback = fallback;
  if (fallback)
    for (double& x : w) x = 1.0;

  std::vector<double> cdf(w.size());
  double acc = 0;
  for (size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    cdf[i] = acc;
  }
  Rng rng = Rng(seed).fork(0x3a3);
  std::vector<int64_t> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    out[static_cast<size_t>(i)] =
        std::min(static_cast<int64_t>(it - cdf.begin()), static_cast<int64_t>(w.size()) - 1);
  }
  return out;
}

// Normalized K x K Gaussian kernel (sums to 1 before border truncation).
inline std::vector<double> gaussian_kernel(int k, double sigma) {
  check(k % 2 == 1, "gaussian_kernel: size must be odd, got ", k);
  std::vector<double> kern(static_cast<size_t>(k) * static_cast<size_t>(k));
  int half = k / 2;
  double total = 0;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      double dy = y - half, dx = x - half;
      double v = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      kern[static_cast<size_t>(y * k + x)] = v;
      total += v;
    }
  for (double& v : kern) v /= total;
  return kern;
}

// Scatters per-point weights to their visibility-tested nearest pixel, then
// densifies with the Gaussian kernel (mass at borders truncates away).
inline std::vector<std::vector<double>> project_pixel_weights(
    const PointCloud& cloud, const std::vector<double>& omega,
    const std::vector<CameraFrame>& frames, int k_gaus, double sigma_blur) {
  check(static_cast<int64_t>(omega.size()) == cloud.size(),
        "project_pixel_weights: weight count mismatch");
  std::vector<double> kern = gaussian_kernel(k_gaus, sigma_blur);
  int half = k_gaus / 2;
  std::vector<std::vector<double>> maps;
  for (const CameraFrame& frame : frames) {
    std::vector<double> scat(static_cast<size_t>(frame.width) * frame.height, 0.0);
    for (int64_t i = 0; i < cloud.size(); ++i) {
      Vec3 p = cloud.position(i);
      double u, v, depth;
      if (!project(frame.T, p, u, v, depth)) continue;
      if (u < 0 || u >= frame.width || v < 0 || v >= frame.height) continue;
      int col = std::min(static_cast<int>(u), frame.width - 1);
      int row = std::min(static_cast<int>(v), frame.height - 1);
      double buf = frame.depth[static_cast<size_t>(frame.pixel(row, col))];
      if (!(std::abs(depth - buf) < 0.01)) continue;
      scat[static_cast<size_t>(frame.pixel(row, col))] += omega[static_cast<size_t>(i)];
    }
    std::vector<double> blurred(scat.size(), 0.0);
    for (int r = 0; r < frame.height; ++r)
      for (int c = 0; c < frame.width; ++c) {
        double src = scat[static_cast<size_t>(frame.pixel(r, c))];
        if (src == 0) continue;
        for (int dy = -half; dy <= half; ++dy)
          for (int dx = -half; dx <= half; ++dx) {
            int rr = r + dy, cc = c + dx;
            if (rr < 0 || rr >= frame.height || cc < 0 || cc >= frame.width) continue;
            blurred[static_cast<size_t>(frame.pixel(rr, cc))] +=
                src * kern[static_cast<size_t>((dy + half) * k_gaus + (dx + half))];
          }
      }
    maps.push_back(std::move(blurred));
  }
  return maps;
}

inline SampleStrategy sampling_schedule(int64_t epoch, int64_t n_warmup) {
  return epoch < n_warmup ? SampleStrategy::kUniform : SampleStrategy::kStratified;
}

inline bool use_curvature_weights(int64_t epoch, int64_t n_warmup) { return epoch >= n_warmup; }

// Blue -> red by weight, for visual inspection.
inline void write_heatmap_ply(const std::string& path, const PointCloud& cloud,
                              const std::vector<double>& omega) {
  check(static_cast<int64_t>(omega.size()) == cloud.size(), "write_heatmap_ply: size mismatch");
  double peak = 0;
  for (double w : omega) peak = std::max(peak, w);
  if (peak <= 0) peak = 1;
  std::string s;
  s += "ply\nformat ascii 1.0\n";
  s += "element vertex " + std::to_string(cloud.size()) + "\n";
  s += "property double x\nproperty double y\nproperty double z\nproperty double weight\n";
  s += "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  for (int64_t i = 0; i < cloud.size(); ++i) {
    Vec3 p = cloud.position(i);
    double w = omega[static_cast<size_t>(i)];
    double u = w / peak;
    int red = static_cast<int>(255.0 * u + 0.5);
    int blue = static_cast<int>(255.0 * (1.0 - u) + 0.5);
    s += format_double(p.x()) + " " + format_double(p.y()) + " " + format_double(p.z()) + " " +
         format_double(w) + " " + std::to_string(red) + " 32 " + std::to_string(blue) + "\n";
  }
  write_text_file(path, s);
}

}  // namespace clap
