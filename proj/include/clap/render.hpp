#pragma once

#include <vector>

#include "clap/field.hpp"

namespace clap {

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::Zero();  // unit
  std::vector<double> ranges;
  double target_range = 0;   // LiDAR supervision
  Vec3 target_rgb = Vec3::Zero();  // camera supervision
};

enum class SampleStrategy { kUniform, kStratified };

// Sample ranges along [near, far]: midpoints of even bins, or one jittered
// draw per bin.
inline Ray sample_ray(const Vec3& o, const Vec3& d, double near, double far, int n,
                      SampleStrategy strategy, uint64_t seed) {
  check(near > 0 && near < far, "sample_ray: need 0 < near < far, got ", near, " .. ", far);
  check(std::abs(d.norm() - 1.0) < 1e-9, "sample_ray: direction must be unit");
  Ray ray;
  ray.origin = o;
  ray.dir = d;
  ray.ranges.resize(static_cast<size_t>(n));
  double bin = (far - near) / n;
  Rng rng = Rng(seed).fork(0x7a7);
  for (int k = 0; k < n; ++k) {
    double u = strategy == SampleStrategy::kUniform ? 0.5 : rng.uniform();
    ray.ranges[static_cast<size_t>(k)] = near + (k + u) * bin;
  }
  return ray;
}

// alpha_n = max((phi(s_n) - phi(s_{n+1})) / phi(s_n), 0), last column 0 by
// convention; phi(x) = sigmoid(h x).
inline Value occupancy_alpha(Tape& t, Value sdf, Value h) {
  check(sdf.shape().size() == 2 && sdf.shape()[1] >= 2,
        "occupancy_alpha: need {rays, >=2 samples}, got ", shape_str(sdf.shape()));
  int64_t rays = sdf.shape()[0], n = sdf.shape()[1];
  Value phi = t.sigmoid(t.mul(sdf, h));
  Value cur = t.slice(phi, 1, 0, n - 1);
  Value next = t.slice(phi, 1, 1, n);
  Value head = t.max_const(t.div(t.sub(cur, next), cur), 0.0);
  Value last = t.constant(TensorData::zeros({rays, 1}));
  return t.concat({head, last}, 1);
}

// t_n = prod_{i<n} (1 - alpha_i), running column product (t_1 = 1).
inline Value transmittance(Tape& t, Value alpha) {
  int64_t rays = alpha.shape()[0], n = alpha.shape()[1];
  Value one = t.constant(1.0);
  std::vector<Value> cols;
  cols.push_back(t.constant(TensorData::full({rays, 1}, 1.0)));
  for (int64_t k = 1; k < n; ++k) {
    Value keep = t.sub(one, t.slice(alpha, 1, k - 1, k));
    cols.push_back(t.mul(cols.back(), keep));
  }
  return t.concat(cols, 1);
}

inline Value render_weights(Tape& t, Value alpha) { return t.mul(transmittance(t, alpha), alpha); }

// Weighted sum over samples; no renormalization, so empty space renders
// toward zero.
inline Value integrate(Tape& t, Value weights, Value values) {
  check(same_shape(weights.shape(), values.shape()), "integrate: shape mismatch ",
        shape_str(weights.shape()), " vs ", shape_str(values.shape()));
  return t.sum(t.mul(weights, values), {1}, true);
}

// L_rend = (1/N_L) sum(|r - r~| + w_sur |s|) + (w_C / (3 N_C)) sum |c - c~|.
// lidar_* : {N_L,1}; surface_sdf: {N_L,1}; cam_*: {N_C,3} (may be empty).
inline Value rendering_loss(Tape& t, Value lidar_pred, Value lidar_target, Value surface_sdf,
                            Value cam_pred, Value cam_target, double w_sur, double w_c) {
  int64_t n_l = lidar_pred.shape()[0];
  check(n_l >= 1, "rendering_loss: LiDAR ray set must be non-empty");
  Value range_term = abs_value(t, t.sub(lidar_pred, lidar_target));
  Value sdf_term = t.mul(abs_value(t, surface_sdf), t.constant(w_sur));
  Value loss = t.mul(t.sum(t.add(range_term, sdf_term)),
                     t.constant(1.0 / static_cast<double>(n_l)));
  int64_t n_c = cam_pred.tape ? cam_pred.shape()[0] : 0;
  if (n_c > 0) {
    Value color_term = t.sum(abs_value(t, t.sub(cam_pred, cam_target)));
    loss = t.add(loss, t.mul(color_term, t.constant(w_c / (3.0 * static_cast<double>(n_c)))));
  }
  return loss;
}

// near/far from the scene box, clipped to [0.1 m, box diagonal].
inline bool ray_near_far(const AxisBox& box, const Vec3& o, const Vec3& d, double& near,
                         double& far) {
  double t0, t1;
  if (!ray_box(o, d, box, t0, t1)) return false;
  double diag = (box.hi - box.lo).norm();
  near = std::max(t0, 0.1);
  far = std::min(t1, diag);
  return near < far;
}

}  // namespace clap
