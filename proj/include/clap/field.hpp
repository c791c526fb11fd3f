#pragma once

#include <memory>
#include <vector>

#include "clap/encoders.hpp"

namespace clap {

inline void register_field_params(ParamSet& ps, const ModelDims& dims, uint64_t seed) {
  int64_t in = 3 + dims.d_f;
  int64_t hid = dims.head_hidden;
  ps.init("field.sdf.w1", {in, hid}, seed);
  ps.init("field.sdf.b1", {hid}, seed, 0.0);
  ps.init("field.sdf.w2", {hid, hid}, seed);
  ps.init("field.sdf.b2", {hid}, seed, 0.0);
  ps.init("field.sdf.w3", {hid, 1}, seed);
  ps.init("field.sdf.b3", {1}, seed, 0.0);
  ps.init("field.rgb.w1", {in, hid}, seed);
  ps.init("field.rgb.b1", {hid}, seed, 0.0);
  ps.init("field.rgb.w2", {hid, hid}, seed);
  ps.init("field.rgb.b2", {hid}, seed, 0.0);
  ps.init("field.rgb.w3", {hid, 3}, seed);
  ps.init("field.rgb.b3", {3}, seed, 0.0);
  ps.init_constant("field.eta", {1, 1}, 0.0);  // sharpness h = exp(eta)
}

namespace fielddetail {

// min(x, cap) built from relu so it stays inside the op set.
inline Value clamp_above(Tape& t, Value x, double cap) {
  Value c = t.constant(cap);
  return t.sub(c, t.relu(t.sub(c, x)));
}

struct AxisSplit {
  std::vector<int64_t> i0;  // lower voxel index per point
  Value frac;               // {N,1}, differentiable wrt the points
};

inline AxisSplit split_axis(Tape& t, Value coord_col, int64_t extent) {
  Value clamped = clamp_above(t, t.max_const(coord_col, 0.0), static_cast<double>(extent - 1));
  const std::vector<double>& vals = clamped.data();
  AxisSplit out;
  out.i0.reserve(vals.size());
  std::vector<double> base(vals.size());
  for (size_t i = 0; i < vals.size(); ++i) {
    int64_t lo = std::min(static_cast<int64_t>(vals[i]), extent - 2);
    lo = std::max(lo, int64_t{0});
    out.i0.push_back(lo);
    base[i] = static_cast<double>(lo);
  }
  int64_t n = clamped.shape()[0];
  out.frac = t.sub(clamped, t.constant(TensorData({n, 1}, base)));
  return out;
}

}  // namespace fielddetail

// Trilinear interpolation of voxel features at arbitrary points {N,3};
// differentiable wrt both the points and the grid values. Out-of-box points
// clamp to the boundary voxels.
inline Value query_feature(Tape& t, Value points, const GridSpec& spec, Value grid_feat) {
  check(points.shape().size() == 2 && points.shape()[1] == 3,
        "query_feature: points must be {N,3}, got ", shape_str(points.shape()));
  Vec3 s = spec.voxel_size();
  Value lo = t.constant(TensorData({1, 3}, {spec.box.lo.x(), spec.box.lo.y(), spec.box.lo.z()}));
  Value inv = t.constant(TensorData({1, 3}, {1.0 / s.x(), 1.0 / s.y(), 1.0 / s.z()}));
  Value g = t.sub(t.mul(t.sub(points, lo), inv), t.constant(0.5));

  auto ax = fielddetail::split_axis(t, t.slice(g, 1, 0, 1), spec.W);
  auto ay = fielddetail::split_axis(t, t.slice(g, 1, 1, 2), spec.H);
  auto az = fielddetail::split_axis(t, t.slice(g, 1, 2, 3), spec.D);

  Value one = t.constant(1.0);
  Value wx[2] = {t.sub(one, ax.frac), ax.frac};
  Value wy[2] = {t.sub(one, ay.frac), ay.frac};
  Value wz[2] = {t.sub(one, az.frac), az.frac};

  int64_t n = points.shape()[0];
  Value out = t.constant(TensorData::zeros({n, grid_feat.shape()[1]}));
  for (int cz = 0; cz < 2; ++cz)
    for (int cy = 0; cy < 2; ++cy)
      for (int cx = 0; cx < 2; ++cx) {
        auto idx = std::make_shared<std::vector<int64_t>>();
        idx->reserve(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
          size_t si = static_cast<size_t>(i);
          idx->push_back(spec.index(az.i0[si] + cz, ay.i0[si] + cy, ax.i0[si] + cx));
        }
        Value w = t.mul(t.mul(wz[cz], wy[cy]), wx[cx]);
        out = t.add(out, t.mul(t.gather_rows(grid_feat, idx), w));
      }
  return out;
}

// Scene coordinates normalized into [-1,1]^3 before entering the heads.
inline Value normalize_points(Tape& t, Value points, const AxisBox& box) {
  Vec3 c = box.center();
  Vec3 half = 0.5 * (box.hi - box.lo);
  Value center = t.constant(TensorData({1, 3}, {c.x(), c.y(), c.z()}));
  Value inv = t.constant(TensorData({1, 3}, {1.0 / half.x(), 1.0 / half.y(), 1.0 / half.z()}));
  return t.mul(t.sub(points, center), inv);
}

namespace fielddetail {

inline Value head(ParamBinder& P, const std::string& prefix, Value x) {
  Tape& t = P.tape;
  Value h = t.tanh(linear(t, x, P(prefix + ".w1"), P(prefix + ".b1")));
  h = t.tanh(linear(t, h, P(prefix + ".w2"), P(prefix + ".b2")));
  return linear(t, h, P(prefix + ".w3"), P(prefix + ".b3"));
}

}  // namespace fielddetail

// s = f_sdf([p, f_p]) over a batch of points.
inline Value eval_sdf(ParamBinder& P, Value points, const GridSpec& spec, Value grid_feat) {
  Tape& t = P.tape;
  Value f = query_feature(t, points, spec, grid_feat);
  Value x = t.concat({normalize_points(t, points, spec.box), f}, 1);
  return fielddetail::head(P, "field.sdf", x);
}

// c = sigmoid(f_rgb([p, f_p])) in (0,1)^3.
inline Value eval_rgb(ParamBinder& P, Value points, const GridSpec& spec, Value grid_feat) {
  Tape& t = P.tape;
  Value f = query_feature(t, points, spec, grid_feat);
  Value x = t.concat({normalize_points(t, points, spec.box), f}, 1);
  return t.sigmoid(fielddetail::head(P, "field.rgb", x));
}

}  // namespace clap
