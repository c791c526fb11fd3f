#pragma once

#include <memory>
#include <vector>

#include "clap/nn.hpp"
#include "clap/params.hpp"

namespace clap {

struct ModelDims {
  int64_t d_p = 32;   // point branch channels
  int64_t d_i = 16;   // image branch channels
  int64_t d_f = 32;   // fusion channels
  int64_t d_k = 32;   // prototype space
  int64_t n_k = 32;   // prototype count
  int64_t head_hidden = 64;
  int64_t in_channels = 4;  // xyz offsets + intensity
  int64_t img_channels = 3;
};

inline void register_encoder_params(ParamSet& ps, const ModelDims& dims, uint64_t seed) {
  ps.init("penc.w1", {dims.in_channels, dims.d_p}, seed);
  ps.init("penc.b1", {dims.d_p}, seed, 0.0);
  ps.init("penc.w2", {dims.d_p, dims.d_p}, seed);
  ps.init("penc.b2", {dims.d_p}, seed, 0.0);
  ps.init("penc.mix_w", {27 * dims.d_p, dims.d_p}, seed);
  ps.init("penc.mix_b", {dims.d_p}, seed, 0.0);

  ps.init("ienc.c1_w", {9 * dims.img_channels, dims.d_i}, seed);
  ps.init("ienc.c1_b", {dims.d_i}, seed, 0.0);
  ps.init("ienc.c2_w", {9 * dims.d_i, dims.d_i}, seed);
  ps.init("ienc.c2_b", {dims.d_i}, seed, 0.0);

  ps.init("fuse.w1", {dims.d_p + dims.d_i, dims.d_f}, seed);
  ps.init("fuse.b1", {dims.d_f}, seed, 0.0);
  ps.init("fuse.w2", {dims.d_f, dims.d_f}, seed);
  ps.init("fuse.b2", {dims.d_f}, seed, 0.0);

  ps.init("refine.w", {27 * dims.d_f, dims.d_f}, seed);
  ps.init("refine.b", {dims.d_f}, seed, 0.0);
}

struct FeatureVolume {
  GridSpec spec;
  Value feat;  // {n_voxels, channels}
};

// Point branch: per-voxel 2-layer MLP then one 3x3x3 neighborhood mix.
inline FeatureVolume encode_points(ParamBinder& P, const RawVoxelGrid& grid) {
  Tape& t = P.tape;
  Value x = t.input(TensorData({grid.spec.n_voxels(), grid.channels}, grid.values),
                    "voxel_features");
  Value h = t.tanh(linear(t, x, P("penc.w1"), P("penc.b1")));
  h = t.tanh(linear(t, h, P("penc.w2"), P("penc.b2")));
  Value mixed = t.tanh(conv3d_3x3(t, h, grid.spec, P("penc.mix_w"), P("penc.mix_b")));
  return {grid.spec, mixed};
}

// One (point, camera) lift entry: the four bilinear corner pixels and the
// destination voxel.
struct LiftEntry {
  int64_t point = 0;
  int64_t voxel = 0;
  int64_t pixel[4] = {0, 0, 0, 0};
  double weight[4] = {0, 0, 0, 0};
};

// Projects a visible in-box LiDAR point into a frame. Visibility compares
// projected depth against the frame's ground-truth depth buffer (1 cm).
inline bool lift_entry(const CameraFrame& frame, const GridSpec& spec, const Vec3& p,
                       int64_t point_idx, LiftEntry& out) {
  double u, v, depth;
  if (!project(frame.T, p, u, v, depth)) return false;
  if (u < 0 || u >= frame.width || v < 0 || v >= frame.height) return false;
  int64_t col = std::min(static_cast<int64_t>(u), static_cast<int64_t>(frame.width - 1));
  int64_t row = std::min(static_cast<int64_t>(v), static_cast<int64_t>(frame.height - 1));
  double buffer_depth = frame.depth[static_cast<size_t>(frame.pixel(static_cast<int>(row),
                                                                    static_cast<int>(col)))];
  if (!(std::abs(depth - buffer_depth) < 0.01)) return false;
  int64_t d, h, w;
  if (!spec.voxel_of(p, d, h, w)) return false;

  double gx = u - 0.5, gy = v - 0.5;
  int64_t x0 = std::clamp(static_cast<int64_t>(std::floor(gx)), int64_t{0},
                          static_cast<int64_t>(frame.width - 2));
  int64_t y0 = std::clamp(static_cast<int64_t>(std::floor(gy)), int64_t{0},
                          static_cast<int64_t>(frame.height - 2));
  double fx = std::clamp(gx - static_cast<double>(x0), 0.0, 1.0);
  double fy = std::clamp(gy - static_cast<double>(y0), 0.0, 1.0);
  out.point = point_idx;
  out.voxel = spec.index(d, h, w);
  out.pixel[0] = y0 * frame.width + x0;
  out.pixel[1] = y0 * frame.width + x0 + 1;
  out.pixel[2] = (y0 + 1) * frame.width + x0;
  out.pixel[3] = (y0 + 1) * frame.width + x0 + 1;
  out.weight[0] = (1 - fy) * (1 - fx);
  out.weight[1] = (1 - fy) * fx;
  out.weight[2] = fy * (1 - fx);
  out.weight[3] = fy * fx;
  return true;
}

// Image branch: 2-layer conv stack per frame, then lift pixel features onto
// voxels through the calibrated projection of the LiDAR points (scatter-mean).
inline FeatureVolume encode_images(ParamBinder& P, const std::vector<CameraFrame>& frames,
                                   const PointCloud& cloud, const GridSpec& spec,
                                   const ModelDims& dims) {
  Tape& t = P.tape;
  int64_t n = spec.n_voxels();
  std::vector<double> counts(static_cast<size_t>(n), 0.0);
  Value total = t.constant(TensorData::zeros({n, dims.d_i}), "lift_zero");

  for (size_t f = 0; f < frames.size(); ++f) {
    const CameraFrame& frame = frames[f];
    int64_t hw = static_cast<int64_t>(frame.width) * frame.height;
    Value img = t.constant(TensorData({hw, dims.img_channels}, frame.rgb),
                           "image_" + std::to_string(f));
    Value h1 = t.tanh(conv2d_3x3(t, img, frame.height, frame.width, P("ienc.c1_w"),
                                 P("ienc.c1_b")));
    Value pix = t.tanh(conv2d_3x3(t, h1, frame.height, frame.width, P("ienc.c2_w"),
                                  P("ienc.c2_b")));

    std::vector<LiftEntry> entries;
    for (int64_t i = 0; i < cloud.size(); ++i) {
      LiftEntry e;
      if (lift_entry(frame, spec, cloud.position(i), i, e)) entries.push_back(e);
    }
    if (entries.empty()) continue;

    int64_t m = static_cast<int64_t>(entries.size());
    auto corner_idx = [&](int c) {
      auto idx = std::make_shared<std::vector<int64_t>>();
      idx->reserve(static_cast<size_t>(m));
      for (const auto& e : entries) idx->push_back(e.pixel[c]);
      return idx;
    };
    auto corner_w = [&](int c) {
      std::vector<double> w(static_cast<size_t>(m));
      for (int64_t i = 0; i < m; ++i) w[static_cast<size_t>(i)] = entries[static_cast<size_t>(i)].weight[c];
      return t.constant(TensorData({m, 1}, w));
    };
    Value gathered = t.mul(t.gather_rows(pix, corner_idx(0)), corner_w(0));
    for (int c = 1; c < 4; ++c)
      gathered = t.add(gathered, t.mul(t.gather_rows(pix, corner_idx(c)), corner_w(c)));

    auto voxel_idx = std::make_shared<std::vector<int64_t>>();
    voxel_idx->reserve(static_cast<size_t>(m));
    for (const auto& e : entries) {
      voxel_idx->push_back(e.voxel);
      counts[static_cast<size_t>(e.voxel)] += 1.0;
    }
    total = t.add(total, t.scatter_rows(gathered, voxel_idx, n));
  }

  for (auto& c : counts) c = c > 0 ? 1.0 / c : 1.0;
  Value inv = t.constant(TensorData({n, 1}, counts), "lift_inv_count");
  return {spec, t.mul(total, inv)};
}

// Fusion: channel concat then per-voxel 2-layer MLP.
inline FeatureVolume fuse(ParamBinder& P, const FeatureVolume& p_feat,
                          const FeatureVolume& i_feat) {
  Tape& t = P.tape;
  check(same_shape(p_feat.feat.shape(), Shape{p_feat.spec.n_voxels(), p_feat.feat.shape()[1]}) &&
            p_feat.feat.shape()[0] == i_feat.feat.shape()[0],
        "fuse: extent mismatch between branches");
  Value cat = t.concat({p_feat.feat, i_feat.feat}, 1);
  Value h = t.tanh(linear(t, cat, P("fuse.w1"), P("fuse.b1")));
  return {p_feat.spec, linear(t, h, P("fuse.w2"), P("fuse.b2"))};
}

// Shallow 3D refinement: one 3x3x3 conv with a residual connection.
inline FeatureVolume refine_3d(ParamBinder& P, const FeatureVolume& fused) {
  Tape& t = P.tape;
  Value delta = conv3d_3x3(t, fused.feat, fused.spec, P("refine.w"), P("refine.b"));
  return {fused.spec, t.add(fused.feat, delta)};
}

}  // namespace clap
