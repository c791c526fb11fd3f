#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include <nlohmann/json.hpp>

#include "clap/io.hpp"
#include "clap/rng.hpp"
#include "clap/sensors.hpp"

namespace clap {

// Dense voxel lattice over the scene box. Axis mapping: w -> x, h -> y,
// d -> z; linear index (d * H + h) * W + w.
struct GridSpec {
  int64_t D = 8, H = 16, W = 16;
  AxisBox box = default_bounds();

  int64_t n_voxels() const { return D * H * W; }
  Vec3 voxel_size() const {
    return Vec3((box.hi.x() - box.lo.x()) / static_cast<double>(W),
                (box.hi.y() - box.lo.y()) / static_cast<double>(H),
                (box.hi.z() - box.lo.z()) / static_cast<double>(D));
  }
  int64_t index(int64_t d, int64_t h, int64_t w) const { return (d * H + h) * W + w; }
  Vec3 center(int64_t d, int64_t h, int64_t w) const {
    Vec3 s = voxel_size();
    return box.lo + Vec3((static_cast<double>(w) + 0.5) * s.x(),
                         (static_cast<double>(h) + 0.5) * s.y(),
                         (static_cast<double>(d) + 0.5) * s.z());
  }
  bool voxel_of(const Vec3& p, int64_t& d, int64_t& h, int64_t& w) const {
    if (!box.contains(p)) return false;
    Vec3 s = voxel_size();
    w = std::min(static_cast<int64_t>((p.x() - box.lo.x()) / s.x()), W - 1);
    h = std::min(static_cast<int64_t>((p.y() - box.lo.y()) / s.y()), H - 1);
    d = std::min(static_cast<int64_t>((p.z() - box.lo.z()) / s.z()), D - 1);
    return true;
  }
};

struct MaskSpec {
  double rate = 0.9;
  uint64_t seed = 0;
};

// Pre-encoder voxel features: n_voxels x channels, zero where unoccupied.
struct RawVoxelGrid {
  GridSpec spec;
  int64_t channels = 4;
  std::vector<double> values;
  std::vector<uint8_t> occupied;
  std::vector<uint8_t> masked;
  int64_t dropped_points = 0;

  int64_t occupied_count() const {
    return std::accumulate(occupied.begin(), occupied.end(), int64_t{0});
  }
};

// Mean-pools per-point features (xyz offset from voxel center + extra
// channels) into voxels.
inline RawVoxelGrid voxelize(const PointCloud& cloud, const GridSpec& spec) {
  Vec3 s = spec.voxel_size();
  check(s.x() > 0 && s.y() > 0 && s.z() > 0, "voxelize: zero-volume voxels");
  RawVoxelGrid grid;
  grid.spec = spec;
  grid.channels = 3 + cloud.extra_channels;
  grid.values.assign(static_cast<size_t>(spec.n_voxels() * grid.channels), 0.0);
  grid.occupied.assign(static_cast<size_t>(spec.n_voxels()), 0);
  grid.masked.assign(static_cast<size_t>(spec.n_voxels()), 0);
  std::vector<int32_t> counts(static_cast<size_t>(spec.n_voxels()), 0);

  for (int64_t i = 0; i < cloud.size(); ++i) {
    Vec3 p = cloud.position(i);
    int64_t d, h, w;
    if (!spec.voxel_of(p, d, h, w)) {
      ++grid.dropped_points;
      continue;
    }
    int64_t vi = spec.index(d, h, w);
    Vec3 offset = p - spec.center(d, h, w);
    double* dst = grid.values.data() + vi * grid.channels;
    dst[0] += offset.x();
    dst[1] += offset.y();
    dst[2] += offset.z();
    const double* row = cloud.points.data() + i * cloud.row_width();
    for (int64_t c = 0; c < cloud.extra_channels; ++c) dst[3 + c] += row[3 + c];
    ++counts[static_cast<size_t>(vi)];
    grid.occupied[static_cast<size_t>(vi)] = 1;
  }
  for (int64_t vi = 0; vi < spec.n_voxels(); ++vi) {
    int32_t n = counts[static_cast<size_t>(vi)];
    if (n == 0) continue;
    double* dst = grid.values.data() + vi * grid.channels;
    for (int64_t c = 0; c < grid.channels; ++c) dst[c] /= n;
  }
  return grid;
}

// Zeroes floor(rate * occupied) voxel inputs chosen by a seeded shuffle; the
// occupancy flags stay, the mask is recorded.
inline RawVoxelGrid apply_mask(const RawVoxelGrid& grid, const MaskSpec& spec) {
  check(spec.rate >= 0.0 && spec.rate < 1.0, "apply_mask: rate must be in [0,1), got ", spec.rate);
  RawVoxelGrid out = grid;
  if (spec.rate == 0.0) return out;
  std::vector<int64_t> occ;
  for (int64_t vi = 0; vi < grid.spec.n_voxels(); ++vi)
    if (grid.occupied[static_cast<size_t>(vi)]) occ.push_back(vi);
  int64_t n_mask = static_cast<int64_t>(spec.rate * static_cast<double>(occ.size()));
  Rng rng = Rng(spec.seed).fork(0xa5c);
  for (size_t i = occ.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.index(i));
    std::swap(occ[i - 1], occ[j]);
  }
  for (int64_t k = 0; k < n_mask; ++k) {
    int64_t vi = occ[static_cast<size_t>(k)];
    out.masked[static_cast<size_t>(vi)] = 1;
    double* dst = out.values.data() + vi * out.channels;
    std::fill(dst, dst + out.channels, 0.0);
  }
  return out;
}

// Debug dump: flat binary of doubles plus a JSON sidecar.
inline void dump_grid(const std::string& path_prefix, const GridSpec& spec, int64_t channels,
                      const std::vector<double>& values) {
  nlohmann::json header;
  header["extents"] = {spec.D, spec.H, spec.W};
  header["channels"] = channels;
  header["bbox"] = {{"lo", {spec.box.lo.x(), spec.box.lo.y(), spec.box.lo.z()}},
                    {"hi", {spec.box.hi.x(), spec.box.hi.y(), spec.box.hi.z()}}};
  header["count"] = values.size();
  write_text_file(path_prefix + ".json", header.dump(2) + "\n");
  std::string blob(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
  write_text_file(path_prefix + ".bin", blob);
}

}  // namespace clap
