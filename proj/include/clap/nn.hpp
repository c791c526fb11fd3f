#pragma once

#include <memory>
#include <vector>

#include "clap/functional.hpp"
#include "clap/tape.hpp"
#include "clap/voxelgrid.hpp"

namespace clap {

// Zero-pads by appending one zero row and routing out-of-bounds neighbor
// lookups to it; im2col concat then a single matmul.
namespace convdetail {

inline Value pad_with_zero_row(Tape& t, Value feat) {
  int64_t c = feat.shape()[1];
  Value zero = t.constant(TensorData::zeros({1, c}), "pad_row");
  return t.concat({feat, zero}, 0);
}

}  // namespace convdetail

// 3x3x3 convolution over the voxel lattice. weight: {27*Cin, Cout},
// offsets ordered lexicographically in (dz, dy, dx).
inline Value conv3d_3x3(Tape& t, Value feat, const GridSpec& spec, Value weight, Value bias) {
  int64_t n = spec.n_voxels();
  check(feat.shape().size() == 2 && feat.shape()[0] == n, "conv3d_3x3: feature rows (",
        shape_str(feat.shape()), ") must match voxel count ", n);
  Value padded = convdetail::pad_with_zero_row(t, feat);
  std::vector<Value> cols;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        auto idx = std::make_shared<std::vector<int64_t>>();
        idx->reserve(static_cast<size_t>(n));
        for (int64_t d = 0; d < spec.D; ++d)
          for (int64_t h = 0; h < spec.H; ++h)
            for (int64_t w = 0; w < spec.W; ++w) {
              int64_t dd = d + dz, hh = h + dy, ww = w + dx;
              bool in = dd >= 0 && dd < spec.D && hh >= 0 && hh < spec.H && ww >= 0 && ww < spec.W;
              idx->push_back(in ? spec.index(dd, hh, ww) : n);
            }
        cols.push_back(t.gather_rows(padded, idx));
      }
  Value stacked = t.concat(cols, 1);
  return t.add(t.matmul(stacked, weight), bias);
}

// 3x3 convolution over an image grid stored as {H*W, Cin} rows.
// weight: {9*Cin, Cout}, offsets ordered lexicographically in (dy, dx).
inline Value conv2d_3x3(Tape& t, Value feat, int64_t height, int64_t width, Value weight,
                        Value bias) {
  int64_t n = height * width;
  check(feat.shape().size() == 2 && feat.shape()[0] == n, "conv2d_3x3: feature rows (",
        shape_str(feat.shape()), ") must match pixel count ", n);
  Value padded = convdetail::pad_with_zero_row(t, feat);
  std::vector<Value> cols;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      auto idx = std::make_shared<std::vector<int64_t>>();
      idx->reserve(static_cast<size_t>(n));
      for (int64_t r = 0; r < height; ++r)
        for (int64_t c = 0; c < width; ++c) {
          int64_t rr = r + dy, cc = c + dx;
          bool in = rr >= 0 && rr < height && cc >= 0 && cc < width;
          idx->push_back(in ? rr * width + cc : n);
        }
      cols.push_back(t.gather_rows(padded, idx));
    }
  Value stacked = t.concat(cols, 1);
  return t.add(t.matmul(stacked, weight), bias);
}

}  // namespace clap
