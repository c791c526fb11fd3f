#pragma once

#include <limits>

#include "clap/tape.hpp"

namespace clap {

// Composite expressions built from the elementary op set. Everything here is
// differentiable to second order for free.

inline Value neg(Tape& t, Value x) { return t.mul(x, t.constant(-1.0)); }

inline Value abs_value(Tape& t, Value x) { return t.add(t.relu(x), t.relu(neg(t, x))); }

inline Value square(Tape& t, Value x) { return t.mul(x, x); }

// Elementwise min of two tensors: a - relu(a - b).
inline Value min2(Tape& t, Value a, Value b) { return t.sub(a, t.relu(t.sub(a, b))); }

// Elementwise max of two tensors: a + relu(b - a).
inline Value max2(Tape& t, Value a, Value b) { return t.add(a, t.relu(t.sub(b, a))); }

// Row-stable log-softmax along `axis`. The shift is a value-dependent
// constant; the expression is mathematically independent of it, so gradients
// stay exact.
inline Value log_softmax(Tape& t, Value x, int axis = -1) {
  const Shape& sx = x.shape();
  int ax = axis < 0 ? axis + static_cast<int>(sx.size()) : axis;
  check(ax >= 0 && ax < static_cast<int>(sx.size()), "log_softmax: bad axis");
  // Per-slice max as a constant tensor with keepdims.
  Shape keep = sx;
  keep[static_cast<size_t>(ax)] = 1;
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < ax; ++d) outer *= sx[static_cast<size_t>(d)];
  for (int d = ax + 1; d < static_cast<int>(sx.size()); ++d) inner *= sx[static_cast<size_t>(d)];
  const int64_t k = sx[static_cast<size_t>(ax)];
  const auto& vals = x.data();
  std::vector<double> mx(static_cast<size_t>(outer * inner),
                         -std::numeric_limits<double>::infinity());
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t j = 0; j < k; ++j)
      for (int64_t i = 0; i < inner; ++i) {
        size_t at = static_cast<size_t>((o * k + j) * inner + i);
        size_t to = static_cast<size_t>(o * inner + i);
        mx[to] = std::max(mx[to], vals[at]);
      }
  Value shift = t.constant(TensorData(keep, std::move(mx)));
  Value centered = t.sub(x, shift);
  Value lse = t.add(shift, t.log(t.sum(t.exp(centered), {ax}, true)));
  return t.sub(x, lse);
}

// x @ W + b for row-major batches; b broadcasts over rows.
inline Value linear(Tape& t, Value x, Value w, Value b) {
  return t.add(t.matmul(x, w), b);
}

}  // namespace clap
