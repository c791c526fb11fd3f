#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace clap {

// All tensor data is row-major contiguous, 64-bit floating point.
using Shape = std::vector<int64_t>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical abort (non-finite value reached training); maps to exit code 2.
struct NonFiniteError : Error {
  using Error::Error;
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& oss, T&& head, Rest&&... rest) {
  oss << std::forward<T>(head);
  format_into(oss, std::forward<Rest>(rest)...);
}
}  // namespace detail

template <typename... Args>
[[noreturn]] void fail(Args&&... args) {
  std::ostringstream oss;
  detail::format_into(oss, std::forward<Args>(args)...);
  throw Error(oss.str());
}

template <typename... Args>
void check(bool cond, Args&&... args) {
  if (!cond) fail(std::forward<Args>(args)...);
}

inline int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// Dense tensor value. Used for constants, parameters and gradient results.
struct TensorData {
  Shape shape;
  std::vector<double> values;

  TensorData() = default;
  TensorData(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    check(numel(shape) == static_cast<int64_t>(values.size()), "TensorData: shape ",
          shape_str(shape), " does not match value count ", values.size());
  }
  static TensorData zeros(Shape s) {
    auto n = numel(s);
    return TensorData(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
  }
  static TensorData full(Shape s, double x) {
    auto n = numel(s);
    return TensorData(std::move(s), std::vector<double>(static_cast<size_t>(n), x));
  }
  static TensorData scalar(double x) { return TensorData({1}, {x}); }
};

}  // namespace clap
