#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "clap/common.hpp"

namespace clap {

// Recorded computation graph with eager evaluation. Nodes are appended in
// topological order; completed tapes are immutable and safe to share.
// Gradients are emitted as further nodes on the same tape, which is what
// makes second derivatives (gradient of a recorded gradient) possible with
// first-order rules only.

enum class Op : uint8_t {
  kConstant,
  kParam,
  kInput,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMatmul,
  kRelu,
  kTanh,
  kSigmoid,
  kExp,
  kLog,
  kSum,
  kMean,
  kMaxConst,
  kL2Norm,
  kSoftmax,
  kConcat,
  kSlice,
  kReshape,
  kGatherRows,
  kScatterRows,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kParam: return "param";
    case Op::kInput: return "input";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kMatmul: return "matmul";
    case Op::kRelu: return "relu";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kMaxConst: return "max_const";
    case Op::kL2Norm: return "l2norm";
    case Op::kSoftmax: return "softmax";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kReshape: return "reshape";
    case Op::kGatherRows: return "gather_rows";
    case Op::kScatterRows: return "scatter_rows";
  }
  return "?";
}

using NodeId = int32_t;
constexpr NodeId kNoNode = -1;
constexpr int kAxisAll = -1000;  // sentinel: reduce over all axes

using RowIndex = std::shared_ptr<const std::vector<int64_t>>;

struct NodeAttr {
  std::vector<int> axes;     // sum / mean
  bool keepdims = false;     // sum / mean / l2norm
  bool trans_a = false;      // matmul
  bool trans_b = false;      // matmul
  double scalar = 0.0;       // max_const
  int axis = 0;              // softmax / l2norm / concat / slice
  int64_t start = 0;         // slice
  int64_t stop = 0;          // slice
  RowIndex rows;             // gather_rows / scatter_rows
  int64_t out_rows = 0;      // scatter_rows
};

struct Node {
  Op op;
  Shape shape;
  std::vector<NodeId> parents;
  std::vector<double> value;
  NodeAttr attr;
  std::string name;  // params and inputs only
};

class Tape;

// Handle to a recorded node. Cheap to copy.
struct Value {
  Tape* tape = nullptr;
  NodeId id = kNoNode;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Shape& shape() const;
  const std::vector<double>& data() const;
  int64_t size() const { return numel(shape()); }
  double scalar() const;
  TensorData tensor() const { return TensorData(shape(), data()); }
};

namespace kernels {

// Broadcast helpers follow trailing-dimension alignment: dimensions are
// compared right-aligned; an extent of 1 (or a missing dimension) stretches.
inline bool broadcast_shape(const Shape& a, const Shape& b, Shape& out) {
  size_t n = std::max(a.size(), b.size());
  out.assign(n, 1);
  for (size_t i = 0; i < n; ++i) {
    int64_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    int64_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    if (da == db || da == 1 || db == 1) {
      out[i] = std::max(da, db);
    } else {
      return false;
    }
  }
  return true;
}

// Row-major strides with zero stride on stretched dimensions.
inline std::vector<int64_t> broadcast_strides(const Shape& shape, const Shape& out) {
  std::vector<int64_t> strides(out.size(), 0);
  int64_t s = 1;
  size_t offset = out.size() - shape.size();
  for (size_t i = shape.size(); i-- > 0;) {
    strides[i + offset] = (shape[i] == 1 && out[i + offset] != 1) ? 0 : s;
    s *= shape[i];
  }
  return strides;
}

template <typename F>
void binary_elementwise(const Shape& sa, const std::vector<double>& a, const Shape& sb,
                        const std::vector<double>& b, const Shape& out_shape,
                        std::vector<double>& out, F f) {
  const int64_t n = numel(out_shape);
  out.resize(static_cast<size_t>(n));
  if (sa == sb) {  // fast path
    for (int64_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
    return;
  }
  if (numel(sb) == 1) {
    const double y = b[0];
    for (int64_t i = 0; i < n; ++i) out[i] = f(a[i], y);
    return;
  }
  if (numel(sa) == 1) {
    const double x = a[0];
    for (int64_t i = 0; i < n; ++i) out[i] = f(x, b[i]);
    return;
  }
  const auto stride_a = broadcast_strides(sa, out_shape);
  const auto stride_b = broadcast_strides(sb, out_shape);
  const size_t ndim = out_shape.size();
  std::vector<int64_t> idx(ndim, 0);
  int64_t off_a = 0, off_b = 0;
  for (int64_t i = 0; i < n; ++i) {
    out[i] = f(a[off_a], b[off_b]);
    for (size_t d = ndim; d-- > 0;) {
      ++idx[d];
      off_a += stride_a[d];
      off_b += stride_b[d];
      if (idx[d] < out_shape[d]) break;
      off_a -= stride_a[d] * out_shape[d];
      off_b -= stride_b[d] * out_shape[d];
      idx[d] = 0;
    }
  }
}

using EMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<const EMatrix>;
using EMapMut = Eigen::Map<EMatrix>;

}  // namespace kernels

class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }

  // Drops every node recorded at or after `mark`. Used to reclaim scratch
  // gradient nodes once their values have been copied out.
  void truncate(size_t mark) {
    check(mark <= nodes_.size(), "truncate: mark past end");
    nodes_.resize(mark);
  }

  // ---- leaves ----

  Value constant(TensorData data, std::string name = "") {
    return emit(Op::kConstant, std::move(data.shape), {}, std::move(data.values), {},
                std::move(name));
  }
  Value constant(double x) { return constant(TensorData::scalar(x)); }

  Value input(TensorData data, std::string name) {
    Value v = emit(Op::kInput, std::move(data.shape), {}, std::move(data.values), {}, name);
    named_leaves_[std::move(name)] = v.id;
    return v;
  }

  Value param(TensorData data, std::string name) {
    Value v = emit(Op::kParam, std::move(data.shape), {}, std::move(data.values), {}, name);
    named_leaves_[std::move(name)] = v.id;
    return v;
  }

  // Named parameter / input lookup (kNoNode when absent).
  NodeId find(const std::string& name) const {
    auto it = named_leaves_.find(name);
    return it == named_leaves_.end() ? kNoNode : it->second;
  }

  // ---- elementwise binary (broadcasting) ----

  Value add(Value a, Value b) { return binary(Op::kAdd, a, b); }
  Value sub(Value a, Value b) { return binary(Op::kSub, a, b); }
  Value mul(Value a, Value b) { return binary(Op::kMul, a, b); }
  Value div(Value a, Value b) { return binary(Op::kDiv, a, b); }

  // ---- matmul ----

  Value matmul(Value a, Value b, bool trans_a = false, bool trans_b = false) {
    const Shape& sa = shape_of(a);
    const Shape& sb = shape_of(b);
    check(sa.size() == 2 && sb.size() == 2, "matmul: rank-2 operands required, got ",
          shape_str(sa), " x ", shape_str(sb), " at node ", nodes_.size());
    int64_t m = trans_a ? sa[1] : sa[0];
    int64_t ka = trans_a ? sa[0] : sa[1];
    int64_t kb = trans_b ? sb[1] : sb[0];
    int64_t n = trans_b ? sb[0] : sb[1];
    check(ka == kb, "matmul: inner extents differ (", shape_str(sa), trans_a ? "^T" : "", " x ",
          shape_str(sb), trans_b ? "^T" : "", ") at node ", nodes_.size());
    NodeAttr attr;
    attr.trans_a = trans_a;
    attr.trans_b = trans_b;
    return emit_op(Op::kMatmul, {m, n}, {a.id, b.id}, attr);
  }

  // ---- elementwise unary ----

  Value relu(Value a) { return unary(Op::kRelu, a); }
  Value tanh(Value a) { return unary(Op::kTanh, a); }
  Value sigmoid(Value a) { return unary(Op::kSigmoid, a); }
  Value exp(Value a) { return unary(Op::kExp, a); }
  Value log(Value a) { return unary(Op::kLog, a); }

  Value max_const(Value a, double c) {
    NodeAttr attr;
    attr.scalar = c;
    return emit_op(Op::kMaxConst, shape_of(a), {a.id}, attr);
  }

  // ---- reductions ----

  // Empty `axes` reduces over everything (result shape [1]).
  Value sum(Value a, std::vector<int> axes = {}, bool keepdims = false) {
    return reduction(Op::kSum, a, std::move(axes), keepdims);
  }
  Value mean(Value a, std::vector<int> axes = {}, bool keepdims = false) {
    return reduction(Op::kMean, a, std::move(axes), keepdims);
  }

  // L2 norm over one axis (or everything with axis = kAxisAll).
  Value l2norm(Value a, int axis = kAxisAll, bool keepdims = false) {
    const Shape& sa = shape_of(a);
    NodeAttr attr;
    attr.axis = axis;
    attr.keepdims = keepdims;
    Shape out;
    if (axis == kAxisAll) {
      out = keepdims ? Shape(sa.size(), 1) : Shape{1};
    } else {
      check(axis >= 0 && axis < static_cast<int>(sa.size()), "l2norm: bad axis ", axis);
      out = sa;
      if (keepdims) {
        out[axis] = 1;
      } else {
        out.erase(out.begin() + axis);
        if (out.empty()) out = {1};
      }
    }
    return emit_op(Op::kL2Norm, out, {a.id}, attr);
  }

  Value softmax(Value a, int axis = -1) {
    const Shape& sa = shape_of(a);
    if (axis < 0) axis += static_cast<int>(sa.size());
    check(axis >= 0 && axis < static_cast<int>(sa.size()), "softmax: bad axis");
    NodeAttr attr;
    attr.axis = axis;
    return emit_op(Op::kSoftmax, sa, {a.id}, attr);
  }

  // ---- structural ----

  Value concat(std::span<const Value> parts, int axis) {
    check(!parts.empty(), "concat: no inputs");
    const Shape& s0 = shape_of(parts[0]);
    check(axis >= 0 && axis < static_cast<int>(s0.size()), "concat: bad axis ", axis);
    Shape out = s0;
    int64_t total = 0;
    std::vector<NodeId> ids;
    for (const Value& p : parts) {
      const Shape& sp = shape_of(p);
      check(sp.size() == s0.size(), "concat: rank mismatch at node ", nodes_.size());
      for (size_t d = 0; d < sp.size(); ++d) {
        if (static_cast<int>(d) != axis)
          check(sp[d] == s0[d], "concat: extent mismatch on axis ", d, " at node ",
                nodes_.size());
      }
      total += sp[axis];
      ids.push_back(p.id);
    }
    out[axis] = total;
    NodeAttr attr;
    attr.axis = axis;
    return emit_op(Op::kConcat, out, ids, attr);
  }
  Value concat(std::initializer_list<Value> parts, int axis) {
    return concat(std::span<const Value>(parts.begin(), parts.size()), axis);
  }

  Value slice(Value a, int axis, int64_t start, int64_t stop) {
    const Shape& sa = shape_of(a);
    check(axis >= 0 && axis < static_cast<int>(sa.size()), "slice: bad axis ", axis);
    check(start >= 0 && start < stop && stop <= sa[axis], "slice: bad range [", start, ",",
          stop, ") on axis ", axis, " of ", shape_str(sa));
    Shape out = sa;
    out[axis] = stop - start;
    NodeAttr attr;
    attr.axis = axis;
    attr.start = start;
    attr.stop = stop;
    return emit_op(Op::kSlice, out, {a.id}, attr);
  }

  Value reshape(Value a, Shape shape) {
    check(numel(shape) == numel(shape_of(a)), "reshape: ", shape_str(shape_of(a)), " -> ",
          shape_str(shape), " changes element count at node ", nodes_.size());
    return emit_op(Op::kReshape, std::move(shape), {a.id}, {});
  }

  // Row gather from a rank-2 tensor; duplicate rows allowed.
  Value gather_rows(Value mat, RowIndex rows) {
    const Shape& sm = shape_of(mat);
    check(sm.size() == 2, "gather_rows: rank-2 input required");
    for (int64_t r : *rows)
      check(r >= 0 && r < sm[0], "gather_rows: row ", r, " out of range [0,", sm[0], ")");
    NodeAttr attr;
    attr.rows = rows;
    return emit_op(Op::kGatherRows, {static_cast<int64_t>(rows->size()), sm[1]}, {mat.id},
                   attr);
  }

  // Adjoint of gather: sums rows of `vals` into `out_rows` destination rows.
  Value scatter_rows(Value vals, RowIndex rows, int64_t out_rows) {
    const Shape& sv = shape_of(vals);
    check(sv.size() == 2, "scatter_rows: rank-2 input required, got ", shape_str(sv));
    check(static_cast<int64_t>(rows->size()) == sv[0], "scatter_rows: row count mismatch");
    for (int64_t r : *rows)
      check(r >= 0 && r < out_rows, "scatter_rows: row ", r, " out of range");
    NodeAttr attr;
    attr.rows = rows;
    attr.out_rows = out_rows;
    return emit_op(Op::kScatterRows, {out_rows, sv[1]}, {vals.id}, attr);
  }

  // ---- maintenance ----

  // Recomputes every non-leaf value in recording order. Forward replay of an
  // unmodified tape is bit-identical to the original pass.
  void replay() {
    for (size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      if (n.op == Op::kConstant || n.op == Op::kParam || n.op == Op::kInput) continue;
      std::vector<double> out;
      eval(n, out);
      n.value = std::move(out);
    }
  }

  // Op-list dump for debugging; values omitted unless requested.
  nlohmann::json dump(bool with_values = false) const {
    nlohmann::json ops = nlohmann::json::array();
    for (size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      nlohmann::json j;
      j["id"] = i;
      j["op"] = op_name(n.op);
      j["shape"] = n.shape;
      j["parents"] = n.parents;
      if (!n.name.empty()) j["name"] = n.name;
      if (with_values) j["value"] = n.value;
      ops.push_back(std::move(j));
    }
    return ops;
  }

  // First id (if any) whose value holds a non-finite entry; kNoNode if clean.
  NodeId first_non_finite() const {
    for (size_t i = 0; i < nodes_.size(); ++i)
      for (double v : nodes_[i].value)
        if (!std::isfinite(v)) return static_cast<NodeId>(i);
    return kNoNode;
  }

 private:
  friend struct Value;

  const Shape& shape_of(Value v) const {
    check(v.tape == this, "value belongs to a different tape");
    check(v.id >= 0 && v.id < static_cast<NodeId>(nodes_.size()), "value id out of range");
    return nodes_[static_cast<size_t>(v.id)].shape;
  }

  Value binary(Op op, Value a, Value b) {
    const Shape& sa = shape_of(a);
    const Shape& sb = shape_of(b);
    Shape out;
    check(kernels::broadcast_shape(sa, sb, out), op_name(op), ": shapes ", shape_str(sa),
          " and ", shape_str(sb), " do not broadcast at node ", nodes_.size());
    return emit_op(op, out, {a.id, b.id}, {});
  }

  Value unary(Op op, Value a) { return emit_op(op, shape_of(a), {a.id}, {}); }

  Value reduction(Op op, Value a, std::vector<int> axes, bool keepdims) {
    const Shape& sa = shape_of(a);
    NodeAttr attr;
    if (axes.empty()) {
      for (int d = 0; d < static_cast<int>(sa.size()); ++d) axes.push_back(d);
    }
    std::sort(axes.begin(), axes.end());
    for (int ax : axes)
      check(ax >= 0 && ax < static_cast<int>(sa.size()), op_name(op), ": bad axis ", ax);
    attr.axes = axes;
    attr.keepdims = keepdims;
    Shape out;
    for (int d = 0; d < static_cast<int>(sa.size()); ++d) {
      bool reduced = std::find(axes.begin(), axes.end(), d) != axes.end();
      if (reduced) {
        if (keepdims) out.push_back(1);
      } else {
        out.push_back(sa[d]);
      }
    }
    if (out.empty()) out = {1};
    return emit_op(op, out, {a.id}, attr);
  }

  Value emit_op(Op op, Shape shape, std::vector<NodeId> parents, NodeAttr attr) {
    Node n;
    n.op = op;
    n.shape = std::move(shape);
    n.parents = std::move(parents);
    n.attr = std::move(attr);
    eval(n, n.value);
    nodes_.push_back(std::move(n));
    return {this, static_cast<NodeId>(nodes_.size() - 1)};
  }

  Value emit(Op op, Shape shape, std::vector<NodeId> parents, std::vector<double> value,
             NodeAttr attr, std::string name) {
    check(numel(shape) == static_cast<int64_t>(value.size()), op_name(op),
          ": value count does not match shape ", shape_str(shape));
    Node n;
    n.op = op;
    n.shape = std::move(shape);
    n.parents = std::move(parents);
    n.value = std::move(value);
    n.attr = std::move(attr);
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    return {this, static_cast<NodeId>(nodes_.size() - 1)};
  }

  const std::vector<double>& pval(const Node& n, size_t k) const {
    return nodes_[static_cast<size_t>(n.parents[k])].value;
  }
  const Shape& pshape(const Node& n, size_t k) const {
    return nodes_[static_cast<size_t>(n.parents[k])].shape;
  }

  void eval(const Node& n, std::vector<double>& out) const {
    using namespace kernels;
    switch (n.op) {
      case Op::kConstant:
      case Op::kParam:
      case Op::kInput:
        out = n.value;
        return;
      case Op::kAdd:
        binary_elementwise(pshape(n, 0), pval(n, 0), pshape(n, 1), pval(n, 1), n.shape, out,
                           [](double x, double y) { return x + y; });
        return;
      case Op::kSub:
        binary_elementwise(pshape(n, 0), pval(n, 0), pshape(n, 1), pval(n, 1), n.shape, out,
                           [](double x, double y) { return x - y; });
        return;
      case Op::kMul:
        binary_elementwise(pshape(n, 0), pval(n, 0), pshape(n, 1), pval(n, 1), n.shape, out,
                           [](double x, double y) { return x * y; });
        return;
      case Op::kDiv:
        binary_elementwise(pshape(n, 0), pval(n, 0), pshape(n, 1), pval(n, 1), n.shape, out,
                           [](double x, double y) { return x / y; });
        return;
      case Op::kMatmul: {
        const Shape& sa = pshape(n, 0);
        const Shape& sb = pshape(n, 1);
        EMap a(pval(n, 0).data(), sa[0], sa[1]);
        EMap b(pval(n, 1).data(), sb[0], sb[1]);
        out.assign(static_cast<size_t>(numel(n.shape)), 0.0);
        EMapMut c(out.data(), n.shape[0], n.shape[1]);
        if (!n.attr.trans_a && !n.attr.trans_b)
          c.noalias() = a * b;
        else if (!n.attr.trans_a && n.attr.trans_b)
          c.noalias() = a * b.transpose();
        else if (n.attr.trans_a && !n.attr.trans_b)
          c.noalias() = a.transpose() * b;
        else
          c.noalias() = a.transpose() * b.transpose();
        return;
      }
      case Op::kRelu: {
        const auto& x = pval(n, 0);
        out.resize(x.size());
        for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
        return;
      }
      case Op::kTanh: {
        const auto& x = pval(n, 0);
        out.resize(x.size());
        for (size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
        return;
      }
      case Op::kSigmoid: {
        const auto& x = pval(n, 0);
        out.resize(x.size());
        for (size_t i = 0; i < x.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
        return;
      }
      case Op::kExp: {
        const auto& x = pval(n, 0);
        out.resize(x.size());
        for (size_t i = 0; i < x.size(); ++i) out[i] = std::exp(x[i]);
        return;
      }
      case Op::kLog: {
        const auto& x = pval(n, 0);
        out.resize(x.size());
        for (size_t i = 0; i < x.size(); ++i) out[i] = std::log(x[i]);
        return;
      }
      case Op::kSum:
      case Op::kMean: {
        reduce_eval(n, out);
        if (n.op == Op::kMean) {
          int64_t count = numel(pshape(n, 0)) / numel(n.shape);
          const double inv = 1.0 / static_cast<double>(count);
          for (double& v : out) v *= inv;
        }
        return;
      }
      case Op::kMaxConst: {
        const auto& x = pval(n, 0);
        const double c = n.attr.scalar;
        out.resize(x.size());
        for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] > c ? x[i] : c;
        return;
      }
      case Op::kL2Norm: {
        l2norm_eval(n, out);
        return;
      }
      case Op::kSoftmax: {
        softmax_eval(n, out);
        return;
      }
      case Op::kConcat: {
        concat_eval(n, out);
        return;
      }
      case Op::kSlice: {
        slice_eval(n, out);
        return;
      }
      case Op::kReshape:
        out = pval(n, 0);
        return;
      case Op::kGatherRows: {
        const auto& x = pval(n, 0);
        const int64_t cols = pshape(n, 0)[1];
        const auto& rows = *n.attr.rows;
        out.resize(rows.size() * static_cast<size_t>(cols));
        for (size_t i = 0; i < rows.size(); ++i)
          std::memcpy(out.data() + i * cols, x.data() + rows[i] * cols,
                      static_cast<size_t>(cols) * sizeof(double));
        return;
      }
      case Op::kScatterRows: {
        const auto& x = pval(n, 0);
        const int64_t cols = pshape(n, 0)[1];
        const auto& rows = *n.attr.rows;
        out.assign(static_cast<size_t>(n.attr.out_rows * cols), 0.0);
        for (size_t i = 0; i < rows.size(); ++i) {
          double* dst = out.data() + rows[i] * cols;
          const double* src = x.data() + i * cols;
          for (int64_t c = 0; c < cols; ++c) dst[c] += src[c];
        }
        return;
      }
    }
    fail("eval: unhandled op");
  }

  void reduce_eval(const Node& n, std::vector<double>& out) const {
    const Shape& sx = pshape(n, 0);
    const auto& x = pval(n, 0);
    out.assign(static_cast<size_t>(numel(n.shape)), 0.0);
    // Output strides aligned to the input rank, zero on reduced axes.
    std::vector<int64_t> ostride(sx.size(), 0);
    {
      std::vector<bool> reduced(sx.size(), false);
      for (int ax : n.attr.axes) reduced[static_cast<size_t>(ax)] = true;
      int64_t s = 1;
      for (size_t d = sx.size(); d-- > 0;) {
        if (!reduced[d]) {
          ostride[d] = s;
          s *= sx[d];
        }
      }
    }
    std::vector<int64_t> idx(sx.size(), 0);
    int64_t off = 0;
    const int64_t total = numel(sx);
    for (int64_t i = 0; i < total; ++i) {
      out[static_cast<size_t>(off)] += x[static_cast<size_t>(i)];
      for (size_t d = sx.size(); d-- > 0;) {
        ++idx[d];
        off += ostride[d];
        if (idx[d] < sx[d]) break;
        off -= ostride[d] * sx[d];
        idx[d] = 0;
      }
    }
  }

  void l2norm_eval(const Node& n, std::vector<double>& out) const {
    const Shape& sx = pshape(n, 0);
    const auto& x = pval(n, 0);
    if (n.attr.axis == kAxisAll) {
      double s = 0.0;
      for (double v : x) s += v * v;
      out.assign(1, std::sqrt(s));
      return;
    }
    const int axis = n.attr.axis;
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= sx[d];
    for (int d = axis + 1; d < static_cast<int>(sx.size()); ++d) inner *= sx[d];
    const int64_t k = sx[axis];
    out.assign(static_cast<size_t>(outer * inner), 0.0);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t j = 0; j < k; ++j)
        for (int64_t i = 0; i < inner; ++i) {
          double v = x[static_cast<size_t>((o * k + j) * inner + i)];
          out[static_cast<size_t>(o * inner + i)] += v * v;
        }
    for (double& v : out) v = std::sqrt(v);
  }

  void softmax_eval(const Node& n, std::vector<double>& out) const {
    const Shape& sx = pshape(n, 0);
    const auto& x = pval(n, 0);
    const int axis = n.attr.axis;
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= sx[d];
    for (int d = axis + 1; d < static_cast<int>(sx.size()); ++d) inner *= sx[d];
    const int64_t k = sx[axis];
    out.resize(x.size());
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t i = 0; i < inner; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < k; ++j)
          mx = std::max(mx, x[static_cast<size_t>((o * k + j) * inner + i)]);
        double denom = 0.0;
        for (int64_t j = 0; j < k; ++j) {
          size_t at = static_cast<size_t>((o * k + j) * inner + i);
          out[at] = std::exp(x[at] - mx);
          denom += out[at];
        }
        for (int64_t j = 0; j < k; ++j)
          out[static_cast<size_t>((o * k + j) * inner + i)] /= denom;
      }
  }

  void concat_eval(const Node& n, std::vector<double>& out) const {
    const int axis = n.attr.axis;
    const Shape& so = n.shape;
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= so[d];
    for (int d = axis + 1; d < static_cast<int>(so.size()); ++d) inner *= so[d];
    out.resize(static_cast<size_t>(numel(so)));
    const int64_t out_k = so[axis];
    int64_t off_k = 0;
    for (size_t p = 0; p < n.parents.size(); ++p) {
      const auto& x = pval(n, p);
      const int64_t k = pshape(n, p)[axis];
      for (int64_t o = 0; o < outer; ++o)
        std::memcpy(out.data() + (o * out_k + off_k) * inner, x.data() + o * k * inner,
                    static_cast<size_t>(k * inner) * sizeof(double));
      off_k += k;
    }
  }

  void slice_eval(const Node& n, std::vector<double>& out) const {
    const Shape& sx = pshape(n, 0);
    const auto& x = pval(n, 0);
    const int axis = n.attr.axis;
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= sx[d];
    for (int d = axis + 1; d < static_cast<int>(sx.size()); ++d) inner *= sx[d];
    const int64_t k = sx[axis];
    const int64_t len = n.attr.stop - n.attr.start;
    out.resize(static_cast<size_t>(outer * len * inner));
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + o * len * inner, x.data() + (o * k + n.attr.start) * inner,
                  static_cast<size_t>(len * inner) * sizeof(double));
  }

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> named_leaves_;
};

inline const Shape& Value::shape() const { return tape->node(id).shape; }
inline const std::vector<double>& Value::data() const { return tape->node(id).value; }
inline double Value::scalar() const {
  check(size() == 1, "scalar() on tensor of shape ", shape_str(shape()));
  return data()[0];
}

}  // namespace clap
