#pragma once

#include <array>
#include <span>
#include <vector>

#include "clap/tape.hpp"

namespace clap {

namespace detail {

// Sums `g` over broadcast axes so its shape becomes exactly `target`.
// `target` is taken by value: emitting nodes below may reallocate the tape's
// node array, which would invalidate any reference into it.
inline Value reduce_to(Tape& t, Value g, Shape target) {
  const Shape sg = g.shape();
  if (sg == target) return g;
  std::vector<int> axes;
  size_t offset = sg.size() - target.size();
  for (size_t d = 0; d < sg.size(); ++d) {
    int64_t want = d < offset ? 1 : target[d - offset];
    if (sg[d] != want) axes.push_back(static_cast<int>(d));
  }
  Value r = axes.empty() ? g : t.sum(g, axes, true);
  if (r.shape() != target) r = t.reshape(r, target);
  return r;
}

inline Shape keepdims_shape(const Shape& in, const std::vector<int>& axes) {
  Shape out = in;
  for (int ax : axes) out[static_cast<size_t>(ax)] = 1;
  return out;
}

}  // namespace detail

// Reverse-mode gradient of a scalar node. The backward pass is recorded onto
// the same tape with the same elementary ops, so the returned values can be
// differentiated again. Accumulation order is fixed by node order, which makes
// repeated runs bit-identical.
inline std::vector<Value> gradient(Value output, std::span<const Value> wrt) {
  Tape& t = *output.tape;
  check(output.size() == 1, "gradient: output must be scalar, got ",
        shape_str(output.shape()));
  for (const Value& w : wrt) {
    check(w.tape == &t, "gradient: wrt value on a different tape");
    Op k = t.node(w.id).op;
    check(k == Op::kParam || k == Op::kInput,
          "gradient: node ", w.id, " (", op_name(k),
          ") is not a recorded parameter or input");
  }

  std::vector<NodeId> adj(static_cast<size_t>(output.id) + 1, kNoNode);
  adj[static_cast<size_t>(output.id)] =
      t.constant(TensorData::full(output.shape(), 1.0)).id;

  auto accumulate = [&](NodeId parent, Value g) {
    if (parent > output.id) return;  // cannot happen on a well-formed tape
    NodeId& slot = adj[static_cast<size_t>(parent)];
    if (slot == kNoNode) {
      slot = g.id;
    } else {
      slot = t.add(Value{&t, slot}, g).id;
    }
  };
  // Every shape consulted after an emission below is a copy, never a
  // reference into the node array (emissions may reallocate it).
  auto shape_copy = [&](NodeId id) { return Shape(t.node(id).shape); };

  for (NodeId i = output.id; i >= 0; --i) {
    if (adj[static_cast<size_t>(i)] == kNoNode) continue;
    const Op op = t.node(i).op;
    if (op == Op::kConstant || op == Op::kParam || op == Op::kInput) continue;
    const std::vector<NodeId> parents = t.node(i).parents;
    const NodeAttr attr = t.node(i).attr;
    Value y{&t, i};
    Value g{&t, adj[static_cast<size_t>(i)]};

    switch (op) {
      case Op::kAdd: {
        accumulate(parents[0], detail::reduce_to(t, g, shape_copy(parents[0])));
        accumulate(parents[1], detail::reduce_to(t, g, shape_copy(parents[1])));
        break;
      }
      case Op::kSub: {
        accumulate(parents[0], detail::reduce_to(t, g, shape_copy(parents[0])));
        Value ng = t.mul(g, t.constant(-1.0));
        accumulate(parents[1], detail::reduce_to(t, ng, shape_copy(parents[1])));
        break;
      }
      case Op::kMul: {
        Value a{&t, parents[0]}, b{&t, parents[1]};
        accumulate(parents[0], detail::reduce_to(t, t.mul(g, b), shape_copy(parents[0])));
        accumulate(parents[1], detail::reduce_to(t, t.mul(g, a), shape_copy(parents[1])));
        break;
      }
      case Op::kDiv: {
        Value b{&t, parents[1]};
        accumulate(parents[0], detail::reduce_to(t, t.div(g, b), shape_copy(parents[0])));
        // d/db (a/b) = -y/b with y = a/b
        Value gb = t.div(t.mul(t.mul(g, t.constant(-1.0)), y), b);
        accumulate(parents[1], detail::reduce_to(t, gb, shape_copy(parents[1])));
        break;
      }
      case Op::kMatmul: {
        Value a{&t, parents[0]}, b{&t, parents[1]};
        const bool ta = attr.trans_a, tb = attr.trans_b;
        Value ga = ta ? t.matmul(b, g, tb, true) : t.matmul(g, b, false, !tb);
        Value gb = tb ? t.matmul(g, a, true, ta) : t.matmul(a, g, !ta, false);
        accumulate(parents[0], ga);
        accumulate(parents[1], gb);
        break;
      }
      case Op::kRelu:
      case Op::kMaxConst: {
        const Shape sx = shape_copy(parents[0]);
        const double c = op == Op::kRelu ? 0.0 : attr.scalar;
        const std::vector<double>& xv = t.node(parents[0]).value;
        std::vector<double> mask(xv.size());
        for (size_t k = 0; k < xv.size(); ++k) mask[k] = xv[k] > c ? 1.0 : 0.0;
        Value m = t.constant(TensorData(sx, std::move(mask)));
        accumulate(parents[0], t.mul(g, m));
        break;
      }
      case Op::kTanh: {
        Value one = t.constant(1.0);
        accumulate(parents[0], t.mul(g, t.sub(one, t.mul(y, y))));
        break;
      }
      case Op::kSigmoid: {
        Value one = t.constant(1.0);
        accumulate(parents[0], t.mul(g, t.mul(y, t.sub(one, y))));
        break;
      }
      case Op::kExp: {
        accumulate(parents[0], t.mul(g, y));
        break;
      }
      case Op::kLog: {
        accumulate(parents[0], t.div(g, Value{&t, parents[0]}));
        break;
      }
      case Op::kSum:
      case Op::kMean: {
        const Shape sx = shape_copy(parents[0]);
        const int64_t count = numel(sx) / numel(t.node(i).shape);
        Shape keep = detail::keepdims_shape(sx, attr.axes);
        Value gk = attr.keepdims ? g : t.reshape(g, keep);
        double w = op == Op::kMean ? 1.0 / static_cast<double>(count) : 1.0;
        Value ones = t.constant(TensorData::full(sx, w));
        accumulate(parents[0], t.mul(gk, ones));
        break;
      }
      case Op::kL2Norm: {
        Value x{&t, parents[0]};
        const Shape sx = shape_copy(parents[0]);
        Value gk = g, yk = y;
        if (attr.axis == kAxisAll) {
          // scalar y broadcasts as-is
        } else if (!attr.keepdims) {
          Shape keep = detail::keepdims_shape(sx, {attr.axis});
          gk = t.reshape(g, keep);
          yk = t.reshape(y, keep);
        }
        accumulate(parents[0], t.mul(gk, t.div(x, yk)));
        break;
      }
      case Op::kSoftmax: {
        Value inner = t.sum(t.mul(g, y), {attr.axis}, true);
        accumulate(parents[0], t.mul(y, t.sub(g, inner)));
        break;
      }
      case Op::kConcat: {
        int64_t off = 0;
        for (NodeId p : parents) {
          int64_t len = t.node(p).shape[static_cast<size_t>(attr.axis)];
          accumulate(p, t.slice(g, attr.axis, off, off + len));
          off += len;
        }
        break;
      }
      case Op::kSlice: {
        const Shape sx = shape_copy(parents[0]);
        const int64_t k = sx[static_cast<size_t>(attr.axis)];
        std::vector<Value> parts;
        if (attr.start > 0) {
          Shape s = sx;
          s[static_cast<size_t>(attr.axis)] = attr.start;
          parts.push_back(t.constant(TensorData::zeros(s)));
        }
        parts.push_back(g);
        if (attr.stop < k) {
          Shape s = sx;
          s[static_cast<size_t>(attr.axis)] = k - attr.stop;
          parts.push_back(t.constant(TensorData::zeros(s)));
        }
        Value gx = parts.size() == 1
                       ? g
                       : t.concat(std::span<const Value>(parts.data(), parts.size()),
                                  attr.axis);
        accumulate(parents[0], gx);
        break;
      }
      case Op::kReshape: {
        accumulate(parents[0], t.reshape(g, shape_copy(parents[0])));
        break;
      }
      case Op::kGatherRows: {
        accumulate(parents[0], t.scatter_rows(g, attr.rows, t.node(parents[0]).shape[0]));
        break;
      }
      case Op::kScatterRows: {
        accumulate(parents[0], t.gather_rows(g, attr.rows));
        break;
      }
      default:
        fail("gradient: unhandled op ", op_name(op));
    }
  }

  std::vector<Value> result;
  result.reserve(wrt.size());
  for (const Value& w : wrt) {
    NodeId a = w.id <= output.id ? adj[static_cast<size_t>(w.id)] : kNoNode;
    if (a == kNoNode) {
      result.push_back(t.constant(TensorData::zeros(w.shape())));
    } else {
      result.push_back(Value{&t, a});
    }
  }
  return result;
}

inline Value gradient(Value output, Value wrt) {
  return gradient(output, std::span<const Value>(&wrt, 1))[0];
}

// Plain-array gradients; scratch nodes are dropped from the tape afterwards.
inline std::vector<TensorData> gradient_values(Value output, std::span<const Value> wrt) {
  Tape& t = *output.tape;
  const size_t mark = t.size();
  std::vector<Value> gs = gradient(output, wrt);
  std::vector<TensorData> out;
  out.reserve(gs.size());
  for (const Value& g : gs) out.push_back(g.tensor());
  t.truncate(mark);
  return out;
}

inline TensorData gradient_values(Value output, Value wrt) {
  return gradient_values(output, std::span<const Value>(&wrt, 1))[0];
}

enum class SecondOrderMode { kJacobianFrobenius, kVjpOnes };

// Derivative of a 3-vector node with respect to a 3-vector leaf.
// kJacobianFrobenius returns the full 3x3 Jacobian (row i = d out_i / d in);
// kVjpOnes contracts the Jacobian with an all-ones vector and returns J^T 1.
inline TensorData second_derivative(Value out3, Value in3, SecondOrderMode mode) {
  Tape& t = *out3.tape;
  check(out3.size() == 3, "second_derivative: output must have 3 elements");
  check(in3.size() == 3, "second_derivative: input must have 3 elements");
  const size_t mark = t.size();
  Value flat = t.reshape(out3, {3});
  if (mode == SecondOrderMode::kVjpOnes) {
    Value s = t.sum(flat);
    TensorData g = gradient(s, in3).tensor();
    t.truncate(mark);
    return TensorData({3}, g.values);
  }
  std::vector<double> jac(9, 0.0);
  for (int row = 0; row < 3; ++row) {
    Value comp = t.sum(t.slice(flat, 0, row, row + 1));
    TensorData g = gradient(comp, in3).tensor();
    for (int col = 0; col < 3; ++col) jac[static_cast<size_t>(row * 3 + col)] = g.values[static_cast<size_t>(col)];
  }
  t.truncate(mark);
  return TensorData({3, 3}, std::move(jac));
}

inline double frobenius_norm(const TensorData& m) {
  double s = 0.0;
  for (double v : m.values) s += v * v;
  return std::sqrt(s);
}

}  // namespace clap
