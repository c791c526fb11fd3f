#pragma once

#include <vector>

#include "clap/encoders.hpp"
#include "clap/functional.hpp"

namespace clap {

inline void renormalize_rows(TensorData& t) {
  check(t.shape.size() == 2, "renormalize_rows: need a matrix");
  int64_t rows = t.shape[0], cols = t.shape[1];
  for (int64_t r = 0; r < rows; ++r) {
    double acc = 0;
    double* row = t.values.data() + r * cols;
    for (int64_t c = 0; c < cols; ++c) acc += row[c] * row[c];
    double norm = std::sqrt(acc);
    if (norm < 1e-12) {
      std::fill(row, row + cols, 0.0);
      row[0] = 1.0;
      continue;
    }
    for (int64_t c = 0; c < cols; ++c) row[c] /= norm;
  }
}

inline void register_proto_params(ParamSet& ps, const ModelDims& dims, uint64_t seed) {
  ps.init("proj.p.w1", {dims.d_p, dims.d_k}, seed);
  ps.init("proj.p.b1", {dims.d_k}, seed, 0.0);
  ps.init("proj.p.w2", {dims.d_k, dims.d_k}, seed);
  ps.init("proj.p.b2", {dims.d_k}, seed, 0.0);
  ps.init("proj.i.w1", {dims.d_i, dims.d_k}, seed);
  ps.init("proj.i.b1", {dims.d_k}, seed, 0.0);
  ps.init("proj.i.w2", {dims.d_k, dims.d_k}, seed);
  ps.init("proj.i.b2", {dims.d_k}, seed, 0.0);
  ps.init("proto.K", {dims.n_k, dims.d_k}, seed);
  renormalize_rows(ps.at("proto.K"));
}

namespace protodetail {

// Rows with (near) zero norm before normalization are swapped for e_1 and
// flagged; everything else is row-normalized on tape.
inline Value normalize_or_basis(Tape& t, Value x, int* flagged) {
  int64_t rows = x.shape()[0], cols = x.shape()[1];
  Value norm = t.l2norm(x, 1, true);
  const std::vector<double>& nv = norm.data();
  std::vector<double> mask(static_cast<size_t>(rows), 0.0);
  int count = 0;
  for (int64_t r = 0; r < rows; ++r)
    if (nv[static_cast<size_t>(r)] < 1e-12) {
      mask[static_cast<size_t>(r)] = 1.0;
      ++count;
    }
  if (flagged) *flagged = count;
  if (count > 0) {
    Value m = t.constant(TensorData({rows, 1}, mask));
    std::vector<double> basis(static_cast<size_t>(cols), 0.0);
    basis[0] = 1.0;
    Value e1 = t.constant(TensorData({1, cols}, basis));
    x = t.add(t.mul(x, t.sub(t.constant(1.0), m)), t.mul(e1, m));
    norm = t.l2norm(x, 1, true);
  }
  return t.div(x, norm);
}

inline Value mlp2(ParamBinder& P, const std::string& prefix, Value x) {
  Tape& t = P.tape;
  Value h = t.tanh(linear(t, x, P(prefix + ".w1"), P(prefix + ".b1")));
  return linear(t, h, P(prefix + ".w2"), P(prefix + ".b2"));
}

}  // namespace protodetail

// Projection heads per modality, then row L2 normalization. `rows` selects
// the voxels that enter the prototype losses (null = all).
inline std::pair<Value, Value> project_embeddings(ParamBinder& P, Value p_feat, Value i_feat,
                                                  RowIndex rows, int* flagged = nullptr) {
  Tape& t = P.tape;
  Value p_in = rows ? t.gather_rows(p_feat, rows) : p_feat;
  Value i_in = rows ? t.gather_rows(i_feat, rows) : i_feat;
  int f1 = 0, f2 = 0;
  Value p_dot = protodetail::normalize_or_basis(t, protodetail::mlp2(P, "proj.p", p_in), &f1);
  Value i_dot = protodetail::normalize_or_basis(t, protodetail::mlp2(P, "proj.i", i_in), &f2);
  if (flagged) *flagged = f1 + f2;
  return {p_dot, i_dot};
}

// S = emb K^T; with unit rows on both sides the entries live in [-1,1].
inline Value similarity(Tape& t, Value emb, Value bank) {
  return t.matmul(emb, bank, false, true);
}

// Entropy of the row-softmax assignments, averaged over rows and prototypes,
// summed across the two modalities.
inline Value em_loss(Tape& t, Value s_p, Value s_i) {
  check(same_shape(s_p.shape(), s_i.shape()), "em_loss: shape mismatch");
  int64_t rows = s_p.shape()[0], nk = s_p.shape()[1];
  auto entropy_sum = [&](Value s) {
    Value ls = log_softmax(t, s, -1);
    return t.sum(t.mul(t.exp(ls), ls));
  };
  Value total = t.add(entropy_sum(s_p), entropy_sum(s_i));
  return t.mul(total, t.constant(-1.0 / static_cast<double>(rows * nk)));
}

// Balanced soft assignments from a detached similarity matrix: exp(S/eps)
// with row-max shift, then alternating column/row normalization, ending on a
// row pass so rows sum to exactly 1.
inline TensorData sinkhorn_codes(const TensorData& s, int n_iter, double eps) {
  check(s.shape.size() == 2, "sinkhorn_codes: need a matrix");
  int64_t rows = s.shape[0], cols = s.shape[1];
  TensorData q = s;
  for (int64_t r = 0; r < rows; ++r) {
    double* row = q.values.data() + r * cols;
    double mx = row[0];
    for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    for (int64_t c = 0; c < cols; ++c) row[c] = std::exp((row[c] - mx) / eps);
  }
  double col_target = static_cast<double>(rows) / static_cast<double>(cols);
  for (int it = 0; it < n_iter; ++it) {
    for (int64_t c = 0; c < cols; ++c) {
      double acc = 0;
      for (int64_t r = 0; r < rows; ++r) acc += q.values[static_cast<size_t>(r * cols + c)];
      if (acc <= 0) continue;
      double scale = col_target / acc;
      for (int64_t r = 0; r < rows; ++r) q.values[static_cast<size_t>(r * cols + c)] *= scale;
    }
    for (int64_t r = 0; r < rows; ++r) {
      double* row = q.values.data() + r * cols;
      double acc = 0;
      for (int64_t c = 0; c < cols; ++c) acc += row[c];
      if (acc <= 0) continue;
      for (int64_t c = 0; c < cols; ++c) row[c] /= acc;
    }
  }
  return q;
}

// Swapped prediction: each modality's codes supervise the other's softmax
// scores. Gradient flows through S only; Q enters as constants.
inline Value swav_loss(Tape& t, Value s_p, Value s_i, const TensorData& q_p,
                       const TensorData& q_i, double tau) {
  check(same_shape(s_p.shape(), q_i.shape), "swav_loss: S_P/Q_I shape mismatch");
  check(same_shape(s_i.shape(), q_p.shape), "swav_loss: S_I/Q_P shape mismatch");
  int64_t rows = s_p.shape()[0], nk = s_p.shape()[1];
  Value inv_tau = t.constant(1.0 / tau);
  Value ls_p = log_softmax(t, t.mul(s_p, inv_tau), -1);
  Value ls_i = log_softmax(t, t.mul(s_i, inv_tau), -1);
  Value term = t.add(t.sum(t.mul(t.constant(q_i), ls_p)), t.sum(t.mul(t.constant(q_p), ls_i)));
  return t.mul(term, t.constant(-1.0 / static_cast<double>(rows * nk)));
}

// Mean off-diagonal entry of the prototype Gram matrix K K^T.
inline Value gram_loss(Tape& t, Value bank) {
  int64_t nk = bank.shape()[0];
  check(nk >= 2, "gram_loss: need at least 2 prototypes");
  Value g = t.matmul(bank, bank, false, true);
  std::vector<double> mask(static_cast<size_t>(nk * nk), 1.0);
  for (int64_t i = 0; i < nk; ++i) mask[static_cast<size_t>(i * nk + i)] = 0.0;
  Value off = t.mul(g, t.constant(TensorData({nk, nk}, mask)));
  return t.mul(t.sum(off), t.constant(1.0 / static_cast<double>(nk * (nk - 1))));
}

struct ProtoLosses {
  Value em, swav, gram, total;
};

inline ProtoLosses proto_loss(Tape& t, Value l_em, Value l_swav, Value l_gram, double w_swav,
                              double w_em, double w_gmm) {
  Value total = t.add(t.add(t.mul(l_swav, t.constant(w_swav)), t.mul(l_em, t.constant(w_em))),
                      t.mul(l_gram, t.constant(w_gmm)));
  return {l_em, l_swav, l_gram, total};
}

}  // namespace clap
