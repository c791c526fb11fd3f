#include <gtest/gtest.h>

#include <cmath>

#include "clap/gradient.hpp"
#include "clap/proto.hpp"

namespace clap {
namespace {

TEST(Renormalize, UnitRowsAndZeroRowFallback) {
  TensorData m({3, 4}, {3.0, 4.0, 0.0, 0.0,
                        0.0, 0.0, 0.0, 0.0,
                        1.0, 1.0, 1.0, 1.0});
  renormalize_rows(m);
  EXPECT_DOUBLE_EQ(m.values[0], 0.6);
  EXPECT_DOUBLE_EQ(m.values[1], 0.8);
  EXPECT_DOUBLE_EQ(m.values[4], 1.0);  // zero row becomes e_1
  EXPECT_DOUBLE_EQ(m.values[5], 0.0);
  for (int64_t r = 0; r < 3; ++r) {
    double acc = 0;
    for (int64_t c = 0; c < 4; ++c) {
      double v = m.values[static_cast<size_t>(r * 4 + c)];
      acc += v * v;
    }
    EXPECT_NEAR(acc, 1.0, 1e-12);
  }
  TensorData vec({4}, {1, 2, 3, 4});
  EXPECT_THROW(renormalize_rows(vec), Error);
}

ModelDims proto_dims() {
  ModelDims d;
  d.d_p = 5;
  d.d_i = 4;
  d.d_k = 6;
  d.n_k = 4;
  return d;
}

TEST(ProtoParams, BankStartsRowNormalized) {
  ModelDims dims = proto_dims();
  ParamSet ps;
  register_proto_params(ps, dims, 71);
  const TensorData& k = ps.at("proto.K");
  ASSERT_EQ(k.shape, (Shape{dims.n_k, dims.d_k}));
  for (int64_t r = 0; r < dims.n_k; ++r) {
    double acc = 0;
    for (int64_t c = 0; c < dims.d_k; ++c) {
      double v = k.values[static_cast<size_t>(r * dims.d_k + c)];
      acc += v * v;
    }
    EXPECT_NEAR(acc, 1.0, 1e-12);
  }
}

TEST(Projection, ProducesUnitRows) {
  ModelDims dims = proto_dims();
  ParamSet ps;
  register_proto_params(ps, dims, 73);
  Tape t;
  ParamBinder P(t, ps);
  Rng rng(1);
  int64_t n = 7;
  std::vector<double> pv(static_cast<size_t>(n * dims.d_p)), iv(static_cast<size_t>(n * dims.d_i));
  for (auto& v : pv) v = rng.normal();
  for (auto& v : iv) v = rng.normal();
  Value p_feat = t.constant(TensorData({n, dims.d_p}, pv));
  Value i_feat = t.constant(TensorData({n, dims.d_i}, iv));
  int flagged = -1;
  auto [p_emb, i_emb] = project_embeddings(P, p_feat, i_feat, nullptr, &flagged);
  EXPECT_EQ(flagged, 0);
  ASSERT_EQ(p_emb.shape(), (Shape{n, dims.d_k}));
  ASSERT_EQ(i_emb.shape(), (Shape{n, dims.d_k}));
  for (Value emb : {p_emb, i_emb}) {
    auto v = emb.data();
    for (int64_t r = 0; r < n; ++r) {
      double acc = 0;
      for (int64_t c = 0; c < dims.d_k; ++c) {
        double x = v[static_cast<size_t>(r * dims.d_k + c)];
        acc += x * x;
      }
      EXPECT_NEAR(acc, 1.0, 1e-12);
    }
  }
}

TEST(Projection, ZeroOutputsFallBackToBasisAndFlag) {
  ModelDims dims = proto_dims();
  ParamSet ps;
  register_proto_params(ps, dims, 74);
  for (auto& [name, tensor] : ps.tensors)
    if (name.rfind("proj.", 0) == 0) tensor.values.assign(tensor.values.size(), 0.0);

  Tape t;
  ParamBinder P(t, ps);
  int64_t n = 3;
  Value p_feat = t.constant(TensorData::zeros({n, dims.d_p}));
  Value i_feat = t.constant(TensorData::zeros({n, dims.d_i}));
  int flagged = 0;
  auto [p_emb, i_emb] = project_embeddings(P, p_feat, i_feat, nullptr, &flagged);
  EXPECT_EQ(flagged, static_cast<int>(2 * n));
  auto pv = p_emb.data();
  for (int64_t r = 0; r < n; ++r) {
    EXPECT_DOUBLE_EQ(pv[static_cast<size_t>(r * dims.d_k)], 1.0);
    for (int64_t c = 1; c < dims.d_k; ++c)
      EXPECT_DOUBLE_EQ(pv[static_cast<size_t>(r * dims.d_k + c)], 0.0);
  }
}

TEST(Projection, RowIndexSelectsVoxels) {
  ModelDims dims = proto_dims();
  ParamSet ps;
  register_proto_params(ps, dims, 75);
  Tape t;
  ParamBinder P(t, ps);
  Rng rng(2);
  int64_t n = 6;
  std::vector<double> pv(static_cast<size_t>(n * dims.d_p)), iv(static_cast<size_t>(n * dims.d_i));
  for (auto& v : pv) v = rng.normal();
  for (auto& v : iv) v = rng.normal();
  Value p_feat = t.constant(TensorData({n, dims.d_p}, pv));
  Value i_feat = t.constant(TensorData({n, dims.d_i}, iv));

  auto rows = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{1, 4});
  auto [p_sub, i_sub] = project_embeddings(P, p_feat, i_feat, rows);
  ASSERT_EQ(p_sub.shape(), (Shape{2, dims.d_k}));

  auto [p_all, i_all] = project_embeddings(P, p_feat, i_feat, nullptr);
  auto sub = p_sub.data();
  auto all = p_all.data();
  for (int64_t c = 0; c < dims.d_k; ++c) {
    EXPECT_DOUBLE_EQ(sub[static_cast<size_t>(c)], all[static_cast<size_t>(1 * dims.d_k + c)]);
    EXPECT_DOUBLE_EQ(sub[static_cast<size_t>(dims.d_k + c)],
                     all[static_cast<size_t>(4 * dims.d_k + c)]);
  }
}

TEST(Similarity, DotProductsAgainstBank) {
  Tape t;
  Value emb = t.constant(TensorData({2, 3}, {1, 0, 0, 0, 1, 0}));
  Value bank = t.constant(TensorData({2, 3}, {0.6, 0.8, 0.0, 0.0, 0.0, 1.0}));
  auto s = similarity(t, emb, bank).data();
  EXPECT_DOUBLE_EQ(s[0], 0.6);
  EXPECT_DOUBLE_EQ(s[1], 0.0);
  EXPECT_DOUBLE_EQ(s[2], 0.8);
  EXPECT_DOUBLE_EQ(s[3], 0.0);
}

TEST(EmLoss, UniformScoresFixture) {
  Tape t;
  Value s = t.constant(TensorData::zeros({1, 4}));
  double got = em_loss(t, s, s).scalar();
  EXPECT_NEAR(got, 2.0 * std::log(4.0) / 4.0, 1e-9);
}

TEST(EmLoss, SharpScoresVanishAndFuzzNonNegative) {
  Tape t;
  Value sharp = t.constant(TensorData({2, 4}, {50, 0, 0, 0, 0, 0, 50, 0}));
  EXPECT_LT(em_loss(t, sharp, sharp).scalar(), 1e-9);
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> sv(12);
    for (auto& v : sv) v = rng.uniform(-4, 4);
    std::vector<double> sw(12);
    for (auto& v : sw) v = rng.uniform(-4, 4);
    Tape t2;
    double val = em_loss(t2, t2.constant(TensorData({3, 4}, sv)),
                         t2.constant(TensorData({3, 4}, sw)))
                     .scalar();
    EXPECT_GE(val, 0.0);
  }
}

TEST(Sinkhorn, ConstantScoresGiveUniformCodes) {
  TensorData s = TensorData::full({4, 8}, 0.7);
  TensorData q = sinkhorn_codes(s, 3, 0.05);
  for (double v : q.values) EXPECT_NEAR(v, 1.0 / 8.0, 1e-12);
}

double max_col_error(const TensorData& q) {
  int64_t rows = q.shape[0], cols = q.shape[1];
  double target = static_cast<double>(rows) / static_cast<double>(cols);
  double worst = 0;
  for (int64_t c = 0; c < cols; ++c) {
    double acc = 0;
    for (int64_t r = 0; r < rows; ++r) acc += q.values[static_cast<size_t>(r * cols + c)];
    worst = std::max(worst, std::abs(acc - target));
  }
  return worst;
}

TEST(Sinkhorn, RowsExactColumnsConverge) {
  Rng rng(41);
  std::vector<double> sv(32 * 8);
  for (auto& v : sv) v = rng.uniform(-1, 1);
  TensorData s({32, 8}, sv);

  TensorData q50 = sinkhorn_codes(s, 50, 0.05);
  int64_t rows = 32, cols = 8;
  for (int64_t r = 0; r < rows; ++r) {
    double acc = 0;
    for (int64_t c = 0; c < cols; ++c) acc += q50.values[static_cast<size_t>(r * cols + c)];
    EXPECT_NEAR(acc, 1.0, 1e-12);
  }
  EXPECT_LT(max_col_error(q50), 1e-3);

  double e1 = max_col_error(sinkhorn_codes(s, 1, 0.05));
  double e3 = max_col_error(sinkhorn_codes(s, 3, 0.05));
  EXPECT_LT(e3, e1);
  for (double v : q50.values) EXPECT_GE(v, 0.0);
}

TEST(Sinkhorn, IdenticalRowsStayIdentical) {
  std::vector<double> row = {0.9, -0.3, 0.1, 0.5};
  std::vector<double> sv;
  for (int r = 0; r < 6; ++r) sv.insert(sv.end(), row.begin(), row.end());
  TensorData q = sinkhorn_codes(TensorData({6, 4}, sv), 3, 0.05);
  for (int64_t r = 1; r < 6; ++r)
    for (int64_t c = 0; c < 4; ++c)
      EXPECT_DOUBLE_EQ(q.values[static_cast<size_t>(r * 4 + c)], q.values[static_cast<size_t>(c)]);
}

TEST(SwavLoss, UniformFixture) {
  Tape t;
  Value s = t.constant(TensorData::zeros({1, 4}));
  TensorData q = TensorData::full({1, 4}, 0.25);
  double got = swav_loss(t, s, s, q, q, 1.0).scalar();
  EXPECT_NEAR(got, std::log(4.0) / 2.0, 1e-12);
}

TEST(SwavLoss, ConfidentAgreementVanishes) {
  Tape t;
  Value s = t.constant(TensorData({2, 3}, {60, 0, 0, 0, 60, 0}));
  TensorData q({2, 3}, {1, 0, 0, 0, 1, 0});
  EXPECT_LT(swav_loss(t, s, s, q, q, 1.0).scalar(), 1e-9);
}

TEST(SwavLoss, GradientFlowsThroughScores) {
  Rng rng(6);
  std::vector<double> sv(8), sw(8);
  for (auto& v : sv) v = rng.uniform(-1, 1);
  for (auto& v : sw) v = rng.uniform(-1, 1);
  TensorData q_p = sinkhorn_codes(TensorData({2, 4}, sv), 3, 0.05);
  TensorData q_i = sinkhorn_codes(TensorData({2, 4}, sw), 3, 0.05);

  Tape t;
  Value s_p = t.input(TensorData({2, 4}, sv), "s_p");
  Value s_i = t.input(TensorData({2, 4}, sw), "s_i");
  Value loss = swav_loss(t, s_p, s_i, q_p, q_i, 0.5);
  TensorData g = gradient_values(loss, s_p);

  double norm = 0;
  for (double v : g.values) norm += v * v;
  EXPECT_GT(norm, 1e-12);

  const double h = 1e-6;
  for (size_t i : {0u, 3u, 5u}) {
    auto up = sv, dn = sv;
    up[i] += h;
    dn[i] -= h;
    Tape tu;
    double lu = swav_loss(tu, tu.constant(TensorData({2, 4}, up)),
                          tu.constant(TensorData({2, 4}, sw)), q_p, q_i, 0.5)
                    .scalar();
    Tape td;
    double ld = swav_loss(td, td.constant(TensorData({2, 4}, dn)),
                          td.constant(TensorData({2, 4}, sw)), q_p, q_i, 0.5)
                    .scalar();
    double fd = (lu - ld) / (2 * h);
    EXPECT_NEAR(g.values[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(GramLoss, OffDiagonalMeanFixtures) {
  Tape t;
  Value ortho = t.constant(TensorData({2, 3}, {1, 0, 0, 0, 1, 0}));
  EXPECT_DOUBLE_EQ(gram_loss(t, ortho).scalar(), 0.0);

  Value same = t.constant(TensorData({3, 2}, {1, 0, 1, 0, 1, 0}));
  EXPECT_DOUBLE_EQ(gram_loss(t, same).scalar(), 1.0);

  double c60 = 0.5;
  Value angled = t.constant(
      TensorData({2, 2}, {1.0, 0.0, c60, std::sqrt(1 - c60 * c60)}));
  EXPECT_NEAR(gram_loss(t, angled).scalar(), 0.5, 1e-12);

  Value opposed = t.constant(TensorData({2, 2}, {1, 0, -1, 0}));
  EXPECT_DOUBLE_EQ(gram_loss(t, opposed).scalar(), -1.0);

  Value single = t.constant(TensorData({1, 2}, {1, 0}));
  EXPECT_THROW(gram_loss(t, single), Error);
}

TEST(ProtoLoss, WeightsCombineLinearly) {
  Tape t;
  Value em = t.constant(2.0);
  Value swav = t.constant(3.0);
  Value gram = t.constant(-0.5);
  ProtoLosses pl = proto_loss(t, em, swav, gram, 1.0, 0.1, 0.1);
  EXPECT_DOUBLE_EQ(pl.total.scalar(), 3.0 + 0.2 - 0.05);
  EXPECT_DOUBLE_EQ(pl.em.scalar(), 2.0);
  EXPECT_DOUBLE_EQ(pl.swav.scalar(), 3.0);
  EXPECT_DOUBLE_EQ(pl.gram.scalar(), -0.5);
}

}  // namespace
}  // namespace clap
