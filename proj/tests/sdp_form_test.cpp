#include "safesdp/dataset.hpp"
#include "safesdp/sdp_form.hpp"

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace safesdp {
namespace {

using fixture::random_block;
using fixture::random_vector;

TEST(BuildSdp, CountsForSmallL2Network) {
  const auto pr = build_sdp(init_xavier(2, 3, 1, 0), InputRegion(Norm::l2, 1.0));
  EXPECT_EQ(pr.index.core_order(), 6);
  EXPECT_EQ(pr.m(), 11);
  EXPECT_EQ(pr.index.slack_count, 7);
  EXPECT_EQ(pr.n(), 13);
  EXPECT_EQ(pr.a.size(), pr.m());
  EXPECT_EQ(pr.A[0].kind, ConstraintKind::unit);
  EXPECT_EQ(pr.A[1].kind, ConstraintKind::input);
  EXPECT_EQ(pr.A[2].kind, ConstraintKind::nonneg);
  EXPECT_EQ(pr.A[5].kind, ConstraintKind::affine_lower);
  EXPECT_EQ(pr.A[8].kind, ConstraintKind::relu_diag);
}

TEST(BuildSdp, LinfHasOneInputRowPerCoordinate) {
  const auto pr = build_sdp(init_xavier(4, 3, 2, 0), InputRegion(Norm::linf, 1.0));
  EXPECT_EQ(pr.m(), 1 + 4 + 2 * 9);
  EXPECT_EQ(pr.index.slack_count, 4 + 2 * 6);
  EXPECT_EQ(pr.index.core_order(), 1 + 4 + 6);
  EXPECT_EQ(pr.row_of(ConstraintKind::relu_diag, 2, 1), 1 + 4 + 9 + 6 + 1);
  EXPECT_EQ(pr.A[pr.row_of(ConstraintKind::relu_diag, 2, 1)].kind, ConstraintKind::relu_diag);
  EXPECT_EQ(pr.A[pr.row_of(ConstraintKind::affine_lower, 1, 2)].neuron, 2);
}

TEST(BuildSdp, BlockOffsetsContiguous) {
  BlockIndex idx{3, 5, 3, 0};
  EXPECT_EQ(idx.offset(0), 1);
  for (int l = 1; l <= 3; ++l) EXPECT_EQ(idx.offset(l), idx.offset(l - 1) + idx.size(l - 1));
  EXPECT_EQ(idx.offset(3) + idx.size(3), idx.core_order());
}

TEST(BuildSdp, ZeroNetworkUnitPointOptimal) {
  const auto pr = build_sdp(NetworkParams::zeros(3, 4, 2), InputRegion(Norm::l2, 1.0));
  BlockSym X = BlockSym::zeros(pr.index);
  X.core.set(0, 0, 1.0);
  X.slack(0) = 1.0;  // input slack: eps^2 - 0
  EXPECT_LE((apply_A(pr, X) - pr.a).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(objective(pr, X), 0.0);
  EXPECT_EQ(pr.C.max_abs(), 0.0);
}

// The main correctness check of the canonical form: every lifted forward
// trace is feasible with the induced slacks, and the objective equals the
// logit.
TEST(BuildSdp, RankOneLiftIsFeasible) {
  std::mt19937_64 rng(1);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const int d = 2 + seed % 5;
    const auto p = init_xavier(d, 3 * d, 1 + seed % 2, seed);
    for (Norm norm : {Norm::l2, Norm::linf}) {
      const InputRegion region(norm, 0.5 + 0.25 * seed);
      const auto pr = build_sdp(p, region);
      for (const auto& x : sample_ball(30, d, norm, region.eps, seed * 31 + 7)) {
        const auto t = forward(p, x);
        const BlockSym X = lift_trace(pr, t);
        EXPECT_GE(X.slack.minCoeff(), -1e-12);
        EXPECT_LE((apply_A(pr, X) - pr.a).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_NEAR(objective(pr, X), t.logit, 1e-8);
      }
    }
  }
}

TEST(ApplyA, UnitVectorGivesConstraintMatrix) {
  const auto pr = build_sdp(init_xavier(2, 3, 2, 4), InputRegion(Norm::linf, 1.0));
  for (Index k = 0; k < pr.m(); ++k) {
    const SymMatrix at = apply_At_dense(pr, Vector::Unit(pr.m(), k));
    EXPECT_LE((at.dense() - materialize(pr, k).dense()).cwiseAbs().maxCoeff(), 1e-15) << "row " << k;
  }
  EXPECT_EQ(apply_A(pr, BlockSym::zeros(pr.index)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ApplyA, StructuredMatchesDense) {
  const auto pr = build_sdp(init_xavier(3, 4, 2, 5), InputRegion(Norm::l2, 1.3));
  const BlockSym X = random_block(pr.index, 6);
  const SymMatrix dense = X.to_dense();
  const Vector ax = apply_A(pr, X);
  for (Index k = 0; k < pr.m(); ++k) EXPECT_NEAR(ax(k), inner(materialize(pr, k), dense), 1e-12);
}

TEST(ApplyA, AdjointIdentity) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto pr = build_sdp(init_xavier(2, 2 + seed % 2, 1 + seed % 2, seed),
                              InputRegion(seed % 2 ? Norm::l2 : Norm::linf, 1.0));
    ASSERT_LE(pr.n(), 30);
    const BlockSym X = random_block(pr.index, 40 + seed);
    const Vector y = random_vector(pr.m(), 50 + seed);
    EXPECT_NEAR(apply_A(pr, X).dot(y), inner(X, apply_At(pr, y)), 1e-10);
  }
}

TEST(ApplyA, ShapeMismatch) {
  const auto pr = build_sdp(init_xavier(2, 2, 1, 0), InputRegion(Norm::l2, 1.0));
  EXPECT_THROW(apply_At(pr, Vector::Zero(pr.m() + 1)), InvalidInput);
  EXPECT_THROW(apply_A(pr, BlockSym(3, 1)), InvalidInput);
}

TEST(Gram, MatchesDenseOracle) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const int d = 2, h = 2 + seed % 2;
    const auto pr = build_sdp(init_xavier(d, h, 1 + seed % 2, seed), InputRegion(seed % 2 ? Norm::l2 : Norm::linf, 1.0));
    std::vector<SymMatrix> dense;
    for (Index k = 0; k < pr.m(); ++k) dense.push_back(materialize(pr, k));
    Matrix ref(pr.m(), pr.m());
    for (Index k = 0; k < pr.m(); ++k)
      for (Index l = 0; l < pr.m(); ++l) ref(k, l) = inner(dense[k], dense[l]);
    const SymMatrix g = gram_AAt(pr);
    EXPECT_LE((g.dense() - ref).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_GE(lambda_min(g), -1e-10);
  }
}

TEST(Gram, OrthogonalConstraintsGiveDiagonal) {
  SdpProblem pr;
  pr.index = BlockIndex{3, 1, 1, 0};
  pr.region = InputRegion(Norm::l2, 1.0);
  pr.C = SymMatrix(pr.index.core_order());
  for (Index i = 0; i < pr.index.core_order(); ++i) {
    ConstraintMatrix cm;
    cm.diag.push_back({i, 1.0 + i});
    detail::assemble_entries(cm);
    pr.A.push_back(cm);
  }
  pr.a = Vector::Ones(pr.m());
  const SymMatrix g = gram_AAt(pr);
  for (Index k = 0; k < pr.m(); ++k)
    for (Index l = 0; l < pr.m(); ++l) EXPECT_EQ(g(k, l), k == l ? (1.0 + k) * (1.0 + k) : 0.0);
}

TEST(BuildSdp, DataAffineInWeights) {
  const auto p0 = init_xavier(3, 4, 2, 1), p1 = init_xavier(3, 4, 2, 2);
  auto mid = p0;
  mid += p1;
  mid *= 0.5;
  const InputRegion region(Norm::linf, 1.0);
  const auto a = build_sdp(p0, region), b = build_sdp(p1, region), c = build_sdp(mid, region);
  EXPECT_LE((0.5 * (a.a + b.a) - c.a).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((0.5 * (a.C + b.C) - c.C).max_abs(), 1e-15);
  EXPECT_NEAR(0.5 * (a.c + b.c), c.c, 1e-15);
  for (Index k = 0; k < c.m(); ++k) {
    const SymMatrix interp = 0.5 * (materialize(a, k) + materialize(b, k));
    EXPECT_LE((interp - materialize(c, k)).max_abs(), 1e-15);
  }
}

DualIterate random_duals(const SdpProblem& pr, std::uint64_t seed) {
  DualIterate it = DualIterate::zeros(pr);
  it.y = random_vector(pr.m(), seed);
  it.S = random_block(pr.index, seed + 1, true);
  it.X = random_block(pr.index, seed + 2, true);
  it.s = 0.3;
  it.x = -0.7;
  return it;
}

TEST(GradTheta, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int d = 1 + seed % 6, h = 1 + (seed * 7) % 6;
    const auto p = init_xavier(d, h, 1 + seed % 2, 300 + seed);
    const InputRegion region(seed % 2 ? Norm::l2 : Norm::linf, 1.0);
    const double mu = 0.65, rho = 1.21;
    const auto pr = build_sdp(p, region);
    const auto it = random_duals(pr, 400 + seed);
    const Vector analytic = grad_theta(p, pr, it, mu, rho).flatten();
    const Vector theta = p.flatten();
    Vector numeric(theta.size());
    auto q = p;
    for (Index k = 0; k < theta.size(); ++k) {
      Vector t = theta;
      t(k) += 1e-5;
      q.unflatten(t);
      const double up = lagrangian_terms(build_sdp(q, region), it, mu, rho);
      t(k) -= 2e-5;
      q.unflatten(t);
      numeric(k) = (up - lagrangian_terms(build_sdp(q, region), it, mu, rho)) / 2e-5;
    }
    EXPECT_LE((analytic - numeric).norm(), 1e-4 * std::max(1.0, numeric.norm())) << "seed " << seed;
  }
}

TEST(GradTheta, ZeroDualsLeaveOnlyPenaltyTerms) {
  const auto p = init_xavier(3, 4, 2, 8);
  const auto pr = build_sdp(p, InputRegion(Norm::l2, 1.0));
  const double mu = 0.5, rho = 2.0;
  const auto g = grad_theta(p, pr, DualIterate::zeros(pr), mu, rho);
  // T = c^2/(2 rho) + |C|^2/(2 mu) = b_out^2/(2 rho) + sum_j W_out,j^2 / (4 mu)
  EXPECT_NEAR(g.b[2](0), p.b[2](0) / rho, 1e-14);
  EXPECT_LE((g.W[2] - p.W[2] / (2.0 * mu)).cwiseAbs().maxCoeff(), 1e-14);
  for (int l = 0; l < 2; ++l) {
    EXPECT_EQ(g.W[l].cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(g.b[l].cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(GradTheta, OutputBiasCarriesLogitMultiplier) {
  const auto p = init_xavier(2, 3, 1, 9);
  const auto pr = build_sdp(p, InputRegion(Norm::l2, 1.0));
  auto it = random_duals(pr, 77);
  const double mu = 1.0, rho = 3.0;
  const double g = pr.a.dot(it.y) + pr.c + it.s;
  EXPECT_NEAR(grad_theta(p, pr, it, mu, rho).b[1](0), g / rho - it.x, 1e-13);
}

}  // namespace
}  // namespace safesdp
