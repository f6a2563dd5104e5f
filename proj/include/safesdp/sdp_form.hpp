#pragma once

// Canonical SDP relaxation of max_{|x|_p <= eps} f(x):
//
//   max <C, X> + c   s.t.  <A_k, X> = a_k (k = 0..m-1),  X PSD.
//
// X is the lifted matrix of v = [1; x_0; x_1; ...; x_L] bordered by one
// diagonal slack entry per inequality. C and every A_k are zero between the
// core block and the slack block, so X, S and the dual slack are kept as a
// dense core block plus a diagonal slack vector (BlockSym).
//
// Constraint order: P[1] = 1, the input constraint(s), then per layer l the h
// nonnegativity rows, the h affine lower-bound rows and the h ReLU
// complementarity rows.

#include "safesdp/network.hpp"
#include "safesdp/numerics.hpp"
#include "safesdp/region.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace safesdp {

/// Layout of v = [1; x_0; x_1; ...; x_L] inside the core block, followed by
/// the slack block.
struct BlockIndex {
  int d = 0;
  int h = 0;
  int L = 0;
  Index slack_count = 0;

  Index core_order() const { return 1 + d + static_cast<Index>(L) * h; }
  Index order() const { return core_order() + slack_count; }
  /// First index of block x_l (l = 0 is the input).
  Index offset(int l) const { return l == 0 ? 1 : 1 + d + static_cast<Index>(l - 1) * h; }
  Index size(int l) const { return l == 0 ? d : h; }
  Index slack_offset() const { return core_order(); }
};

enum class ConstraintKind { unit, input, nonneg, affine_lower, relu_diag };

inline const char* to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::unit: return "unit";
    case ConstraintKind::input: return "input";
    case ConstraintKind::nonneg: return "nonneg";
    case ConstraintKind::affine_lower: return "affine_lower";
    case ConstraintKind::relu_diag: return "relu_diag";
  }
  return "?";
}

/// scale/2 * (e_row w^T + w e_row^T), with w occupying [offset, offset+|w|).
struct LowRankTerm {
  double scale = 1.0;
  Index row = 0;
  Index offset = 0;
  Vector w;
};

/// One entry A(i,j) = A(j,i) = value of the assembled core matrix, i <= j.
struct SymEntry {
  Index i = 0;
  Index j = 0;
  double value = 0.0;
};

/// A_k = diag part + entries pinned to the [1] row/column + low-rank cross
/// terms + an optional +1 on a slack diagonal entry.
struct ConstraintMatrix {
  ConstraintKind kind = ConstraintKind::unit;
  int layer = 0;   // 0 for unit/input rows
  int neuron = 0;  // neuron (or input coordinate) index
  std::vector<std::pair<Index, double>> diag;    // A(i,i) = v
  std::vector<std::pair<Index, double>> pinned;  // <A,X> gets v * X(0,j)
  std::vector<LowRankTerm> low_rank;
  Index slack = -1;  // position in the slack block, -1 for equalities

  /// Assembled upper-triangular core entries; filled by build_sdp.
  std::vector<SymEntry> entries;
};

/// Symmetric n x n matrix that is block diagonal: dense core plus diagonal
/// slack block.
struct BlockSym {
  SymMatrix core;
  Vector slack;

  BlockSym() = default;
  BlockSym(Index core_order, Index slack_count) : core(core_order), slack(Vector::Zero(slack_count)) {}
  static BlockSym zeros(const BlockIndex& idx) { return BlockSym(idx.core_order(), idx.slack_count); }

  Index order() const { return core.order() + slack.size(); }

  BlockSym& operator+=(const BlockSym& o) {
    core += o.core;
    slack += o.slack;
    return *this;
  }
  BlockSym& operator-=(const BlockSym& o) {
    core -= o.core;
    slack -= o.slack;
    return *this;
  }
  BlockSym& operator*=(double s) {
    core *= s;
    slack *= s;
    return *this;
  }
  friend BlockSym operator+(BlockSym a, const BlockSym& b) { return a += b; }
  friend BlockSym operator-(BlockSym a, const BlockSym& b) { return a -= b; }
  friend BlockSym operator*(double s, BlockSym a) { return a *= s; }

  double trace() const { return core.trace() + slack.sum(); }
  double frobenius_norm() const {
    return std::sqrt(core.dense().squaredNorm() + slack.squaredNorm());
  }
  double lambda_min() const {
    const double lc = safesdp::lambda_min(core);
    return slack.size() ? std::min(lc, slack.minCoeff()) : lc;
  }

  SymMatrix to_dense() const {
    const Index nc = core.order();
    Matrix m = Matrix::Zero(order(), order());
    m.topLeftCorner(nc, nc) = core.dense();
    for (Index k = 0; k < slack.size(); ++k) m(nc + k, nc + k) = slack(k);
    return SymMatrix::from_dense(m);
  }
  static BlockSym from_dense(const SymMatrix& m, const BlockIndex& idx) {
    if (m.order() != idx.order()) throw InvalidInput("BlockSym::from_dense: order mismatch");
    BlockSym b;
    const Index nc = idx.core_order();
    b.core = SymMatrix::from_dense(m.dense().topLeftCorner(nc, nc));
    b.slack = m.dense().diagonal().tail(idx.slack_count);
    return b;
  }
};

inline double inner(const BlockSym& a, const BlockSym& b) {
  return inner(a.core, b.core) + a.slack.dot(b.slack);
}

/// Blockwise projection onto the PSD cone.
inline BlockSym psd_project(const BlockSym& m) {
  BlockSym out;
  out.core = psd_project(m.core);
  out.slack = m.slack.cwiseMax(0.0);
  return out;
}

struct SdpProblem {
  BlockIndex index;
  InputRegion region;
  SymMatrix C;  // core block only; C has no slack entries
  double c = 0.0;
  std::vector<ConstraintMatrix> A;
  Vector a;

  Index m() const { return static_cast<Index>(A.size()); }
  Index n() const { return index.order(); }
  Index input_count() const { return region.p == Norm::l2 ? 1 : index.d; }
  /// Row of constraint (kind, l, j) for the per-layer kinds, l in 1..L.
  Index row_of(ConstraintKind kind, int l, int j) const {
    const Index base = 1 + input_count() + 3 * static_cast<Index>(index.h) * (l - 1);
    switch (kind) {
      case ConstraintKind::nonneg: return base + j;
      case ConstraintKind::affine_lower: return base + index.h + j;
      case ConstraintKind::relu_diag: return base + 2 * index.h + j;
      case ConstraintKind::unit: return 0;
      case ConstraintKind::input: return 1 + j;
    }
    return -1;
  }
};

namespace detail {

inline void assemble_entries(ConstraintMatrix& cm) {
  std::vector<SymEntry> e;
  for (auto [i, v] : cm.diag) e.push_back({i, i, v});
  for (auto [j, v] : cm.pinned) {
    if (j == 0)
      e.push_back({0, 0, v});
    else
      e.push_back({0, j, 0.5 * v});
  }
  for (const auto& t : cm.low_rank) {
    for (Index k = 0; k < t.w.size(); ++k) {
      if (t.w(k) == 0.0) continue;
      const Index col = t.offset + k;
      const double v = t.row == col ? t.scale * t.w(k) : 0.5 * t.scale * t.w(k);
      e.push_back({std::min(t.row, col), std::max(t.row, col), v});
    }
  }
  std::sort(e.begin(), e.end(), [](const SymEntry& x, const SymEntry& y) {
    return x.i != y.i ? x.i < y.i : x.j < y.j;
  });
  cm.entries.clear();
  for (const auto& x : e) {
    if (!cm.entries.empty() && cm.entries.back().i == x.i && cm.entries.back().j == x.j)
      cm.entries.back().value += x.value;
    else
      cm.entries.push_back(x);
  }
}

}  // namespace detail

/// Builds (C, c, A, a) for the network and input region.
inline SdpProblem build_sdp(const NetworkParams& params, const InputRegion& region) {
  params.validate();
  SdpProblem pr;
  pr.region = region;
  auto& idx = pr.index;
  idx.d = params.d;
  idx.h = params.h;
  idx.L = params.L;
  const int h = params.h;
  const double eps2 = region.eps * region.eps;

  std::vector<double> rhs;
  Index next_slack = 0;
  auto push = [&](ConstraintMatrix cm, double a, bool inequality) {
    if (inequality) cm.slack = next_slack++;
    detail::assemble_entries(cm);
    pr.A.push_back(std::move(cm));
    rhs.push_back(a);
  };

  {
    ConstraintMatrix unit;
    unit.kind = ConstraintKind::unit;
    unit.diag.push_back({0, 1.0});
    push(std::move(unit), 1.0, false);
  }
  const Index off0 = idx.offset(0);
  if (region.p == Norm::l2) {
    ConstraintMatrix in;
    in.kind = ConstraintKind::input;
    for (int i = 0; i < params.d; ++i) in.diag.push_back({off0 + i, 1.0});
    push(std::move(in), eps2, true);
  } else {
    for (int i = 0; i < params.d; ++i) {
      ConstraintMatrix in;
      in.kind = ConstraintKind::input;
      in.neuron = i;
      in.diag.push_back({off0 + i, 1.0});
      push(std::move(in), eps2, true);
    }
  }

  for (int l = 1; l <= params.L; ++l) {
    const auto& W = params.W[l - 1];
    const auto& b = params.b[l - 1];
    const Index prev = idx.offset(l - 1);
    const Index cur = idx.offset(l);
    // x_l >= 0
    for (int j = 0; j < h; ++j) {
      ConstraintMatrix cm;
      cm.kind = ConstraintKind::nonneg;
      cm.layer = l;
      cm.neuron = j;
      cm.pinned.push_back({cur + j, -1.0});
      push(std::move(cm), 0.0, true);
    }
    // W_l x_{l-1} + b_l <= x_l
    for (int j = 0; j < h; ++j) {
      ConstraintMatrix cm;
      cm.kind = ConstraintKind::affine_lower;
      cm.layer = l;
      cm.neuron = j;
      for (Index i = 0; i < W.cols(); ++i) cm.pinned.push_back({prev + i, W(j, i)});
      cm.pinned.push_back({cur + j, -1.0});
      push(std::move(cm), -b(j), true);
    }
    // x_l,j^2 = (W_l x_{l-1})_j x_l,j + b_l,j x_l,j
    for (int j = 0; j < h; ++j) {
      ConstraintMatrix cm;
      cm.kind = ConstraintKind::relu_diag;
      cm.layer = l;
      cm.neuron = j;
      cm.diag.push_back({cur + j, 1.0});
      if (b(j) != 0.0) cm.pinned.push_back({cur + j, -b(j)});
      cm.low_rank.push_back({-1.0, cur + j, prev, W.row(j).transpose()});
      push(std::move(cm), 0.0, false);
    }
  }

  idx.slack_count = next_slack;
  pr.a = Eigen::Map<const Vector>(rhs.data(), static_cast<Index>(rhs.size()));

  pr.C = SymMatrix(idx.core_order());
  const Index offL = idx.offset(params.L);
  for (int j = 0; j < h; ++j) pr.C.set(0, offL + j, 0.5 * params.W[params.L](0, j));
  pr.c = params.output_bias();
  return pr;
}

inline double constraint_value(const ConstraintMatrix& cm, const BlockSym& X) {
  const Matrix& x = X.core.dense();
  double v = 0.0;
  for (const auto& e : cm.entries) v += (e.i == e.j ? 1.0 : 2.0) * e.value * x(e.i, e.j);
  if (cm.slack >= 0) v += X.slack(cm.slack);
  return v;
}

/// A(X)_k = <A_k, X>.
inline Vector apply_A(const SdpProblem& pr, const BlockSym& X) {
  if (X.core.order() != pr.index.core_order() || X.slack.size() != pr.index.slack_count)
    throw InvalidInput("apply_A: shape mismatch");
  Vector out(pr.m());
  for (Index k = 0; k < pr.m(); ++k) out(k) = constraint_value(pr.A[k], X);
  return out;
}

/// A^T(y) = sum_k y_k A_k.
inline BlockSym apply_At(const SdpProblem& pr, const Vector& y) {
  if (y.size() != pr.m()) throw InvalidInput("apply_At: shape mismatch");
  BlockSym out = BlockSym::zeros(pr.index);
  Matrix core = Matrix::Zero(pr.index.core_order(), pr.index.core_order());
  for (Index k = 0; k < pr.m(); ++k) {
    const double yk = y(k);
    if (yk == 0.0) continue;
    for (const auto& e : pr.A[k].entries) {
      core(e.i, e.j) += yk * e.value;
      if (e.i != e.j) core(e.j, e.i) += yk * e.value;
    }
    if (pr.A[k].slack >= 0) out.slack(pr.A[k].slack) += yk;
  }
  out.core = SymMatrix::from_dense(core);
  return out;
}

/// Dense n x n overloads.
inline Vector apply_A(const SdpProblem& pr, const SymMatrix& X) {
  return apply_A(pr, BlockSym::from_dense(X, pr.index));
}
inline SymMatrix apply_At_dense(const SdpProblem& pr, const Vector& y) {
  return apply_At(pr, y).to_dense();
}

/// Dense n x n A_k assembled straight from its structured parts.
inline SymMatrix materialize(const SdpProblem& pr, Index k) {
  const auto& cm = pr.A.at(static_cast<std::size_t>(k));
  SymMatrix m(pr.n());
  for (auto [i, v] : cm.diag) m.add(i, i, v);
  for (auto [j, v] : cm.pinned) m.add(0, j, j == 0 ? v : 0.5 * v);
  for (const auto& t : cm.low_rank) {
    Vector w = Vector::Zero(pr.n());
    w.segment(t.offset, t.w.size()) = t.w;
    const Matrix outer = Vector::Unit(pr.n(), t.row) * w.transpose();
    m += SymMatrix::from_dense(t.scale * outer);
  }
  if (cm.slack >= 0) m.add(pr.index.slack_offset() + cm.slack, pr.index.slack_offset() + cm.slack, 1.0);
  return m;
}

/// Gram matrix G(k,l) = <A_k, A_l>. Each core position is shared by few
/// constraints except the [1] row entries of a layer, which couple the h
/// affine rows of the next layer; the accumulation is O(n^3) overall.
inline SymMatrix gram_AAt(const SdpProblem& pr) {
  const Index m = pr.m();
  const Index nc = pr.index.core_order();
  struct Hit {
    Index key;
    Index row;
    double value;
  };
  std::vector<Hit> hits;
  for (Index k = 0; k < m; ++k)
    for (const auto& e : pr.A[k].entries) hits.push_back({e.i * nc + e.j, k, e.value});
  std::sort(hits.begin(), hits.end(),
            [](const Hit& x, const Hit& y) { return x.key != y.key ? x.key < y.key : x.row < y.row; });

  Matrix g = Matrix::Zero(m, m);
  std::size_t s = 0;
  while (s < hits.size()) {
    std::size_t e = s;
    while (e < hits.size() && hits[e].key == hits[s].key) ++e;
    const Index i = hits[s].key / nc, j = hits[s].key % nc;
    const double w = i == j ? 1.0 : 2.0;
    for (std::size_t p = s; p < e; ++p)
      for (std::size_t q = s; q < e; ++q) g(hits[p].row, hits[q].row) += w * hits[p].value * hits[q].value;
    s = e;
  }
  for (Index k = 0; k < m; ++k)
    if (pr.A[k].slack >= 0) g(k, k) += 1.0;
  return SymMatrix::from_dense(g);
}

/// Rank-one point v v^T of a forward trace with the slack entries each
/// inequality takes at that point (computed from the activations, not from
/// the constraint data).
inline BlockSym lift_trace(const SdpProblem& pr, const ForwardTrace& t) {
  const auto& idx = pr.index;
  Vector v(idx.core_order());
  v(0) = 1.0;
  for (int l = 0; l <= idx.L; ++l) v.segment(idx.offset(l), idx.size(l)) = t.activation(l);
  BlockSym X = BlockSym::zeros(idx);
  X.core = SymMatrix::from_dense(v * v.transpose());
  const double eps2 = pr.region.eps * pr.region.eps;
  for (const auto& cm : pr.A) {
    if (cm.slack < 0) continue;
    double s = 0.0;
    switch (cm.kind) {
      case ConstraintKind::input:
        s = pr.region.p == Norm::l2 ? eps2 - t.x0.squaredNorm() : eps2 - t.x0(cm.neuron) * t.x0(cm.neuron);
        break;
      case ConstraintKind::nonneg: s = t.postacts[cm.layer - 1](cm.neuron); break;
      case ConstraintKind::affine_lower:
        s = t.postacts[cm.layer - 1](cm.neuron) - t.preacts[cm.layer - 1](cm.neuron);
        break;
      default: break;
    }
    X.slack(cm.slack) = s;
  }
  return X;
}

/// Objective <C, X> + c.
inline double objective(const SdpProblem& pr, const BlockSym& X) { return inner(pr.C, X.core) + pr.c; }

/// Dual/multiplier iterate of the augmented Lagrangian
///   -x (a'y + c + s) - <X, A^T y - S - C> + (a'y + c + s)^2 / (2 rho)
///   + |A^T y - S - C|^2 / (2 mu).
struct DualIterate {
  Vector y;
  BlockSym S;
  BlockSym X;
  double s = 0.0;  // logit slack, >= 0
  double x = 0.0;  // logit multiplier

  static DualIterate zeros(const SdpProblem& pr) {
    return {Vector::Zero(pr.m()), BlockSym::zeros(pr.index), BlockSym::zeros(pr.index), 0.0, 0.0};
  }
};

/// A^T(y) - S - C.
inline BlockSym dual_residual(const SdpProblem& pr, const Vector& y, const BlockSym& S) {
  BlockSym r = apply_At(pr, y);
  r -= S;
  r.core -= pr.C;
  return r;
}

/// The theta-dependent part of the augmented Lagrangian (no classifier loss).
inline double lagrangian_terms(const SdpProblem& pr, const DualIterate& it, double mu, double rho) {
  const double g = pr.a.dot(it.y) + pr.c + it.s;
  const BlockSym r = dual_residual(pr, it.y, it.S);
  return -it.x * g - inner(it.X, r) + g * g / (2.0 * rho) + r.frobenius_norm() * r.frobenius_norm() / (2.0 * mu);
}

/// Gradient over (W, b) of lagrangian_terms, with the duals held fixed and
/// (C, c, A, a) rebuilt from params. `pr` must be build_sdp(params, region).
inline NetworkParams grad_theta(const NetworkParams& params, const SdpProblem& pr, const DualIterate& it,
                                double mu, double rho) {
  const auto& idx = pr.index;
  const double g = pr.a.dot(it.y) + pr.c + it.s;
  const double kappa = g / rho - it.x;
  const BlockSym r = dual_residual(pr, it.y, it.S);
  // dT = kappa (da'y + dc) + <G, sum_k y_k dA_k - dC>
  const Matrix G = r.core.dense() / mu - it.X.core.dense();

  NetworkParams grad = params.zeros_like();
  const int h = idx.h;
  for (int l = 1; l <= idx.L; ++l) {
    const Index prev = idx.offset(l - 1), cur = idx.offset(l), fan_in = idx.size(l - 1);
    const Vector y_aff = it.y.segment(pr.row_of(ConstraintKind::affine_lower, l, 0), h);
    const Vector y_deq = it.y.segment(pr.row_of(ConstraintKind::relu_diag, l, 0), h);
    const Vector g_pin_prev = G.row(0).segment(prev, fan_in).transpose();
    const Vector g_pin_cur = G.row(0).segment(cur, h).transpose();
    const auto g_cross = G.block(prev, cur, fan_in, h);  // (x_{l-1}, x_l)
    grad.W[l - 1] = y_aff * g_pin_prev.transpose() - y_deq.asDiagonal() * g_cross.transpose();
    grad.b[l - 1] = -kappa * y_aff - y_deq.cwiseProduct(g_pin_cur);
  }
  grad.W[idx.L].row(0) = -G.row(0).segment(idx.offset(idx.L), h);
  grad.b[idx.L](0) = kappa;
  return grad;
}

}  // namespace safesdp
