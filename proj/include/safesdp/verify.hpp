#pragma once

// Turning an approximate dual point into a rigorous upper bound on
// max_{x in region} f(x).
//
// For any feasible primal X, <C,X> + c = a'y + c - <A^T(y) - C, X>. The
// matrix A^T(y) - C is block diagonal (core block, then one diagonal entry y_k
// per slack), so
//
//   <C,X> + c <= a'y + c + tau_core * max(0, -lambda_min(core))
//                        + sum_groups cap_g * max(0, -min_{k in g} y_k),
//
// where tau_core bounds tr of the core block and cap_g bounds the sum of the
// slacks of group g over the feasible set. Both come from the layer-wise
// nuclear-norm recursion
//
//   sqrt(tr P[x_l x_l^T]) <= |W_l|_2 sqrt(tr P[x_{l-1} x_{l-1}^T]) + |b_l|_2.

#include "safesdp/admm.hpp"
#include "safesdp/network.hpp"
#include "safesdp/numerics.hpp"
#include "safesdp/region.hpp"
#include "safesdp/sdp_form.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace safesdp {

inline double spectral_norm(const Matrix& w) {
  if (w.size() == 0) return 0.0;
  if (w.rows() == 1 || w.cols() == 1) return w.norm();
  Eigen::BDCSVD<Matrix> svd(w);
  return svd.singularValues()(0);
}

/// A-priori bounds over the feasible set of the relaxation.
struct TraceCap {
  /// layer_norm[l] bounds sqrt(tr P[x_l x_l^T]) (and so |P[x_l]|_2), l = 0..L.
  std::vector<double> layer_norm;
  double core = 0.0;  // bound on the trace of the core block
  /// Per slack group: bound on the sum of the group's slack entries, and the
  /// slack positions in the group.
  std::vector<double> group_cap;
  std::vector<std::vector<Index>> group_members;
  double slack_budget = 0.0;
  double tau = 0.0;  // core + slack_budget, bounds tr X

  /// Group of each slack position.
  std::vector<int> group_of;
};

inline TraceCap trace_cap(const NetworkParams& params, const InputRegion& region) {
  params.validate();
  TraceCap cap;
  const int L = params.L, h = params.h, d = params.d;
  const double eps2 = region.eps * region.eps;
  const double input_trace = region.p == Norm::l2 ? eps2 : d * eps2;
  cap.layer_norm.push_back(std::sqrt(input_trace));
  for (int l = 1; l <= L; ++l)
    cap.layer_norm.push_back(spectral_norm(params.W[l - 1]) * cap.layer_norm.back() + params.b[l - 1].norm());
  cap.core = 1.0;
  for (double r : cap.layer_norm) cap.core += r * r;

  // Slack groups follow the constraint order of build_sdp.
  Index next = 0;
  auto add_group = [&](Index count, double bound) {
    std::vector<Index> members;
    for (Index k = 0; k < count; ++k) {
      members.push_back(next++);
      cap.group_of.push_back(static_cast<int>(cap.group_cap.size()));
    }
    cap.group_members.push_back(std::move(members));
    cap.group_cap.push_back(bound);
  };
  // Input slack(s): eps^2 - x_0 entries, summing to at most the input trace.
  add_group(region.p == Norm::l2 ? 1 : d, input_trace);
  const double sqrt_h = std::sqrt(static_cast<double>(h));
  for (int l = 1; l <= L; ++l) {
    const double r_cur = cap.layer_norm[l], r_prev = cap.layer_norm[l - 1];
    // nonneg: slack_j = P[x_l]_j, sum <= sqrt(h) |P[x_l]|.
    add_group(h, sqrt_h * r_cur);
    // affine: slack_j = P[x_l]_j - (W_l P[x_{l-1}])_j - b_j.
    const Vector col_sums = params.W[l - 1].colwise().sum().transpose();
    add_group(h, sqrt_h * r_cur + col_sums.norm() * r_prev + std::abs(params.b[l - 1].sum()));
  }
  for (double g : cap.group_cap) cap.slack_budget += g;
  cap.tau = cap.core + cap.slack_budget;
  return cap;
}

struct CertifiedBound {
  double dual_value = 0.0;        // a'y + c
  double lambda_min = 0.0;        // of A^T(y) - C over the full n x n matrix
  double lambda_min_core = 0.0;   // of its core block
  double tau = 0.0;               // trace cap
  double correction = 0.0;        // certified - dual_value
  double certified = 0.0;
  bool safe = false;              // certified <= 0

  /// Looser single-number correction tau * max(0, -lambda_min); always
  /// >= certified.
  double uniform_certified() const { return dual_value + tau * std::max(0.0, -lambda_min); }
};

/// Sound upper bound on max over the region of f, from any y.
inline CertifiedBound certify_dual(const SdpProblem& pr, const Vector& y, const TraceCap& cap) {
  if (y.size() != pr.m()) throw InvalidInput("certify_dual: y has the wrong size");
  CertifiedBound out;
  BlockSym s = apply_At(pr, y);
  s.core -= pr.C;
  out.dual_value = pr.a.dot(y) + pr.c;
  out.lambda_min_core = lambda_min(s.core);
  out.lambda_min = s.slack.size() ? std::min(out.lambda_min_core, s.slack.minCoeff()) : out.lambda_min_core;
  out.tau = cap.tau;
  double corr = cap.core * std::max(0.0, -out.lambda_min_core);
  for (std::size_t g = 0; g < cap.group_cap.size(); ++g) {
    double worst = 0.0;
    for (Index k : cap.group_members[g]) worst = std::max(worst, -s.slack(k));
    corr += cap.group_cap[g] * worst;
  }
  out.correction = corr;
  out.certified = out.dual_value + corr;
  out.safe = out.certified <= 0.0;
  return out;
}

inline CertifiedBound certify_dual(const SdpProblem& pr, const Vector& y, const NetworkParams& params,
                                   const InputRegion& region) {
  return certify_dual(pr, y, trace_cap(params, region));
}

/// Frozen solve plus certificate over a region.
inline CertifiedBound certify_network(const NetworkParams& params, const InputRegion& region,
                                      const FrozenOptions& opt = {}, FrozenResult* solve = nullptr) {
  const SdpContext ctx(params, region);
  FrozenResult fr = solve_frozen(ctx, opt);
  CertifiedBound cb = certify_dual(ctx.pr, fr.it.y, params, region);
  if (solve) *solve = std::move(fr);
  return cb;
}

/// Every point of the unit l2 ball (the inner class and its interior) gets a
/// nonpositive logit.
inline bool certify_recall(const NetworkParams& params, const FrozenOptions& opt = {}) {
  return certify_network(params, InputRegion(Norm::l2, 1.0), opt).safe;
}

}  // namespace safesdp
