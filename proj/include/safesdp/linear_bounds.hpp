#pragma once

// CROWN-style backward linear relaxation with optimizable lower slopes,
// interval intermediate bounds, the one-layer closed form and the limiting
// values predicted by random-matrix theory.

#include "safesdp/network.hpp"
#include "safesdp/numerics.hpp"
#include "safesdp/region.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace safesdp {

/// Elementwise bounds on every hidden pre-activation, one entry per hidden layer.
struct PreactBounds {
  std::vector<Vector> lower;
  std::vector<Vector> upper;
};

/// Per hidden layer, the lower ReLU slope of each neuron. Only unstable
/// neurons read their entry; all entries live in [0, 1].
using AlphaVector = std::vector<Vector>;

inline PreactBounds interval_bounds(const NetworkParams& params, const InputRegion& region) {
  params.validate();
  PreactBounds out;
  const Matrix& W1 = params.W[0];
  Vector radius(W1.rows());
  for (Index j = 0; j < W1.rows(); ++j) radius(j) = region.eps * dual_norm_of(W1.row(j).transpose(), region.p);
  out.lower.push_back(params.b[0] - radius);
  out.upper.push_back(params.b[0] + radius);
  for (int l = 1; l < params.L; ++l) {
    const Vector lo = out.lower.back().cwiseMax(0.0);
    const Vector hi = out.upper.back().cwiseMax(0.0);
    const Vector mid = 0.5 * (lo + hi);
    const Vector half = 0.5 * (hi - lo);
    const Vector c = params.W[l] * mid + params.b[l];
    const Vector r = params.W[l].cwiseAbs() * half;
    out.lower.push_back(c - r);
    out.upper.push_back(c + r);
  }
  return out;
}

inline AlphaVector constant_alpha(const NetworkParams& params, double value) {
  return AlphaVector(static_cast<std::size_t>(params.L), Vector::Constant(params.h, std::clamp(value, 0.0, 1.0)));
}

/// Slope choice that favours the smaller relaxation area: 1 when u > -l.
inline AlphaVector adaptive_alpha(const PreactBounds& pb) {
  AlphaVector a;
  for (std::size_t l = 0; l < pb.lower.size(); ++l)
    a.push_back((pb.upper[l].array() > -pb.lower[l].array()).cast<double>().matrix());
  return a;
}

struct CrownResult {
  double bound = 0.0;
  AlphaVector grad;  // d bound / d alpha; zero for stable neurons
};

namespace detail {

enum class Relu { active, inactive, upper, lower };

// One backward pass. Per layer the coefficient lambda on x_l is mapped to
// mu on z_l by the relaxation; the bound is const + eps |lambda_0|_q.
inline CrownResult crown_pass(const NetworkParams& params, const InputRegion& region, const PreactBounds& pb,
                              const AlphaVector& alpha, bool want_grad) {
  const int L = params.L;
  std::vector<Vector> lambda(static_cast<std::size_t>(L) + 1);
  std::vector<Vector> slope(static_cast<std::size_t>(L) + 1);
  std::vector<std::vector<Relu>> kind(static_cast<std::size_t>(L) + 1);
  double bound = params.b[L](0);
  Vector lam = params.W[L].row(0).transpose();
  for (int l = L; l >= 1; --l) {
    const Vector& lo = pb.lower[l - 1];
    const Vector& hi = pb.upper[l - 1];
    const Vector& al = alpha[l - 1];
    Vector mu(lam.size());
    Vector s = Vector::Zero(lam.size());
    auto& kd = kind[l];
    kd.assign(static_cast<std::size_t>(lam.size()), Relu::inactive);
    for (Index j = 0; j < lam.size(); ++j) {
      if (lo(j) >= 0.0) {
        kd[j] = Relu::active;
        mu(j) = lam(j);
      } else if (hi(j) <= 0.0) {
        mu(j) = 0.0;
      } else if (lam(j) >= 0.0) {
        kd[j] = Relu::upper;
        s(j) = hi(j) / (hi(j) - lo(j));
        mu(j) = lam(j) * s(j);
        bound -= lam(j) * s(j) * lo(j);
      } else {
        kd[j] = Relu::lower;
        mu(j) = lam(j) * std::clamp(al(j), 0.0, 1.0);
      }
    }
    lambda[l] = lam;
    slope[l] = s;
    bound += mu.dot(params.b[l - 1]);
    lam = params.W[l - 1].transpose() * mu;
  }
  bound += region.eps * dual_norm_of(lam, region.p);

  CrownResult out;
  out.bound = bound;
  if (!want_grad) return out;
  out.grad.resize(static_cast<std::size_t>(L));
  // adjoint of lambda_0 under eps |.|_q
  Vector bar = region.p == Norm::l2 ? (lam.norm() > 0 ? Vector(region.eps * lam / lam.norm()) : Vector::Zero(lam.size()))
                                    : Vector(region.eps * lam.cwiseSign());
  for (int l = 1; l <= L; ++l) {
    const Vector mubar = params.W[l - 1] * bar + params.b[l - 1];
    Vector g = Vector::Zero(mubar.size());
    Vector next(mubar.size());
    for (Index j = 0; j < mubar.size(); ++j) {
      switch (kind[l][j]) {
        case Relu::active: next(j) = mubar(j); break;
        case Relu::inactive: next(j) = 0.0; break;
        case Relu::upper:
          next(j) = mubar(j) * slope[l](j) - slope[l](j) * pb.lower[l - 1](j);
          break;
        case Relu::lower:
          next(j) = mubar(j) * std::clamp(alpha[l - 1](j), 0.0, 1.0);
          g(j) = mubar(j) * lambda[l](j);
          break;
      }
    }
    out.grad[l - 1] = g;
    bar = next;
  }
  return out;
}

}  // namespace detail

inline double crown_upper_bound(const NetworkParams& params, const InputRegion& region, const PreactBounds& pb,
                                const AlphaVector& alpha) {
  if (static_cast<int>(alpha.size()) != params.L) throw std::invalid_argument("crown_upper_bound: alpha has wrong depth");
  return detail::crown_pass(params, region, pb, alpha, false).bound;
}

inline double crown_upper_bound(const NetworkParams& params, const InputRegion& region, const AlphaVector& alpha) {
  return crown_upper_bound(params, region, interval_bounds(params, region), alpha);
}

inline CrownResult crown_bound_and_grad(const NetworkParams& params, const InputRegion& region, const PreactBounds& pb,
                                        const AlphaVector& alpha) {
  return detail::crown_pass(params, region, pb, alpha, true);
}

struct AlphaResult {
  AlphaVector alpha;
  double bound = 0.0;
};

/// Projected gradient descent on the bound over alpha in [0,1], keeping the
/// best iterate. alpha = 0, alpha = 1 and the adaptive choice are all tried.
inline AlphaResult optimize_alpha(const NetworkParams& params, const InputRegion& region, int steps = 100,
                                  double lr = 0.1) {
  if (steps < 0 || !(lr > 0)) throw std::invalid_argument("optimize_alpha: need steps >= 0 and lr > 0");
  const PreactBounds pb = interval_bounds(params, region);
  AlphaResult best;
  best.alpha = constant_alpha(params, 0.0);
  best.bound = crown_upper_bound(params, region, pb, best.alpha);
  auto consider = [&](const AlphaVector& a, double b) {
    if (b < best.bound) {
      best.bound = b;
      best.alpha = a;
    }
  };
  const AlphaVector ones = constant_alpha(params, 1.0);
  consider(ones, crown_upper_bound(params, region, pb, ones));

  AlphaVector a = adaptive_alpha(pb);
  for (int t = 0; t <= steps; ++t) {
    const CrownResult r = crown_bound_and_grad(params, region, pb, a);
    consider(a, r.bound);
    if (t == steps) break;
    for (std::size_t l = 0; l < a.size(); ++l) a[l] = (a[l] - lr * r.grad[l]).cwiseMax(0.0).cwiseMin(1.0);
  }
  return best;
}

/// One hidden layer, no biases, p = inf: (eps/2) sum_j [W2_j]_+ |row_j(W1)|_1.
inline double closed_form_B(const NetworkParams& params, double eps) {
  if (params.L != 1) throw std::invalid_argument("closed_form_B: needs one hidden layer");
  double s = 0.0;
  for (Index j = 0; j < params.h; ++j) {
    const double w2 = params.W[1](0, j);
    if (w2 >= 0.0) s += w2 * params.W[0].row(j).lpNorm<1>();
  }
  return 0.5 * eps * s;
}

/// Limiting spectral norm of a b x a Xavier matrix: (sqrt a + sqrt b) / sqrt(3a).
inline double bai_yin_norm(double a, double b) {
  if (!(a > 0) || !(b > 0)) throw std::invalid_argument("bai_yin_norm: dimensions must be positive");
  return (std::sqrt(a) + std::sqrt(b)) / std::sqrt(3.0 * a);
}

/// Large-width limit of the SDP bound for a Xavier network.
inline double theory_sdp_limit(int d, int h, int L, double eps, Norm p) {
  if (d < 1 || h < 1 || L < 1 || !(eps > 0)) throw std::invalid_argument("theory_sdp_limit: bad arguments");
  const double nuclear = p == Norm::l2 ? eps * eps : d * eps * eps;
  const double two = std::pow(2.0, L - 1);
  const double ratio = static_cast<double>(h) / d;
  const double s3 = std::sqrt(3.0);
  return two / std::pow(s3, L + 1) * (1.0 + std::sqrt(ratio)) * std::sqrt(nuclear) +
         std::sqrt(ratio / 3.0) * two / std::pow(s3, L) + (std::pow(2.0 / s3, L - 1) - 1.0) / (2.0 * s3 - 3.0);
}

}  // namespace safesdp
