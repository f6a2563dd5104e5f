#pragma once

// ADMM on the augmented Lagrangian
//
//   L = L_c(theta) - x (a'y + c + s) - <X, A^T y - S - C>
//       + (a'y + c + s)^2 / (2 rho) + |A^T y - S - C|^2 / (2 mu)
//
// Inner steps update (y, S, X); once the dual residual drops below delta the
// logit slack/multiplier (s, x) and the weights theta take one step.
//
// solve_frozen runs the same (y, S, X) loop for a fixed theta but minimizes
// the bound a'y + c itself (x = -1, no logit penalty), which is what a final
// certification needs.

#include "safesdp/dataset.hpp"
#include "safesdp/network.hpp"
#include "safesdp/numerics.hpp"
#include "safesdp/region.hpp"
#include "safesdp/sdp_form.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace safesdp {

struct AdmmHyper {
  double mu = 1.0;      // penalty on the matrix residual
  double rho = 1.0;     // penalty on the logit residual
  double nu = 1.6;      // X step
  double alpha = 0.1;   // x step
  double delta = 1e-3;  // inner tolerance
  double eta = 1e-3;    // weight learning rate
  int reproject_every = 50;

  void validate() const {
    if (!(mu > 0 && rho > 0 && delta >= 0 && eta >= 0 && nu >= 0 && alpha >= 0))
      throw std::invalid_argument("AdmmHyper: mu, rho > 0 and delta, eta, nu, alpha >= 0 required");
    if (reproject_every < 1) throw std::invalid_argument("AdmmHyper: reproject_every must be >= 1");
  }
};

/// SDP data for one theta plus the Gram factorization the y-step needs.
/// `offset` is added to c on every reset; training uses it to enforce
/// a'y + c <= -offset.
struct SdpContext {
  SdpProblem pr;
  double offset = 0.0;
  SymMatrix gram;
  SpdFactor gram_factor;
  Vector ginv_a;  // G^{-1} a
  Vector A_C;     // A(C)

  SdpContext() = default;
  explicit SdpContext(SdpProblem problem) { reset(std::move(problem)); }
  SdpContext(const NetworkParams& params, const InputRegion& region, double offset = 0.0) : offset(offset) {
    reset(build_sdp(params, region));
  }

  void reset(SdpProblem problem) {
    pr = std::move(problem);
    pr.c += offset;
    gram = gram_AAt(pr);
    gram_factor.factor(gram);
    ginv_a = gram_factor.solve(pr.a);
    BlockSym c = BlockSym::zeros(pr.index);
    c.core = pr.C;
    A_C = apply_A(pr, c);
  }

  /// Solves (G / mu + w aa') y = rhs with one step of iterative refinement.
  /// w = 0 drops the rank-one term.
  Vector solve_y(const Vector& rhs, double mu, double w) const {
    auto once = [&](const Vector& r) {
      Vector z = mu * gram_factor.solve(r);
      if (w != 0.0) {
        // Sherman-Morrison with B = mu G^{-1}: K^{-1} r = Br - Ba (w a'Br) / (1 + w a'Ba).
        const double denom = 1.0 + w * mu * pr.a.dot(ginv_a);
        z -= (w * pr.a.dot(z) / denom) * mu * ginv_a;
      }
      return z;
    };
    Vector y = once(rhs);
    y += once(rhs - apply_K(y, mu, w));
    return y;
  }

  Vector apply_K(const Vector& y, double mu, double w) const {
    Vector out = gram.dense() * y / mu;
    if (w != 0.0) out += w * pr.a.dot(y) * pr.a;
    return out;
  }
};

struct AdmmState {
  DualIterate it;
  AdmmHyper hp;
  long outer = 0;       // weight steps taken
  long inner = 0;       // total inner (y, S, X) steps
  long inner_step = 0;  // inner steps since the last weight step

  static AdmmState init(const SdpContext& ctx, const AdmmHyper& hp) {
    hp.validate();
    AdmmState st;
    st.hp = hp;
    st.it = DualIterate::zeros(ctx.pr);
    BlockSym negc = BlockSym::zeros(ctx.pr.index);
    negc.core = -ctx.pr.C;
    st.it.S = psd_project(negc);
    return st;
  }
};

/// Gradient of L in y (without the theta-only classifier term).
inline Vector grad_y(const SdpContext& ctx, const DualIterate& it, double mu, double rho) {
  const auto& pr = ctx.pr;
  const double g = pr.a.dot(it.y) + pr.c + it.s;
  const BlockSym r = dual_residual(pr, it.y, it.S);
  return -it.x * pr.a - apply_A(pr, it.X) + (g / rho) * pr.a + apply_A(pr, r) / mu;
}

/// y = (AA'/mu + aa'/rho)^{-1} [A(S + C)/mu + A(X) - a (c + s)/rho + a x].
inline const Vector& update_y(AdmmState& st, const SdpContext& ctx) {
  const auto& pr = ctx.pr;
  const double mu = st.hp.mu, rho = st.hp.rho;
  const Vector rhs = (apply_A(pr, st.it.S) + ctx.A_C) / mu + apply_A(pr, st.it.X) +
                     (st.it.x - (pr.c + st.it.s) / rho) * pr.a;
  st.it.y = ctx.solve_y(rhs, mu, 1.0 / rho);
  return st.it.y;
}

/// V = A^T y - C - mu X.
inline BlockSym s_step_target(const AdmmState& st, const SdpContext& ctx) {
  BlockSym v = apply_At(ctx.pr, st.it.y);
  v.core -= ctx.pr.C;
  v -= st.hp.mu * st.it.X;
  return v;
}

/// S = psd_project(V).
inline const BlockSym& update_S(AdmmState& st, const SdpContext& ctx) {
  st.it.S = psd_project(s_step_target(st, ctx));
  return st.it.S;
}

/// X <- X - nu (A^T y - S - C) / mu, re-projected onto the PSD cone every
/// reproject_every inner steps.
inline const BlockSym& update_X(AdmmState& st, const SdpContext& ctx) {
  const BlockSym r = dual_residual(ctx.pr, st.it.y, st.it.S);
  st.it.X -= (st.hp.nu / st.hp.mu) * r;
  ++st.inner;
  ++st.inner_step;
  if (st.inner % st.hp.reproject_every == 0) st.it.X = psd_project(st.it.X);
  return st.it.X;
}

inline double residual_norm(const AdmmState& st, const SdpContext& ctx) {
  return dual_residual(ctx.pr, st.it.y, st.it.S).frobenius_norm();
}

inline bool inner_converged(const AdmmState& st, const SdpContext& ctx, double delta) {
  return residual_norm(st, ctx) <= delta;
}

/// One (y, S, X) sweep; returns the residual after it.
inline double inner_step(AdmmState& st, const SdpContext& ctx) {
  update_y(st, ctx);
  update_S(st, ctx);
  update_X(st, ctx);
  return residual_norm(st, ctx);
}

/// s = max(0, rho x - (a'y + c)), x <- x - alpha (a'y + c + s) / rho.
inline void update_s_x(AdmmState& st, const SdpContext& ctx) {
  const double bound = ctx.pr.a.dot(st.it.y) + ctx.pr.c;
  st.it.s = std::max(0.0, st.hp.rho * st.it.x - bound);
  st.it.x -= st.hp.alpha * (bound + st.it.s) / st.hp.rho;
}

/// Full gradient of L in theta: classifier loss plus the SDP terms.
inline NetworkParams lagrangian_gradient(const NetworkParams& params, const AdmmState& st, const SdpContext& ctx,
                                         const Samples& batch, double* loss_out = nullptr) {
  NetworkParams g = grad_theta(params, ctx.pr, st.it, st.hp.mu, st.hp.rho);
  if (!batch.empty()) {
    LossAndGrad lg = loss_and_grad(params, batch);
    g += lg.grad;
    if (loss_out) *loss_out = lg.loss;
  } else if (loss_out) {
    *loss_out = 0.0;
  }
  return g;
}

inline double lagrangian(const NetworkParams& params, const AdmmState& st, const SdpContext& ctx,
                         const Samples& batch) {
  return (batch.empty() ? 0.0 : loss(params, batch)) + lagrangian_terms(ctx.pr, st.it, st.hp.mu, st.hp.rho);
}

/// Heavy-ball buffer for the optional momentum variant of the weight step.
struct WeightOptimizer {
  double momentum = 0.0;
  NetworkParams velocity;
  bool initialized = false;
};

/// theta <- theta - eta * grad L, then rebuilds the SDP data at the new theta.
inline void weight_step(AdmmState& st, NetworkParams& params, SdpContext& ctx, const Samples& batch,
                        WeightOptimizer* opt = nullptr) {
  NetworkParams g = lagrangian_gradient(params, st, ctx, batch);
  if (opt && opt->momentum > 0.0) {
    if (!opt->initialized) {
      opt->velocity = params.zeros_like();
      opt->initialized = true;
    }
    opt->velocity *= opt->momentum;
    opt->velocity += g;
    params.axpy(-st.hp.eta, opt->velocity);
  } else {
    params.axpy(-st.hp.eta, g);
  }
  ++st.outer;
  st.inner_step = 0;
  ctx.reset(build_sdp(params, ctx.pr.region));
}

namespace detail {

// (S, X) as one vector, full dense storage.
inline Vector pack(const BlockSym& S, const BlockSym& X) {
  const Index n = S.core.order(), k = S.slack.size();
  Vector v(2 * (n * n + k));
  v << Eigen::Map<const Vector>(S.core.dense().data(), n * n), S.slack,
      Eigen::Map<const Vector>(X.core.dense().data(), n * n), X.slack;
  return v;
}

inline void unpack(const Vector& v, BlockSym& S, BlockSym& X) {
  const Index n = S.core.order(), k = S.slack.size();
  S.core = SymMatrix::from_dense(Eigen::Map<const Matrix>(v.data(), n, n));
  S.slack = v.segment(n * n, k);
  X.core = SymMatrix::from_dense(Eigen::Map<const Matrix>(v.data() + n * n + k, n, n));
  X.slack = v.segment(2 * (n * n) + k, k);
}

// Type-II Anderson mixing for z <- T(z). step() takes the previous input's
// image g = T(z) and returns the next input. History is dropped whenever the
// fixed-point residual more than doubles.
class Anderson {
 public:
  explicit Anderson(int memory) : m_(std::max(memory, 0)) {}
  bool enabled() const { return m_ > 0; }
  void reset() {
    dF_.clear();
    dG_.clear();
    have_prev_ = false;
  }

  Vector step(const Vector& g) {
    if (!have_z_) {
      z_ = g;
      have_z_ = true;
      return z_;
    }
    const Vector f = g - z_;
    const double fn = f.norm();
    if (have_prev_ && fn > 2.0 * prev_norm_) reset();
    if (have_prev_) {
      dF_.push_back(f - f_prev_);
      dG_.push_back(g - g_prev_);
      if (static_cast<int>(dF_.size()) > m_) {
        dF_.pop_front();
        dG_.pop_front();
      }
    }
    f_prev_ = f;
    g_prev_ = g;
    prev_norm_ = fn;
    have_prev_ = true;
    z_ = g;
    if (!dF_.empty()) {
      const Index c = static_cast<Index>(dF_.size());
      Matrix F(f.size(), c), G(f.size(), c);
      for (Index i = 0; i < c; ++i) {
        F.col(i) = dF_[static_cast<std::size_t>(i)];
        G.col(i) = dG_[static_cast<std::size_t>(i)];
      }
      Matrix M = F.transpose() * F;
      M.diagonal().array() += 1e-10 * std::max(M.diagonal().maxCoeff(), 1e-300);
      const Vector gamma = M.ldlt().solve(F.transpose() * f);
      if (gamma.allFinite()) z_ = g - G * gamma;
    }
    return z_;
  }

 private:
  int m_;
  std::deque<Vector> dF_, dG_;
  Vector z_, f_prev_, g_prev_;
  double prev_norm_ = 0.0;
  bool have_z_ = false, have_prev_ = false;
};

}  // namespace detail

struct FrozenOptions {
  double tol = 1e-6;           // dual residual |A^T y - S - C|_F
  double primal_tol = 1e-6;    // |A(X) - a| / (1 + |a|)
  long max_inner = 20000;
  double mu = 1.0;             // initial penalty
  bool adaptive_mu = true;
  int adapt_every = 20;
  double nu = 1.6;
  int reproject_every = 50;
  int anderson = 0;            // Anderson memory on the (S, X) fixed-point map; 0 = plain ADMM
};

struct FrozenResult {
  DualIterate it;
  double residual = 0.0;         // dual residual
  double primal_residual = 0.0;  // relative
  double bound = 0.0;            // a'y + c
  double primal_value = 0.0;     // <C, X> + c
  long iterations = 0;
  double mu = 0.0;
  bool converged = false;
};

/// Minimizes a'y + c over (y, S PSD) with A^T y - S = C. Warm start from
/// `start` when given.
inline FrozenResult solve_frozen(const SdpContext& ctx, const FrozenOptions& opt = {},
                                 const DualIterate* start = nullptr) {
  const auto& pr = ctx.pr;
  AdmmHyper hp;
  hp.mu = opt.mu;
  hp.nu = opt.nu;
  hp.reproject_every = opt.reproject_every;
  AdmmState st = AdmmState::init(ctx, hp);
  if (start) {
    st.it.y = start->y;
    st.it.S = start->S;
    st.it.X = psd_project(start->X);
  }
  st.it.x = -1.0;
  st.it.s = 0.0;
  const double a_scale = 1.0 + pr.a.norm();
  const double c_scale = 1.0 + pr.C.frobenius_norm();

  FrozenResult out;
  double dual_res = std::numeric_limits<double>::infinity();
  double primal_res = std::numeric_limits<double>::infinity();
  detail::Anderson aa(opt.anderson);
  long k = 0;
  for (; k < opt.max_inner; ++k) {
    const double mu = st.hp.mu;
    const Vector rhs = (apply_A(pr, st.it.S) + ctx.A_C) / mu + apply_A(pr, st.it.X) - pr.a;
    st.it.y = ctx.solve_y(rhs, mu, 0.0);
    update_S(st, ctx);
    update_X(st, ctx);
    dual_res = residual_norm(st, ctx);
    primal_res = (apply_A(pr, st.it.X) - pr.a).norm() / a_scale;
    if (dual_res <= opt.tol && primal_res <= opt.primal_tol) {
      ++k;
      out.converged = true;
      break;
    }
    if (aa.enabled()) {
      if (st.inner % st.hp.reproject_every == 0) aa.reset();  // the map just changed
      detail::unpack(aa.step(detail::pack(st.it.S, st.it.X)), st.it.S, st.it.X);
    }
    if (opt.adaptive_mu && (k + 1) % opt.adapt_every == 0) {
      const double ratio = primal_res / std::max(dual_res / c_scale, 1e-300);
      const double old = st.hp.mu;
      if (ratio > 10.0)
        st.hp.mu = std::min(st.hp.mu * 1.5, 1e4);
      else if (ratio < 0.1)
        st.hp.mu = std::max(st.hp.mu / 1.5, 1e-4);
      if (st.hp.mu != old) aa.reset();
    }
  }
  out.it = st.it;
  out.residual = dual_res;
  out.primal_residual = primal_res;
  out.bound = pr.a.dot(st.it.y) + pr.c;
  out.primal_value = objective(pr, st.it.X);
  out.iterations = k;
  out.mu = st.hp.mu;
  return out;
}

inline FrozenResult solve_frozen(const NetworkParams& params, const InputRegion& region,
                                 const FrozenOptions& opt = {}) {
  return solve_frozen(SdpContext(params, region), opt);
}

}  // namespace safesdp
