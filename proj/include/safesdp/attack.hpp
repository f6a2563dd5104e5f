#pragma once

// Projected gradient ascent on f over the input ball. A batch of random
// starting points is pushed uphill independently with Adam; the best value
// seen is a lower bound on max f.

#include "safesdp/dataset.hpp"
#include "safesdp/network.hpp"
#include "safesdp/numerics.hpp"
#include "safesdp/region.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace safesdp {

struct PgdConfig {
  int batch = 256;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int patience = 100;       // steps without improvement before stopping
  double tolerance = 1e-4;  // improvement that resets patience
  long max_steps = 20000;
  /// Points refined by plain projected ascent once Adam stalls; 0 disables.
  int polish = 16;
  int polish_steps = 2000;

  void validate() const {
    if (batch < 1) throw std::invalid_argument("PgdConfig: batch must be >= 1");
    if (patience < 1) throw std::invalid_argument("PgdConfig: patience must be >= 1");
    if (!(tolerance > 0)) throw std::invalid_argument("PgdConfig: tolerance must be > 0");
    if (!(lr > 0) || beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw std::invalid_argument("PgdConfig: bad Adam parameters");
    if (polish < 0 || polish_steps < 0) throw std::invalid_argument("PgdConfig: polish settings must be >= 0");
  }
};

/// Euclidean projection onto the ball: radial rescale (p = 2) or clamp (p = inf).
inline Vector project(const Vector& x, const InputRegion& r) {
  if (r.p == Norm::linf) return x.cwiseMax(-r.eps).cwiseMin(r.eps);
  const double n = x.norm();
  return n > r.eps ? Vector(x * (r.eps / n)) : x;
}

struct PgdResult {
  double value = -std::numeric_limits<double>::infinity();
  Vector point;
  long steps = 0;
  std::vector<double> best_history;  // best value after each Adam step
};

namespace detail {

// Plain ascent x <- P(x + s g/|g|). When the gradient step fails (typically at
// a kink on the boundary) a few random directions of the same length are
// tried before s is halved.
inline void polish_point(const NetworkParams& params, const InputRegion& r, Vector& x, double& fx, int steps,
                         std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int tries = 2 * static_cast<int>(x.size());
  double s = 0.1 * r.eps;
  for (int k = 0; k < steps && s > 1e-10 * r.eps; ++k) {
    const Vector g = input_gradient(params, forward(params, x));
    bool moved = false;
    for (int t = -1; t < tries && !moved; ++t) {
      Vector dir = g;
      if (t >= 0) dir = Vector::NullaryExpr(x.size(), [&] { return gauss(rng); });
      const double n = dir.norm();
      if (n == 0.0) continue;
      const Vector cand = project(x + (s / n) * dir, r);
      const double fc = logit(params, cand);
      if (fc > fx) {
        x = cand;
        fx = fc;
        moved = true;
      }
    }
    if (!moved) s *= 0.5;
  }
}

}  // namespace detail

inline PgdResult pgd_lower_bound(const NetworkParams& params, const InputRegion& region, const PgdConfig& cfg = {},
                                 std::uint64_t seed = 0) {
  cfg.validate();
  params.validate();
  const int d = params.d;
  const std::size_t b = static_cast<std::size_t>(cfg.batch);
  std::vector<Vector> xs = sample_ball(b, d, region.p, region.eps, seed);
  std::vector<Vector> m(b, Vector::Zero(d)), v(b, Vector::Zero(d));
  std::vector<double> fx(b);

  PgdResult out;
  auto consider = [&](std::size_t i) {
    if (fx[i] > out.value) {
      out.value = fx[i];
      out.point = xs[i];
    }
  };
  for (std::size_t i = 0; i < b; ++i) {
    fx[i] = logit(params, xs[i]);
    consider(i);
  }

  double reference = out.value;  // value the patience counter compares against
  int stale = 0;
  double pow1 = 1.0, pow2 = 1.0;
  for (long t = 1; t <= cfg.max_steps; ++t) {
    pow1 *= cfg.beta1;
    pow2 *= cfg.beta2;
    for (std::size_t i = 0; i < b; ++i) {
      const ForwardTrace tr = forward(params, xs[i]);
      const Vector g = input_gradient(params, tr);
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g.cwiseAbs2();
      const Vector mhat = m[i] / (1.0 - pow1);
      const Vector vhat = v[i] / (1.0 - pow2);
      xs[i] = project(xs[i] + cfg.lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + cfg.adam_eps).matrix()), region);
      fx[i] = logit(params, xs[i]);
      consider(i);
    }
    out.steps = t;
    out.best_history.push_back(out.value);
    if (out.value > reference + cfg.tolerance) {
      reference = out.value;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }

  if (cfg.polish > 0) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(b);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t k = std::min<std::size_t>(b, static_cast<std::size_t>(cfg.polish));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t c) { return fx[a] > fx[c]; });
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t i = order[j];
      detail::polish_point(params, region, xs[i], fx[i], cfg.polish_steps, rng);
      consider(i);
    }
  }
  return out;
}

}  // namespace safesdp
