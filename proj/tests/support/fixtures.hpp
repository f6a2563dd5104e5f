#pragma once

// Random instances shared by the test suites.

#include "safesdp/sdp_form.hpp"

#include "support/oracles.hpp"

#include <cstdint>
#include <random>

namespace safesdp::fixture {

inline BlockSym random_block(const BlockIndex& idx, std::uint64_t seed, bool psd = false) {
  BlockSym b = BlockSym::zeros(idx);
  Matrix r = oracle::random_symmetric(static_cast<int>(idx.core_order()), seed);
  if (psd) r = r * r.transpose() / static_cast<double>(idx.core_order());
  b.core = SymMatrix::from_dense(r);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Index k = 0; k < idx.slack_count; ++k) b.slack(k) = psd ? std::abs(g(rng)) : g(rng);
  return b;
}

inline Vector random_vector(Index n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

/// Random multipliers with X, S PSD and s >= 0.
inline DualIterate random_iterate(const SdpProblem& pr, std::uint64_t seed) {
  DualIterate it;
  it.y = random_vector(pr.m(), seed);
  it.S = random_block(pr.index, seed + 10, true);
  it.X = random_block(pr.index, seed + 20, true);
  std::mt19937_64 rng(seed + 30);
  std::normal_distribution<double> g(0.0, 1.0);
  it.s = std::abs(g(rng));
  it.x = g(rng);
  return it;
}

}  // namespace safesdp::fixture
