#pragma once

// Full training scheme: inner ADMM sweeps until the dual residual is below
// delta, then one (s, x) step and one weight step. Every checkpoint_every
// weight steps the current network is certified with a frozen solve; the
// most accurate certified-safe network is kept.

#include "safesdp/admm.hpp"
#include "safesdp/dataset.hpp"
#include "safesdp/network.hpp"
#include "safesdp/verify.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace safesdp {

struct TrainConfig {
  int d = 5;
  int h = 15;
  int L = 2;
  Norm p = Norm::l2;   // dataset family and the safety region's norm
  double eps = 1.0;    // safety region radius (the inner class)
  double R = 1.3;      // outer class radius
  AdmmHyper hp{0.65, 1.21, 1.6, 0.046, 2.4e-3, 2.65e-3, 50};
  long budget = 5000;  // weight steps
  long max_inner_per_step = 200;
  int batch = 256;
  std::uint64_t seed = 0;
  int checkpoint_every = 100;
  double checkpoint_tol = 1e-6;
  long checkpoint_max_inner = 5000;
  int val_samples = 10000;
  double momentum = 0.0;
  /// Lower the output bias of a checkpoint whose certified bound is positive
  /// by that amount (plus calibration_slack). The bias enters the bound
  /// linearly and not the trace cap, so the shifted network is certified.
  bool calibrate_bias = true;
  /// Training enforces a'y + c <= -safety_margin instead of <= 0.
  double safety_margin = 0.0;
  double calibration_slack = 1e-6;

  InputRegion region() const { return {p, eps}; }

  void validate() const {
    if (d < 1 || h < 1 || L < 1) throw std::invalid_argument("TrainConfig: d, h, L must be >= 1");
    if (!(eps > 0) || !(R > eps)) throw std::invalid_argument("TrainConfig: need 0 < eps < R");
    if (budget < 0 || max_inner_per_step < 1 || batch < 1 || checkpoint_every < 1 || val_samples < 1)
      throw std::invalid_argument("TrainConfig: budgets and sizes must be positive");
    if (safety_margin < 0) throw std::invalid_argument("TrainConfig: safety_margin must be >= 0");
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
    hp.validate();
  }
};

struct TrainLogRecord {
  long iter = 0;
  long inner_iters = 0;
  double lagrangian = 0.0;
  double logit_bound = 0.0;  // a'y + c
  double accuracy = 0.0;     // on the step's batch
};

struct TrainLog {
  std::vector<TrainLogRecord> records;

  void append(const TrainLogRecord& r) { records.push_back(r); }
  void write_csv(std::ostream& os) const {
    os << "iter,inner_iters,lagrangian,logit_bound,accuracy\n";
    os.precision(17);
    for (const auto& r : records)
      os << r.iter << ',' << r.inner_iters << ',' << r.lagrangian << ',' << r.logit_bound << ',' << r.accuracy << '\n';
  }
};

struct Checkpoint {
  long step = 0;
  NetworkParams params;
  CertifiedBound bound;
  double val_accuracy = 0.0;
  double frozen_residual = 0.0;
  long frozen_iterations = 0;
  double bias_shift = 0.0;  // subtracted from the output bias by calibration
};

struct TrainResult {
  NetworkParams final_params;
  std::optional<Checkpoint> best;  // most accurate certified-safe checkpoint
  std::vector<Checkpoint> checkpoints;
  TrainLog log;
  double seconds_train = 0.0;    // excluding checkpoint certification
  double seconds_certify = 0.0;
};

/// Draws a batch from the dataset family of `p`.
inline Samples draw_batch(Norm p, int d, std::size_t n, double R, std::mt19937_64& rng) {
  return sample_shells(p, n, d, R, rng());
}

inline double batch_accuracy(const NetworkParams& params, const Samples& s) { return evaluate(params, s).accuracy; }

inline Checkpoint certify_checkpoint(const NetworkParams& params, const InputRegion& region, const Samples& val,
                                     const FrozenOptions& fo, long step, DualIterate* warm = nullptr,
                                     double calibration_slack = -1.0) {
  Checkpoint cp;
  cp.step = step;
  cp.params = params;
  SdpContext ctx(params, region);
  const bool use_warm = warm && warm->y.size() == ctx.pr.m();
  const FrozenResult fr = solve_frozen(ctx, fo, use_warm ? warm : nullptr);
  if (warm) *warm = fr.it;
  cp.bound = certify_dual(ctx.pr, fr.it.y, params, region);
  cp.frozen_residual = fr.residual;
  cp.frozen_iterations = fr.iterations;
  if (calibration_slack >= 0.0 && !cp.bound.safe) {
    cp.bias_shift = cp.bound.certified + calibration_slack;
    cp.params.b[params.L](0) -= cp.bias_shift;
    ctx.reset(build_sdp(cp.params, region));
    cp.bound = certify_dual(ctx.pr, fr.it.y, cp.params, region);
  }
  cp.val_accuracy = evaluate(cp.params, val).accuracy;
  return cp;
}

using TrainObserver = std::function<void(const TrainLogRecord&)>;

inline TrainResult run_training(const TrainConfig& cfg, const TrainObserver& observer = {}) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  const InputRegion region = cfg.region();
  std::mt19937_64 rng(cfg.seed);
  NetworkParams params = init_xavier(cfg.d, cfg.h, cfg.L, rng());
  const Samples val = sample_shells(cfg.p, static_cast<std::size_t>(cfg.val_samples), cfg.d, cfg.R, rng());

  SdpContext ctx(params, region, cfg.safety_margin);
  AdmmState st = AdmmState::init(ctx, cfg.hp);
  WeightOptimizer opt;
  opt.momentum = cfg.momentum;

  FrozenOptions fo;
  fo.tol = cfg.checkpoint_tol;
  fo.primal_tol = cfg.checkpoint_tol;
  fo.max_inner = cfg.checkpoint_max_inner;
  DualIterate warm;

  TrainResult out;
  double cert_seconds = 0.0;
  const auto t0 = clock::now();
  auto checkpoint = [&](long step) {
    const auto c0 = clock::now();
    Checkpoint cp = certify_checkpoint(params, region, val, fo, step, &warm,
                                       cfg.calibrate_bias ? cfg.calibration_slack : -1.0);
    if (cp.bound.safe && (!out.best || cp.val_accuracy > out.best->val_accuracy)) out.best = cp;
    out.checkpoints.push_back(std::move(cp));
    cert_seconds += std::chrono::duration<double>(clock::now() - c0).count();
  };

  for (long step = 0; step < cfg.budget; ++step) {
    long k = 0;
    while (k < cfg.max_inner_per_step) {
      ++k;
      if (inner_step(st, ctx) <= st.hp.delta) break;
    }
    update_s_x(st, ctx);
    const Samples batch = draw_batch(cfg.p, cfg.d, static_cast<std::size_t>(cfg.batch), cfg.R, rng);
    TrainLogRecord rec;
    rec.iter = step + 1;
    rec.inner_iters = k;
    rec.logit_bound = ctx.pr.a.dot(st.it.y) + ctx.pr.c - ctx.offset;
    rec.lagrangian = lagrangian(params, st, ctx, batch);
    rec.accuracy = batch_accuracy(params, batch);
    weight_step(st, params, ctx, batch, &opt);
    out.log.append(rec);
    if (observer) observer(rec);
    if ((step + 1) % cfg.checkpoint_every == 0) checkpoint(step + 1);
  }
  if (cfg.budget % cfg.checkpoint_every != 0 || cfg.budget == 0) checkpoint(cfg.budget);

  out.final_params = params;
  out.seconds_certify = cert_seconds;
  out.seconds_train = std::chrono::duration<double>(clock::now() - t0).count() - cert_seconds;
  return out;
}

}  // namespace safesdp
