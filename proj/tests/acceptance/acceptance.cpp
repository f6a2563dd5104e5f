// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
// the exit status is nonzero when any selected criterion fails.
//
//   acceptance            run criteria 1-9
//   acceptance 3 5        run only those
//   acceptance 3s         non-gating stretch run (d=10, h=30)

#include "safesdp/attack.hpp"
#include "safesdp/experiments.hpp"
#include "safesdp/linear_bounds.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace safesdp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string id;
  double time_limit;  // seconds
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 1. The lifted forward trace is feasible and its objective is the logit.
Outcome rank_one_feasibility() {
  double worst_c = 0.0, worst_o = 0.0;
  for (int s = 0; s < 10; ++s) {
    const int d = 1 + s;
    const int L = 1 + s % 2;
    const InputRegion region(s % 2 ? Norm::linf : Norm::l2, 1.0);
    const NetworkParams p = init_xavier(d, 3 * d, L, 100 + s);
    const SdpProblem pr = build_sdp(p, region);
    for (const Vector& x : sample_ball(100, d, region.p, region.eps, 200 + s)) {
      const ForwardTrace t = forward(p, x);
      const BlockSym X = lift_trace(pr, t);
      worst_c = std::max(worst_c, (apply_A(pr, X) - pr.a).cwiseAbs().maxCoeff());
      worst_c = std::max(worst_c, std::max(0.0, -X.slack.minCoeff()));
      worst_o = std::max(worst_o, std::abs(objective(pr, X) - t.logit));
    }
  }
  return {worst_c <= 1e-8 && worst_o <= 1e-8, fmt("max constraint violation %.2e, max objective error %.2e", worst_c, worst_o)};
}

// 2. brute force <= certified SDP bound, PGD within 1e-3 of brute force.
Outcome exactness_sandwich() {
  double worst_sdp = -1e300, worst_pgd = 0.0;
  for (int s = 0; s < 20; ++s) {
    const NetworkParams p = init_xavier(2, 2, 1, 300 + s);
    for (Norm norm : {Norm::l2, Norm::linf}) {
      const InputRegion region(norm, 1.0);
      const double exact = oracle::brute_force_max_2d(p, region);
      const double cert = certify_network(p, region).certified;
      const double pgd = pgd_lower_bound(p, region, {}, 400 + s).value;
      worst_sdp = std::max(worst_sdp, exact - cert);
      worst_pgd = std::max(worst_pgd, std::abs(pgd - exact));
    }
  }
  // brute force and the certificate are both rounded; 1e-9 absorbs that
  return {worst_sdp <= 1e-9 && worst_pgd <= 1e-3,
          fmt("max(brute - certified) %.2e, max |pgd - brute| %.2e", worst_sdp, worst_pgd)};
}

TrainExperimentConfig training_setup(int d, int h, Norm p, long budget) {
  TrainExperimentConfig ec;
  ec.train.d = d;
  ec.train.h = h;
  ec.train.p = p;
  ec.train.budget = budget;
  ec.train.momentum = 0.9;
  ec.train.hp.eta = 1e-2;
  ec.eval_samples = 100000;
  return ec;
}

// 3. d=5, h=15, p=2: certified safe, recall 1 and accuracy >= 0.90.
Outcome table1(int d, int h, long budget, double min_acc) {
  const TrainOutcome o = run_training_experiment(training_setup(d, h, Norm::l2, budget));
  const TrainRecord& r = o.record;
  const bool pass = r.certified && r.certified_bound <= 0.0 && r.recall == 1.0 && r.accuracy >= min_acc;
  return {pass, fmt("certified %d (bound %.3e), recall %.6f, accuracy %.4f", r.certified, r.certified_bound, r.recall,
                    r.accuracy)};
}

// 4. d=2, h=6, p=inf: certified safe with accuracy >= 0.95.
Outcome table2() {
  const TrainOutcome o = run_training_experiment(training_setup(2, 6, Norm::linf, 20000));
  const TrainRecord& r = o.record;
  return {r.certified && r.accuracy >= 0.95,
          fmt("certified %d (bound %.3e), accuracy %.4f", r.certified, r.certified_bound, r.accuracy)};
}

// 5. median crown/sdp gap ratio >= 3 at d=20, median crown gap increasing in d.
Outcome gap_ordering() {
  GapConfig gc;
  gc.ds = {5, 10, 20};
  gc.ps = {Norm::linf};
  gc.kinds = {NetKind::random};
  gc.seeds = 10;
  gc.eps = 1.0;
  gc.frozen.tol = gc.frozen.primal_tol = 1e-6;
  const auto records = run_gap_experiment(gc);
  std::map<int, std::vector<double>> crown, ratio;
  for (const auto& r : records) {
    if (!r.error.empty()) return {false, "record failed: " + r.error};
    crown[r.d].push_back(r.delta_crown());
    ratio[r.d].push_back(r.delta_crown() / r.delta_sdp());
  }
  const double m5 = median(crown[5]), m10 = median(crown[10]), m20 = median(crown[20]);
  const double r20 = median(ratio[20]);
  return {records.size() == 30 && r20 >= 3.0 && m5 < m10 && m10 < m20,
          fmt("median crown gap %.4f / %.4f / %.4f, median ratio at d=20 %.2f", m5, m10, m20, r20)};
}

// 6. closed form near eps sqrt(dh) / 16 for d = h = 400.
Outcome concentration() {
  double mean = 0.0;
  for (int s = 0; s < 10; ++s) {
    NetworkParams p = init_xavier(400, 400, 1, 600 + s);
    for (auto& b : p.b) b.setZero();
    mean += closed_form_B(p, 1.0) / 10.0;
  }
  const double target = std::sqrt(400.0 * 400.0) / 16.0;
  return {std::abs(mean - target) <= 0.1 * target, fmt("mean %.4f, target %.4f", mean, target)};
}

// 7. certified bound <= 1.2 x the large-width limit, d=100, h=300, L=2, p=2.
Outcome theory_consistency() {
  const double limit = theory_sdp_limit(100, 300, 2, 1.0, Norm::l2);
  FrozenOptions fo;
  fo.tol = fo.primal_tol = 1e-4;
  fo.max_inner = 150;
  double worst = -1e300;
  std::ostringstream bounds;
  for (int s = 0; s < 5; ++s) {
    const double b = certify_network(init_xavier(100, 300, 2, 700 + s), InputRegion(Norm::l2, 1.0), fo).certified;
    worst = std::max(worst, b);
    bounds << (s ? " " : "") << fmt("%.4f", b);
  }
  return {worst <= 1.2 * limit, "certified [" + bounds.str() + fmt("], limit %.4f", limit)};
}

double relative_error(const Vector& g, const Vector& fd) {
  return (g - fd).norm() / std::max(fd.norm(), 1e-12);
}

// 8. theta-gradient of the augmented Lagrangian against central differences.
Outcome gradient_fidelity() {
  double worst = 0.0;
  for (int s = 0; s < 10; ++s) {
    const int d = 2 + s % 5;
    const int h = 3 + s % 4;
    const int L = 1 + s % 2;
    const InputRegion region(s % 3 ? Norm::l2 : Norm::linf, 1.0);
    const NetworkParams p = init_xavier(d, h, L, 800 + s);
    const SdpContext ctx(p, region);
    AdmmHyper hp;
    hp.mu = 0.7;
    hp.rho = 1.3;
    AdmmState st = AdmmState::init(ctx, hp);
    st.it = fixture::random_iterate(ctx.pr, 900 + s);
    for (bool with_loss : {false, true}) {
      const Samples batch = with_loss ? sample_shells(region.p, 32, d, 1.3, 1000 + s) : Samples{};
      const Vector g = lagrangian_gradient(p, st, ctx, batch).flatten();
      const Vector theta = p.flatten();
      Vector fd(theta.size());
      const double step = 1e-6;
      for (Index k = 0; k < theta.size(); ++k) {
        NetworkParams q = p;
        Vector t = theta;
        t(k) += step;
        q.unflatten(t);
        const double up = lagrangian(q, st, SdpContext(q, region), batch);
        t(k) -= 2 * step;
        q.unflatten(t);
        const double dn = lagrangian(q, st, SdpContext(q, region), batch);
        fd(k) = (up - dn) / (2 * step);
      }
      worst = std::max(worst, relative_error(g, fd));
    }
  }
  return {worst <= 1e-4, fmt("max relative error %.2e", worst)};
}

// 9. y-step stationarity, S-step projection optimality, frozen convergence.
Outcome admm_contracts() {
  double worst_y = 0.0, worst_lmin = 0.0, worst_ip = 0.0;
  for (int s = 0; s < 5; ++s) {
    const NetworkParams p = init_xavier(3 + s, 6 + s, 1 + s % 2, 1100 + s);
    const SdpContext ctx(p, InputRegion(s % 2 ? Norm::linf : Norm::l2, 1.0));
    AdmmState st = AdmmState::init(ctx, AdmmHyper{});
    st.it.x = 0.3;
    for (int k = 0; k < 200; ++k) {
      update_y(st, ctx);
      const double gy = grad_y(ctx, st.it, st.hp.mu, st.hp.rho).norm();
      worst_y = std::max(worst_y, gy / (1.0 + st.it.y.norm()));
      const BlockSym V = s_step_target(st, ctx);
      update_S(st, ctx);
      worst_lmin = std::max(worst_lmin, -st.it.S.lambda_min());
      BlockSym gap = st.it.S;
      gap -= V;
      worst_ip = std::max(worst_ip, std::abs(inner(st.it.S, gap)));
      update_X(st, ctx);
      if (k % 10 == 9) update_s_x(st, ctx);
    }
  }
  // one fixed instance, 1000 inner iterations
  FrozenOptions fo;
  fo.max_inner = 1000;
  fo.tol = 1e-6;
  fo.primal_tol = 1e-6;
  fo.anderson = 10;
  const FrozenResult fr = solve_frozen(init_xavier(5, 15, 2, 0), InputRegion(Norm::l2, 1.0), fo);
  const bool pass = worst_y <= 1e-8 && worst_lmin <= 1e-8 && worst_ip <= 1e-6 && fr.residual <= 1e-6;
  return {pass, fmt("|grad_y|/(1+|y|) %.2e, -lambda_min(S) %.2e, |<S,S-V>| %.2e, frozen residual %.2e after %ld",
                    worst_y, worst_lmin, worst_ip, fr.residual, fr.iterations)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {"1", 60, rank_one_feasibility},
      {"2", 120, exactness_sandwich},
      {"3", 600, [] { return table1(5, 15, 5000, 0.90); }},
      {"4", 900, table2},
      {"5", 1200, gap_ordering},
      {"6", 60, concentration},
      {"7", 600, theory_consistency},
      {"8", 120, gradient_fidelity},
      {"9", 300, admm_contracts},
      {"3s", 1800, [] { return table1(10, 30, table1_budget(10, 30), 0.93); }},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  if (wanted.empty())
    for (const auto& c : all)
      if (c.id != "3s") wanted.push_back(c.id);

  int failed = 0;
  for (const auto& id : wanted) {
    const auto it = std::find_if(all.begin(), all.end(), [&](const Criterion& c) { return c.id == id; });
    if (it == all.end()) {
      std::printf("criterion %s: unknown\n", id.c_str());
      return 1;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    if (secs > it->time_limit) {
      o.pass = false;
      o.detail += fmt(" [over time limit %.0f s]", it->time_limit);
    }
    std::printf("criterion %s: %s  %s  (%.1f s)\n", id.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
