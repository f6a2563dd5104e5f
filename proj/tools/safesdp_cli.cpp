// Command-line front end: train, verify, attack, gap, hypersearch, theory.
// Every numeric flag may also come from a JSON object given with --config;
// flags on the command line win over the file.

#include "safesdp/experiments.hpp"
#include "safesdp/io.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

using namespace safesdp;

namespace {

constexpr int kExitUnsafe = 2;

// Binds an option to a variable and remembers it so unset options can be
// filled from the config file after parsing.
struct Options {
  CLI::App* app;
  std::vector<std::function<void(const json&)>> fillers;

  explicit Options(CLI::App* a) : app(a) { app->set_help_flag("--help", "Print this help message and exit"); }

  template <class T>
  CLI::Option* add(const std::string& name, T& var, const std::string& help) {
    CLI::Option* o = app->add_option("--" + name, var, help)->capture_default_str();
    fillers.push_back([o, &var, name](const json& cfg) {
      if (o->count() == 0 && cfg.contains(name)) var = cfg.at(name).get<T>();
    });
    return o;
  }

  void fill(const std::string& path) {
    if (path.empty()) return;
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read config " + path);
    json cfg;
    is >> cfg;
    if (!cfg.is_object()) throw std::invalid_argument("config must be a JSON object");
    for (auto& f : fillers) f(cfg);
  }
};

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw std::runtime_error("cannot write " + path);
  return file;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe ReLU classifiers with SDP certificates"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "Print this help message and exit");  // frees -h for the width flag
  std::string config_path;
  app.add_option("--config", config_path, "JSON file with default flag values");

  // shared flags
  int d = 5, h = 15, L = 2;
  std::string p_str = "2";
  double eps = 1.0, tol = 1e-6;
  std::uint64_t seed = 0;
  std::string out_path;
  bool require_safe = false;

  // train
  auto* train = app.add_subcommand("train", "Train a certified-safe classifier");
  Options tr(train);
  TrainConfig tc;
  long budget = -1;
  std::string log_path, model_path, record_path;
  int eval_samples = 100000;
  tr.add("d", d, "input dimension");
  tr.add("h", h, "hidden width");
  tr.add("L", L, "hidden layers");
  tr.add("p", p_str, "norm: 2 or inf");
  tr.add("eps", eps, "safety region radius");
  tr.add("R", tc.R, "outer shell radius");
  tr.add("budget", budget, "weight steps (default: reference budget for d, h)");
  tr.add("seed", seed, "random seed");
  tr.add("tol", tol, "checkpoint certification tolerance");
  tr.add("mu", tc.hp.mu, "ADMM mu");
  tr.add("rho", tc.hp.rho, "ADMM rho");
  tr.add("nu", tc.hp.nu, "ADMM X step");
  tr.add("alpha", tc.hp.alpha, "logit multiplier step");
  tr.add("delta", tc.hp.delta, "inner residual tolerance");
  tr.add("eta", tc.hp.eta, "weight learning rate");
  tr.add("momentum", tc.momentum, "heavy-ball momentum on weight steps");
  tr.add("batch", tc.batch, "batch size");
  tr.add("checkpoint-every", tc.checkpoint_every, "steps between certified checkpoints");
  tr.add("eval-samples", eval_samples, "fresh samples for the final evaluation");
  tr.add("out", model_path, "write the best safe model (JSON)");
  tr.add("log", log_path, "write the per-step log (CSV)");
  tr.add("record", record_path, "write the summary record (CSV)");
  train->add_flag("--require-safe", require_safe, "exit 2 when no checkpoint certifies");

  // verify
  auto* verify = app.add_subcommand("verify", "Certify max f <= 0 over a ball and print a JSON report");
  Options ve(verify);
  std::string model_in;
  long max_inner = 20000;
  ve.add("model", model_in, "model JSON")->required();
  ve.add("p", p_str, "norm: 2 or inf");
  ve.add("eps", eps, "ball radius");
  ve.add("tol", tol, "solver tolerance");
  ve.add("max-iter", max_inner, "solver iteration cap");
  int anderson = 0;
  ve.add("anderson", anderson, "Anderson acceleration memory (0 = off)");
  ve.add("out", out_path, "write the report here as well");
  verify->add_flag("--require-safe", require_safe, "exit 2 when the certificate fails");

  // attack
  auto* attack = app.add_subcommand("attack", "PGD lower bound on max f over a ball");
  Options at(attack);
  PgdConfig pgd;
  at.add("model", model_in, "model JSON")->required();
  at.add("p", p_str, "norm: 2 or inf");
  at.add("eps", eps, "ball radius");
  at.add("seed", seed, "random seed");
  at.add("batch", pgd.batch, "parallel starting points");
  at.add("lr", pgd.lr, "Adam learning rate");
  at.add("out", out_path, "write the result JSON here as well");

  // gap
  auto* gap = app.add_subcommand("gap", "SDP / CROWN / PGD bound gaps on random or trained nets");
  Options ga(gap);
  GapConfig gc;
  std::string d_list = "5,10,20", p_list = "inf", kind_list = "random";
  int seeds = 10, gap_L = 1;
  unsigned threads = 1;
  ga.add("d", d_list, "comma-separated input dimensions");
  ga.add("p", p_list, "comma-separated norms");
  ga.add("kind", kind_list, "comma-separated: random, trained");
  ga.add("seeds", seeds, "networks per setting");
  ga.add("seed", seed, "first seed");
  ga.add("L", gap_L, "hidden layers");
  ga.add("eps", eps, "ball radius");
  ga.add("tol", tol, "SDP solver tolerance");
  ga.add("threads", threads, "worker threads");
  ga.add("out", out_path, "CSV output (default stdout)");

  // hypersearch
  auto* hs = app.add_subcommand("hypersearch", "Log-uniform random search over the ADMM hyperparameters");
  Options hy(hs);
  int trials = 20;
  hy.add("d", d, "input dimension");
  hy.add("h", h, "hidden width");
  hy.add("L", L, "hidden layers");
  hy.add("p", p_str, "norm: 2 or inf");
  hy.add("eps", eps, "safety region radius");
  hy.add("budget", budget, "weight steps per trial (default: reference budget)");
  hy.add("trials", trials, "number of sampled configs");
  hy.add("seed", seed, "search seed");
  hy.add("momentum", tc.momentum, "heavy-ball momentum on weight steps");
  hy.add("threads", threads, "worker threads");
  hy.add("out", out_path, "CSV of all trials (default stdout)");

  // theory
  auto* th = app.add_subcommand("theory", "Large-width limit of the SDP bound for Xavier networks");
  Options tt(th);
  tt.add("d", d, "input dimension");
  tt.add("h", h, "hidden width");
  tt.add("L", L, "hidden layers");
  tt.add("p", p_str, "norm: 2 or inf");
  tt.add("eps", eps, "ball radius");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (Options* o : {&tr, &ve, &at, &ga, &hy, &tt})
      if (o->app->parsed()) o->fill(config_path);

    if (*train) {
      tc.d = d;
      tc.h = h;
      tc.L = L;
      tc.p = parse_norm(p_str);
      tc.eps = eps;
      tc.seed = seed;
      tc.checkpoint_tol = tol;
      tc.budget = budget >= 0 ? budget : (tc.p == Norm::l2 ? table1_budget(d, h) : table2_budget());
      TrainExperimentConfig ec{tc, eval_samples};
      const TrainOutcome res = run_training_experiment(ec);
      if (!log_path.empty()) {
        std::ofstream f(log_path);
        res.result.log.write_csv(f);
      }
      if (!record_path.empty()) {
        std::ofstream f(record_path);
        write_train_csv(f, {res.record});
      }
      if (!model_path.empty() && res.result.best) save_params(res.result.best->params, model_path);
      write_train_csv(std::cout, {res.record});
      return require_safe && !res.record.certified ? kExitUnsafe : 0;
    }

    if (*verify) {
      const NetworkParams net = load_params(model_in);
      const InputRegion region(parse_norm(p_str), eps);
      FrozenOptions fo;
      fo.tol = fo.primal_tol = tol;
      fo.max_inner = max_inner;
      fo.anderson = anderson;
      FrozenResult fr;
      const auto t0 = std::chrono::steady_clock::now();
      CertificationReport rep;
      rep.bound = certify_network(net, region, fo, &fr);
      rep.seconds = seconds_since(t0);
      rep.p = region.p;
      rep.eps = eps;
      rep.tol = fo.tol;
      rep.primal_tol = fo.primal_tol;
      rep.residual = fr.residual;
      rep.primal_residual = fr.primal_residual;
      rep.iterations = fr.iterations;
      rep.converged = fr.converged;
      const std::string text = to_json(rep).dump(2);
      std::cout << text << '\n';
      if (!out_path.empty()) std::ofstream(out_path) << text << '\n';
      return require_safe && !rep.bound.safe ? kExitUnsafe : 0;
    }

    if (*attack) {
      const NetworkParams net = load_params(model_in);
      const PgdResult r = pgd_lower_bound(net, InputRegion(parse_norm(p_str), eps), pgd, seed);
      json j{{"value", r.value},
             {"point", std::vector<double>(r.point.data(), r.point.data() + r.point.size())},
             {"steps", r.steps}};
      const std::string text = j.dump(2);
      std::cout << text << '\n';
      if (!out_path.empty()) std::ofstream(out_path) << text << '\n';
      return 0;
    }

    if (*gap) {
      gc.ds.clear();
      for (const auto& s : split(d_list)) gc.ds.push_back(std::stoi(s));
      gc.ps.clear();
      for (const auto& s : split(p_list)) gc.ps.push_back(parse_norm(s));
      gc.kinds.clear();
      for (const auto& s : split(kind_list)) gc.kinds.push_back(parse_kind(s));
      gc.seeds = seeds;
      gc.seed0 = seed;
      gc.L = gap_L;
      gc.eps = eps;
      gc.frozen.tol = gc.frozen.primal_tol = tol;
      gc.threads = threads;
      const auto records = run_gap_experiment(gc);
      std::ofstream f;
      write_gap_csv(open_out(out_path, f), records);
      return 0;
    }

    if (*hs) {
      TrainConfig base = tc;
      base.d = d;
      base.h = h;
      base.L = L;
      base.p = parse_norm(p_str);
      base.eps = eps;
      base.budget = budget >= 0 ? budget : (base.p == Norm::l2 ? table1_budget(d, h) : table2_budget());
      const HyperResult r = hyper_search(HyperSpace{}, trials, seed, training_objective(base), threads);
      std::ofstream f;
      write_hyper_csv(open_out(out_path, f), r);
      std::cerr << "best score " << r.best_score << ": mu=" << r.best.mu << " rho=" << r.best.rho
                << " delta=" << r.best.delta << " alpha=" << r.best.alpha << " eta=" << r.best.eta << '\n';
      return 0;
    }

    if (*th) {
      std::cout.precision(10);
      std::cout << theory_sdp_limit(d, h, L, eps, parse_norm(p_str)) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
