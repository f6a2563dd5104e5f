#pragma once

// JSON model checkpoints and certification reports. Doubles are written in
// shortest round-trip form, so save/load reproduces every weight bit for bit.

#include "safesdp/network.hpp"
#include "safesdp/numerics.hpp"
#include "safesdp/verify.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace safesdp {

using json = nlohmann::json;

inline json to_json(const NetworkParams& p) {
  json j;
  j["d"] = p.d;
  j["h"] = p.h;
  j["L"] = p.L;
  j["seed"] = p.seed;
  j["meta"] = p.meta;
  json W = json::array(), b = json::array();
  for (int l = 0; l <= p.L; ++l) {
    json rows = json::array();
    for (Index i = 0; i < p.W[l].rows(); ++i) {
      std::vector<double> r(p.W[l].cols());
      for (Index k = 0; k < p.W[l].cols(); ++k) r[k] = p.W[l](i, k);
      rows.push_back(r);
    }
    W.push_back(rows);
    b.push_back(std::vector<double>(p.b[l].data(), p.b[l].data() + p.b[l].size()));
  }
  j["W"] = W;
  j["b"] = b;
  return j;
}

inline NetworkParams params_from_json(const json& j) {
  try {
    NetworkParams p = NetworkParams::zeros(j.at("d").get<int>(), j.at("h").get<int>(), j.at("L").get<int>());
    p.seed = j.value("seed", std::uint64_t{0});
    p.meta = j.value("meta", std::string{});
    const json& W = j.at("W");
    const json& b = j.at("b");
    if (W.size() != p.W.size() || b.size() != p.b.size())
      throw std::invalid_argument("model JSON: expected " + std::to_string(p.L + 1) + " layers");
    for (std::size_t l = 0; l < p.W.size(); ++l) {
      if (W[l].size() != static_cast<std::size_t>(p.W[l].rows()) || b[l].size() != static_cast<std::size_t>(p.b[l].size()))
        throw std::invalid_argument("model JSON: bad shape at layer " + std::to_string(l + 1));
      for (Index i = 0; i < p.W[l].rows(); ++i) {
        const auto row = W[l][i].get<std::vector<double>>();
        if (row.size() != static_cast<std::size_t>(p.W[l].cols()))
          throw std::invalid_argument("model JSON: bad row length at layer " + std::to_string(l + 1));
        for (Index k = 0; k < p.W[l].cols(); ++k) p.W[l](i, k) = row[k];
        p.b[l](i) = b[l][i].get<double>();
      }
    }
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("model JSON: ") + e.what());
  }
}

inline void save_params(const NetworkParams& p, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << to_json(p).dump(1) << '\n';
}

inline NetworkParams load_params(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return params_from_json(j);
}

struct CertificationReport {
  CertifiedBound bound;
  Norm p = Norm::l2;
  double eps = 1.0;
  double tol = 0.0;
  double primal_tol = 0.0;
  double residual = 0.0;
  double primal_residual = 0.0;
  long iterations = 0;
  bool converged = false;
  double seconds = 0.0;
};

inline json to_json(const CertificationReport& r) {
  return json{{"dual_value", r.bound.dual_value},
              {"lambda_min", r.bound.lambda_min},
              {"tau", r.bound.tau},
              {"certified", r.bound.certified},
              {"safe", r.bound.safe},
              {"p", to_string(r.p)},
              {"eps", r.eps},
              {"tolerances", {{"dual", r.tol}, {"primal", r.primal_tol}}},
              {"residuals", {{"dual", r.residual}, {"primal", r.primal_residual}}},
              {"iterations", r.iterations},
              {"converged", r.converged},
              {"timings", {{"seconds", r.seconds}}}};
}

}  // namespace safesdp
