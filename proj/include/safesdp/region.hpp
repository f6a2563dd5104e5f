#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace safesdp {

enum class Norm { l2, linf };

inline std::string to_string(Norm p) { return p == Norm::l2 ? "2" : "inf"; }

inline Norm parse_norm(std::string_view s) {
  if (s == "2" || s == "l2") return Norm::l2;
  if (s == "inf" || s == "linf" || s == "Inf") return Norm::linf;
  throw std::invalid_argument("unknown norm '" + std::string(s) + "', expected 2 or inf");
}

inline double norm_of(const Eigen::VectorXd& x, Norm p) {
  if (x.size() == 0) return 0.0;
  return p == Norm::l2 ? x.norm() : x.lpNorm<Eigen::Infinity>();
}

/// Dual norm, used by the linear bounds: max_{|x|_p <= eps} w.x = eps |w|_q.
inline double dual_norm_of(const Eigen::VectorXd& w, Norm p) {
  return p == Norm::l2 ? w.norm() : w.lpNorm<1>();
}

/// The ball {x : |x|_p <= eps}.
struct InputRegion {
  Norm p = Norm::l2;
  double eps = 1.0;

  InputRegion() = default;
  InputRegion(Norm norm, double radius) : p(norm), eps(radius) {
    if (!(radius > 0.0) || !std::isfinite(radius))
      throw std::invalid_argument("InputRegion: eps must be positive and finite");
  }

  bool contains(const Eigen::VectorXd& x, double slack = 0.0) const {
    return norm_of(x, p) <= eps + slack;
  }
};

}  // namespace safesdp
