#pragma once

// Samplers for the two-shell datasets (concentric l2 spheres and l_inf box
// surfaces) and for uniform points inside a norm ball.

#include "safesdp/region.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <ostream>
#include <random>
#include <stdexcept>
#include <vector>

namespace safesdp {

struct LabeledSample {
  Eigen::VectorXd x;
  int y = 0;  // 1 = outer shell (radius R), 0 = inner shell (radius 1)
};

using Samples = std::vector<LabeledSample>;

namespace detail {
inline void check_shells(int d, double R) {
  if (d < 1) throw std::invalid_argument("dataset: d must be >= 1");
  if (!(R > 1.0)) throw std::invalid_argument("dataset: R must exceed 1");
}
}  // namespace detail

/// Points on the spheres |x|_2 = 1 (label 0) and |x|_2 = R (label 1).
inline Samples sample_d2(std::size_t count, int d, double R, std::uint64_t seed) {
  detail::check_shells(d, R);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Samples out(count);
  for (auto& s : out) {
    s.y = coin(rng) ? 1 : 0;
    const double r = s.y ? R : 1.0;
    Eigen::VectorXd z(d);
    double nz = 0.0;
    do {
      for (int i = 0; i < d; ++i) z(i) = gauss(rng);
      nz = z.norm();
    } while (nz == 0.0);
    s.x = (r / nz) * z;
  }
  return out;
}

/// Points on the surfaces |x|_inf = 1 (label 0) and |x|_inf = R (label 1).
/// A face is chosen uniformly among the 2d faces; the remaining coordinates
/// are uniform on the face.
inline Samples sample_dinf(std::size_t count, int d, double R, std::uint64_t seed) {
  detail::check_shells(d, R);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> face(0, 2 * d - 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Samples out(count);
  for (auto& s : out) {
    s.y = coin(rng) ? 1 : 0;
    const double r = s.y ? R : 1.0;
    const int f = face(rng);
    s.x.resize(d);
    for (int i = 0; i < d; ++i) s.x(i) = r * unit(rng);
    s.x(f / 2) = (f % 2 == 0) ? r : -r;
  }
  return out;
}

/// Index of the face a D_inf point lies on: 2*k for +e_k, 2*k+1 for -e_k.
inline int dinf_face(const Eigen::VectorXd& x) {
  Eigen::Index k = 0;
  x.cwiseAbs().maxCoeff(&k);
  return 2 * static_cast<int>(k) + (x(k) < 0.0 ? 1 : 0);
}

inline Samples sample_shells(Norm p, std::size_t count, int d, double R, std::uint64_t seed) {
  return p == Norm::l2 ? sample_d2(count, d, R, seed) : sample_dinf(count, d, R, seed);
}

/// i.i.d. uniform points in {|x|_p <= eps}.
inline std::vector<Eigen::VectorXd> sample_ball(std::size_t count, int d, Norm p, double eps,
                                                std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("sample_ball: d must be >= 1");
  if (!(eps > 0.0)) throw std::invalid_argument("sample_ball: eps must be positive");
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> out(count);
  if (p == Norm::linf) {
    std::uniform_real_distribution<double> u(-eps, eps);
    for (auto& x : out) {
      x.resize(d);
      for (int i = 0; i < d; ++i) x(i) = u(rng);
    }
    return out;
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (auto& x : out) {
    x.resize(d);
    double nz = 0.0;
    do {
      for (int i = 0; i < d; ++i) x(i) = gauss(rng);
      nz = x.norm();
    } while (nz == 0.0);
    const double r = eps * std::pow(u01(rng), 1.0 / d);
    x *= r / nz;
  }
  return out;
}

/// One row per sample: the d coordinates, then the label.
inline void write_csv(std::ostream& os, const Samples& samples) {
  os.precision(17);
  for (const auto& s : samples) {
    for (Eigen::Index i = 0; i < s.x.size(); ++i) os << s.x(i) << ',';
    os << s.y << '\n';
  }
}

}  // namespace safesdp
