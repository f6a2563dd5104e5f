#pragma once

// Fully connected ReLU classifier with a single logit output:
//   x_0 = x,  x_l = relu(W_l x_{l-1} + b_l) for l = 1..L,  f(x) = W_{L+1} x_L + b_{L+1}.
// Negative logits mean the inner class.

#include "safesdp/dataset.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace safesdp {

struct NetworkParams {
  int d = 0;  // input dimension
  int h = 0;  // hidden width
  int L = 0;  // hidden layers
  std::vector<Eigen::MatrixXd> W;  // L+1 matrices: h x d, h x h ..., 1 x h
  std::vector<Eigen::VectorXd> b;  // L+1 vectors: h ..., 1
  std::uint64_t seed = 0;
  std::string meta;

  /// Input width of layer l (1-based), i.e. the fan-in of W_l.
  int fan_in(int l) const { return l == 1 ? d : h; }
  int fan_out(int l) const { return l == L + 1 ? 1 : h; }
  double output_bias() const { return b[L](0); }

  static NetworkParams zeros(int d, int h, int L) {
    if (d < 1 || h < 1 || L < 1) throw std::invalid_argument("NetworkParams: d, h, L must be >= 1");
    NetworkParams p;
    p.d = d;
    p.h = h;
    p.L = L;
    for (int l = 1; l <= L + 1; ++l) {
      p.W.push_back(Eigen::MatrixXd::Zero(p.fan_out(l), p.fan_in(l)));
      p.b.push_back(Eigen::VectorXd::Zero(p.fan_out(l)));
    }
    return p;
  }

  /// Throws if shapes or values violate the layout above.
  void validate() const {
    if (d < 1 || h < 1 || L < 1) throw std::invalid_argument("NetworkParams: d, h, L must be >= 1");
    if (static_cast<int>(W.size()) != L + 1 || static_cast<int>(b.size()) != L + 1)
      throw std::invalid_argument("NetworkParams: expected L+1 weight matrices and biases");
    for (int l = 1; l <= L + 1; ++l) {
      const auto& w = W[l - 1];
      if (w.rows() != fan_out(l) || w.cols() != fan_in(l) || b[l - 1].size() != fan_out(l))
        throw std::invalid_argument("NetworkParams: bad shape at layer " + std::to_string(l));
      if (!w.allFinite() || !b[l - 1].allFinite())
        throw std::invalid_argument("NetworkParams: non-finite entry at layer " + std::to_string(l));
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (int l = 0; l <= L; ++l) n += W[l].size() + b[l].size();
    return n;
  }

  /// Flat view in layer order W_1, b_1, W_2, b_2, ... (column-major W).
  Eigen::VectorXd flatten() const {
    Eigen::VectorXd v(parameter_count());
    Eigen::Index k = 0;
    for (int l = 0; l <= L; ++l) {
      v.segment(k, W[l].size()) = Eigen::Map<const Eigen::VectorXd>(W[l].data(), W[l].size());
      k += W[l].size();
      v.segment(k, b[l].size()) = b[l];
      k += b[l].size();
    }
    return v;
  }

  void unflatten(const Eigen::VectorXd& v) {
    if (static_cast<std::size_t>(v.size()) != parameter_count())
      throw std::invalid_argument("NetworkParams::unflatten: size mismatch");
    Eigen::Index k = 0;
    for (int l = 0; l <= L; ++l) {
      Eigen::Map<Eigen::VectorXd>(W[l].data(), W[l].size()) = v.segment(k, W[l].size());
      k += W[l].size();
      b[l] = v.segment(k, b[l].size());
      k += b[l].size();
    }
  }

  NetworkParams& operator+=(const NetworkParams& o) {
    for (int l = 0; l <= L; ++l) {
      W[l] += o.W[l];
      b[l] += o.b[l];
    }
    return *this;
  }
  NetworkParams& operator*=(double s) {
    for (int l = 0; l <= L; ++l) {
      W[l] *= s;
      b[l] *= s;
    }
    return *this;
  }
  /// this += s * o
  void axpy(double s, const NetworkParams& o) {
    for (int l = 0; l <= L; ++l) {
      W[l] += s * o.W[l];
      b[l] += s * o.b[l];
    }
  }
  NetworkParams zeros_like() const {
    NetworkParams z = zeros(d, h, L);
    z.seed = seed;
    return z;
  }
};

/// Each entry of a b x a weight matrix and of its bias drawn from
/// Uniform[-1/sqrt(a), 1/sqrt(a)], a = fan-in.
inline NetworkParams init_xavier(int d, int h, int L, std::uint64_t seed) {
  NetworkParams p = NetworkParams::zeros(d, h, L);
  p.seed = seed;
  std::mt19937_64 rng(seed);
  for (int l = 1; l <= L + 1; ++l) {
    const double r = 1.0 / std::sqrt(static_cast<double>(p.fan_in(l)));
    std::uniform_real_distribution<double> u(-r, r);
    auto& w = p.W[l - 1];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
    for (Eigen::Index i = 0; i < p.b[l - 1].size(); ++i) p.b[l - 1](i) = u(rng);
  }
  return p;
}

struct ForwardTrace {
  Eigen::VectorXd x0;
  std::vector<Eigen::VectorXd> preacts;   // L vectors, W_l x_{l-1} + b_l
  std::vector<Eigen::VectorXd> postacts;  // L vectors, relu(preacts)
  double logit = 0.0;

  /// Activation of layer l (0 = input).
  const Eigen::VectorXd& activation(int l) const { return l == 0 ? x0 : postacts[l - 1]; }
};

inline ForwardTrace forward(const NetworkParams& p, const Eigen::VectorXd& x) {
  if (x.size() != p.d)
    throw std::invalid_argument("forward: input has dimension " + std::to_string(x.size()) +
                                ", network expects " + std::to_string(p.d));
  ForwardTrace t;
  t.x0 = x;
  t.preacts.reserve(p.L);
  t.postacts.reserve(p.L);
  const Eigen::VectorXd* prev = &t.x0;
  for (int l = 0; l < p.L; ++l) {
    t.preacts.push_back(p.W[l] * *prev + p.b[l]);
    t.postacts.push_back(t.preacts.back().cwiseMax(0.0));
    prev = &t.postacts.back();
  }
  t.logit = (p.W[p.L] * *prev)(0) + p.b[p.L](0);
  return t;
}

inline double logit(const NetworkParams& p, const Eigen::VectorXd& x) { return forward(p, x).logit; }

/// Gradient of the logit with respect to the input. ReLU'(0) is taken as 0.
inline Eigen::VectorXd input_gradient(const NetworkParams& p, const ForwardTrace& t) {
  Eigen::VectorXd g = p.W[p.L].row(0).transpose();
  for (int l = p.L - 1; l >= 0; --l) {
    g = g.cwiseProduct((t.preacts[l].array() > 0.0).cast<double>().matrix());
    g = p.W[l].transpose() * g;
  }
  return g;
}

namespace detail {
// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}
}  // namespace detail

struct LossAndGrad {
  double loss = 0.0;
  NetworkParams grad;
};

/// Mean binary cross-entropy with logits (label 1 targets a positive logit)
/// and its gradient over all parameters.
inline LossAndGrad loss_and_grad(const NetworkParams& p, const Samples& batch) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  LossAndGrad out{0.0, p.zeros_like()};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const ForwardTrace t = forward(p, s.x);
    out.loss += detail::softplus(t.logit) - s.y * t.logit;
    const double dz = (detail::sigmoid(t.logit) - s.y) * inv_n;
    // Output layer.
    out.grad.W[p.L].row(0) += dz * t.activation(p.L).transpose();
    out.grad.b[p.L](0) += dz;
    Eigen::VectorXd delta = dz * p.W[p.L].row(0).transpose();
    for (int l = p.L - 1; l >= 0; --l) {
      delta = delta.cwiseProduct((t.preacts[l].array() > 0.0).cast<double>().matrix());
      out.grad.W[l].noalias() += delta * t.activation(l).transpose();
      out.grad.b[l] += delta;
      if (l > 0) delta = p.W[l].transpose() * delta;
    }
  }
  out.loss *= inv_n;
  return out;
}

inline double loss(const NetworkParams& p, const Samples& batch) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  double acc = 0.0;
  for (const auto& s : batch) {
    const double z = logit(p, s.x);
    acc += detail::softplus(z) - s.y * z;
  }
  return acc / static_cast<double>(batch.size());
}

struct Metrics {
  double accuracy = 0.0;      // sign prediction at threshold 0
  double recall_inner = 1.0;  // inner-class samples with logit <= 0
  double max_inner_logit = -INFINITY;
};

inline Metrics evaluate(const NetworkParams& p, const Samples& samples) {
  Metrics m;
  if (samples.empty()) return m;
  std::size_t correct = 0, inner = 0, inner_ok = 0;
  for (const auto& s : samples) {
    const double z = logit(p, s.x);
    const int pred = z > 0.0 ? 1 : 0;
    correct += pred == s.y;
    if (s.y == 0) {
      ++inner;
      inner_ok += z <= 0.0;
      m.max_inner_logit = std::max(m.max_inner_logit, z);
    }
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  m.recall_inner = inner ? static_cast<double>(inner_ok) / static_cast<double>(inner) : 1.0;
  return m;
}

}  // namespace safesdp
