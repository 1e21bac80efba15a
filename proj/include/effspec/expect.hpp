// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

#include "effspec/model.hpp"
#include "effspec/summary.hpp"

namespace effspec {

enum class ExpectMethod { Auto, GaussHermite, MonteCarlo };

struct ExpectOptions {
  ExpectMethod method = ExpectMethod::Auto;
  int nodes = 40;             // per dimension
  int samples = 1 << 17;      // Monte Carlo, antithetic pairs included
  std::uint64_t seed = 0;
  double prune = 1e-16;       // relative product-weight cutoff
  int max_gh_dim = 4;
};

// Probabilists' Gauss-Hermite rule, weights normalized to sum to 1.
struct GaussHermiteRule {
  std::vector<double> x, w;
};
const GaussHermiteRule& gauss_hermite(int n);

// Quadrature or sample nodes for N(0, I_dim).
struct NodeSet {
  Mat h;  // dim x N
  Vec w;  // sums to 1
  bool monte_carlo = false;
};
NodeSet gaussian_nodes(int dim, const ExpectOptions& opts, int nodes_override = 0);
bool uses_monte_carlo(int dim, const ExpectOptions& opts);

struct Estimate {
  double value = 0.0;
  double error = 0.0;
};
struct MatrixEstimate {
  Mat value;
  Mat error;
};

// GH product rule when dim <= max_gh_dim; antithetic MC otherwise.  Error is
// |Q_n - Q_{n/2}| for GH, the standard error for MC.
Estimate gaussian_expectation(const std::function<double(const Vec&)>& h, int dim,
                              const ExpectOptions& opts = {});
MatrixEstimate gaussian_expectation_matrix(const std::function<Mat(const Vec&)>& h, int dim,
                                           int rows, int cols, const ExpectOptions& opts = {});
Estimate mixture_expectation(const std::vector<std::function<double(const Vec&)>>& h,
                             const Vec& weights, int dim, const ExpectOptions& opts = {});

// Law of the profile under the coupled Gaussian model for one component.
// With w = m + sigma g (L coordinates) and g = basis h + (orthogonal part),
// the profile depends on g only through h.
struct ComponentLaw {
  double weight = 0.0;
  Vec mean;    // m (q)
  Mat basis;   // q x r orthonormal
  Mat h;       // r x N nodes
  Vec w;       // N node weights
  Vec f;       // N profile values
  Mat ip;      // q x N inner products R^T w at each node
};

// Discretized profile law for a task and a root R of G (R^T R = G).
class ProfileLaw {
 public:
  ProfileLaw(const Task& task, const Mat& root, const ExpectOptions& opts = {});
  static ProfileLaw from_summary(const Task& task, const SummaryMatrix& S,
                                 const ExpectOptions& opts = {});

  const Task& task() const { return task_; }
  const Mat& root() const { return root_; }
  int q() const { return static_cast<int>(root_.rows()); }
  double sigma() const { return sigma_; }
  const std::vector<ComponentLaw>& components() const { return comps_; }
  int max_rank() const;
  bool monte_carlo() const { return mc_; }
  double max_abs_f() const { return max_abs_f_; }

  // Merged atoms (value, mass) of the mixture law of f, sorted by value.
  const std::vector<std::pair<double, double>>& atoms() const { return atoms_; }

  // Sum_b p_b E_b[omega w w^T]; omega[b](n) is the weight at node n.
  template <class S>
  Eigen::Matrix<S, -1, -1> second_moment(const std::vector<Eigen::Matrix<S, -1, 1>>& omega) const;
  // Sum_b p_b E_b[omega w]
  template <class S>
  Eigen::Matrix<S, -1, 1> first_moment(const std::vector<Eigen::Matrix<S, -1, 1>>& omega) const;
  template <class S>
  S zeroth_moment(const std::vector<Eigen::Matrix<S, -1, 1>>& omega) const;

  // omega[b](n) = fn(f value) for every node
  template <class S>
  std::vector<Eigen::Matrix<S, -1, 1>> map_profile(const std::function<S(double)>& fn) const;

 private:
  Task task_;
  Mat root_;
  double sigma_ = 1.0;
  bool mc_ = false;
  double max_abs_f_ = 0.0;
  std::vector<ComponentLaw> comps_;
  std::vector<std::pair<double, double>> atoms_;
};

template <class S>
std::vector<Eigen::Matrix<S, -1, 1>> ProfileLaw::map_profile(const std::function<S(double)>& fn) const {
  std::vector<Eigen::Matrix<S, -1, 1>> out;
  out.reserve(comps_.size());
  for (const auto& c : comps_) {
    Eigen::Matrix<S, -1, 1> v(c.f.size());
    for (Eigen::Index n = 0; n < c.f.size(); ++n) v(n) = fn(c.f(n));
    out.push_back(std::move(v));
  }
  return out;
}

template <class S>
S ProfileLaw::zeroth_moment(const std::vector<Eigen::Matrix<S, -1, 1>>& omega) const {
  S acc(0);
  for (size_t b = 0; b < comps_.size(); ++b) {
    const auto& c = comps_[b];
    S m0(0);
    for (Eigen::Index n = 0; n < c.w.size(); ++n) m0 += c.w(n) * omega[b](n);
    acc += c.weight * m0;
  }
  return acc;
}

template <class S>
Eigen::Matrix<S, -1, 1> ProfileLaw::first_moment(const std::vector<Eigen::Matrix<S, -1, 1>>& omega) const {
  const int q = this->q();
  Eigen::Matrix<S, -1, 1> acc = Eigen::Matrix<S, -1, 1>::Zero(q);
  for (size_t b = 0; b < comps_.size(); ++b) {
    const auto& c = comps_[b];
    const int r = static_cast<int>(c.h.rows());
    S m0(0);
    Eigen::Matrix<S, -1, 1> m1 = Eigen::Matrix<S, -1, 1>::Zero(r);
    for (Eigen::Index n = 0; n < c.w.size(); ++n) {
      const S wn = c.w(n) * omega[b](n);
      m0 += wn;
      for (int i = 0; i < r; ++i) m1(i) += wn * c.h(i, n);
    }
    Eigen::Matrix<S, -1, 1> v = c.mean.cast<S>() * m0;
    if (r) v += S(sigma_) * (c.basis.cast<S>() * m1);
    acc += S(c.weight) * v;
  }
  return acc;
}

template <class S>
Eigen::Matrix<S, -1, -1> ProfileLaw::second_moment(const std::vector<Eigen::Matrix<S, -1, 1>>& omega) const {
  using MatS = Eigen::Matrix<S, -1, -1>;
  using VecS = Eigen::Matrix<S, -1, 1>;
  const int q = this->q();
  MatS acc = MatS::Zero(q, q);
  for (size_t b = 0; b < comps_.size(); ++b) {
    const auto& c = comps_[b];
    const int r = static_cast<int>(c.h.rows());
    S m0(0);
    VecS m1 = VecS::Zero(r);
    MatS m2 = MatS::Zero(r, r);
    for (Eigen::Index n = 0; n < c.w.size(); ++n) {
      const S wn = c.w(n) * omega[b](n);
      m0 += wn;
      for (int i = 0; i < r; ++i) {
        const S wi = wn * c.h(i, n);
        m1(i) += wi;
        for (int j = 0; j <= i; ++j) m2(i, j) += wi * c.h(j, n);
      }
    }
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < i; ++j) m2(j, i) = m2(i, j);
    const MatS Q = c.basis.cast<S>();
    const VecS m = c.mean.cast<S>();
    const S s(sigma_);
    MatS block = m0 * (m * m.transpose());
    // orthogonal directions: E[omega g g^T] = E[omega] I there
    MatS cov = m0 * MatS::Identity(q, q);
    if (r) {
      const VecS a = Q * m1;
      block += s * (m * a.transpose() + a * m.transpose());
      cov += Q * (m2 - m0 * MatS::Identity(r, r)) * Q.transpose();
    }
    block += s * s * cov;
    acc += S(c.weight) * block;
  }
  return S(0.5) * (acc + acc.transpose());
}

}  // namespace effspec
