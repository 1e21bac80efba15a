// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#pragma once

#include <complex>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "effspec/expect.hpp"

namespace effspec {

using cplx = std::complex<double>;

// data: (1/n) A D A^T.  theory: (lambda/d) A D A^T = lambda*phi times data.
enum class Scaling { Data, Theory };
std::string to_string(Scaling s);

struct BulkOptions {
  double residual_tol = 1e-10;
  int max_iter = 10000;
  double merge_mass = 1e-9;     // support components lighter than this are merged
  bool cross_validate = true;   // density check of every edge
  double edge_agree = 1e-4;     // relative to the support width
};

struct SolveInfo {
  int iterations = 0;
  double residual = 0.0;
};

struct Gap {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  // range of y = -1/s in theory scaling
  double ylo = -std::numeric_limits<double>::infinity();
  double yhi = std::numeric_limits<double>::infinity();
  bool bounded() const { return std::isfinite(lo) && std::isfinite(hi); }
};

struct SupportSet {
  std::vector<std::pair<double, double>> intervals;  // sorted, disjoint, closed
  std::vector<Gap> gaps;                              // complement, sorted
  double zero_atom = 0.0;  // mass of the atom at 0
  std::vector<std::string> warnings;
  double lower() const { return intervals.empty() ? 0.0 : intervals.front().first; }
  double upper() const { return intervals.empty() ? 0.0 : intervals.back().second; }
  double width() const { return upper() - lower(); }
};

// Solves 1 + zS = phi * sum_j a_j S f_j/(kappa + S f_j) for the law
// sum_j a_j delta_{f_j}, kappa = lambda*phi (data) or 1 (theory).
class StieltjesSolver {
 public:
  StieltjesSolver(const ProfileLaw& law, Scaling scaling, const BulkOptions& opts = {});
  StieltjesSolver(std::vector<std::pair<double, double>> atoms, double lambda, double phi, Scaling scaling,
                  const BulkOptions& opts = {});

  Scaling scaling() const { return scaling_; }
  double kappa() const { return kappa_; }
  double lambda() const { return lambda_; }
  double phi() const { return phi_; }
  const std::vector<std::pair<double, double>>& atoms() const { return atoms_; }

  cplx S(cplx z, SolveInfo* info = nullptr) const;
  // real z in a certified gap
  double S_real(double z) const;
  cplx S_derivative(cplx z) const;
  double S_derivative_real(double z) const;
  double S_derivative_real(double z, double S) const;
  double residual(cplx z, cplx S) const;

  const SupportSet& support() const { return support_; }
  // index of the gap containing z, or -1
  int gap_index(double z) const;
  bool in_gap(double z) const { return gap_index(z) >= 0; }

  // Im S(x + i eta)/pi, continuous part only (the zero atom is subtracted).
  std::vector<double> density(const std::vector<double>& grid, double eta) const;
  double default_eta() const { return 1e-4 * std::max(support_.width(), 1e-12); }

  // Same law in the other convention: z -> lambda*phi*z.
  StieltjesSolver rescaled() const;

  // theory-variable pieces (u = S/kappa, zeta = kappa z)
  double psi(double y) const;
  double dpsi(double y) const;

 private:
  void build_support();
  cplx solve_theory(cplx zeta, cplx guess, bool have_guess, SolveInfo* info) const;
  double solve_gap_theory(double zeta, const Gap& g) const;
  double d2psi(double y) const;
  cplx gsum1(cplx u) const;  // sum a f/(1+uf)
  cplx gsum2(cplx u) const;  // sum a f^2/(1+uf)^2
  cplx gsum3(cplx u) const;  // sum a f/(1+uf)^2
  void cross_validate();

  std::vector<std::pair<double, double>> atoms_;  // all atoms including zero
  std::vector<double> fv_, fa_;                   // nonzero atoms
  double zero_mass_rho_ = 0.0;
  double lambda_, phi_, kappa_;
  Scaling scaling_;
  BulkOptions opts_;
  SupportSet support_;
  std::vector<Gap> theory_gaps_;
};

// Convenience wrappers building the law from (task, G).
cplx solve_stieltjes(cplx z, const Task& task, const SummaryMatrix& G, Scaling scaling,
                     const ExpectOptions& eopts = {});
SupportSet support_intervals(const Task& task, const SummaryMatrix& G, Scaling scaling,
                             const ExpectOptions& eopts = {}, const BulkOptions& bopts = {});

// Marchenko-Pastur law with aspect ratio c and variance v.
cplx mp_reference(cplx z, double variance, double ratio);
std::pair<double, double> mp_edges(double variance, double ratio);
double mp_density(double x, double variance, double ratio);

// Law of pi(1-pi), pi = softmax_alpha of C iid N(0, 1/lambda).
struct RemReference {
  std::vector<double> samples;
  StieltjesSolver solver;
};
RemReference rem_bulk_reference(double lambda, double phi, int C, int alpha, int samples,
                                std::uint64_t seed, Scaling scaling = Scaling::Data);

}  // namespace effspec
