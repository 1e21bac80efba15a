// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#pragma once

#include <string>
#include <vector>

#include "effspec/bulk.hpp"

namespace effspec {

using CMat = Eigen::MatrixXcd;

// z -> F(z) for a task and a root R of G (R^T R = G), in the given scaling.
class OutlierMatrixFn {
 public:
  OutlierMatrixFn(const Task& task, const Mat& root, Scaling scaling, const ExpectOptions& eopts = {},
                  const BulkOptions& bopts = {});

  Mat F(double z) const;
  CMat F(cplx z) const;
  Mat dF(double z) const;
  CMat dF(cplx z) const;

  const StieltjesSolver& bulk() const { return bulk_; }
  const ProfileLaw& law() const { return law_; }
  Scaling scaling() const { return bulk_.scaling(); }
  int q() const { return law_.q(); }

 private:
  ProfileLaw law_;
  StieltjesSolver bulk_;
  double factor_;  // lambda*phi/kappa
};

// Canonical-basis F from sqrtG.
Mat f_matrix(double z, const Task& task, const SummaryMatrix& G, Scaling scaling, const ExpectOptions& eopts = {});
Mat f_matrix_derivative(double z, const Task& task, const SummaryMatrix& G, Scaling scaling,
                        const ExpectOptions& eopts = {});

struct OutlierOptions {
  double edge_margin = 1e-6;     // relative to the support width
  double cluster_rel = 1e-7;
  double cluster_abs = 1e-12;
  double kernel_tol = 1e-7;
  double zero_exclusion = 1e-8;
  double window_lo = -std::numeric_limits<double>::infinity();
  double window_hi = std::numeric_limits<double>::infinity();
  Mat completion;  // optional rotation of the null block of the basis
};

struct OutlierRoot {
  double z = 0.0;
  int multiplicity = 0;
  double S = 0.0;
  Mat vectors;          // q x m, canonical basis
  Mat vectors_reduced;  // qbar x m, reduced basis
  Mat projections;      // k x m, <v, mu_j>
  Vec residuals;        // |B u| per vector (unit u)
  Vec norm_residuals;   // |u^T dB u - 1|
  bool zero_root = false;  // normalization skipped
};

struct GapReport {
  Gap gap;
  double search_lo = 0.0, search_hi = 0.0;
  std::vector<OutlierRoot> roots;
  int count() const {
    int c = 0;
    for (const auto& r : roots) c += r.multiplicity;
    return c;
  }
};

struct OutlierReport {
  Scaling scaling = Scaling::Data;
  int qbar = 0;
  SupportSet support;
  std::vector<GapReport> gaps;
  std::vector<std::string> diagnostics;
  // all roots, ascending
  std::vector<OutlierRoot> roots() const;
  // roots right of the support
  std::vector<OutlierRoot> right_roots() const;
  int total() const;
};

OutlierReport find_outliers(const Task& task, const SummaryMatrix& G, Scaling scaling,
                            const ExpectOptions& eopts = {}, const OutlierOptions& oopts = {},
                            const BulkOptions& bopts = {});

// Kernel basis of z I - F(z) with the normalization u^T (I - dF) u = 1.
struct EigenvectorSolution {
  Mat basis;  // q x m, in the coordinates of fn
  Vec eigenvalues;  // of B(z) for the kept directions
  Vec norm_residuals;
  bool normalized = true;
};
EigenvectorSolution eigenvector_solution(double z, int multiplicity, const OutlierMatrixFn& fn, int qbar = -1,
                                         double zero_exclusion = 1e-8);

struct OracleRoot {
  std::string family;
  int index = 0;       // mean index for per-direction families
  int multiplicity = 1;
  bool exists = false;
  double z = 0.0;
  double S = 0.0;
  double threshold = 0.0;  // critical lambda (zero-init families)
  double coefficient = 0.0;  // |<v, mu_j>| prediction
};

struct ZeroInitOracle {
  std::vector<OracleRoot> roots;
  double edge_lo = 0.0, edge_hi = 0.0;  // right-most bulk interval
  double S_edge = 0.0;
};

// Closed forms at x = 0 with orthonormal means, data scaling.
ZeroInitOracle zero_init_oracles(int k, const Vec& p, double lambda, double phi, ProfileKind kind, int alpha = 0);

struct GaussianInitOracle {
  std::vector<OracleRoot> roots;
  SupportSet support;
};

// Root families of the block formula at G = I_q (equal weights), data scaling.
GaussianInitOracle gaussian_init_oracles(double lambda, double phi, int C, int k, const ExpectOptions& eopts = {},
                                         const BulkOptions& bopts = {});

}  // namespace effspec
