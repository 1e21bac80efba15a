// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#pragma once

#include <string>

#include "effspec/model.hpp"

namespace effspec {

// Gram matrix of (parameters, means) with its PSD root and rank.
struct SummaryMatrix {
  int C = 0;  // parameter columns
  int k = 0;  // mean columns
  Mat G;
  Mat sqrtG;
  int qbar = 0;
  double rank_tol = 0.0;

  int q() const { return C + k; }
  Mat param_block() const { return G.topLeftCorner(C, C); }
  Mat cross_block() const { return G.topRightCorner(C, k); }
  Mat mean_block() const { return G.bottomRightCorner(k, k); }

  // Symmetrize, clip tiny negative eigenvalues, compute the root and rank.
  static SummaryMatrix from_gram(const Mat& G, int C, int k);
};

SummaryMatrix compute_G(const Mat& x, const Mat& means);

// G = 0 on the parameter blocks, mean_gram on the mean block.
SummaryMatrix zero_init_summary(const Task& task);
// Limit of Gaussian initialization x ~ N(0, I_d/d): identity parameter block.
SummaryMatrix gaussian_init_summary(const Task& task);

// PSD square root.  Eigenvalues in [-reject_tol, 0] are clipped; below that
// the input is rejected.
Mat psd_sqrt(const Mat& G, double reject_tol = 1e-8);

// Finite-d orthonormal basis with L^T (x, mu) = sqrtG.
struct ReducedBasis {
  Mat L;  // d x q
  Mat O;  // rotation used for rank reduction
  int qbar = 0;
};
ReducedBasis build_L(const Mat& x, const Mat& means);

// Rotation O with rows qbar.. of O sqrtG equal to zero.
struct RankReduction {
  Mat O;  // q x q orthogonal
  Mat R;  // O * sqrtG with rows beyond qbar set to exactly zero
  int qbar = 0;
  std::vector<int> reduced;  // 0..qbar-1
};
// completion: optional (q-qbar) x (q-qbar) orthogonal applied to the null rows.
RankReduction reduce_basis(const SummaryMatrix& S, const Mat& completion = Mat());

// Coupled inner products (<Y, x^c>, <Y, mu_j>) for component b and g ~ N(0, I_q).
Vec couple_projections(const Task& task, int b, const Vec& g, const SummaryMatrix& S);
// Same for an arbitrary root R (R^T R = G).
Vec couple_projections_root(const Task& task, int b, const Vec& g, const Mat& R);

std::string serialize_summary(const SummaryMatrix& S);
SummaryMatrix parse_summary(const std::string& text);

}  // namespace effspec
