// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#include "effspec/summary.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace effspec {

namespace {

Eigen::SelfAdjointEigenSolver<Mat> sym_eig(const Mat& G) {
  const Mat Gs = 0.5 * (G + G.transpose());
  return Eigen::SelfAdjointEigenSolver<Mat>(Gs);
}

// Orthonormal completion of the columns of V (q x r) by Gram-Schmidt against
// e_1, e_2, ...
Mat complete_basis(const Mat& V, int q) {
  const int r = static_cast<int>(V.cols());
  Mat out(q, q);
  out.leftCols(r) = V;
  int filled = r;
  for (int e = 0; e < q && filled < q; ++e) {
    Vec v = Vec::Unit(q, e);
    for (int pass = 0; pass < 2; ++pass)
      for (int j = 0; j < filled; ++j) v -= out.col(j).dot(v) * out.col(j);
    const double nv = v.norm();
    if (nv > 1e-8) out.col(filled++) = v / nv;
  }
  return out;
}

}  // namespace

Mat psd_sqrt(const Mat& G, double reject_tol) {
  if (G.rows() != G.cols()) throw std::invalid_argument("psd_sqrt: matrix must be square");
  if ((G - G.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + G.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("psd_sqrt: matrix must be symmetric");
  auto es = sym_eig(G);
  Vec ev = es.eigenvalues();
  if (ev.size() && ev.minCoeff() < -reject_tol)
    throw DomainError("psd_sqrt: matrix is indefinite beyond tolerance");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  Mat R = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (R + R.transpose());
}

SummaryMatrix SummaryMatrix::from_gram(const Mat& G, int C, int k) {
  if (G.rows() != C + k || G.cols() != C + k) throw std::invalid_argument("summary: G must be q x q");
  SummaryMatrix S;
  S.C = C;
  S.k = k;
  const Mat Gs = 0.5 * (G + G.transpose());
  auto es = sym_eig(Gs);
  Vec ev = es.eigenvalues();
  const double top = ev.size() ? std::max(ev.maxCoeff(), 0.0) : 0.0;
  const double tol_psd = 1e-8 * std::max(1.0, top);
  if (ev.size() && ev.minCoeff() < -tol_psd) throw DomainError("summary: G is not positive semi-definite");
  S.G = Gs;
  S.rank_tol = 1e-9 * top;
  S.qbar = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) > S.rank_tol) ++S.qbar;
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  Mat R = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  S.sqrtG = 0.5 * (R + R.transpose());
  return S;
}

SummaryMatrix compute_G(const Mat& x, const Mat& means) {
  if (x.rows() != means.rows()) throw std::invalid_argument("compute_G: dimension mismatch");
  Mat X(x.rows(), x.cols() + means.cols());
  X << x, means;
  Mat G = X.transpose() * X;
  return SummaryMatrix::from_gram(G, static_cast<int>(x.cols()), static_cast<int>(means.cols()));
}

SummaryMatrix zero_init_summary(const Task& task) {
  const int P = task.param_count();
  Mat G = Mat::Zero(task.q(), task.q());
  G.bottomRightCorner(task.k, task.k) = task.mean_gram;
  return SummaryMatrix::from_gram(G, P, task.k);
}

SummaryMatrix gaussian_init_summary(const Task& task) {
  const int P = task.param_count();
  Mat G = Mat::Zero(task.q(), task.q());
  G.topLeftCorner(P, P).setIdentity();
  G.bottomRightCorner(task.k, task.k) = task.mean_gram;
  return SummaryMatrix::from_gram(G, P, task.k);
}

ReducedBasis build_L(const Mat& x, const Mat& means) {
  const int d = static_cast<int>(x.rows());
  const int q = static_cast<int>(x.cols() + means.cols());
  if (means.rows() != d) throw std::invalid_argument("build_L: dimension mismatch");
  if (d < q) throw std::invalid_argument("build_L: need d >= q");
  Mat X(d, q);
  X << x, means;
  Eigen::JacobiSVD<Mat> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec s = svd.singularValues();
  const double top = s.size() ? s(0) * s(0) : 0.0;
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) * s(i) > 1e-9 * top) ++r;
  const Mat Ur = svd.matrixU().leftCols(r);
  const Mat Vfull = complete_basis(svd.matrixV().leftCols(r), q);
  // d-dimensional directions orthogonal to the range, canonical Gram-Schmidt
  Mat Uperp(d, q - r);
  int filled = 0;
  for (int e = 0; e < d && filled < q - r; ++e) {
    Vec v = Vec::Unit(d, e);
    for (int pass = 0; pass < 2; ++pass) {
      v -= Ur * (Ur.transpose() * v);
      if (filled) v -= Uperp.leftCols(filled) * (Uperp.leftCols(filled).transpose() * v);
    }
    const double nv = v.norm();
    if (nv > 1e-6) Uperp.col(filled++) = v / nv;
  }
  ReducedBasis out;
  out.L = Ur * Vfull.leftCols(r).transpose() + Uperp * Vfull.rightCols(q - r).transpose();
  out.qbar = r;
  out.O = Vfull.transpose();
  return out;
}

RankReduction reduce_basis(const SummaryMatrix& S, const Mat& completion) {
  const int q = S.q();
  auto es = sym_eig(S.G);
  // descending eigenvalue order
  Mat V(q, q);
  for (int i = 0; i < q; ++i) V.col(i) = es.eigenvectors().col(q - 1 - i);
  Mat Vr = V.leftCols(S.qbar);
  Mat full = complete_basis(Vr, q);
  RankReduction out;
  out.qbar = S.qbar;
  out.O = full.transpose();
  const int nnull = q - S.qbar;
  if (completion.size()) {
    if (completion.rows() != nnull || completion.cols() != nnull)
      throw std::invalid_argument("reduce_basis: completion has the wrong size");
    out.O.bottomRows(nnull) = completion * out.O.bottomRows(nnull);
  }
  out.R = out.O * S.sqrtG;
  out.R.bottomRows(nnull).setZero();
  for (int i = 0; i < S.qbar; ++i) out.reduced.push_back(i);
  return out;
}

Vec couple_projections_root(const Task& task, int b, const Vec& g, const Mat& R) {
  const int q = task.q();
  if (g.size() != q || R.rows() != q || R.cols() != q)
    throw std::invalid_argument("couple_projections: dimension mismatch");
  Vec w = g / std::sqrt(task.lambda);
  if (!task.centered) w += R.col(task.param_count() + b);
  return R.transpose() * w;
}

Vec couple_projections(const Task& task, int b, const Vec& g, const SummaryMatrix& S) {
  return couple_projections_root(task, b, g, S.sqrtG);
}

std::string serialize_summary(const SummaryMatrix& S) {
  std::ostringstream os;
  os << "q " << S.q() << " C " << S.C << " k " << S.k << "\n";
  char buf[64];
  for (int i = 0; i < S.q(); ++i) {
    for (int j = 0; j < S.q(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", S.G(i, j));
      os << (j ? " " : "") << buf;
    }
    os << "\n";
  }
  return os.str();
}

SummaryMatrix parse_summary(const std::string& text) {
  std::istringstream is(text);
  std::string tq, tc, tk;
  int q = 0, C = 0, k = 0;
  if (!(is >> tq >> q >> tc >> C >> tk >> k) || tq != "q" || tc != "C" || tk != "k")
    throw std::invalid_argument("summary: bad header, expected 'q <n> C <n> k <n>'");
  if (q != C + k || q <= 0) throw std::invalid_argument("summary: header requires q = C + k");
  Mat G(q, q);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j)
      if (!(is >> G(i, j))) throw std::invalid_argument("summary: truncated matrix body");
  return SummaryMatrix::from_gram(G, C, k);
}

}  // namespace effspec
