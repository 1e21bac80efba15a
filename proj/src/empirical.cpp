// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#include "effspec/empirical.hpp"

#include <cblas.h>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "effspec/rng.hpp"

extern "C" void openblas_set_num_threads(int);

namespace effspec {

std::string to_string(DataMode m) { return m == DataMode::Test ? "test" : "train"; }

DataMode data_mode_from_string(const std::string& s) {
  if (s == "test") return DataMode::Test;
  if (s == "train") return DataMode::Train;
  throw std::invalid_argument("data_mode must be 'test' or 'train'");
}

void set_blas_threads(int n) { openblas_set_num_threads(std::max(1, n)); }

Mat realize_means(const Task& task, int d, std::uint64_t seed) {
  const int k = task.k;
  if (d < k) throw std::invalid_argument("realize_means: need d >= k");
  CounterRng rng(seed, 0x6d65616e);
  Mat Z(d, k);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < d; ++i) Z(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(Z);
  Mat Q = qr.householderQ() * Mat::Identity(d, k);
  return Q * psd_sqrt(task.mean_gram);
}

EmpiricalInstance make_instance(const Task& task, int d, std::uint64_t seed, DataMode mode) {
  task.validate();
  EmpiricalInstance inst;
  inst.task = task;
  inst.d = d;
  inst.n = static_cast<int>(std::lround(task.phi * d));
  if (inst.n < 1) throw std::invalid_argument("make_instance: phi*d rounds to zero samples");
  inst.means = realize_means(task, d, seed);
  inst.x = Mat::Zero(d, task.param_count());
  inst.seed = seed;
  inst.mode = mode;
  if (mode == DataMode::Train) inst.train = sample_batch(task, inst.means, inst.n, seed, false, 1);
  return inst;
}

void realize_summary(EmpiricalInstance& inst, const SummaryMatrix& G, std::uint64_t seed) {
  const int q = G.q(), d = inst.d;
  if (d < q) throw std::invalid_argument("realize_summary: need d >= q");
  if (G.C != inst.task.param_count() || G.k != inst.task.k)
    throw std::invalid_argument("realize_summary: summary does not match the task");
  CounterRng rng(seed, 0x7265616c);
  Mat Z(d, q);
  for (int j = 0; j < q; ++j)
    for (int i = 0; i < d; ++i) Z(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(Z);
  const Mat Q = qr.householderQ() * Mat::Identity(d, q);
  const Mat W = Q * G.sqrtG;
  inst.x = W.leftCols(G.C);
  inst.means = W.rightCols(G.k);
  if (inst.mode == DataMode::Train) inst.train = sample_batch(inst.task, inst.means, inst.n, inst.seed, false, 1);
}

void gaussian_parameters(EmpiricalInstance& inst, std::uint64_t seed) {
  CounterRng rng(seed, 0x696e6974);
  const double sd = 1.0 / std::sqrt(static_cast<double>(inst.d));
  for (Eigen::Index j = 0; j < inst.x.cols(); ++j)
    for (Eigen::Index i = 0; i < inst.x.rows(); ++i) inst.x(i, j) = sd * rng.normal();
}

namespace {

Mat inner_products(const Mat& x, const Mat& means, const Mat& Y) {
  Mat W(x.rows(), x.cols() + means.cols());
  W << x, means;
  return W.transpose() * Y;
}

}  // namespace

Vec block_weights(const Task& task, const Mat& x, const Mat& means, const Batch& batch, MatrixKind kind, int b,
                  int c) {
  const int n = batch.size();
  if (n == 0) throw std::invalid_argument("assemble_block: empty batch");
  if (x.cols() != task.param_count() || x.rows() != batch.Y.rows())
    throw std::invalid_argument("assemble_block: parameter dimensions do not match");
  const Mat IP = inner_products(x, means, batch.Y);
  Vec D(n);
  const bool logistic =
      task.profile.kind == ProfileKind::LogisticHessian || task.profile.kind == ProfileKind::LogisticGradient;
  if (logistic) {
    if (b < 0 || c < 0 || b >= task.C || c >= task.C) throw std::invalid_argument("assemble_block: block out of range");
    for (int l = 0; l < n; ++l) {
      const Vec p = softmax(IP.col(l).head(task.C));
      if (kind == MatrixKind::Hessian) {
        D(l) = p(b) * ((b == c ? 1.0 : 0.0) - p(c));
      } else {
        const int y = batch.label[l];
        D(l) = ((y == b ? 1.0 : 0.0) - p(b)) * ((y == c ? 1.0 : 0.0) - p(c));
      }
    }
    return D;
  }
  if (b != task.profile.alpha || c != task.profile.alpha)
    throw std::invalid_argument("assemble_block: only the profile's own block is available for this task");
  Task t = task;
  const bool want_grad = kind == MatrixKind::Gradient;
  switch (task.profile.kind) {
    case ProfileKind::TwoLayerHessian:
    case ProfileKind::TwoLayerGradient:
      t.profile.kind = want_grad ? ProfileKind::TwoLayerGradient : ProfileKind::TwoLayerHessian;
      break;
    case ProfileKind::MultiIndexHessian:
    case ProfileKind::MultiIndexGradient:
      t.profile.kind = want_grad ? ProfileKind::MultiIndexGradient : ProfileKind::MultiIndexHessian;
      break;
    default:
      break;
  }
  for (int l = 0; l < n; ++l) D(l) = profile_value(t, batch.hidden.empty() ? 0 : batch.hidden[l], IP.col(l));
  return D;
}

Mat assemble(const Mat& A, const Vec& D) {
  const int d = static_cast<int>(A.rows()), n = static_cast<int>(A.cols());
  if (n == 0) throw std::invalid_argument("assemble: empty batch");
  if (D.size() != n) throw std::invalid_argument("assemble: weight count mismatch");
  Mat M = Mat::Zero(d, d);
  for (int sign : {1, -1}) {
    Mat B(d, n);
    int cols = 0;
    for (int l = 0; l < n; ++l) {
      const double v = sign * D(l);
      if (v > 0) B.col(cols++) = std::sqrt(v) * A.col(l);
    }
    if (cols == 0) continue;
    cblas_dsyrk(CblasColMajor, CblasLower, CblasNoTrans, d, cols, sign / static_cast<double>(n), B.data(), d, 1.0,
                M.data(), d);
  }
  M.triangularView<Eigen::StrictlyUpper>() = M.transpose().triangularView<Eigen::StrictlyUpper>();
  return M;
}

Mat assemble_block(const Task& task, const Mat& x, const Mat& means, const Batch& batch, MatrixKind kind, int b,
                   int c) {
  return assemble(batch.Y, block_weights(task, x, means, batch, kind, b, c));
}

Mat assemble_profile_block(const Task& task, const Mat& x, const Mat& means, const Batch& batch) {
  const bool grad = task.profile.kind == ProfileKind::LogisticGradient ||
                    task.profile.kind == ProfileKind::TwoLayerGradient ||
                    task.profile.kind == ProfileKind::MultiIndexGradient;
  const int a = task.profile.alpha;
  return assemble_block(task, x, means, batch, grad ? MatrixKind::Gradient : MatrixKind::Hessian, a, a);
}

EigenResult eigensolve(const Mat& M, double vectors_above) {
  const int n = static_cast<int>(M.rows());
  if (M.cols() != n) throw std::invalid_argument("eigensolve: matrix must be square");
  EigenResult out;
  if (n == 0) return out;
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("eigensolve: matrix is not symmetric");
  Mat A = M;
  Vec diag(n), off(std::max(1, n)), tau(std::max(1, n - 1));
  if (LAPACKE_dsytrd(LAPACK_COL_MAJOR, 'L', n, A.data(), n, diag.data(), off.data(), tau.data()) != 0)
    throw std::runtime_error("eigensolve: tridiagonal reduction failed");
  Vec w = diag, e = off;
  if (LAPACKE_dsterf(n, w.data(), e.data()) != 0) throw std::runtime_error("eigensolve: eigenvalue iteration failed");
  out.values = w;  // ascending
  int m = 0;
  for (int i = 0; i < n; ++i) m += out.values(i) > vectors_above;
  if (m == 0) {
    out.vectors = Mat::Zero(n, 0);
    out.vector_values = Vec::Zero(0);
    return out;
  }
  Vec d2 = diag, e2 = Vec::Zero(n);
  e2.head(n - 1) = off.head(n - 1);
  Vec wv(n);
  Mat Z(n, m);
  std::vector<lapack_int> isuppz(2 * m);
  lapack_int found = 0;
  lapack_logical tryrac = 1;
  const lapack_int il = n - m + 1, iu = n;
  if (LAPACKE_dstemr(LAPACK_COL_MAJOR, 'V', 'I', n, d2.data(), e2.data(), 0.0, 0.0, il, iu, &found, wv.data(),
                     Z.data(), n, m, isuppz.data(), &tryrac) != 0 ||
      found != m)
    throw std::runtime_error("eigensolve: eigenvector computation failed");
  if (LAPACKE_dormtr(LAPACK_COL_MAJOR, 'L', 'L', 'N', n, m, A.data(), n, tau.data(), Z.data(), n) != 0)
    throw std::runtime_error("eigensolve: back-transformation failed");
  out.vectors = Z;
  out.vector_values = wv.head(m);
  const double mnorm = M.norm();
  for (int i = 0; i < m; ++i) {
    const double r = (M * Z.col(i) - wv(i) * Z.col(i)).norm();
    out.max_residual = std::max(out.max_residual, r);
  }
  if (out.max_residual > 1e-8 * std::max(mnorm, 1e-300))
    throw std::runtime_error("eigensolve: eigenpair residual too large");
  return out;
}

Vec parameter_residual(const Task& task, const Mat& x, const Mat& means, const LabeledSample& s) {
  const Vec a = x.transpose() * s.Y;
  const auto& pr = task.profile;
  switch (pr.kind) {
    case ProfileKind::LogisticHessian:
    case ProfileKind::LogisticGradient: {
      Vec r = softmax(a);
      r(s.label) -= 1.0;
      return r;
    }
    case ProfileKind::TwoLayerHessian:
    case ProfileKind::TwoLayerGradient: {
      const int K = pr.hidden, C = task.C;
      Vec out(C);
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int i = 0; i < K; ++i) acc += pr.second_layer(c, i) * pr.activation.h(a(c * K + i));
        out(c) = acc;
      }
      Vec yhat = softmax(out);
      yhat(s.label) -= 1.0;
      Vec r(C * K);
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < K; ++i) r(c * K + i) = yhat(c) * pr.second_layer(c, i) * pr.activation.dh(a(c * K + i));
      return r;
    }
    case ProfileKind::MultiIndexHessian:
    case ProfileKind::MultiIndexGradient: {
      double pred = 0.0;
      for (Eigen::Index j = 0; j < a.size(); ++j) pred += pr.activation.h(a(j));
      const double y = task.centered ? link_value(task, means.transpose() * s.Y) : s.target;
      Vec r(a.size());
      for (Eigen::Index j = 0; j < a.size(); ++j) r(j) = 2.0 * (pred - y) * pr.activation.dh(a(j));
      return r;
    }
    case ProfileKind::Custom:
      break;
  }
  throw std::invalid_argument("run_sgd: custom profiles have no loss");
}

SgdRun run_sgd(EmpiricalInstance& inst, long steps, double c_eta, double beta, std::uint64_t seed,
               long checkpoint_every) {
  if (steps < 0) throw std::invalid_argument("run_sgd: steps must be non-negative");
  const Task& task = inst.task;
  const int d = inst.d, n = inst.n;
  if (checkpoint_every <= 0) checkpoint_every = std::max(1L, static_cast<long>((n + 49) / 50));
  const double eta = c_eta / n;
  CounterRng labels(seed, 0x7367642d6c);
  CounterRng noise(seed, 0x7367642d6e);
  const double sd = 1.0 / std::sqrt(task.lambda);
  SgdRun run;
  Mat& x = inst.x;
  auto record = [&](long step) {
    run.checkpoints.push_back({step, step * eta, compute_G(x, inst.means)});
  };
  record(0);
  LabeledSample s;
  s.Y.resize(d);
  for (long l = 1; l <= steps; ++l) {
    if (inst.mode == DataMode::Train) {
      s = inst.train.sample(static_cast<int>((l - 1) % inst.train.size()));
    } else {
      for (int i = 0; i < d; ++i) s.Y(i) = sd * noise.normal();
      if (task.centered) {
        s.hidden = 0;
        s.label = 0;
        s.target = link_value(task, inst.means.transpose() * s.Y);
      } else {
        const int h = labels.categorical(task.weights.data(), task.k);
        s.hidden = h;
        s.label = task.class_map[h];
        s.Y += inst.means.col(h);
      }
    }
    const Vec r = parameter_residual(task, x, inst.means, s);
    if (beta != 0.0) x *= (1.0 - eta * beta);
    x.noalias() -= eta * s.Y * r.transpose();
    if (l % checkpoint_every == 0 || l == steps) record(l);
  }
  return run;
}

Prediction predict(const Task& task, const SummaryMatrix& G, int grid, const ExpectOptions& eopts,
                   const OutlierOptions& oopts, const BulkOptions& bopts) {
  Prediction p;
  p.task = task;
  p.G = G;
  p.outliers = find_outliers(task, G, Scaling::Data, eopts, oopts, bopts);
  BulkOptions bo = bopts;
  bo.cross_validate = false;
  const StieltjesSolver bulk(ProfileLaw::from_summary(task, G, eopts), Scaling::Data, bo);
  const SupportSet& sup = bulk.support();
  p.bulk_lower = sup.lower();
  p.bulk_upper = sup.upper();
  const double width = std::max(sup.width(), 1e-300);
  const double eta = 1e-7 * width;
  double total_len = 0.0;
  for (const auto& iv : sup.intervals) total_len += iv.second - iv.first;
  double mass = 0.0;
  std::vector<double> cx, cy;
  for (const auto& iv : sup.intervals) {
    const double len = iv.second - iv.first;
    if (len <= 0) continue;
    const int m = std::max(64, static_cast<int>(grid * len / std::max(total_len, 1e-300)));
    std::vector<double> xs(m + 1);
    for (int i = 0; i <= m; ++i) xs[i] = iv.first + len * 0.5 * (1.0 - std::cos(M_PI * i / m));
    std::vector<double> inner(xs.begin() + 1, xs.end() - 1);
    std::vector<double> dens = bulk.density(inner, eta);
    std::vector<double> dv(m + 1, 0.0);
    for (int i = 1; i < m; ++i) dv[i] = dens[i - 1];
    for (int i = 0; i <= m; ++i) {
      if (i > 0) mass += 0.5 * (dv[i] + dv[i - 1]) * (xs[i] - xs[i - 1]);
      cx.push_back(xs[i]);
      cy.push_back(mass);
      p.density_x.push_back(xs[i]);
      p.density_y.push_back(dv[i]);
    }
  }
  const double cont = 1.0 - sup.zero_atom;
  for (double& v : cy) v = mass > 0 ? v * cont / mass : 0.0;
  // zero atom as a step at 0
  for (size_t i = 0; i < cx.size(); ++i)
    if (cx[i] >= 0.0) cy[i] += sup.zero_atom;
  p.cdf_x = cx;
  p.cdf_y = cy;
  if (sup.zero_atom > 0 && (p.cdf_x.empty() || p.cdf_x.front() > 0.0)) {
    p.cdf_x.insert(p.cdf_x.begin(), 0.0);
    p.cdf_y.insert(p.cdf_y.begin(), sup.zero_atom);
  }
  return p;
}

namespace {

double bulk_cdf(const Prediction& p, double x) {
  if (p.cdf_x.empty()) return x >= 0 ? 1.0 : 0.0;
  if (x < p.cdf_x.front()) return 0.0;
  if (x >= p.cdf_x.back()) return 1.0;
  auto it = std::upper_bound(p.cdf_x.begin(), p.cdf_x.end(), x);
  const size_t i = static_cast<size_t>(it - p.cdf_x.begin());
  const double x0 = p.cdf_x[i - 1], x1 = p.cdf_x[i];
  const double y0 = p.cdf_y[i - 1], y1 = p.cdf_y[i];
  if (x1 <= x0) return y1;
  return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
}

}  // namespace

double predicted_cdf(const Prediction& p, int d, double x) {
  int below = 0, total = 0;
  for (const auto& r : p.outliers.roots()) {
    total += r.multiplicity;
    if (r.z <= x) below += r.multiplicity;
  }
  const double dd = d;
  return (1.0 - total / dd) * bulk_cdf(p, x) + below / dd;
}

double ks_distance(const Vec& eig, const Prediction& p) {
  std::vector<double> v(eig.data(), eig.data() + eig.size());
  std::sort(v.begin(), v.end());
  const int d = static_cast<int>(v.size());
  double ks = 0.0;
  for (int i = 0; i < d; ++i) {
    const double F = predicted_cdf(p, d, v[i]);
    ks = std::max({ks, std::abs((i + 1.0) / d - F), std::abs(static_cast<double>(i) / d - F)});
  }
  return ks;
}

double bl_distance(const Vec& eig, const Prediction& p, int levels, int bins) {
  const int d = static_cast<int>(eig.size());
  if (d == 0) return 0.0;
  double lo = std::min(eig.minCoeff(), p.cdf_x.empty() ? 0.0 : p.cdf_x.front());
  double hi = std::max(eig.maxCoeff(), p.cdf_x.empty() ? 0.0 : p.cdf_x.back());
  for (const auto& r : p.outliers.roots()) {
    lo = std::min(lo, r.z);
    hi = std::max(hi, r.z);
  }
  const double pad = 1e-6 * std::max(1.0, hi - lo);
  lo -= pad;
  hi += pad;
  const double dx = (hi - lo) / bins;
  std::vector<double> m(bins, 0.0);
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    const int b = std::min(bins - 1, std::max(0, static_cast<int>((eig(i) - lo) / dx)));
    m[b] += 1.0 / d;
  }
  double prev = predicted_cdf(p, d, lo);
  for (int b = 0; b < bins; ++b) {
    const double cur = predicted_cdf(p, d, lo + (b + 1) * dx);
    m[b] -= cur - prev;
    prev = cur;
  }
  // sup over |f| <= 1, Lip(f) <= 1 by dynamic programming on a level grid
  // level spacing divides the bin width so f may move by whole levels per bin
  const int per_bin = std::max(1, static_cast<int>(std::ceil(dx * (levels - 1) / 2.0)));
  const double h = std::min(dx / per_bin, 2.0);
  levels = std::min(200001, static_cast<int>(std::floor(2.0 / h)) + 1);
  const int rad = per_bin;
  std::vector<double> V(levels), W(levels);
  for (int l = 0; l < levels; ++l) V[l] = m[0] * (-1.0 + l * h);
  for (int b = 1; b < bins; ++b) {
    std::deque<int> dq;
    int right = 0;
    for (int l = 0; l < levels; ++l) {
      while (right < levels && right <= l + rad) {
        while (!dq.empty() && V[dq.back()] <= V[right]) dq.pop_back();
        dq.push_back(right++);
      }
      while (dq.front() < l - rad) dq.pop_front();
      W[l] = V[dq.front()] + m[b] * (-1.0 + l * h);
    }
    std::swap(V, W);
  }
  return *std::max_element(V.begin(), V.end());
}

SpectrumComparison compare(const EigenResult& eig, const Prediction& p, const Mat& L, const Mat& means, int d,
                           double margin_fraction) {
  if (L.size() == 0) throw std::invalid_argument("compare: missing basis L");
  const Mat U = L.transpose() * eig.vectors;
  Mat proj(means.cols(), eig.vectors.cols());
  for (Eigen::Index j = 0; j < means.cols(); ++j)
    proj.row(j) = (means.col(j).transpose() * eig.vectors) / means.col(j).norm();
  return compare_projected(eig.values, eig.vector_values, U, proj, p, d, margin_fraction);
}

SpectrumComparison compare_projected(const Vec& values, const Vec& vector_values, const Mat& U,
                                     const Mat& mean_projections, const Prediction& p, int d, double margin_fraction) {
  if (U.cols() != vector_values.size() || mean_projections.cols() != vector_values.size())
    throw std::invalid_argument("compare: vector data do not match");
  if (vector_values.size() > 0 && U.rows() != p.G.q())
    throw std::invalid_argument("compare: projected vectors must have q rows");
  SpectrumComparison out;
  out.ks = ks_distance(values, p);
  out.bl = bl_distance(values, p);
  const double width = p.bulk_upper - p.bulk_lower;
  const double eps = margin_fraction >= 0 ? margin_fraction * width
                                          : std::max(0.02 * width, 2.0 * std::pow(static_cast<double>(d), -1.0 / 3.0) * width);
  BulkOptions bo;
  bo.cross_validate = false;
  const OutlierMatrixFn fn(p.task, p.G.sqrtG, Scaling::Data, ExpectOptions{}, bo);
  for (const auto& g : p.outliers.gaps) {
    if (g.gap.lo == 0.0 || g.gap.hi == 0.0) continue;  // gaps touching the zero atom
    std::vector<double> zs;
    for (const auto& r : g.roots)
      for (int c = 0; c < r.multiplicity; ++c) zs.push_back(r.z);
    std::sort(zs.begin(), zs.end());
    GapCount gc;
    // stay clear of the edges, never past the predicted roots
    gc.lo = g.gap.lo;
    gc.hi = g.gap.hi;
    if (std::isfinite(g.gap.lo)) gc.lo = g.gap.lo + (zs.empty() ? eps : std::min(eps, 0.5 * (zs.front() - g.gap.lo)));
    if (std::isfinite(g.gap.hi)) gc.hi = g.gap.hi - (zs.empty() ? eps : std::min(eps, 0.5 * (g.gap.hi - zs.back())));
    if (!(gc.hi > gc.lo)) continue;
    gc.predicted = static_cast<int>(zs.size());
    std::vector<double> emp;
    for (Eigen::Index i = 0; i < values.size(); ++i)
      if (values(i) > gc.lo && values(i) < gc.hi) emp.push_back(values(i));
    gc.empirical = static_cast<int>(emp.size());
    out.counts.push_back(gc);
    std::sort(emp.rbegin(), emp.rend());
    std::vector<double> zd(zs.rbegin(), zs.rend());
    for (size_t i = 0; i < std::min(emp.size(), zd.size()); ++i)
      out.outliers.push_back({zd[i], emp[i], std::abs(emp[i] - zd[i])});
    for (Eigen::Index c = 0; c < vector_values.size(); ++c) {
      const double z = vector_values(c);
      if (!(z > gc.lo && z < gc.hi)) continue;
      const Vec u = U.col(c);
      VectorCheck vc;
      vc.z = z;
      vc.residual = (z * u - fn.F(z) * u).norm();
      vc.norm_residual = std::abs(u.squaredNorm() - u.dot(fn.dF(z) * u) - 1.0);
      vc.mean_projections = mean_projections.col(c);
      out.vectors.push_back(vc);
    }
  }
  return out;
}

}  // namespace effspec
