// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#include "effspec/outliers.hpp"

#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <map>
#include <numeric>

namespace effspec {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

OutlierMatrixFn::OutlierMatrixFn(const Task& task, const Mat& root, Scaling scaling, const ExpectOptions& eopts,
                                 const BulkOptions& bopts)
    : law_(task, root, eopts), bulk_(law_, scaling, bopts) {
  factor_ = task.lambda * task.phi / bulk_.kappa();
}

Mat OutlierMatrixFn::F(double z) const {
  const double u = bulk_.S_real(z) / bulk_.kappa();
  auto om = law_.map_profile<double>([u](double f) { return f / (1.0 + u * f); });
  return factor_ * law_.second_moment(om);
}

CMat OutlierMatrixFn::F(cplx z) const {
  const cplx u = bulk_.S(z) / bulk_.kappa();
  auto om = law_.map_profile<cplx>([u](double f) { return f / (1.0 + u * f); });
  return factor_ * law_.second_moment(om);
}

Mat OutlierMatrixFn::dF(double z) const {
  const double S = bulk_.S_real(z);
  const double u = S / bulk_.kappa();
  const double du = bulk_.S_derivative_real(z, S) / bulk_.kappa();
  auto om = law_.map_profile<double>([u, du](double f) {
    const double e = 1.0 + u * f;
    return -f * f * du / (e * e);
  });
  return factor_ * law_.second_moment(om);
}

CMat OutlierMatrixFn::dF(cplx z) const {
  const cplx u = bulk_.S(z) / bulk_.kappa();
  const cplx du = bulk_.S_derivative(z) / bulk_.kappa();
  auto om = law_.map_profile<cplx>([u, du](double f) {
    const cplx e = 1.0 + u * f;
    return -f * f * du / (e * e);
  });
  return factor_ * law_.second_moment(om);
}

Mat f_matrix(double z, const Task& task, const SummaryMatrix& G, Scaling scaling, const ExpectOptions& eopts) {
  BulkOptions bo;
  bo.cross_validate = false;
  return OutlierMatrixFn(task, G.sqrtG, scaling, eopts, bo).F(z);
}

Mat f_matrix_derivative(double z, const Task& task, const SummaryMatrix& G, Scaling scaling,
                        const ExpectOptions& eopts) {
  BulkOptions bo;
  bo.cross_validate = false;
  return OutlierMatrixFn(task, G.sqrtG, scaling, eopts, bo).dF(z);
}

std::vector<OutlierRoot> OutlierReport::roots() const {
  std::vector<OutlierRoot> out;
  for (const auto& g : gaps) out.insert(out.end(), g.roots.begin(), g.roots.end());
  std::sort(out.begin(), out.end(), [](const OutlierRoot& a, const OutlierRoot& b) { return a.z < b.z; });
  return out;
}

std::vector<OutlierRoot> OutlierReport::right_roots() const {
  std::vector<OutlierRoot> out;
  for (const auto& g : gaps)
    if (g.gap.hi == kInf) out.insert(out.end(), g.roots.begin(), g.roots.end());
  return out;
}

int OutlierReport::total() const {
  int t = 0;
  for (const auto& g : gaps) t += g.count();
  return t;
}

EigenvectorSolution eigenvector_solution(double z, int m, const OutlierMatrixFn& fn, int qbar,
                                         double zero_exclusion) {
  const int q = qbar < 0 ? fn.q() : qbar;
  EigenvectorSolution out;
  const Mat B = z * Mat::Identity(q, q) - fn.F(z).topLeftCorner(q, q);
  Eigen::SelfAdjointEigenSolver<Mat> es(B);
  std::vector<int> order(q);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return std::abs(es.eigenvalues()(a)) < std::abs(es.eigenvalues()(b)); });
  if (m > q) throw std::runtime_error("eigenvector_solution: multiplicity exceeds the reduced dimension");
  Mat U(q, m);
  out.eigenvalues.resize(m);
  for (int i = 0; i < m; ++i) {
    U.col(i) = es.eigenvectors().col(order[i]);
    out.eigenvalues(i) = es.eigenvalues()(order[i]);
  }
  if (std::abs(z) < zero_exclusion) {
    out.basis = U;
    out.normalized = false;
    out.norm_residuals = Vec::Zero(m);
    return out;
  }
  const Mat dB = Mat::Identity(q, q) - fn.dF(z).topLeftCorner(q, q);
  const Mat M = U.transpose() * dB * U;
  Eigen::SelfAdjointEigenSolver<Mat> ms(0.5 * (M + M.transpose()));
  if (ms.eigenvalues().minCoeff() <= 0)
    throw std::runtime_error("eigenvector_solution: derivative of zI - F is not positive on the kernel");
  out.basis = U * ms.eigenvectors() * ms.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal();
  out.norm_residuals.resize(m);
  for (int i = 0; i < m; ++i) {
    const Vec u = out.basis.col(i);
    out.norm_residuals(i) = std::abs(u.dot(dB * u) - 1.0);
  }
  return out;
}

OutlierReport find_outliers(const Task& task, const SummaryMatrix& G, Scaling scaling, const ExpectOptions& eopts,
                            const OutlierOptions& oo, const BulkOptions& bopts) {
  const RankReduction rr = reduce_basis(G, oo.completion);
  const int qb = rr.qbar;
  OutlierMatrixFn fn(task, rr.R, scaling, eopts, bopts);
  OutlierReport rep;
  rep.scaling = scaling;
  rep.qbar = qb;
  rep.support = fn.bulk().support();
  for (const auto& w : rep.support.warnings) rep.diagnostics.push_back(w);
  const int P = task.param_count();
  const int q = task.q();

  std::map<double, Vec> cache;
  auto eig = [&](double z) -> const Vec& {
    auto it = cache.find(z);
    if (it != cache.end()) return it->second;
    const Mat B = z * Mat::Identity(qb, qb) - fn.F(z).topLeftCorner(qb, qb);
    Eigen::SelfAdjointEigenSolver<Mat> es(B, Eigen::EigenvaluesOnly);
    return cache.emplace(z, es.eigenvalues()).first->second;
  };
  auto negatives = [&](double z) {
    const Vec& e = eig(z);
    int n = 0;
    for (Eigen::Index i = 0; i < e.size(); ++i) n += e(i) < 0;
    return n;
  };

  const double width = rep.support.width();
  for (const auto& g : rep.support.gaps) {
    GapReport gr;
    gr.gap = g;
    if (g.hi <= oo.window_lo || g.lo >= oo.window_hi) continue;
    if (qb == 0) {
      rep.gaps.push_back(gr);
      continue;
    }
    auto margin_at = [&](double e) {
      double m = oo.edge_margin * (width > 0 ? width : std::max(1.0, std::abs(e)));
      if (g.bounded()) m = std::min(m, 0.25 * (g.hi - g.lo));
      return m;
    };
    double a, b;
    if (std::isfinite(g.lo)) {
      a = g.lo + margin_at(g.lo);
    } else if (std::isfinite(oo.window_lo)) {
      a = oo.window_lo;
    } else {
      double step = std::max({width, std::abs(g.hi), 1e-3});
      a = g.hi - step;
      for (int it = 0; it < 200 && eig(a).maxCoeff() >= 0; ++it) {
        step *= 2.0;
        a = g.hi - step;
      }
    }
    if (std::isfinite(g.hi)) {
      b = g.hi - margin_at(g.hi);
    } else if (std::isfinite(oo.window_hi)) {
      b = oo.window_hi;
    } else {
      double step = std::max({width, std::abs(g.lo), 1e-3});
      b = g.lo + step;
      for (int it = 0; it < 200 && eig(b).minCoeff() <= 0; ++it) {
        step *= 2.0;
        b = g.lo + step;
      }
    }
    a = std::max(a, oo.window_lo);
    b = std::min(b, oo.window_hi);
    gr.search_lo = a;
    gr.search_hi = b;
    if (!(b > a)) {
      rep.gaps.push_back(gr);
      continue;
    }
    const Vec ea = eig(a), eb = eig(b);
    std::vector<double> zs;
    for (int i = 0; i < qb; ++i) {
      if (!(ea(i) < 0 && eb(i) > 0)) continue;
      auto fi = [&, i](double z) { return eig(z)(i); };
      boost::uintmax_t iters = 300;
      auto tol = [](double x, double y) { return std::abs(y - x) <= 4e-16 * std::max(std::abs(x), std::abs(y)) + 1e-300; };
      auto br = boost::math::tools::toms748_solve(fi, a, b, ea(i), eb(i), tol, iters);
      const double r = 0.5 * (br.first + br.second);
      if (std::abs(r) < oo.zero_exclusion && g.lo < 0 && g.hi > 0) continue;
      zs.push_back(r);
    }
    if (negatives(a) - negatives(b) != static_cast<int>(zs.size()))
      rep.diagnostics.push_back("root count and eigenvalue sign changes disagree in a gap");
    std::sort(zs.begin(), zs.end());
    size_t s = 0;
    while (s < zs.size()) {
      size_t e = s + 1;
      while (e < zs.size() && zs[e] - zs[e - 1] <= oo.cluster_rel * std::abs(zs[e]) + oo.cluster_abs) ++e;
      const int m = static_cast<int>(e - s);
      double zr = 0.0;
      for (size_t t = s; t < e; ++t) zr += zs[t];
      zr /= m;
      OutlierRoot root;
      root.z = zr;
      root.multiplicity = m;
      root.S = fn.bulk().S_real(zr);
      EigenvectorSolution ev = eigenvector_solution(zr, m, fn, qb, oo.zero_exclusion);
      root.zero_root = !ev.normalized;
      root.vectors_reduced = ev.basis;
      root.norm_residuals = ev.norm_residuals;
      Mat padded = Mat::Zero(q, m);
      padded.topRows(qb) = ev.basis;
      root.vectors = rr.O.transpose() * padded;
      root.projections.resize(task.k, m);
      for (int j = 0; j < task.k; ++j)
        for (int c = 0; c < m; ++c) root.projections(j, c) = padded.col(c).dot(rr.R.col(P + j));
      const Mat B = zr * Mat::Identity(qb, qb) - fn.F(zr).topLeftCorner(qb, qb);
      root.residuals.resize(m);
      for (int c = 0; c < m; ++c) {
        const Vec u = ev.basis.col(c).normalized();
        root.residuals(c) = (B * u).norm();
      }
      for (int c = 0; c < m; ++c)
        if (std::abs(ev.eigenvalues(c)) > oo.kernel_tol * std::max(1.0, B.norm()))
          rep.diagnostics.push_back("kernel eigenvalue " + std::to_string(ev.eigenvalues(c)) + " at root " +
                                    std::to_string(zr) + " exceeds the kernel tolerance");
      gr.roots.push_back(std::move(root));
      s = e;
    }
    if (gr.count() > qb) rep.diagnostics.push_back("more roots than the reduced rank in a gap");
    rep.gaps.push_back(std::move(gr));
  }
  return rep;
}

namespace {

// z(S) and dz/dS for a finite law in data scaling.
struct AtomicBulk {
  std::vector<double> xi, a;
  double lambda, phi;
  double z(double S) const {
    double s = 0.0;
    for (size_t i = 0; i < xi.size(); ++i) s += a[i] * xi[i] / (lambda * phi + xi[i] * S);
    return -1.0 / S + phi * s;
  }
  double dz(double S) const {
    double s = 0.0;
    for (size_t i = 0; i < xi.size(); ++i) {
      const double e = lambda * phi + xi[i] * S;
      s += a[i] * xi[i] * xi[i] / (e * e);
    }
    return 1.0 / (S * S) - phi * s;
  }
  // S at the right edge: dz/dS increases on (-lambda phi/xi_max, 0)
  double right_edge_S() const {
    const double xmax = *std::max_element(xi.begin(), xi.end());
    double lo = -lambda * phi / xmax, hi = 0.0;
    for (int it = 0; it < 300; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (dz(mid) > 0)
        hi = mid;
      else
        lo = mid;
    }
    return 0.5 * (lo + hi);
  }
};

double critical_lambda(const std::function<bool(double)>& exists) {
  double lo = 1e-8, hi = 1e8;
  if (exists(lo)) return 0.0;
  if (!exists(hi)) return kInf;
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (exists(mid))
      hi = mid;
    else
      lo = mid;
    if (hi / lo - 1.0 < 1e-14) break;
  }
  return std::sqrt(lo * hi);
}

}  // namespace

ZeroInitOracle zero_init_oracles(int k, const Vec& p, double lambda, double phi, ProfileKind kind, int alpha) {
  if (k < 2 || p.size() != k) throw std::invalid_argument("zero_init_oracles: need k >= 2 weights");
  if (alpha < 0 || alpha >= k) throw std::invalid_argument("zero_init_oracles: alpha out of range");
  ZeroInitOracle out;
  const double kd = k;
  std::vector<double> xi_j(k);
  AtomicBulk bulk{{}, {}, lambda, phi};
  std::string fam_hi, fam_lo;
  if (kind == ProfileKind::LogisticHessian) {
    const double xi = (kd - 1.0) / (kd * kd);
    std::fill(xi_j.begin(), xi_j.end(), xi);
    bulk.xi = {xi};
    bulk.a = {1.0};
    fam_hi = fam_lo = "hessian";
  } else if (kind == ProfileKind::LogisticGradient) {
    const double x1 = (1.0 - 1.0 / kd) * (1.0 - 1.0 / kd), x0 = 1.0 / (kd * kd);
    for (int j = 0; j < k; ++j) xi_j[j] = j == alpha ? x1 : x0;
    bulk.xi = {x1, x0};
    bulk.a = {p(alpha), 1.0 - p(alpha)};
    fam_hi = "gradient-1";
    fam_lo = "gradient-0";
  } else {
    throw std::invalid_argument("zero_init_oracles: logistic profiles only");
  }
  out.S_edge = bulk.right_edge_S();
  out.edge_hi = bulk.z(out.S_edge);
  if (kind == ProfileKind::LogisticHessian) {
    const double s = 1.0 / std::sqrt(phi);
    out.edge_lo = xi_j[0] / lambda * (1.0 - s) * (1.0 - s);
  } else {
    out.edge_lo = std::nan("");
  }
  for (int j = 0; j < k; ++j) {
    OracleRoot r;
    r.family = j == alpha ? fam_hi : fam_lo;
    r.index = j;
    const double xi = xi_j[j];
    const double lp = lambda * phi;
    // -1/S = lambda phi p_j xi/(lambda phi + xi S)
    r.S = -lp / (xi * (1.0 + lp * p(j)));
    r.exists = r.S > out.S_edge;
    if (r.exists) {
      r.z = bulk.z(r.S);
      const double dS = 1.0 / bulk.dz(r.S);
      const double e = lp + xi * r.S;
      r.coefficient = 1.0 / std::sqrt(dS / (r.S * r.S) + lp * p(j) * xi * xi * dS / (e * e));
    } else {
      r.z = std::nan("");
    }
    if (kind == ProfileKind::LogisticHessian) {
      r.threshold = 1.0 / (p(j) * std::sqrt(phi));
    } else {
      r.threshold = critical_lambda([&](double lam) {
        AtomicBulk bl = bulk;
        bl.lambda = lam;
        const double S = -lam * phi / (xi * (1.0 + lam * phi * p(j)));
        return S > bl.right_edge_S();
      });
    }
    out.roots.push_back(r);
  }
  return out;
}

GaussianInitOracle gaussian_init_oracles(double lambda, double phi, int C, int k, const ExpectOptions& eopts,
                                         const BulkOptions& bopts) {
  if (C < 2 || k < 1) throw std::invalid_argument("gaussian_init_oracles: need C >= 2, k >= 1");
  Task task;
  task.k = k;
  task.C = C;
  task.weights = Vec::Constant(k, 1.0 / k);
  task.class_map.resize(k);
  for (int j = 0; j < k; ++j) task.class_map[j] = j % C;
  task.lambda = lambda;
  task.phi = phi;
  task.mean_gram = Mat::Identity(k, k);
  task.profile.kind = ProfileKind::LogisticHessian;
  task.profile.alpha = 0;
  task.validate();
  const SummaryMatrix G = gaussian_init_summary(task);
  ProfileLaw law = ProfileLaw::from_summary(task, G, eopts);
  StieltjesSolver bulk(law, Scaling::Data, bopts);

  // Pi = softmax(g/sqrt(lambda))_alpha over C coordinates; g1 is the alpha
  // coordinate and g2 another one.
  ExpectOptions eo = eopts;
  const NodeSet nodes = gaussian_nodes(C, eo);
  const Eigen::Index N = nodes.w.size();
  Vec pi(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    const double v = softmax(Vec(nodes.h.col(n)) / std::sqrt(lambda))(0);
    pi(n) = v * (1.0 - v);
  }
  struct Coef {
    double a, b, c, d, e0, e1, e11, e12;
  };
  auto coef = [&](double z) {
    const double S = bulk.S_real(z);
    Coef r{};
    for (Eigen::Index n = 0; n < N; ++n) {
      const double om = nodes.w(n) * pi(n) / (lambda * phi + S * pi(n));
      const double g1 = nodes.h(0, n), g2 = nodes.h(1, n);
      r.e0 += om;
      r.e1 += om * g1;
      r.e11 += om * g1 * g1;
      r.e12 += om * g1 * g2;
    }
    r.a = phi * (1.0 + lambda) * r.e0;
    r.b = phi * std::sqrt(lambda) * r.e1;
    r.c = phi * r.e12;
    r.d = phi * (r.e11 - r.e12);
    return r;
  };
  auto h1 = [&](double z) { return z - coef(z).a; };
  auto h2 = [&](double z) { return z - coef(z).d; };
  auto h3 = [&](double z) {
    const Coef c = coef(z);
    return z - c.d - C * (c.c + c.b * c.b / (z - c.a));
  };
  GaussianInitOracle out;
  out.support = bulk.support();
  const double width = out.support.width();
  const double fmax = 0.25;
  const double reach = 10.0 * (1.0 + lambda) * phi * fmax / (lambda * phi) + 10.0 * std::abs(out.support.upper());
  struct Fam {
    const char* name;
    std::function<double(double)> h;
    int mult;
  };
  std::vector<Fam> fams = {{"fp1", h1, k}, {"fp2", h2, C - 1}, {"fp3", h3, 1}};
  for (const auto& g : out.support.gaps) {
    const double m = 1e-6 * std::max(width, 1e-12);
    double a = std::isfinite(g.lo) ? g.lo + m : g.hi - reach;
    double b = std::isfinite(g.hi) ? g.hi - m : g.lo + reach;
    if (g.bounded()) {
      a = g.lo + std::min(m, 0.25 * (g.hi - g.lo));
      b = g.hi - std::min(m, 0.25 * (g.hi - g.lo));
    }
    if (!(b > a)) continue;
    const int grid = 400;
    for (const auto& f : fams) {
      double zp = a, hp = f.h(a);
      for (int i = 1; i <= grid; ++i) {
        // denser near the lower end where roots crowd the edge
        const double t = static_cast<double>(i) / grid;
        const double z = a + (b - a) * t * t;
        const double hz = f.h(z);
        if (std::isfinite(hp) && std::isfinite(hz) && (hp < 0) != (hz < 0)) {
          boost::uintmax_t it = 200;
          auto tol = [](double x, double y) { return std::abs(y - x) <= 1e-15 * std::max(std::abs(x), std::abs(y)); };
          auto br = boost::math::tools::toms748_solve(f.h, zp, z, hp, hz, tol, it);
          const double r = 0.5 * (br.first + br.second);
          // sign changes across the pole of the third family are not roots
          if (std::abs(f.h(r)) <= 1e-6 * (1.0 + std::abs(r)) && std::abs(r) > 1e-8) {
            OracleRoot o;
            o.family = f.name;
            o.multiplicity = f.mult;
            o.exists = true;
            o.z = r;
            o.S = bulk.S_real(r);
            out.roots.push_back(o);
          }
        }
        zp = z;
        hp = hz;
      }
    }
  }
  std::sort(out.roots.begin(), out.roots.end(), [](const OracleRoot& x, const OracleRoot& y) { return x.z < y.z; });
  return out;
}

}  // namespace effspec
