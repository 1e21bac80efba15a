// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#include "effspec/expect.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "effspec/rng.hpp"

namespace effspec {

namespace {

// Orthonormal Hermite polynomials (standard normal weight) at x: returns
// p_n(x) and p_{n-1}(x), accumulating sum_{j<n} p_j^2.
void hermite_eval(int n, double x, double& pn, double& pn1, double& sumsq) {
  double p0 = 1.0, p1 = x;
  sumsq = 1.0;
  if (n == 1) {
    pn = p1;
    pn1 = p0;
    return;
  }
  sumsq += p1 * p1;
  for (int j = 1; j < n - 1; ++j) {
    const double p2 = (x * p1 - std::sqrt(static_cast<double>(j)) * p0) / std::sqrt(j + 1.0);
    p0 = p1;
    p1 = p2;
    sumsq += p1 * p1;
  }
  pn = (x * p1 - std::sqrt(n - 1.0) * p0) / std::sqrt(static_cast<double>(n));
  pn1 = p1;
}

GaussHermiteRule build_rule(int n) {
  GaussHermiteRule rule;
  if (n == 1) {
    rule.x = {0.0};
    rule.w = {1.0};
    return rule;
  }
  Mat J = Mat::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) J(i, i + 1) = J(i + 1, i) = std::sqrt(i + 1.0);
  Eigen::SelfAdjointEigenSolver<Mat> es(J, Eigen::EigenvaluesOnly);
  rule.x.resize(n);
  rule.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = es.eigenvalues()(i);
    double pn, pn1, ss;
    for (int it = 0; it < 8; ++it) {
      hermite_eval(n, x, pn, pn1, ss);
      const double dx = pn / (std::sqrt(static_cast<double>(n)) * pn1);
      x -= dx;
      if (std::abs(dx) < 1e-15 * (1.0 + std::abs(x))) break;
    }
    hermite_eval(n, x, pn, pn1, ss);
    rule.x[i] = x;
    rule.w[i] = 1.0 / ss;
  }
  // exact symmetry
  for (int i = 0; i < n / 2; ++i) {
    const double xs = 0.5 * (rule.x[n - 1 - i] - rule.x[i]);
    const double ws = 0.5 * (rule.w[n - 1 - i] + rule.w[i]);
    rule.x[i] = -xs;
    rule.x[n - 1 - i] = xs;
    rule.w[i] = rule.w[n - 1 - i] = ws;
  }
  if (n % 2) rule.x[n / 2] = 0.0;
  double tot = 0.0;
  for (double w : rule.w) tot += w;
  for (double& w : rule.w) w /= tot;
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: need n >= 1");
  static std::mutex mu;
  static std::map<int, GaussHermiteRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_rule(n)).first;
  return it->second;
}

bool uses_monte_carlo(int dim, const ExpectOptions& opts) {
  if (opts.method == ExpectMethod::MonteCarlo) return dim > 0;
  if (opts.method == ExpectMethod::GaussHermite) return false;
  return dim > opts.max_gh_dim;
}

NodeSet gaussian_nodes(int dim, const ExpectOptions& opts, int nodes_override) {
  NodeSet out;
  if (dim == 0) {
    out.h = Mat::Zero(0, 1);
    out.w = Vec::Ones(1);
    return out;
  }
  if (uses_monte_carlo(dim, opts)) {
    const int pairs = std::max(1, opts.samples / 2);
    out.monte_carlo = true;
    out.h.resize(dim, 2 * pairs);
    out.w = Vec::Constant(2 * pairs, 1.0 / (2.0 * pairs));
    CounterRng rng(opts.seed, 0x6a09e667ull);
    for (int p = 0; p < pairs; ++p) {
      for (int i = 0; i < dim; ++i) {
        const double g = rng.normal();
        out.h(i, 2 * p) = g;
        out.h(i, 2 * p + 1) = -g;
      }
    }
    return out;
  }
  const int n = nodes_override > 0 ? nodes_override : opts.nodes;
  const auto& rule = gauss_hermite(n);
  const double wmax = *std::max_element(rule.w.begin(), rule.w.end());
  const double cutoff = opts.prune * std::pow(wmax, dim);
  std::vector<double> xs, ws;
  std::vector<int> idx(dim, 0);
  std::vector<double> pts;
  std::vector<double> wts;
  // odometer over the product grid with early pruning on partial products
  std::function<void(int, double)> rec = [&](int level, double wprod) {
    if (level == dim) {
      for (int i = 0; i < dim; ++i) pts.push_back(rule.x[idx[i]]);
      wts.push_back(wprod);
      return;
    }
    const double rest = std::pow(wmax, dim - level - 1);
    for (int j = 0; j < n; ++j) {
      const double wp = wprod * rule.w[j];
      if (wp * rest < cutoff) continue;
      idx[level] = j;
      rec(level + 1, wp);
    }
  };
  rec(0, 1.0);
  const int N = static_cast<int>(wts.size());
  out.h = Eigen::Map<Mat>(pts.data(), dim, N);
  out.w = Eigen::Map<Vec>(wts.data(), N);
  out.w /= out.w.sum();
  return out;
}

MatrixEstimate gaussian_expectation_matrix(const std::function<Mat(const Vec&)>& h, int dim, int rows,
                                           int cols, const ExpectOptions& opts) {
  MatrixEstimate out;
  out.value = Mat::Zero(rows, cols);
  out.error = Mat::Zero(rows, cols);
  auto eval = [&](const NodeSet& ns) {
    Mat acc = Mat::Zero(rows, cols);
    for (Eigen::Index n = 0; n < ns.w.size(); ++n) {
      Mat v = h(ns.h.col(n));
      if (!v.allFinite()) throw DomainError("gaussian_expectation: non-finite integrand at a node");
      acc += ns.w(n) * v;
    }
    return acc;
  };
  NodeSet ns = gaussian_nodes(dim, opts);
  if (!ns.monte_carlo) {
    out.value = eval(ns);
    if (dim > 0 && opts.nodes > 1) {
      NodeSet half = gaussian_nodes(dim, opts, std::max(1, opts.nodes / 2));
      out.error = (out.value - eval(half)).cwiseAbs();
    }
    return out;
  }
  const Eigen::Index pairs = ns.w.size() / 2;
  Mat sumsq = Mat::Zero(rows, cols);
  for (Eigen::Index p = 0; p < pairs; ++p) {
    Mat a = h(ns.h.col(2 * p));
    Mat b = h(ns.h.col(2 * p + 1));
    if (!a.allFinite() || !b.allFinite()) throw DomainError("gaussian_expectation: non-finite integrand");
    Mat m = 0.5 * (a + b);
    out.value += m;
    sumsq += m.cwiseProduct(m);
  }
  out.value /= static_cast<double>(pairs);
  Mat var = (sumsq / static_cast<double>(pairs) - out.value.cwiseProduct(out.value)).cwiseMax(0.0);
  out.error = (var / static_cast<double>(std::max<Eigen::Index>(1, pairs - 1))).cwiseSqrt();
  return out;
}

Estimate gaussian_expectation(const std::function<double(const Vec&)>& h, int dim,
                              const ExpectOptions& opts) {
  auto m = gaussian_expectation_matrix([&](const Vec& g) { return Mat::Constant(1, 1, h(g)); }, dim, 1, 1,
                                       opts);
  return {m.value(0, 0), m.error(0, 0)};
}

Estimate mixture_expectation(const std::vector<std::function<double(const Vec&)>>& h, const Vec& weights,
                             int dim, const ExpectOptions& opts) {
  if (static_cast<Eigen::Index>(h.size()) != weights.size())
    throw std::invalid_argument("mixture_expectation: size mismatch");
  if (weights.size() == 0 || weights.minCoeff() < 0 || std::abs(weights.sum() - 1.0) > 1e-10)
    throw std::invalid_argument("mixture_expectation: invalid weights");
  Estimate out;
  double var = 0.0;
  for (size_t b = 0; b < h.size(); ++b) {
    if (weights(b) == 0.0) continue;
    Estimate e = gaussian_expectation(h[b], dim, opts);
    out.value += weights(b) * e.value;
    var += weights(b) * weights(b) * e.error * e.error;
  }
  out.error = std::sqrt(var);
  return out;
}

ProfileLaw::ProfileLaw(const Task& task, const Mat& root, const ExpectOptions& opts)
    : task_(task), root_(root) {
  task.validate();
  const int q = task.q();
  if (root.rows() != q || root.cols() != q) throw std::invalid_argument("ProfileLaw: root must be q x q");
  sigma_ = 1.0 / std::sqrt(task.lambda);
  const Mat T = profile_features(task);
  const Mat M = T * root.transpose() * sigma_;
  int r = 0;
  Mat V;
  if (M.rows() > 0) {
    Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullV);
    const Vec s = svd.singularValues();
    const double top = s.size() ? s(0) : 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s(i) > 1e-12 * std::max(1.0, top)) ++r;
    V = svd.matrixV().leftCols(r);
  } else {
    V = Mat::Zero(q, 0);
  }
  const NodeSet nodes = gaussian_nodes(r, opts);
  mc_ = nodes.monte_carlo;
  const double bound = profile_bound(task);
  const int P = task.param_count();
  std::vector<std::pair<double, double>> raw;
  for (int b = 0; b < task.components(); ++b) {
    ComponentLaw c;
    c.weight = task.component_weight(b);
    c.mean = task.centered ? Vec::Zero(q) : Vec(root.col(P + b));
    c.basis = V;
    c.h = nodes.h;
    c.w = nodes.w;
    const Eigen::Index N = nodes.w.size();
    c.f.resize(N);
    c.ip.resize(q, N);
    for (Eigen::Index n = 0; n < N; ++n) {
      Vec w = c.mean;
      if (r) w += sigma_ * (V * nodes.h.col(n));
      const Vec ip = root.transpose() * w;
      const double fv = profile_value(task, b, ip);
      if (!std::isfinite(fv)) throw DomainError("ProfileLaw: non-finite profile value");
      if (std::abs(fv) > bound * (1.0 + 1e-9))
        throw std::runtime_error("ProfileLaw: profile value exceeds its declared bound");
      c.ip.col(n) = ip;
      c.f(n) = fv;
      max_abs_f_ = std::max(max_abs_f_, std::abs(fv));
      if (c.weight > 0 && c.w(n) > 0) raw.emplace_back(fv, c.weight * c.w(n));
    }
    comps_.push_back(std::move(c));
  }
  std::sort(raw.begin(), raw.end());
  const double tol = 1e-14 * std::max(max_abs_f_, 1e-300);
  for (const auto& a : raw) {
    if (!atoms_.empty() && std::abs(a.first - atoms_.back().first) <= tol)
      atoms_.back().second += a.second;
    else
      atoms_.push_back(a);
  }
}

ProfileLaw ProfileLaw::from_summary(const Task& task, const SummaryMatrix& S, const ExpectOptions& opts) {
  return ProfileLaw(task, S.sqrtG, opts);
}

int ProfileLaw::max_rank() const {
  int r = 0;
  for (const auto& c : comps_) r = std::max(r, static_cast<int>(c.h.rows()));
  return r;
}

}  // namespace effspec
