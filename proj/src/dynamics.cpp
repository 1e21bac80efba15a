// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#include "effspec/dynamics.hpp"

#include <algorithm>
#include <tuple>
#include <cmath>
#include <stdexcept>

namespace effspec {

namespace {

Task logit_task(const Task& task) {
  if (task.centered || (task.profile.kind != ProfileKind::LogisticHessian &&
                        task.profile.kind != ProfileKind::LogisticGradient))
    throw std::invalid_argument("drift: the effective dynamics are implemented for logistic tasks only");
  Task t = task;
  t.profile.kind = ProfileKind::LogisticHessian;
  return t;
}

}  // namespace

Mat drift(const SummaryMatrix& G, const Task& task, double beta, double c_eta, const ExpectOptions& eopts) {
  const Task lt = logit_task(task);
  const int C = lt.C, q = lt.q();
  if (G.q() != q || G.C != C) throw std::invalid_argument("drift: summary matrix does not match the task");
  if (beta < 0 || c_eta < 0) throw std::invalid_argument("drift: beta and c_eta must be non-negative");
  const ProfileLaw law(lt, G.sqrtG, eopts);
  Mat A = Mat::Zero(C, q);    // sum_j p_j E_j[r w^T], L coordinates
  Mat Err = Mat::Zero(C, C);  // sum_j p_j E_j[r r^T]
  const double sigma = law.sigma();
  const auto& comps = law.components();
  for (size_t j = 0; j < comps.size(); ++j) {
    const auto& c = comps[j];
    const int r = static_cast<int>(c.h.rows());
    const int y = lt.class_map[j];
    Vec Er = Vec::Zero(C);
    Mat Erh = Mat::Zero(C, r);
    Mat Erj = Mat::Zero(C, C);
    for (Eigen::Index n = 0; n < c.w.size(); ++n) {
      Vec res = softmax(c.ip.col(n).head(C));
      res(y) -= 1.0;
      const double w = c.w(n);
      Er += w * res;
      if (r) Erh += w * res * c.h.col(n).transpose();
      Erj += w * res * res.transpose();
    }
    Mat Ew = Er * c.mean.transpose();
    if (r) Ew += sigma * Erh * c.basis.transpose();
    A += c.weight * Ew;
    Err += c.weight * Erj;
  }
  const Mat Mrip = A * G.sqrtG;  // E[r_a <Y, column c>]
  Mat D = Mat::Zero(q, q);
  const double noise = c_eta / (lt.phi * lt.lambda);
  for (int a = 0; a < C; ++a) {
    for (int b = C; b < q; ++b) {
      D(a, b) = -Mrip(a, b) - beta * G.G(a, b);
      D(b, a) = D(a, b);
    }
    for (int b = 0; b <= a; ++b) {
      D(a, b) = -Mrip(a, b) - Mrip(b, a) - 2.0 * beta * G.G(a, b) + noise * Err(a, b);
      D(b, a) = D(a, b);
    }
  }
  return D;
}

namespace {

struct Stepper {
  const Task& task;
  const DynamicsConfig& cfg;
  const ExpectOptions& eopts;
  Mat mean_block;
  double max_proj = 0.0;

  // RK stages can leave the PSD cone near rank-deficient states; clip them
  Mat f(const Mat& G) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (G + G.transpose()));
    Mat P = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
    P = 0.5 * (P + P.transpose());
    P.bottomRightCorner(task.k, task.k) = mean_block;
    return drift(SummaryMatrix::from_gram(P, task.C, task.k), task, cfg.beta, cfg.c_eta, eopts);
  }

  Mat step(const Mat& G, double h) {
    const Mat k1 = f(G);
    const Mat k2 = f(G + 0.5 * h * k1);
    const Mat k3 = f(G + 0.5 * h * k2);
    const Mat k4 = f(G + h * k3);
    Mat out = G + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    out = 0.5 * (out + out.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(out);
    if (es.eigenvalues().minCoeff() < 0.0) {
      const Mat clipped =
          es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
      Mat proj = 0.5 * (clipped + clipped.transpose());
      proj.bottomRightCorner(task.k, task.k) = mean_block;
      const double moved = (proj - out).norm();
      max_proj = std::max(max_proj, moved);
      if (moved > cfg.psd_tol)
        throw std::runtime_error("integrate: PSD projection moved G by " + std::to_string(moved) +
                                 "; reduce dt");
      out = proj;
    }
    out.bottomRightCorner(task.k, task.k) = mean_block;
    return out;
  }

  // advance from G over an interval of length len with steps of at most dt
  Mat advance(Mat G, double len, double dt) {
    if (len <= 0) return G;
    const int n = std::max(1, static_cast<int>(std::ceil(len / dt - 1e-9)));
    const double h = len / n;
    for (int i = 0; i < n; ++i) G = step(G, h);
    return G;
  }
};

}  // namespace

Trajectory integrate(const SummaryMatrix& G0, const Task& task, const DynamicsConfig& cfg, const ExpectOptions& eopts) {
  if (!(cfg.dt > 0)) throw std::invalid_argument("integrate: dt must be positive");
  if (!(cfg.T >= 0)) throw std::invalid_argument("integrate: T must be non-negative");
  if (G0.C != task.C || G0.k != task.k) throw std::invalid_argument("integrate: G0 does not match the task");
  Stepper st{task, cfg, eopts, G0.mean_block(), 0.0};
  Trajectory traj;
  std::vector<double> times;
  if (cfg.checkpoints.empty()) {
    const int n = std::max(1, static_cast<int>(std::ceil(cfg.T / cfg.dt - 1e-9)));
    const int every = std::max(1, cfg.save_every);
    for (int i = 0; i <= n; i += every) times.push_back(cfg.T * i / n);
    if (times.back() < cfg.T) times.push_back(cfg.T);
  } else {
    times = cfg.checkpoints;
    times.push_back(0.0);
    times.push_back(cfg.T);
    times.erase(std::remove_if(times.begin(), times.end(), [&](double t) { return t < 0 || t > cfg.T; }),
                times.end());
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  Mat G = G0.G;
  double tcur = 0.0;
  for (double t : times) {
    G = st.advance(G, t - tcur, cfg.dt);
    tcur = t;
    traj.t.push_back(t);
    traj.G.push_back(SummaryMatrix::from_gram(G, task.C, task.k));
    // keep the mean block bit-identical to the input
    traj.G.back().G.bottomRightCorner(task.k, task.k) = G0.mean_block();
  }
  traj.max_projection = st.max_proj;
  if (cfg.check_halving && cfg.T > 0) {
    Stepper fine{task, cfg, eopts, G0.mean_block(), 0.0};
    const Mat Gh = fine.advance(G0.G, cfg.T, 0.5 * cfg.dt);
    const Mat Gc = st.advance(G0.G, cfg.T, cfg.dt);
    traj.halving_error = (Gh - Gc).norm();
  }
  return traj;
}

std::vector<SpectralSnapshot> spectral_flow(const Trajectory& traj, const Task& task, Scaling scaling,
                                            const ExpectOptions& eopts, const OutlierOptions& oopts) {
  std::vector<SpectralSnapshot> out;
  int next_id = 0;
  struct Unit {
    double z;
    Vec v;
    int id;
  };
  auto units_of = [](const SpectralSnapshot& s) {
    std::vector<Unit> u;
    for (size_t r = 0; r < s.roots.size(); ++r)
      for (int c = 0; c < s.roots[r].multiplicity; ++c) {
        const Mat& V = s.roots[r].vectors;
        u.push_back({s.roots[r].z, c < V.cols() ? Vec(V.col(c)) : Vec(), s.ids.empty() ? -1 : s.ids[r][c]});
      }
    return u;
  };
  for (size_t i = 0; i < traj.G.size(); ++i) {
    SpectralSnapshot snap;
    snap.t = traj.t[i];
    const OutlierReport rep = find_outliers(task, traj.G[i], scaling, eopts, oopts);
    snap.support = rep.support;
    snap.roots = rep.roots();
    snap.diagnostics = rep.diagnostics;
    std::vector<Unit> cur = units_of(snap);
    if (!out.empty()) {
      std::vector<Unit> prev = units_of(out.back());
      // extrapolate each identity linearly when it was seen one snapshot earlier
      if (out.size() >= 2) {
        const std::vector<Unit> older = units_of(out[out.size() - 2]);
        const double t1 = out.back().t, t0 = out[out.size() - 2].t;
        for (auto& pu : prev)
          for (const auto& ou : older)
            if (ou.id == pu.id && t1 > t0) pu.z += (pu.z - ou.z) * (snap.t - t1) / (t1 - t0);
      }
      const double scale = std::max(1e-12, snap.support.width());
      struct Pair {
        double d, ov;
        size_t p, c;
      };
      std::vector<Pair> pairs;
      for (size_t p = 0; p < prev.size(); ++p)
        for (size_t c = 0; c < cur.size(); ++c) {
          const double d = std::abs(prev[p].z - cur[c].z);
          if (d > 0.25 * scale) continue;
          const double ov = prev[p].v.size() == cur[c].v.size() && cur[c].v.size() > 0
                                ? std::abs(prev[p].v.dot(cur[c].v))
                                : 0.0;
          pairs.push_back({d, ov, p, c});
        }
      // nearest first; near-ties go to the larger eigenvector overlap
      std::sort(pairs.begin(), pairs.end(), [&](const Pair& a, const Pair& b) {
        if (std::abs(a.d - b.d) > 1e-9 * scale) return a.d < b.d;
        if (a.ov != b.ov) return a.ov > b.ov;
        return std::tie(a.p, a.c) < std::tie(b.p, b.c);
      });
      std::vector<bool> used_p(prev.size(), false), used_c(cur.size(), false);
      for (const auto& pr : pairs) {
        if (used_p[pr.p] || used_c[pr.c]) continue;
        used_p[pr.p] = used_c[pr.c] = true;
        cur[pr.c].id = prev[pr.p].id;
      }
    }
    size_t u = 0;
    for (const auto& root : snap.roots) {
      std::vector<int> ids;
      for (int c = 0; c < root.multiplicity; ++c, ++u) {
        if (cur[u].id < 0) cur[u].id = next_id++;
        ids.push_back(cur[u].id);
      }
      snap.ids.push_back(ids);
    }
    out.push_back(std::move(snap));
  }
  return out;
}

SplittingReport splitting_diagnostics(int k, double lambda, double phi, const ExpectOptions& eopts) {
  if (k < 2) throw std::invalid_argument("splitting_diagnostics: need k >= 2");
  SplittingReport rep;
  const double kd = k;
  const double xi = (kd - 1.0) / (kd * kd), xi2 = -1.0 / (kd * kd);
  const double lp = lambda * phi;
  const Vec p = Vec::Constant(k, 1.0 / kd);
  const ZeroInitOracle orc = zero_init_oracles(k, p, lambda, phi, ProfileKind::LogisticHessian);
  const OracleRoot& r0 = orc.roots[0];
  rep.above_threshold = r0.exists;
  // continue the outlier equation into the bulk when below threshold
  rep.S0 = r0.S;
  rep.z0 = -1.0 / r0.S + phi * xi / (lp + xi * r0.S);
  const double dzdS = 1.0 / (r0.S * r0.S) - phi * xi * xi / ((lp + xi * r0.S) * (lp + xi * r0.S));
  const double Sprime = 1.0 / dzdS;
  const double e = lp + xi * rep.S0;
  // (lambda phi)^2: one factor from F itself, one from differentiating f/(lambda phi + S f)
  rep.psi = lp * lp * (kd - 2.0) / (kd * kd * kd * e * e);
  rep.b_prime = lp * lp * xi * Sprime / (kd * e * e);
  const double a = 2.0 * xi + lambda * (xi - xi2), b = xi + xi2, c = 2.0 * xi2;
  const double disc = std::sqrt((a - (kd - 1.0) * c) * (a - (kd - 1.0) * c) + 4.0 * (kd - 1.0) * b * b);
  const double cp = xi2 + (a + (kd - 1.0) * c + disc) / (2.0 * lambda);
  const double cm = xi2 + (a + (kd - 1.0) * c - disc) / (2.0 * lambda);
  for (auto fam : {SplitFamily{"c+", cp, 1, 0.0}, SplitFamily{"c-", cm, 1, 0.0}, SplitFamily{"xi'", xi2, k - 2, 0.0}}) {
    if (fam.multiplicity <= 0) continue;
    fam.velocity = -rep.psi * rep.S0 * fam.zeta / rep.b_prime;
    rep.families.push_back(fam);
  }
  std::sort(rep.families.begin(), rep.families.end(),
            [](const SplitFamily& x, const SplitFamily& y) { return x.velocity > y.velocity; });

  Task task = make_logistic_task(k, lambda, phi, ProfileKind::LogisticHessian);
  const SummaryMatrix G0 = zero_init_summary(task);
  const Mat D = drift(G0, task, 0.0, 0.0, eopts);
  rep.mean_drift = D.topRightCorner(task.C, k);
  // d<x^a, Y>/dt = sum_b D_ab <mu_b, Y>, <mu_b, Y> = delta_Jb + g_b/sqrt(lambda)
  const double s = 1.0 / std::sqrt(lambda);
  double total = 0.0;
  for (int J = 0; J < k; ++J) {
    auto h = [&](const Vec& g) {
      Vec ip = Vec::Zero(task.q());
      Vec m = s * g;
      m(J) += 1.0;
      ip.tail(k) = m;
      const Vec grad = profile_gradient(task, J, ip);
      const Vec v = rep.mean_drift * m;
      return grad.head(task.C).dot(v);
    };
    total += gaussian_expectation(h, k, eopts).value / kd;
  }
  rep.mean_fdot = total;
  return rep;
}

Vec quadratic_fit(const std::vector<double>& t, const std::vector<double>& y) {
  if (t.size() != y.size() || t.size() < 3) throw std::invalid_argument("quadratic_fit: need >= 3 points");
  Mat X(t.size(), 3);
  Vec Y(t.size());
  for (size_t i = 0; i < t.size(); ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = t[i];
    X(i, 2) = t[i] * t[i];
    Y(i) = y[i];
  }
  return X.colPivHouseholderQr().solve(Y);
}

std::vector<TransitionResult> dynamical_transition_scan(const Task& task, const std::vector<double>& lambdas,
                                                        const DynamicsConfig& cfg, double t_tol, double grid_step,
                                                        const ExpectOptions& eopts) {
  std::vector<TransitionResult> out;
  for (double lam : lambdas) {
    Task t = task;
    t.lambda = lam;
    t.validate();
    auto present = [&](const SummaryMatrix& G) {
      return !find_outliers(t, G, Scaling::Data, eopts).right_roots().empty();
    };
    TransitionResult res;
    res.lambda = lam;
    SummaryMatrix G = zero_init_summary(t);
    if (present(G)) {
      res.t_star = 0.0;
      out.push_back(res);
      continue;
    }
    double tcur = 0.0;
    while (tcur < cfg.T - 1e-15) {
      const double len = std::min(grid_step, cfg.T - tcur);
      DynamicsConfig c = cfg;
      c.T = len;
      c.checkpoints.clear();
      c.save_every = 1 << 30;
      c.check_halving = false;
      const SummaryMatrix Gn = integrate(G, t, c, eopts).G.back();
      if (present(Gn)) {
        double lo = 0.0, hi = len;
        while (hi - lo > t_tol) {
          const double mid = 0.5 * (lo + hi);
          c.T = mid;
          if (present(integrate(G, t, c, eopts).G.back()))
            hi = mid;
          else
            lo = mid;
        }
        res.t_star = tcur + hi;
        break;
      }
      G = Gn;
      tcur += len;
    }
    out.push_back(res);
  }
  return out;
}

}  // namespace effspec
