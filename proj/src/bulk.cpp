// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#include "effspec/bulk.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "effspec/rng.hpp"

namespace effspec {

std::string to_string(Scaling s) { return s == Scaling::Data ? "data" : "theory"; }

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Bisection for a sign change of fn on (lo, hi); fn(lo) and fn(hi) may be
// poles, only interior points are evaluated.
template <class Fn>
double bisect(Fn fn, double lo, double hi, bool increasing) {
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double v = fn(mid);
    if ((v > 0) == increasing)
      hi = mid;
    else
      lo = mid;
    if (hi - lo <= 2e-16 * std::max(std::abs(lo), std::abs(hi))) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

StieltjesSolver::StieltjesSolver(const ProfileLaw& law, Scaling scaling, const BulkOptions& opts)
    : StieltjesSolver(law.atoms(), law.task().lambda, law.task().phi, scaling, opts) {}

StieltjesSolver::StieltjesSolver(std::vector<std::pair<double, double>> atoms, double lambda, double phi,
                                 Scaling scaling, const BulkOptions& opts)
    : atoms_(std::move(atoms)), lambda_(lambda), phi_(phi), scaling_(scaling), opts_(opts) {
  if (!(lambda > 0) || !(phi > 0)) throw std::invalid_argument("StieltjesSolver: lambda and phi must be positive");
  if (atoms_.empty()) throw std::invalid_argument("StieltjesSolver: empty profile law");
  kappa_ = scaling == Scaling::Data ? lambda * phi : 1.0;
  std::sort(atoms_.begin(), atoms_.end());
  double total = 0.0, fmax = 0.0;
  for (const auto& a : atoms_) {
    if (!(a.second >= 0) || !std::isfinite(a.first)) throw std::invalid_argument("StieltjesSolver: bad atom");
    total += a.second;
    fmax = std::max(fmax, std::abs(a.first));
  }
  if (!(total > 0)) throw std::invalid_argument("StieltjesSolver: profile law has no mass");
  for (auto& a : atoms_) a.second /= total;
  const double ztol = 1e-14 * fmax;
  for (const auto& a : atoms_) {
    if (a.second == 0.0) continue;
    if (std::abs(a.first) <= ztol) {
      zero_mass_rho_ += a.second;
    } else if (!fv_.empty() && std::abs(a.first - fv_.back()) <= 1e-15 * fmax) {
      fa_.back() += a.second;
    } else {
      fv_.push_back(a.first);
      fa_.push_back(a.second);
    }
  }
  build_support();
  if (opts_.cross_validate) cross_validate();
}

double StieltjesSolver::psi(double y) const {
  double s = 0.0;
  for (size_t i = 0; i < fv_.size(); ++i) s += fa_[i] * fv_[i] / (y - fv_[i]);
  return y + phi_ * y * s;
}

double StieltjesSolver::dpsi(double y) const {
  double s = 0.0;
  for (size_t i = 0; i < fv_.size(); ++i) {
    const double r = fv_[i] / (y - fv_[i]);
    s += fa_[i] * r * r;
  }
  return 1.0 - phi_ * s;
}

double StieltjesSolver::d2psi(double y) const {
  double s = 0.0;
  for (size_t i = 0; i < fv_.size(); ++i) {
    const double e = y - fv_[i];
    s += fa_[i] * fv_[i] * fv_[i] / (e * e * e);
  }
  return 2.0 * phi_ * s;
}

cplx StieltjesSolver::gsum1(cplx u) const {
  cplx s = 0.0;
  for (size_t i = 0; i < fv_.size(); ++i) s += fa_[i] * fv_[i] / (1.0 + u * fv_[i]);
  return s;
}

cplx StieltjesSolver::gsum2(cplx u) const {
  cplx s = 0.0;
  for (size_t i = 0; i < fv_.size(); ++i) {
    const cplx r = fv_[i] / (1.0 + u * fv_[i]);
    s += fa_[i] * r * r;
  }
  return s;
}

cplx StieltjesSolver::gsum3(cplx u) const {
  cplx s = 0.0;
  for (size_t i = 0; i < fv_.size(); ++i) {
    const cplx e = 1.0 + u * fv_[i];
    s += fa_[i] * fv_[i] / (e * e);
  }
  return s;
}

void StieltjesSolver::build_support() {
  theory_gaps_.clear();
  std::vector<Gap> raw;
  auto add_gap = [&](double ylo, double yhi) {
    // y = 0 is the zero atom, not part of the gap
    if (ylo < 0.0 && yhi > 0.0) {
      raw.push_back({ylo == -kInf ? -kInf : psi(ylo), 0.0, ylo, 0.0});
      raw.push_back({0.0, yhi == kInf ? kInf : psi(yhi), 0.0, yhi});
    } else {
      raw.push_back({ylo == -kInf ? -kInf : psi(ylo), yhi == kInf ? kInf : psi(yhi), ylo, yhi});
    }
  };
  const size_t m = fv_.size();
  if (m == 0) {
    add_gap(-kInf, kInf);
  } else {
    double s2 = 0.0;
    for (size_t i = 0; i < m; ++i) s2 += fa_[i] * fv_[i] * fv_[i];
    const double reach = 2.0 * std::sqrt(phi_ * s2) + 1e-300;
    auto dp = [&](double y) { return dpsi(y); };
    // left of the smallest pole: psi' decreases from 1
    {
      const double yb = bisect(dp, fv_[0] - reach, fv_[0], false);
      add_gap(-kInf, yb);
    }
    for (size_t i = 0; i + 1 < m; ++i) {
      const double a = fv_[i], b = fv_[i + 1];
      const double delta = b - a;
      const double A = fa_[i] * a * a, B = fa_[i + 1] * b * b;
      const double c = std::cbrt(A) + std::cbrt(B);
      if (phi_ * c * c * c >= delta * delta) continue;
      const double ym = bisect([&](double y) { return d2psi(y); }, a, b, false);
      if (!(dpsi(ym) > 0.0)) continue;
      const double ylo = bisect(dp, a, ym, true);
      const double yhi = bisect(dp, ym, b, false);
      if (yhi > ylo) add_gap(ylo, yhi);
    }
    {
      const double yc = bisect(dp, fv_[m - 1], fv_[m - 1] + reach, true);
      add_gap(yc, kInf);
    }
  }
  std::sort(raw.begin(), raw.end(), [](const Gap& x, const Gap& y) { return x.ylo < y.ylo; });

  // support components between consecutive gaps, with the pole mass inside
  auto pole_mass = [&](double ylo, double yhi) {
    double s = 0.0;
    for (size_t i = 0; i < m; ++i)
      if (fv_[i] > ylo && fv_[i] < yhi) s += fa_[i];
    return s;
  };
  std::vector<Gap> gaps = raw;
  std::vector<std::vector<Gap>> members;
  for (const auto& g : gaps) members.push_back({g});
  SupportSet sup;
  for (;;) {
    int worst = -1;
    double worst_mass = opts_.merge_mass;
    for (size_t i = 0; i + 1 < gaps.size(); ++i) {
      if (gaps[i].hi == gaps[i + 1].lo) continue;  // the zero atom
      const double mass = pole_mass(gaps[i].yhi, gaps[i + 1].ylo);
      if (mass < worst_mass) {
        worst_mass = mass;
        worst = static_cast<int>(i);
      }
    }
    if (worst < 0) break;
    const size_t i = static_cast<size_t>(worst);
    const bool left_ok = gaps[i].bounded();
    const bool right_ok = gaps[i + 1].bounded();
    if (!left_ok && !right_ok) break;  // the only component; keep it
    if (!left_ok || !right_ok) {
      // light component at an outer end: fold it into the unbounded gap
      Gap merged{gaps[i].lo, gaps[i + 1].hi, gaps[i].ylo, gaps[i + 1].yhi};
      auto mem = members[i];
      mem.insert(mem.end(), members[i + 1].begin(), members[i + 1].end());
      gaps.erase(gaps.begin() + i, gaps.begin() + i + 2);
      members.erase(members.begin() + i, members.begin() + i + 2);
      gaps.insert(gaps.begin() + i, merged);
      members.insert(members.begin() + i, mem);
      sup.warnings.push_back("folded a light outer support component into the unbounded gap");
      continue;
    }
    const size_t drop = (gaps[i].hi - gaps[i].lo) <= (gaps[i + 1].hi - gaps[i + 1].lo) ? i : i + 1;
    gaps.erase(gaps.begin() + drop);
    members.erase(members.begin() + drop);
  }

  theory_gaps_.clear();
  for (const auto& mem : members)
    for (const auto& g : mem) theory_gaps_.push_back(g);
  std::sort(theory_gaps_.begin(), theory_gaps_.end(), [](const Gap& x, const Gap& y) { return x.ylo < y.ylo; });

  const double k = kappa_;
  for (const auto& g : gaps) {
    Gap s = g;
    s.lo = g.lo / k;
    s.hi = g.hi / k;
    sup.gaps.push_back(s);
  }
  for (size_t i = 0; i + 1 < sup.gaps.size(); ++i) sup.intervals.emplace_back(sup.gaps[i].hi, sup.gaps[i + 1].lo);
  sup.zero_atom = std::max(0.0, 1.0 - phi_ * (1.0 - zero_mass_rho_));
  if (sup.zero_atom < 1e-14) sup.zero_atom = 0.0;
  support_ = sup;
}

int StieltjesSolver::gap_index(double z) const {
  for (size_t i = 0; i < support_.gaps.size(); ++i) {
    const auto& g = support_.gaps[i];
    if (z > g.lo && z < g.hi) return static_cast<int>(i);
  }
  return -1;
}

double StieltjesSolver::solve_gap_theory(double zeta, const Gap& g) const {
  // bracket in y, psi is increasing on the gap
  double lo = g.ylo, hi = g.yhi;
  if (lo == -kInf) {
    double step = std::max(1.0, std::abs(hi));
    lo = hi - step;
    while (psi(lo) > zeta) {
      step *= 2.0;
      lo = hi - step;
      if (!std::isfinite(lo)) throw std::runtime_error("S_real: failed to bracket");
    }
  }
  if (hi == kInf) {
    double step = std::max(1.0, std::abs(lo));
    hi = lo + step;
    while (psi(hi) < zeta) {
      step *= 2.0;
      hi = lo + step;
      if (!std::isfinite(hi)) throw std::runtime_error("S_real: failed to bracket");
    }
  }
  // safeguarded Newton
  double y = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double r = psi(y) - zeta;
    if (r > 0)
      hi = y;
    else
      lo = y;
    const double d = dpsi(y);
    double yn = y - r / d;
    if (!(d > 0) || !(yn > lo && yn < hi)) yn = 0.5 * (lo + hi);
    if (std::abs(yn - y) <= 1e-16 * std::max(std::abs(y), 1e-300)) {
      y = yn;
      break;
    }
    y = yn;
    if (hi - lo <= 1e-16 * std::max(std::abs(lo), std::abs(hi))) break;
  }
  return y;
}

double StieltjesSolver::S_real(double z) const {
  const int gi = gap_index(z);
  if (gi < 0) throw DomainError("S_real: z = " + std::to_string(z) + " is not in a spectral gap");
  const double zeta = kappa_ * z;
  for (const auto& g : theory_gaps_) {
    if (zeta > g.lo && zeta < g.hi) {
      const double y = solve_gap_theory(zeta, g);
      return kappa_ * (-1.0 / y);
    }
  }
  // inside a folded light component: limit from the upper half plane
  const double eta = 1e-13 * std::max(1.0, std::abs(z));
  return S(cplx(z, eta)).real();
}

double StieltjesSolver::residual(cplx z, cplx S) const {
  const cplx zeta = kappa_ * z;
  const cplx u = S / kappa_;
  return std::abs(1.0 + zeta * u - phi_ * u * gsum1(u));
}

cplx StieltjesSolver::solve_theory(cplx zeta, cplx guess, bool have_guess, SolveInfo* info) const {
  int total_it = 0;
  auto res = [&](cplx u) { return std::abs(1.0 + zeta * u - phi_ * u * gsum1(u)); };
  auto newton = [&](cplx zt, cplx u, int maxit, bool& ok) {
    ok = false;
    for (int it = 0; it < maxit; ++it) {
      ++total_it;
      const cplx s1 = gsum1(u);
      const cplx G = 1.0 / u + zt - phi_ * s1;
      const double r = std::abs(u * G);
      if (r < 0.1 * opts_.residual_tol) {
        ok = true;
        return u;
      }
      const cplx dG = -1.0 / (u * u) + phi_ * gsum2(u);
      cplx step = G / dG;
      cplx un = u - step;
      int halv = 0;
      while ((un.imag() <= 0.0 || !std::isfinite(un.real())) && halv < 40) {
        step *= 0.5;
        un = u - step;
        ++halv;
      }
      if (un.imag() <= 0.0) return u;
      if (std::abs(un - u) <= 1e-15 * std::abs(u)) {
        u = un;
        const cplx s = gsum1(u);
        ok = std::abs(u * (1.0 / u + zt - phi_ * s)) < opts_.residual_tol;
        return u;
      }
      u = un;
    }
    const cplx s1 = gsum1(u);
    ok = std::abs(u * (1.0 / u + zt - phi_ * s1)) < opts_.residual_tol;
    return u;
  };
  auto fixed_point = [&](cplx zt, cplx u) {
    const double w = 0.5;
    for (int it = 0; it < opts_.max_iter; ++it) {
      ++total_it;
      const cplx un = (1.0 - w) * u + w / (-zt + phi_ * gsum1(u));
      if (std::abs(un - u) <= 1e-13 * std::abs(un)) return un;
      u = un;
      if (total_it > 4 * opts_.max_iter) break;
    }
    return u;
  };

  const double eta = zeta.imag();
  if (!(eta > 0)) throw DomainError("solve_stieltjes: z must lie in the upper half plane or a gap");
  bool ok = false;
  cplx u;
  if (have_guess && guess.imag() > 0) {
    u = newton(zeta, guess, 60, ok);
    if (ok) {
      if (info) {
        info->iterations = total_it;
        info->residual = res(u);
      }
      return u;
    }
  }
  double fmax = 0.0;
  for (double f : fv_) fmax = std::max(fmax, std::abs(f));
  const double scale = (1.0 + phi_) * (1.0 + std::sqrt(phi_)) * fmax + std::abs(zeta.real()) + 1.0;
  double eta_cur = std::max(eta, 10.0 * scale);
  cplx zt(zeta.real(), eta_cur);
  u = fixed_point(zt, -1.0 / zt);
  u = newton(zt, u, 100, ok);
  double ratio = 0.1;
  while (eta_cur > eta) {
    const double eta_next = std::max(eta, eta_cur * ratio);
    const cplx zn(zeta.real(), eta_next);
    // first-order predictor along eta
    cplx un = newton(zn, u, 60, ok);
    if (!ok) {
      un = fixed_point(zn, u);
      un = newton(zn, un, 100, ok);
    }
    if (!ok) {
      ratio = std::sqrt(ratio);
      if (ratio > 0.999) break;
      continue;
    }
    u = un;
    eta_cur = eta_next;
    if (ratio < 0.1) ratio = std::min(0.1, ratio * ratio);
    if (total_it > opts_.max_iter) break;
  }
  const double r = res(u);
  if (info) {
    info->iterations = total_it;
    info->residual = r;
  }
  if (!(r < opts_.residual_tol) || !(eta_cur <= eta))
    throw std::runtime_error("solve_stieltjes: no convergence at z = (" + std::to_string(zeta.real() / kappa_) +
                             ", " + std::to_string(eta / kappa_) + "), residual " + std::to_string(r));
  return u;
}

cplx StieltjesSolver::S(cplx z, SolveInfo* info) const {
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) throw DomainError("solve_stieltjes: non-finite z");
  if (z.imag() == 0.0) {
    const double s = S_real(z.real());
    if (info) {
      info->iterations = 0;
      info->residual = residual(z, s);
    }
    return s;
  }
  if (z.imag() < 0.0) return std::conj(S(std::conj(z), info));
  return kappa_ * solve_theory(kappa_ * z, 0.0, false, info);
}

cplx StieltjesSolver::S_derivative(cplx z) const {
  const cplx s = S(z);
  const cplx u = s / kappa_;
  const cplx du = 1.0 / (1.0 / (u * u) - phi_ * gsum2(u));
  return kappa_ * kappa_ * du;
}

double StieltjesSolver::S_derivative_real(double, double s) const {
  const double u = s / kappa_;
  const double du = 1.0 / (1.0 / (u * u) - phi_ * gsum2(u).real());
  return kappa_ * kappa_ * du;
}

double StieltjesSolver::S_derivative_real(double z) const { return S_derivative_real(z, S_real(z)); }

std::vector<double> StieltjesSolver::density(const std::vector<double>& grid, double eta) const {
  if (!(eta > 0)) throw std::invalid_argument("density: eta must be positive");
  std::vector<double> out(grid.size(), 0.0);
  cplx prev = 0.0;
  bool have = false;
  double prev_x = 0.0;
  const double m0 = support_.zero_atom;
  for (size_t i = 0; i < grid.size(); ++i) {
    const double x = grid[i];
    const cplx zeta = kappa_ * cplx(x, eta);
    const bool near = have && std::abs(x - prev_x) <= 50.0 * eta + 0.05 * std::max(support_.width(), 1e-300);
    cplx u = solve_theory(zeta, prev, near, nullptr);
    prev = u;
    have = true;
    prev_x = x;
    double rho = (kappa_ * u).imag() / M_PI;
    if (m0 > 0) rho -= m0 * eta / (M_PI * (x * x + eta * eta));
    out[i] = std::max(rho, 0.0);
  }
  return out;
}

void StieltjesSolver::cross_validate() {
  const double width = support_.width();
  if (!(width > 0)) return;
  const double delta = opts_.edge_agree * width;
  const double eta = 1e-3 * delta;
  auto dens = [&](double x) { return density({x}, eta)[0]; };
  for (const auto& iv : support_.intervals) {
    const double len = iv.second - iv.first;
    if (len <= 0) continue;
    for (int side = 0; side < 2; ++side) {
      const double e = side == 0 ? iv.first : iv.second;
      if (support_.zero_atom > 0 && std::abs(e) <= 1e-12 * width) continue;
      const double inside = side == 0 ? e + std::min(delta, 0.5 * len) : e - std::min(delta, 0.5 * len);
      const double outside = side == 0 ? e - delta : e + delta;
      try {
        const double din = dens(inside);
        const double dout = gap_index(outside) >= 0 ? dens(outside) : din;
        if (!(din > 0) || !(dout < 0.1 * din))
          support_.warnings.push_back("edge " + std::to_string(e) +
                                      ": density cross-check disagrees (inside " + std::to_string(din) +
                                      ", outside " + std::to_string(dout) + ")");
      } catch (const std::exception& ex) {
        support_.warnings.push_back(std::string("edge cross-check failed: ") + ex.what());
      }
    }
  }
}

StieltjesSolver StieltjesSolver::rescaled() const {
  BulkOptions o = opts_;
  o.cross_validate = false;
  StieltjesSolver out(atoms_, lambda_, phi_, scaling_ == Scaling::Data ? Scaling::Theory : Scaling::Data, o);
  out.support_.warnings = support_.warnings;
  return out;
}

cplx solve_stieltjes(cplx z, const Task& task, const SummaryMatrix& G, Scaling scaling, const ExpectOptions& eopts) {
  BulkOptions bo;
  bo.cross_validate = false;
  StieltjesSolver s(ProfileLaw::from_summary(task, G, eopts), scaling, bo);
  return s.S(z);
}

SupportSet support_intervals(const Task& task, const SummaryMatrix& G, Scaling scaling, const ExpectOptions& eopts,
                             const BulkOptions& bopts) {
  StieltjesSolver s(ProfileLaw::from_summary(task, G, eopts), scaling, bopts);
  return s.support();
}

cplx mp_reference(cplx z, double v, double c) {
  // c v z S^2 + (z - v (1 - c)) S + 1 = 0
  auto roots = [&](cplx zz) {
    const cplx a = c * v * zz;
    const cplx b = zz - v * (1.0 - c);
    const cplx disc = std::sqrt(b * b - 4.0 * a);
    return std::pair<cplx, cplx>((-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a));
  };
  if (z.imag() > 0) {
    auto r = roots(z);
    return r.first.imag() > r.second.imag() ? r.first : r.second;
  }
  if (z.imag() < 0) return std::conj(mp_reference(std::conj(z), v, c));
  const double eps = 1e-9 * (1.0 + std::abs(z.real()));
  const cplx ref = mp_reference(cplx(z.real(), eps), v, c);
  auto r = roots(z);
  return std::abs(r.first - ref) < std::abs(r.second - ref) ? r.first : r.second;
}

std::pair<double, double> mp_edges(double v, double c) {
  const double s = std::sqrt(c);
  return {v * (1.0 - s) * (1.0 - s), v * (1.0 + s) * (1.0 + s)};
}

double mp_density(double x, double v, double c) {
  const auto e = mp_edges(v, c);
  if (x <= e.first || x >= e.second) return 0.0;
  return std::sqrt((e.second - x) * (x - e.first)) / (2.0 * M_PI * c * v * x);
}

RemReference rem_bulk_reference(double lambda, double phi, int C, int alpha, int samples, std::uint64_t seed,
                                Scaling scaling) {
  if (C < 2 || alpha < 0 || alpha >= C || samples < 1)
    throw std::invalid_argument("rem_bulk_reference: bad arguments");
  CounterRng rng(seed, 0x52454d);
  std::vector<double> vals(samples);
  Vec g(C);
  const double sd = 1.0 / std::sqrt(lambda);
  for (int s = 0; s < samples; ++s) {
    for (int c = 0; c < C; ++c) g(c) = sd * rng.normal();
    const double p = softmax(g)(alpha);
    vals[s] = p * (1.0 - p);
  }
  std::vector<std::pair<double, double>> atoms;
  atoms.reserve(samples);
  for (double v : vals) atoms.emplace_back(v, 1.0 / samples);
  BulkOptions bo;
  bo.cross_validate = false;
  return {vals, StieltjesSolver(atoms, lambda, phi, scaling, bo)};
}

}  // namespace effspec
