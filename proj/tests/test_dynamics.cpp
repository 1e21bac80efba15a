#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "effspec/dynamics.hpp"
#include "effspec/rng.hpp"
#include "effspec/summary.hpp"

using namespace effspec;

namespace {

Task hessian_task(double lambda, double phi = 4) {
  return make_logistic_task(3, lambda, phi, ProfileKind::LogisticHessian);
}

}  // namespace

TEST_SUITE("dynamics") {
  TEST_CASE("drift at zero parameters") {
    Task t = hessian_task(3);
    const SummaryMatrix G = zero_init_summary(t);
    const Mat D = drift(G, t, 0.0, 0.0);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        CHECK(std::abs(D(a, 3 + b) - (a == b ? 2.0 / 9 : -1.0 / 9)) <= 1e-8);
        CHECK(std::abs(D(a, b)) <= 1e-12);
      }
    CHECK(D.bottomRightCorner(3, 3).norm() == 0.0);
    CHECK((D - D.transpose()).norm() <= 1e-12);
    // second-order noise: (c_eta/(phi lambda)) E[r r^T], r = softmax - onehot
    const double c = 0.7;
    const Mat Dn = drift(G, t, 0.0, c);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        const double want = c / (4 * 3) * ((a == b ? 1.0 / 3 : 0.0) - 1.0 / 9);
        CHECK(std::abs(Dn(a, b) - want) <= 1e-8);
        CHECK(std::abs(Dn(a, 3 + b) - D(a, 3 + b)) <= 1e-12);
      }
  }

  TEST_CASE("regularization dominates at large beta") {
    Task t = hessian_task(3);
    Mat G = Mat::Identity(6, 6);
    G.topLeftCorner(3, 3) *= 4.0;
    const SummaryMatrix S = SummaryMatrix::from_gram(G, 3, 3);
    const Mat D = drift(S, t, 20.0, 0.0);
    CHECK(D.topLeftCorner(3, 3).trace() < 0);
    const Mat D0 = drift(S, t, 0.0, 0.0);
    // beta contributes -2 beta <x^a, x^b> and -beta <x^a, mu_b>
    CHECK((D.topLeftCorner(3, 3) - D0.topLeftCorner(3, 3) + 40.0 * G.topLeftCorner(3, 3)).norm() <= 1e-8);
    CHECK((D.topRightCorner(3, 3) - D0.topRightCorner(3, 3) + 20.0 * G.topRightCorner(3, 3)).norm() <= 1e-8);
  }

  TEST_CASE("constant trajectory at a drift zero") {
    // labels independent of the data: the population gradient vanishes at x = 0
    Task t = hessian_task(3);
    t.mean_gram = Mat::Zero(3, 3);
    const SummaryMatrix G0 = SummaryMatrix::from_gram(Mat::Zero(6, 6), 3, 3);
    DynamicsConfig cfg;
    cfg.dt = 0.05;
    cfg.T = 0.5;
    const Trajectory tr = integrate(G0, t, cfg);
    for (const auto& G : tr.G) CHECK(G.G.norm() <= 1e-12);
  }

  TEST_CASE("integration invariants and step halving") {
    Task t = hessian_task(3);
    const SummaryMatrix G0 = zero_init_summary(t);
    DynamicsConfig cfg;
    cfg.dt = 1e-2;
    cfg.T = 1.0;
    cfg.check_halving = true;
    const Trajectory tr = integrate(G0, t, cfg);
    CHECK(tr.t.front() == 0.0);
    CHECK(tr.t.back() == doctest::Approx(1.0));
    CHECK(tr.halving_error >= 0.0);
    CHECK(tr.halving_error <= 1e-6);
    for (const auto& G : tr.G) {
      CHECK((G.mean_block().array() == G0.mean_block().array()).all());
      CHECK((G.G - G.G.transpose()).norm() <= 1e-12);
      Eigen::SelfAdjointEigenSolver<Mat> es(G.G);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    }
    // the parameter-mean overlaps start out with the drift at zero
    const double h = tr.t[1];
    CHECK(std::abs(tr.G[1].cross_block()(0, 0) / h - 2.0 / 9) < 0.05);
    DynamicsConfig one = cfg;
    one.T = 0.0;
    one.check_halving = false;
    CHECK(integrate(G0, t, one).t.size() == 1);
  }

  TEST_CASE("outlier splits along the flow") {
    Task t = hessian_task(6);
    DynamicsConfig cfg;
    cfg.dt = 1e-4;
    cfg.T = 2e-3;
    cfg.checkpoints = {0.0, 1e-3, 2e-3};
    const Trajectory tr = integrate(zero_init_summary(t), t, cfg);
    const auto flow = spectral_flow(tr, t);
    REQUIRE(flow.size() == 3);
    const auto r0 = [&] {
      std::vector<OutlierRoot> v;
      for (const auto& r : flow[0].roots)
        if (r.z > flow[0].support.upper()) v.push_back(r);
      return v;
    }();
    REQUIRE(r0.size() == 1);
    CHECK(r0[0].multiplicity == 3);
    const double z0 = r0[0].z;
    // expand every snapshot into one location per unit of multiplicity
    auto units = [&](const SpectralSnapshot& s) {
      std::vector<double> z;
      for (const auto& r : s.roots)
        if (r.z > s.support.upper())
          for (int m = 0; m < r.multiplicity; ++m) z.push_back(r.z);
      std::sort(z.begin(), z.end());
      return z;
    };
    const auto u1 = units(flow[1]), u2 = units(flow[2]);
    REQUIRE(u1.size() == 3);
    REQUIRE(u2.size() == 3);
    CHECK(u1[2] > z0);
    CHECK(u2[2] > u1[2]);
    for (int i = 0; i < 2; ++i) {
      CHECK(u1[i] < z0);
      CHECK(u2[i] < u1[i]);
    }
    // three units keep three distinct identities after the split
    std::vector<int> ids;
    for (const auto& v : flow[2].ids) ids.insert(ids.end(), v.begin(), v.end());
    std::sort(ids.begin(), ids.end());
    CHECK(std::unique(ids.begin(), ids.end()) - ids.begin() >= 3);
  }

  TEST_CASE("bulk is stationary to first order") {
    Task t = hessian_task(6);
    DynamicsConfig cfg;
    cfg.dt = 1e-4;
    cfg.T = 4e-3;
    cfg.checkpoints = {0.0, 1e-3, 2e-3, 3e-3, 4e-3};
    const Trajectory tr = integrate(zero_init_summary(t), t, cfg);
    std::vector<double> ts, edge;
    std::vector<StieltjesSolver> solvers;
    for (size_t i = 0; i < tr.t.size(); ++i) {
      if (std::find_if(cfg.checkpoints.begin(), cfg.checkpoints.end(),
                       [&](double c) { return std::abs(c - tr.t[i]) < 1e-12; }) == cfg.checkpoints.end())
        continue;
      ts.push_back(tr.t[i]);
      solvers.emplace_back(ProfileLaw::from_summary(t, tr.G[i]), Scaling::Data);
      edge.push_back(solvers.back().support().upper());
    }
    REQUIRE(ts.size() == 5);
    CHECK(std::abs(quadratic_fit(ts, edge)(1)) <= 1e-3);
    const double up = edge[0];
    std::vector<double> tq = {ts[0], ts[1], ts[2], ts[4]};
    for (int i = 0; i < 10; ++i) {
      const double z = up * (1.2 + 0.3 * i);
      std::vector<double> S;
      for (int j : {0, 1, 2, 4}) S.push_back(solvers[j].S_real(z));
      CHECK(std::abs(quadratic_fit(tq, S)(1)) <= 1e-6 * std::max(1.0, std::abs(S[0])));
    }
  }

  TEST_CASE("quadratic fit") {
    std::vector<double> t = {0, 1, 2, 3, 4}, y;
    for (double s : t) y.push_back(1.5 - 2 * s + 0.25 * s * s);
    const Vec c = quadratic_fit(t, y);
    CHECK(c(0) == doctest::Approx(1.5));
    CHECK(c(1) == doctest::Approx(-2));
    CHECK(c(2) == doctest::Approx(0.25));
  }

  TEST_CASE("splitting diagnostics") {
    const SplittingReport r = splitting_diagnostics(3, 6, 4);
    CHECK(r.above_threshold);
    CHECK(std::abs(r.mean_fdot) <= 1e-9);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) CHECK(std::abs(r.mean_drift(a, b) - (a == b ? 2.0 / 9 : -1.0 / 9)) <= 1e-8);
    int total = 0, up = 0, down = 0;
    for (const auto& f : r.families) {
      total += f.multiplicity;
      if (f.velocity > 0) up += f.multiplicity;
      if (f.velocity < 0) down += f.multiplicity;
    }
    CHECK(total == 3);
    CHECK(up == 1);
    CHECK(down == 2);
    // first-order velocities against finite differences of the generic flow
    Task t = hessian_task(6);
    DynamicsConfig cfg;
    cfg.dt = 1e-5;
    cfg.T = 2e-4;
    cfg.checkpoints = {0.0, 1e-4, 2e-4};
    const auto flow = spectral_flow(integrate(zero_init_summary(t), t, cfg), t);
    std::vector<double> top;
    for (const auto& s : flow) top.push_back(s.roots.back().z);
    const double fd = (-3 * top[0] + 4 * top[1] - top[2]) / 2e-4;
    double vmax = -INFINITY;
    for (const auto& f : r.families) vmax = std::max(vmax, f.velocity);
    CHECK(fd == doctest::Approx(vmax).epsilon(0.05));
    // multiplicity accounting 1 + 1 + (k - 2) at k = 4
    const SplittingReport r4 = splitting_diagnostics(4, 6, 4);
    std::vector<int> mult;
    for (const auto& f : r4.families) mult.push_back(f.multiplicity);
    std::sort(mult.begin(), mult.end());
    CHECK(mult == std::vector<int>{1, 1, 2});
  }

  TEST_CASE("dynamical transition scan") {
    Task t = hessian_task(3);
    DynamicsConfig cfg;
    cfg.dt = 1e-2;
    cfg.T = 0.3;
    const auto above = dynamical_transition_scan(t, {1.65}, cfg);
    REQUIRE(above.size() == 1);
    REQUIRE(above[0].t_star.has_value());
    CHECK(*above[0].t_star == 0.0);
    const auto coarse = dynamical_transition_scan(t, {0.75, 1.2}, cfg, 1e-3, 0.1);
    const auto fine = dynamical_transition_scan(t, {0.75, 1.2}, cfg, 1e-3, 0.05);
    REQUIRE(coarse.size() == 2);
    for (size_t i = 0; i < coarse.size(); ++i) {
      MESSAGE("lambda " << coarse[i].lambda << " t* "
                        << (coarse[i].t_star ? std::to_string(*coarse[i].t_star) : std::string("none")));
      CHECK(coarse[i].t_star.has_value() == fine[i].t_star.has_value());
      if (coarse[i].t_star && fine[i].t_star) CHECK(std::abs(*coarse[i].t_star - *fine[i].t_star) <= 0.1);
    }
  }
}
