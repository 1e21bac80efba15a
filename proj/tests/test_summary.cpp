#include <cmath>

#include "doctest.h"
#include "effspec/model.hpp"
#include "effspec/rng.hpp"
#include "effspec/summary.hpp"

using namespace effspec;

namespace {

Mat gaussian(int r, int c, std::uint64_t seed, double sd = 1.0) {
  CounterRng g(seed);
  Mat M(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) M(i, j) = sd * g.normal();
  return M;
}

Mat orthonormal(int d, int k, std::uint64_t seed) {
  Eigen::HouseholderQR<Mat> qr(gaussian(d, k, seed));
  return qr.householderQ() * Mat::Identity(d, k);
}

}  // namespace

TEST_SUITE("summary") {
  TEST_CASE("compute_G basic cases") {
    const int d = 30;
    const Mat mu = orthonormal(d, 3, 1);
    const SummaryMatrix z = compute_G(Mat::Zero(d, 3), mu);
    CHECK(z.qbar == 3);
    CHECK(z.param_block().norm() == 0.0);
    CHECK((z.mean_block() - Mat::Identity(3, 3)).norm() < 1e-12);
    const SummaryMatrix same = compute_G(mu, mu);
    CHECK(same.qbar == 3);
    CHECK((same.param_block() - same.mean_block()).norm() < 1e-12);
    CHECK((same.cross_block() - same.mean_block()).norm() < 1e-12);
  }

  TEST_CASE("Gaussian parameters concentrate to identity") {
    const int d = 4000, q = 6;
    const Mat mu = orthonormal(d, 3, 2);
    const Mat x = gaussian(d, 3, 3, 1.0 / std::sqrt(double(d)));
    const SummaryMatrix S = compute_G(x, mu);
    CHECK((S.G - Mat::Identity(q, q)).norm() <= 5 * std::sqrt(double(q * q) / d));
  }

  TEST_CASE("compute_G rotation invariance") {
    const int d = 20;
    const Mat mu = orthonormal(d, 2, 4), x = gaussian(d, 3, 5);
    const Mat O = orthonormal(d, d, 6);
    const SummaryMatrix a = compute_G(x, mu), b = compute_G(O * x, O * mu);
    CHECK((a.G - b.G).norm() < 1e-12);
  }

  TEST_CASE("psd_sqrt") {
    CHECK((psd_sqrt(Mat::Identity(4, 4)) - Mat::Identity(4, 4)).norm() < 1e-14);
    Mat D = Vec(Eigen::Vector3d(4, 0, 1)).asDiagonal();
    Mat R = Vec(Eigen::Vector3d(2, 0, 1)).asDiagonal();
    CHECK((psd_sqrt(D) - R).norm() < 1e-14);
    for (int s = 0; s < 10; ++s) {
      const Mat A = gaussian(5, 3, 10 + s);
      const Mat G = A * A.transpose();
      const Mat Rt = psd_sqrt(G);
      CHECK((Rt * Rt - G).norm() <= 1e-10);
      CHECK((Rt - Rt.transpose()).norm() < 1e-12);
      // square then root is the identity on full-rank input
      const Mat B = gaussian(5, 5, 30 + s);
      const Mat P = psd_sqrt(B * B.transpose());
      CHECK((psd_sqrt(P * P) - P).norm() < 1e-9);
    }
    Mat bad = Mat::Identity(2, 2);
    bad(1, 1) = -1e-3;
    CHECK_THROWS(psd_sqrt(bad));
    Mat tiny = Mat::Identity(2, 2);
    tiny(1, 1) = -1e-9;
    CHECK_NOTHROW(psd_sqrt(tiny));
  }

  TEST_CASE("build_L defining property") {
    const int d = 25;
    const Mat mu = orthonormal(d, 3, 7);
    {
      const ReducedBasis rb = build_L(Mat::Zero(d, 3), mu);
      const SummaryMatrix S = compute_G(Mat::Zero(d, 3), mu);
      CHECK((rb.L.transpose() * rb.L - Mat::Identity(6, 6)).norm() < 1e-10);
      Mat W(d, 6);
      W << Mat::Zero(d, 3), mu;
      CHECK((rb.L.transpose() * W - S.sqrtG).norm() < 1e-8);
      // the mean directions lie in the span of L
      CHECK((rb.L * (rb.L.transpose() * mu) - mu).norm() < 1e-10);
    }
    {
      const Mat x = gaussian(d, 3, 8);
      const ReducedBasis rb = build_L(x, mu);
      Mat W(d, 6);
      W << x, mu;
      CHECK((rb.L.transpose() * rb.L - Mat::Identity(6, 6)).norm() < 1e-10);
      CHECK((rb.L.transpose() * W - compute_G(x, mu).sqrtG).norm() < 1e-8);
    }
    {
      Mat x = gaussian(d, 3, 9);
      x.col(2) = x.col(1);
      const ReducedBasis rb = build_L(x, mu);
      const SummaryMatrix S = compute_G(x, mu);
      CHECK(S.qbar == 5);
      Mat W(d, 6);
      W << x, mu;
      CHECK((rb.L.transpose() * W - S.sqrtG).norm() < 1e-6);
    }
    CHECK_THROWS(build_L(Mat::Zero(4, 3), orthonormal(4, 3, 1)));
  }

  TEST_CASE("reduce_basis") {
    Task t = make_logistic_task(3, 2.0, 4.0, ProfileKind::LogisticHessian);
    const SummaryMatrix z = zero_init_summary(t);
    const RankReduction rz = reduce_basis(z);
    CHECK(rz.qbar == 3);
    CHECK(rz.R.bottomRows(3).norm() == 0.0);
    CHECK((rz.O * rz.O.transpose() - Mat::Identity(6, 6)).norm() < 1e-12);
    const Mat A = gaussian(6, 6, 3);
    const SummaryMatrix full = SummaryMatrix::from_gram(A * A.transpose(), 3, 3);
    const RankReduction rf = reduce_basis(full);
    CHECK(rf.qbar == 6);
    // conjugation keeps the spectrum
    Eigen::SelfAdjointEigenSolver<Mat> e1(full.G), e2(rf.O * full.G * rf.O.transpose());
    CHECK((e1.eigenvalues() - e2.eigenvalues()).norm() < 1e-10);
    // completions differ only in the null rows
    const Mat Q = orthonormal(3, 3, 4);
    const RankReduction rc = reduce_basis(z, Q);
    CHECK((rc.R.topRows(3) - rz.R.topRows(3)).norm() < 1e-12);
  }

  TEST_CASE("couple_projections") {
    Task t = make_logistic_task(3, 1e12, 4.0, ProfileKind::LogisticHessian);
    Mat G = Mat::Identity(6, 6);
    G(0, 3) = G(3, 0) = 0.5;
    const SummaryMatrix S = SummaryMatrix::from_gram(G, 3, 3);
    CounterRng r(1);
    Vec g(6);
    for (int i = 0; i < 6; ++i) g(i) = r.normal();
    for (int b = 0; b < 3; ++b) CHECK((couple_projections(t, b, g, S) - S.G.col(3 + b)).norm() < 1e-5);

    Task u = make_logistic_task(3, 2.0, 4.0, ProfileKind::LogisticHessian);
    const int n = 400000;
    Mat cov = Mat::Zero(6, 6);
    Vec mean = Vec::Zero(6);
    for (int s = 0; s < n; ++s) {
      for (int i = 0; i < 6; ++i) g(i) = r.normal();
      const Vec v = couple_projections(u, 1, g, S) - S.G.col(4);
      mean += v;
      cov += v * v.transpose();
    }
    mean /= n;
    cov /= n;
    const Mat want = S.G / u.lambda;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        const double se = std::sqrt((want(i, i) * want(j, j) + want(i, j) * want(i, j)) / n);
        CHECK(std::abs(cov(i, j) - want(i, j)) < 3 * se + 1e-12);
      }
  }

  TEST_CASE("serialize round trip") {
    const Mat A = gaussian(5, 5, 1);
    const SummaryMatrix S = SummaryMatrix::from_gram(A * A.transpose(), 2, 3);
    const SummaryMatrix T = parse_summary(serialize_summary(S));
    CHECK(T.C == 2);
    CHECK(T.k == 3);
    CHECK((T.G - S.G).norm() == 0.0);
  }
}
