#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "effspec/model.hpp"
#include "effspec/rng.hpp"
#include "effspec/summary.hpp"

using namespace effspec;

namespace {

// two-sample Kolmogorov-Smirnov statistic
double ks2(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

Mat orthonormal_means(int d, int k, std::uint64_t seed) {
  CounterRng r(seed);
  Mat Z(d, k);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < d; ++i) Z(i, j) = r.normal();
  Eigen::HouseholderQR<Mat> qr(Z);
  return qr.householderQ() * Mat::Identity(d, k);
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("softmax values") {
    Vec u = softmax(Vec::Zero(3));
    for (int i = 0; i < 3; ++i) CHECK(u(i) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    Vec s = softmax(Vec::Constant(3, 700.0));
    for (int i = 0; i < 3; ++i) CHECK(s(i) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    Vec v(3);
    v << 10, 0, 0;
    const Vec p = softmax(v);
    // extended-precision oracle
    const long double e10 = std::exp(10.0L), den = e10 + 2.0L;
    CHECK(std::abs(p(0) - double(e10 / den)) < 1e-15);
    CHECK(std::abs(p(1) - double(1.0L / den)) < 1e-18);
    CHECK(p(0) == doctest::Approx(0.99990889));
    CHECK(p(1) == doctest::Approx(4.5395e-5).epsilon(1e-4));
    Vec bad(2);
    bad << 1.0, NAN;
    CHECK_THROWS_AS(softmax(bad), DomainError);
  }

  TEST_CASE("loss values and gradient") {
    const int d = 5, C = 3;
    LabeledSample s;
    s.Y = Vec::LinSpaced(d, -1, 1);
    s.label = 0;
    CHECK(loss(Mat::Zero(d, C), s) == doctest::Approx(std::log(3.0)));
    // x^1 . Y = 1, others 0
    Mat x = Mat::Zero(d, C);
    x.col(0) = s.Y / s.Y.squaredNorm();
    CHECK(loss(x, s) == doctest::Approx(std::log(std::exp(1.0) + 2.0) - 1.0));
    CHECK(loss(x, s) == doctest::Approx(0.551444).epsilon(1e-6));

    const Mat g0 = loss_gradient(Mat::Zero(d, C), s);
    CHECK((g0.col(0) - (1.0 / 3 - 1) * s.Y).norm() < 1e-15);
    CHECK((g0.col(1) - (1.0 / 3) * s.Y).norm() < 1e-15);

    CounterRng r(3);
    for (int trial = 0; trial < 100; ++trial) {
      Mat xx(d, C), dir(d, C);
      for (int i = 0; i < d * C; ++i) {
        xx.data()[i] = r.normal();
        dir.data()[i] = r.normal();
      }
      LabeledSample t;
      t.Y = Vec(d);
      for (int i = 0; i < d; ++i) t.Y(i) = r.normal();
      t.label = trial % C;
      const Mat g = loss_gradient(xx, t);
      CHECK(g.rowwise().sum().norm() < 1e-12);
      const double h = 1e-5;
      const double fd = (loss(xx + h * dir, t) - loss(xx - h * dir, t)) / (2 * h);
      const double an = (g.array() * dir.array()).sum();
      CHECK(std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(an)));
    }
  }

  TEST_CASE("logistic profiles at zero parameters") {
    Task th = make_logistic_task(3, 3.0, 4.0, ProfileKind::LogisticHessian);
    Task tg = make_logistic_task(3, 3.0, 4.0, ProfileKind::LogisticGradient);
    const SummaryMatrix S = zero_init_summary(th);
    CounterRng r(1);
    for (int trial = 0; trial < 20; ++trial) {
      Vec g(th.q());
      for (int i = 0; i < th.q(); ++i) g(i) = r.normal();
      for (int b = 0; b < 3; ++b) {
        CHECK(profile_value(th, b, couple_projections(th, b, g, S)) == doctest::Approx(2.0 / 9).epsilon(1e-14));
        const double want = b == 0 ? 4.0 / 9 : 1.0 / 9;
        CHECK(profile_value(tg, b, couple_projections(tg, b, g, S)) == doctest::Approx(want).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("profile range, locality and bound") {
    Task t = make_logistic_task(3, 2.0, 4.0, ProfileKind::LogisticHessian);
    CounterRng r(2);
    Mat G = Mat::Identity(6, 6);
    G(0, 3) = G(3, 0) = 0.4;
    const SummaryMatrix S = SummaryMatrix::from_gram(G, 3, 3);
    const auto dims = profile_effective_dims(t);
    const double bound = profile_bound(t);
    for (int trial = 0; trial < 100000; ++trial) {
      Vec ip(6);
      for (int i = 0; i < 6; ++i) ip(i) = 3 * r.normal();
      const double f = profile_value(t, trial % 3, ip);
      REQUIRE(f >= 0.0);
      REQUIRE(f <= 0.25);
      REQUIRE(std::abs(f) <= bound);
      if (trial < 200) {
        Vec ip2 = ip;
        for (int i = 0; i < 6; ++i)
          if (std::find(dims.begin(), dims.end(), i) == dims.end()) ip2(i) += r.normal();
        CHECK(profile_value(t, trial % 3, ip2) == f);
      }
    }
    (void)S;
  }

  TEST_CASE("sample_batch frequencies and class means") {
    Task t = make_logistic_task(3, 2.0, 4.0, ProfileKind::LogisticHessian);
    t.weights << 0.5, 0.3, 0.2;
    const int d = 10, n = 100000;
    const Mat mu = orthonormal_means(d, 3, 5);
    const Batch b = sample_batch(t, mu, n, 9);
    std::vector<int> cnt(3, 0);
    std::vector<Vec> sum(3, Vec::Zero(d));
    for (int i = 0; i < n; ++i) {
      ++cnt[b.hidden[i]];
      CHECK(b.label[i] == t.class_map[b.hidden[i]]);
      sum[b.hidden[i]] += b.Y.col(i);
    }
    for (int j = 0; j < 3; ++j) {
      const double p = t.weights(j);
      CHECK(std::abs(cnt[j] - n * p) < 3 * std::sqrt(n * p * (1 - p)));
      CHECK((sum[j] / cnt[j] - mu.col(j)).norm() < 4 * std::sqrt(d / (t.lambda * cnt[j])));
    }
    const Batch nl = sample_batch(t, mu, 50, 9, true);
    for (int i = 0; i < 50; ++i) CHECK((nl.Y.col(i) - mu.col(nl.hidden[i])).norm() == 0.0);
  }

  TEST_CASE("coupled profile law matches finite-d data") {
    Task t = make_logistic_task(3, 2.0, 4.0, ProfileKind::LogisticHessian);
    const int d = 40, n = 100000;
    const Mat mu = orthonormal_means(d, 3, 6);
    CounterRng r(8);
    Mat x(d, 3);
    for (int i = 0; i < d * 3; ++i) x.data()[i] = r.normal() / std::sqrt(double(d));
    x.col(0) += 0.7 * mu.col(0);
    const SummaryMatrix S = compute_G(x, mu);
    const Batch b = sample_batch(t, mu, n, 13);
    std::vector<double> emp, coupled;
    CounterRng rg(21);
    for (int i = 0; i < n; ++i) {
      Vec ip(6);
      ip << x.transpose() * b.Y.col(i), mu.transpose() * b.Y.col(i);
      emp.push_back(profile_value(t, b.hidden[i], ip));
      // component drawn with the task weights
      const int c = rg.categorical(t.weights.data(), 3);
      Vec g(6);
      for (int j = 0; j < 6; ++j) g(j) = rg.normal();
      coupled.push_back(profile_value(t, c, couple_projections(t, c, g, S)));
    }
    // level 1e-3 critical value for two samples of 1e5
    CHECK(ks2(emp, coupled) < 1.95 * std::sqrt(2.0 / n));
  }

  TEST_CASE("task validation") {
    Task t = make_logistic_task(3, 2.0, 4.0, ProfileKind::LogisticHessian);
    t.weights << 0.5, 0.5, 0.5;
    CHECK_THROWS(t.validate());
    Task u = make_logistic_task(3, 2.0, 4.0, ProfileKind::LogisticHessian);
    u.lambda = -1;
    CHECK_THROWS(u.validate());
  }
}
