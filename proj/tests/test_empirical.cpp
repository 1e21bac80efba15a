#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "effspec/empirical.hpp"
#include "effspec/rng.hpp"
#include "effspec/summary.hpp"

using namespace effspec;

namespace {

Task hessian_task(double lambda = 3, double phi = 4) {
  return make_logistic_task(3, lambda, phi, ProfileKind::LogisticHessian);
}

Mat random_matrix(int r, int c, std::uint64_t seed) {
  CounterRng g(seed);
  Mat M(r, c);
  for (int i = 0; i < r * c; ++i) M.data()[i] = g.normal();
  return M;
}

}  // namespace

TEST_SUITE("empirical") {
  TEST_CASE("mean realization and instances") {
    Task t = hessian_task();
    const Mat mu = realize_means(t, 50, 3);
    CHECK((mu.transpose() * mu - Mat::Identity(3, 3)).norm() <= 1e-12);
    Task u = hessian_task();
    u.mean_gram << 2, 0.5, 0, 0.5, 1, 0.2, 0, 0.2, 1.5;
    const Mat mv = realize_means(u, 50, 3);
    CHECK((mv.transpose() * mv - u.mean_gram).norm() <= 1e-12);
    CHECK((realize_means(t, 50, 3) - mu).norm() == 0.0);
    const EmpiricalInstance inst = make_instance(t, 101, 1);
    CHECK(inst.n == 404);
    CHECK(inst.x.norm() == 0.0);
    const EmpiricalInstance tr = make_instance(t, 101, 1, DataMode::Train);
    CHECK(tr.train.size() == 404);
  }

  TEST_CASE("summary realization") {
    Task t = hessian_task();
    EmpiricalInstance inst = make_instance(t, 60, 2);
    Mat A = random_matrix(6, 6, 4);
    Mat G = 0.3 * A * A.transpose();
    G.bottomRightCorner(3, 3) = Mat::Identity(3, 3);
    Eigen::SelfAdjointEigenSolver<Mat> es(G);
    if (es.eigenvalues().minCoeff() < 0) {
      G.topLeftCorner(3, 3) += (0.1 - es.eigenvalues().minCoeff()) * Mat::Identity(3, 3);
    }
    const SummaryMatrix S = SummaryMatrix::from_gram(G, 3, 3);
    realize_summary(inst, S, 5);
    CHECK((compute_G(inst.x, inst.means).G - S.G).norm() <= 1e-10);
    EmpiricalInstance tiny = make_instance(t, 4, 2);
    CHECK_THROWS(realize_summary(tiny, S, 5));
    gaussian_parameters(inst, 7);
    CHECK(std::abs(inst.x.squaredNorm() / 3 - 1.0) < 0.5);
  }

  TEST_CASE("assembly") {
    const int d = 20, n = 50;
    const Mat A = random_matrix(d, n, 1);
    CHECK((assemble(A, Vec::Ones(n)) - A * A.transpose() / n).norm() <= 1e-12);
    CounterRng r(2);
    Vec D(n);
    for (int i = 0; i < n; ++i) D(i) = r.normal();
    const Mat M = assemble(A, D);
    CHECK((M - A * D.asDiagonal() * A.transpose() / n).norm() <= 1e-12);
    CHECK((M - M.transpose()).norm() == 0.0);
    double tr = 0;
    for (int i = 0; i < n; ++i) tr += D(i) * A.col(i).squaredNorm() / n;
    CHECK(M.trace() == doctest::Approx(tr).epsilon(1e-12));

    Task t = hessian_task();
    const EmpiricalInstance inst = make_instance(t, 30, 3);
    const Batch b = sample_batch(t, inst.means, inst.n, 4);
    const Vec w = block_weights(t, inst.x, inst.means, b, MatrixKind::Hessian, 0, 0);
    for (int i = 0; i < w.size(); ++i) CHECK(w(i) == doctest::Approx(2.0 / 9).epsilon(1e-14));
    const Vec wc = block_weights(t, inst.x, inst.means, b, MatrixKind::Hessian, 0, 1);
    for (int i = 0; i < wc.size(); ++i) CHECK(wc(i) == doctest::Approx(-1.0 / 9).epsilon(1e-14));
    const Mat P = assemble_profile_block(t, inst.x, inst.means, b);
    CHECK((P - assemble(b.Y, w)).norm() <= 1e-12);
  }

  TEST_CASE("parameter residual is the loss gradient") {
    Task t = hessian_task();
    const Mat mu = realize_means(t, 12, 1);
    const Mat x = 0.3 * random_matrix(12, 3, 2);
    const Batch b = sample_batch(t, mu, 5, 3);
    for (int i = 0; i < 5; ++i) {
      const LabeledSample s = b.sample(i);
      const Vec r = parameter_residual(t, x, mu, s);
      CHECK((s.Y * r.transpose() - loss_gradient(x, s)).norm() <= 1e-12);
    }
  }

  TEST_CASE("symmetric eigensolver") {
    Vec v(5);
    v << 3, -1, 2, 0.5, 7;
    const Mat M = v.asDiagonal();
    const EigenResult e = eigensolve(M, 2.5);
    Vec want = v;
    std::sort(want.data(), want.data() + 5);
    CHECK((e.values - want).norm() <= 1e-14);
    REQUIRE(e.vectors.cols() == 2);
    CHECK(e.vector_values(0) == doctest::Approx(3));
    CHECK(e.vector_values(1) == doctest::Approx(7));
    CHECK(std::abs(e.vectors(0, 0)) == doctest::Approx(1));
    const Mat A = random_matrix(80, 80, 9);
    const Mat S = A + A.transpose();
    const EigenResult f = eigensolve(S, 0.0);
    CHECK(f.values.sum() == doctest::Approx(S.trace()).epsilon(1e-10));
    CHECK(f.max_residual <= 1e-8 * S.norm());
    CHECK((f.vectors.transpose() * f.vectors - Mat::Identity(f.vectors.cols(), f.vectors.cols())).norm() <= 1e-10);
    Mat bad = S;
    bad(0, 1) += 1.0;
    CHECK_THROWS(eigensolve(bad));
  }

  TEST_CASE("sgd steps") {
    Task t = hessian_task();
    EmpiricalInstance inst = make_instance(t, 40, 1, DataMode::Train);
    gaussian_parameters(inst, 2);
    const Mat x0 = inst.x;
    // zero step size leaves the parameters in place
    SgdRun still = run_sgd(inst, 20, 0.0, 0.0, 3);
    CHECK((inst.x - x0).norm() == 0.0);
    CHECK(still.checkpoints.front().t == 0.0);
    // one train-mode step by hand
    const double c = 0.5, beta = 0.2, eta = c / inst.n;
    const LabeledSample s = inst.train.sample(0);
    const Mat want = (1 - eta * beta) * x0 - eta * loss_gradient(x0, s);
    run_sgd(inst, 1, c, beta, 3);
    CHECK((inst.x - want).norm() <= 1e-13);
    // pure decay when the data carry no signal: the decay factor compounds
    EmpiricalInstance q = make_instance(t, 40, 1, DataMode::Train);
    q.train.Y.setZero();
    gaussian_parameters(q, 4);
    const Mat q0 = q.x;
    const SgdRun run = run_sgd(q, 100, 1.0, 2.0, 5, 10);
    CHECK((q.x - std::pow(1 - 2.0 / q.n, 100) * q0).norm() <= 1e-12);
    CHECK(run.checkpoints.size() == 11);
    CHECK(run.checkpoints.back().t == doctest::Approx(100.0 / q.n));
  }

  TEST_CASE("small dimension comparison at zero parameters") {
    Task t = hessian_task();
    const SummaryMatrix G = zero_init_summary(t);
    const Prediction p = predict(t, G, 2000);
    CHECK(p.bulk_lower == doctest::Approx(1.0 / 54).epsilon(1e-6));
    CHECK(p.bulk_upper == doctest::Approx(1.0 / 6).epsilon(1e-6));
    CHECK(predicted_cdf(p, 400, 0.0) == 0.0);
    CHECK(predicted_cdf(p, 400, 1.0) == doctest::Approx(1.0));
    const int d = 400;
    const EmpiricalInstance inst = make_instance(t, d, 3);
    const Batch b = sample_batch(t, inst.means, inst.n, 11);
    const Mat M = assemble_profile_block(t, inst.x, inst.means, b);
    const EigenResult eig = eigensolve(M, 0.17);
    const double ks = ks_distance(eig.values, p);
    CHECK(ks < 0.05);
    CHECK(bl_distance(eig.values, p) < 0.05);
    const ReducedBasis rb = build_L(inst.x, inst.means);
    const SpectrumComparison cmp = compare(eig, p, rb.L, inst.means, d);
    CHECK(cmp.ks == doctest::Approx(ks));
    REQUIRE_FALSE(cmp.counts.empty());
    int pred = 0;
    for (const auto& c : cmp.counts) pred += c.predicted;
    CHECK(pred == 3);
    for (const auto& o : cmp.outliers) CHECK(o.error < 0.03);

    // a rank-r perturbation moves the CDF by at most r/d
    const int r = 6;
    const Mat U = random_matrix(d, r, 5);
    const Mat Mp = M + 0.01 * U * U.transpose() / d;
    const double ksp = ks_distance(eigensolve(Mp).values, p);
    CHECK(std::abs(ksp - ks) <= double(r) / d + 1e-12);
  }

  TEST_CASE("train and test data give the same law at zero parameters") {
    Task t = hessian_task();
    const Prediction p = predict(t, zero_init_summary(t), 2000);
    const int d = 300;
    const EmpiricalInstance tr = make_instance(t, d, 4, DataMode::Train);
    const Mat Mt = assemble_profile_block(t, tr.x, tr.means, tr.train);
    const EmpiricalInstance te = make_instance(t, d, 4);
    const Mat Me = assemble_profile_block(t, te.x, te.means, sample_batch(t, te.means, te.n, 99));
    const double a = ks_distance(eigensolve(Mt).values, p), b = ks_distance(eigensolve(Me).values, p);
    CHECK(a < 0.05);
    CHECK(b < 0.05);
  }

  TEST_CASE("mode names") {
    CHECK(data_mode_from_string(to_string(DataMode::Train)) == DataMode::Train);
    CHECK(data_mode_from_string(to_string(DataMode::Test)) == DataMode::Test);
    CHECK_THROWS(data_mode_from_string("validation"));
  }
}
