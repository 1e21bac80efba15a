// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "effspec/dynamics.hpp"

namespace effspec {

enum class DataMode { Test, Train };
std::string to_string(DataMode m);
DataMode data_mode_from_string(const std::string& s);

enum class MatrixKind { Hessian, Gradient };

void set_blas_threads(int n);

// d x k means with Gram equal to task.mean_gram.
Mat realize_means(const Task& task, int d, std::uint64_t seed);

struct EmpiricalInstance {
  Task task;
  int d = 0;
  int n = 0;
  Mat means;  // d x k
  Mat x;      // d x param_count
  std::uint64_t seed = 0;
  DataMode mode = DataMode::Test;
  Batch train;  // used in train mode
};

EmpiricalInstance make_instance(const Task& task, int d, std::uint64_t seed, DataMode mode = DataMode::Test);

// Parameters and means (on a seeded orthonormal frame) with compute_G equal to G.
void realize_summary(EmpiricalInstance& inst, const SummaryMatrix& G, std::uint64_t seed);
// x with i.i.d. N(0, 1/d) entries.
void gaussian_parameters(EmpiricalInstance& inst, std::uint64_t seed);

// Diagonal weights D_ll of the block, computed from the actual inner products.
Vec block_weights(const Task& task, const Mat& x, const Mat& means, const Batch& batch, MatrixKind kind, int b, int c);
// (1/n) A diag(D) A^T
Mat assemble(const Mat& A, const Vec& D);
Mat assemble_block(const Task& task, const Mat& x, const Mat& means, const Batch& batch, MatrixKind kind, int b,
                   int c);
// the task's own diagonal profile block (b = c = profile.alpha)
Mat assemble_profile_block(const Task& task, const Mat& x, const Mat& means, const Batch& batch);

struct EigenResult {
  Vec values;          // ascending
  Mat vectors;         // d x m, eigenvectors with value > threshold
  Vec vector_values;   // their eigenvalues, ascending
  double max_residual = 0.0;
};
EigenResult eigensolve(const Mat& M, double vectors_above = std::numeric_limits<double>::infinity());

// Gradient of the loss with respect to the parameter columns: Y r^T.
Vec parameter_residual(const Task& task, const Mat& x, const Mat& means, const LabeledSample& s);

struct SgdCheckpoint {
  long step = 0;
  double t = 0.0;  // step * c_eta / n
  SummaryMatrix G;
};
struct SgdRun {
  Mat x;
  std::vector<SgdCheckpoint> checkpoints;
};
// x <- x - (c_eta/n)(grad + beta x); one fresh sample per step in test mode,
// cycling the instance's train batch in train mode.
SgdRun run_sgd(EmpiricalInstance& inst, long steps, double c_eta, double beta, std::uint64_t seed,
               long checkpoint_every = 0);

struct GapCount {
  double lo = 0.0, hi = 0.0;  // counting window
  int predicted = 0;
  int empirical = 0;
};
struct OutlierMatch {
  double predicted = 0.0;
  double empirical = 0.0;
  double error = 0.0;
};
struct VectorCheck {
  double z = 0.0;
  double residual = 0.0;        // |(zI - F(z)) u|, u = L^T v
  double norm_residual = 0.0;   // ||u||^2 - <u, dF u> - 1
  Vec mean_projections;         // <v, mu_j/|mu_j|>
};
struct SpectrumComparison {
  double ks = 0.0;
  double bl = 0.0;
  std::vector<GapCount> counts;
  std::vector<OutlierMatch> outliers;
  std::vector<VectorCheck> vectors;
  bool counts_match() const {
    for (const auto& c : counts)
      if (c.predicted != c.empirical) return false;
    return true;
  }
};

struct Prediction {
  Task task;
  SummaryMatrix G;
  OutlierReport outliers;
  std::vector<double> cdf_x, cdf_y;  // predicted CDF of the full spectrum (bulk part)
  double bulk_lower = 0.0, bulk_upper = 0.0;
  std::vector<double> density_x, density_y;
};
// Data scaling, matching (1/n) A D A^T.
Prediction predict(const Task& task, const SummaryMatrix& G, int grid = 4000, const ExpectOptions& eopts = {},
                   const OutlierOptions& oopts = {}, const BulkOptions& bopts = {});

double predicted_cdf(const Prediction& p, int d, double x);
double ks_distance(const Vec& eigenvalues, const Prediction& p);
double bl_distance(const Vec& eigenvalues, const Prediction& p, int levels = 401, int bins = 2000);

// L: d x q basis with L^T (x, mu) = sqrtG (canonical coordinates).
SpectrumComparison compare(const EigenResult& eig, const Prediction& p, const Mat& L, const Mat& means, int d,
                           double margin_fraction = -1.0);
// Same from stored data: U = L^T V (q x m), mean_projections k x m.
SpectrumComparison compare_projected(const Vec& values, const Vec& vector_values, const Mat& U,
                                     const Mat& mean_projections, const Prediction& p, int d,
                                     double margin_fraction = -1.0);

}  // namespace effspec
