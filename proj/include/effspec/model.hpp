// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace effspec {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

enum class ProfileKind {
  LogisticHessian,
  LogisticGradient,
  TwoLayerHessian,
  TwoLayerGradient,
  MultiIndexHessian,
  MultiIndexGradient,
  Custom
};

std::string to_string(ProfileKind kind);
ProfileKind profile_kind_from_string(const std::string& name);

// Scalar activation (or additive link component) with declared sup-norms.
struct Activation {
  std::string name;
  std::function<double(double)> h, dh, d2h;
  double sup_h = 0.0, sup_dh = 0.0, sup_d2h = 0.0;
};

// tanh, sigmoid, clamped-cubic
Activation builtin_activation(const std::string& name);

struct DiagonalProfile {
  ProfileKind kind = ProfileKind::LogisticHessian;
  int alpha = 0;  // class of the diagonal block
  int unit = 0;   // hidden unit of the block (two-layer)
  int hidden = 0; // hidden width K (two-layer)
  Mat second_layer;  // C x K output weights (two-layer)
  Activation activation;
  // custom kind: evaluator on the coupled inner products
  std::function<double(int, const Vec&)> custom_eval;
  std::vector<int> custom_dims;
  double custom_bound = 0.0;
};

// Dimension-free description of the learning task.
//
// Coordinates of the q-vector of inner products: the first param_count()
// entries are <Y, x^c> (for two-layer: <Y, W^c_i> at c*K + i), the last k are
// <Y, mu_j>.  For centered tasks (multi-index regression) the data are
// N(0, I/lambda) and the last k columns are the reference directions.
struct Task {
  int k = 0;
  int C = 0;
  Vec weights;
  std::vector<int> class_map;
  double lambda = 1.0;
  double phi = 1.0;
  Mat mean_gram;
  DiagonalProfile profile;
  bool centered = false;

  int param_count() const;
  int q() const { return param_count() + k; }
  int components() const { return centered ? 1 : k; }
  double component_weight(int b) const { return centered ? 1.0 : weights(b); }
  void validate() const;
};

// Standard logistic task: equal weights, identity class map, orthonormal means.
Task make_logistic_task(int k, double lambda, double phi, ProfileKind kind, int alpha = 0);

Vec softmax(const Vec& v);
double log_sum_exp(const Vec& v);

struct LabeledSample {
  Vec Y;
  int label = 0;   // class index
  int hidden = 0;  // component index
  double target = 0.0;  // regression response (centered tasks)
  Vec one_hot(int C) const;
};

// Cross-entropy loss of the linear classifier with columns x^c.
double loss(const Mat& x, const LabeledSample& s);
Mat loss_gradient(const Mat& x, const LabeledSample& s);

// Profile evaluated on the coupled inner products ip (length q) for component b.
double profile_value(const Task& task, int b, const Vec& ip);
// Indices of ip the profile reads.
std::vector<int> profile_effective_dims(const Task& task);
// Linear features T with f depending on ip only through T * ip.
Mat profile_features(const Task& task);
double profile_bound(const Task& task);
// Gradient of the profile in ip (analytic for logistic kinds, central
// differences otherwise).
Vec profile_gradient(const Task& task, int b, const Vec& ip);

struct Batch {
  Mat Y;  // d x n, one sample per column
  std::vector<int> hidden;
  std::vector<int> label;
  Vec target;  // centered tasks only
  int size() const { return static_cast<int>(Y.cols()); }
  LabeledSample sample(int i) const;
};

// Draw n samples Y = mu_hidden + N(0, I_d/lambda).  If noiseless, Y = mu_hidden.
// For centered tasks means holds the reference directions and Y ~ N(0, I/lambda).
Batch sample_batch(const Task& task, const Mat& means, int n, std::uint64_t seed,
                   bool noiseless = false, std::uint64_t stream = 0);

// Regression response g(Theta^T Y) of a centered task.
double link_value(const Task& task, const Vec& ref_projections);

}  // namespace effspec
