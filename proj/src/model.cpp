// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#include "effspec/model.hpp"

#include <cmath>
#include <numeric>

#include "effspec/rng.hpp"

namespace effspec {

std::string to_string(ProfileKind kind) {
  switch (kind) {
    case ProfileKind::LogisticHessian: return "logistic-hessian";
    case ProfileKind::LogisticGradient: return "logistic-gradient";
    case ProfileKind::TwoLayerHessian: return "two-layer-hessian";
    case ProfileKind::TwoLayerGradient: return "two-layer-gradient";
    case ProfileKind::MultiIndexHessian: return "multi-index-hessian";
    case ProfileKind::MultiIndexGradient: return "multi-index-gradient";
    case ProfileKind::Custom: return "custom";
  }
  return "custom";
}

ProfileKind profile_kind_from_string(const std::string& name) {
  for (auto k : {ProfileKind::LogisticHessian, ProfileKind::LogisticGradient,
                 ProfileKind::TwoLayerHessian, ProfileKind::TwoLayerGradient,
                 ProfileKind::MultiIndexHessian, ProfileKind::MultiIndexGradient,
                 ProfileKind::Custom}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unsupported profile kind '" + name + "'");
}

Activation builtin_activation(const std::string& name) {
  Activation a;
  a.name = name;
  if (name == "tanh") {
    a.h = [](double u) { return std::tanh(u); };
    a.dh = [](double u) { double t = std::tanh(u); return 1.0 - t * t; };
    a.d2h = [](double u) { double t = std::tanh(u); return -2.0 * t * (1.0 - t * t); };
    a.sup_h = 1.0;
    a.sup_dh = 1.0;
    a.sup_d2h = 4.0 / (3.0 * std::sqrt(3.0));
  } else if (name == "sigmoid") {
    auto s = [](double u) { return u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u)); };
    a.h = s;
    a.dh = [s](double u) { double p = s(u); return p * (1.0 - p); };
    a.d2h = [s](double u) { double p = s(u); return p * (1.0 - p) * (1.0 - 2.0 * p); };
    a.sup_h = 1.0;
    a.sup_dh = 0.25;
    a.sup_d2h = 1.0 / (6.0 * std::sqrt(3.0));
  } else if (name == "clamped-cubic") {
    // odd polynomial on [-1, 1] clamped to +-1 beyond, two continuous derivatives
    a.h = [](double u) {
      if (u >= 1.0) return 1.0;
      if (u <= -1.0) return -1.0;
      double u2 = u * u;
      return u * (15.0 - 10.0 * u2 + 3.0 * u2 * u2) / 8.0;
    };
    a.dh = [](double u) {
      if (std::abs(u) >= 1.0) return 0.0;
      double w = 1.0 - u * u;
      return 15.0 * w * w / 8.0;
    };
    a.d2h = [](double u) {
      if (std::abs(u) >= 1.0) return 0.0;
      return -7.5 * u * (1.0 - u * u);
    };
    a.sup_h = 1.0;
    a.sup_dh = 15.0 / 8.0;
    a.sup_d2h = 5.0 / std::sqrt(3.0);
  } else {
    throw std::invalid_argument("unknown activation '" + name + "'");
  }
  return a;
}

int Task::param_count() const {
  switch (profile.kind) {
    case ProfileKind::TwoLayerHessian:
    case ProfileKind::TwoLayerGradient:
      return profile.hidden * C;
    default:
      return C;
  }
}

void Task::validate() const {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (C < 1) throw std::invalid_argument("C must be >= 1");
  if (!(lambda > 0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be positive");
  if (!(phi > 0) || !std::isfinite(phi)) throw std::invalid_argument("phi must be positive");
  if (mean_gram.rows() != k || mean_gram.cols() != k) throw std::invalid_argument("mean_gram must be k x k");
  if ((mean_gram - mean_gram.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + mean_gram.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("mean_gram must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(mean_gram);
  if (es.eigenvalues().minCoeff() < -1e-10 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff()))
    throw std::invalid_argument("mean_gram must be positive semi-definite");
  if (!centered) {
    if (weights.size() != k) throw std::invalid_argument("weights must have length k");
    if (weights.minCoeff() < 0) throw std::invalid_argument("weights must be non-negative");
    if (std::abs(weights.sum() - 1.0) > 1e-10) throw std::invalid_argument("weights must sum to 1");
    if (static_cast<int>(class_map.size()) != k) throw std::invalid_argument("class_map must have length k");
    for (int c : class_map)
      if (c < 0 || c >= C) throw std::invalid_argument("class_map entry out of range");
  }
  const auto& pr = profile;
  switch (pr.kind) {
    case ProfileKind::LogisticHessian:
    case ProfileKind::LogisticGradient:
      if (centered) throw std::invalid_argument("logistic profiles need a mixture task");
      if (C < 2) throw std::invalid_argument("logistic profiles need C >= 2");
      if (pr.alpha < 0 || pr.alpha >= C) throw std::invalid_argument("profile alpha out of range");
      break;
    case ProfileKind::TwoLayerHessian:
    case ProfileKind::TwoLayerGradient:
      if (centered) throw std::invalid_argument("two-layer profiles need a mixture task");
      if (pr.hidden < 1) throw std::invalid_argument("two-layer profile needs hidden >= 1");
      if (pr.second_layer.rows() != C || pr.second_layer.cols() != pr.hidden)
        throw std::invalid_argument("second_layer must be C x hidden");
      if (pr.alpha < 0 || pr.alpha >= C || pr.unit < 0 || pr.unit >= pr.hidden)
        throw std::invalid_argument("two-layer block out of range");
      if (!pr.activation.h) throw std::invalid_argument("two-layer profile needs an activation");
      break;
    case ProfileKind::MultiIndexHessian:
    case ProfileKind::MultiIndexGradient:
      if (!centered) throw std::invalid_argument("multi-index profiles need a centered task");
      if (C != k) throw std::invalid_argument("multi-index task needs as many parameters as references");
      if (pr.alpha < 0 || pr.alpha >= C) throw std::invalid_argument("profile alpha out of range");
      if (!pr.activation.h) throw std::invalid_argument("multi-index profile needs a link");
      break;
    case ProfileKind::Custom:
      if (!pr.custom_eval) throw std::invalid_argument("custom profile needs an evaluator");
      if (!(pr.custom_bound > 0)) throw std::invalid_argument("custom profile needs a positive bound");
      for (int i : pr.custom_dims)
        if (i < 0 || i >= q()) throw std::invalid_argument("custom dims out of range");
      break;
  }
}

Task make_logistic_task(int k, double lambda, double phi, ProfileKind kind, int alpha) {
  Task t;
  t.k = k;
  t.C = k;
  t.weights = Vec::Constant(k, 1.0 / k);
  t.class_map.resize(k);
  std::iota(t.class_map.begin(), t.class_map.end(), 0);
  t.lambda = lambda;
  t.phi = phi;
  t.mean_gram = Mat::Identity(k, k);
  t.profile.kind = kind;
  t.profile.alpha = alpha;
  t.validate();
  return t;
}

Vec softmax(const Vec& v) {
  if (!v.allFinite()) throw DomainError("softmax: non-finite input");
  const double m = v.maxCoeff();
  Vec e = (v.array() - m).exp();
  return e / e.sum();
}

double log_sum_exp(const Vec& v) {
  if (!v.allFinite()) throw DomainError("log_sum_exp: non-finite input");
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

Vec LabeledSample::one_hot(int C) const {
  Vec y = Vec::Zero(C);
  y(label) = 1.0;
  return y;
}

double loss(const Mat& x, const LabeledSample& s) {
  if (x.rows() != s.Y.size()) throw std::invalid_argument("loss: dimension mismatch");
  if (s.label < 0 || s.label >= x.cols()) throw std::invalid_argument("loss: label out of range");
  const Vec a = x.transpose() * s.Y;
  return -a(s.label) + log_sum_exp(a);
}

Mat loss_gradient(const Mat& x, const LabeledSample& s) {
  if (x.rows() != s.Y.size()) throw std::invalid_argument("loss_gradient: dimension mismatch");
  if (s.label < 0 || s.label >= x.cols()) throw std::invalid_argument("loss_gradient: label out of range");
  Vec r = softmax(x.transpose() * s.Y);
  r(s.label) -= 1.0;
  return s.Y * r.transpose();
}

namespace {

double additive_link(const Activation& a, const Vec& u) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) s += a.h(u(i));
  return s;
}

}  // namespace

double link_value(const Task& task, const Vec& ref) {
  return additive_link(task.profile.activation, ref);
}

double profile_value(const Task& task, int b, const Vec& ip) {
  const auto& pr = task.profile;
  switch (pr.kind) {
    case ProfileKind::LogisticHessian: {
      const double p = softmax(ip.head(task.C))(pr.alpha);
      return p * (1.0 - p);
    }
    case ProfileKind::LogisticGradient: {
      const double p = softmax(ip.head(task.C))(pr.alpha);
      const double y = task.class_map[b] == pr.alpha ? 1.0 : 0.0;
      return (y - p) * (y - p);
    }
    case ProfileKind::TwoLayerHessian:
    case ProfileKind::TwoLayerGradient: {
      const int K = pr.hidden;
      Vec a(task.C);
      for (int c = 0; c < task.C; ++c) {
        double s = 0.0;
        for (int i = 0; i < K; ++i) s += pr.second_layer(c, i) * pr.activation.h(ip(c * K + i));
        a(c) = s;
      }
      const double yhat = softmax(a)(pr.alpha);
      const double y = task.class_map[b] == pr.alpha ? 1.0 : 0.0;
      const double u = ip(pr.alpha * K + pr.unit);
      const double v = pr.second_layer(pr.alpha, pr.unit);
      const double vg = v * pr.activation.dh(u);
      if (pr.kind == ProfileKind::TwoLayerGradient) return vg * (y - yhat) * vg * (y - yhat);
      return -v * pr.activation.d2h(u) * (y - yhat) + vg * vg * yhat * (1.0 - yhat);
    }
    case ProfileKind::MultiIndexHessian:
    case ProfileKind::MultiIndexGradient: {
      const int C = task.C;
      const double pred = additive_link(pr.activation, ip.head(C));
      const double y = additive_link(pr.activation, ip.tail(task.k));
      const double u = ip(pr.alpha);
      const double dg = pr.activation.dh(u);
      if (pr.kind == ProfileKind::MultiIndexGradient) {
        const double r = 2.0 * (pred - y) * dg;
        return r * r;
      }
      return 2.0 * dg * dg + 2.0 * (pred - y) * pr.activation.d2h(u);
    }
    case ProfileKind::Custom: {
      const double v = pr.custom_eval(b, ip);
      if (!(std::abs(v) <= pr.custom_bound))
        throw std::runtime_error("custom profile exceeded its declared bound");
      return v;
    }
  }
  throw std::invalid_argument("unsupported profile kind");
}

std::vector<int> profile_effective_dims(const Task& task) {
  std::vector<int> dims;
  const auto& pr = task.profile;
  switch (pr.kind) {
    case ProfileKind::LogisticHessian:
    case ProfileKind::LogisticGradient:
      for (int c = 0; c < task.C; ++c) dims.push_back(c);
      break;
    case ProfileKind::TwoLayerHessian:
    case ProfileKind::TwoLayerGradient:
      for (int i = 0; i < task.param_count(); ++i) dims.push_back(i);
      break;
    case ProfileKind::MultiIndexHessian:
    case ProfileKind::MultiIndexGradient:
      for (int i = 0; i < task.q(); ++i) dims.push_back(i);
      break;
    case ProfileKind::Custom:
      dims = pr.custom_dims;
      break;
  }
  return dims;
}

Mat profile_features(const Task& task) {
  const int q = task.q();
  const auto& pr = task.profile;
  if (pr.kind == ProfileKind::LogisticHessian || pr.kind == ProfileKind::LogisticGradient) {
    // softmax only sees differences against the target logit
    Mat T = Mat::Zero(task.C - 1, q);
    int r = 0;
    for (int c = 0; c < task.C; ++c) {
      if (c == pr.alpha) continue;
      T(r, c) = 1.0;
      T(r, pr.alpha) = -1.0;
      ++r;
    }
    return T;
  }
  const auto dims = profile_effective_dims(task);
  Mat T = Mat::Zero(static_cast<int>(dims.size()), q);
  for (size_t i = 0; i < dims.size(); ++i) T(static_cast<int>(i), dims[i]) = 1.0;
  return T;
}

double profile_bound(const Task& task) {
  const auto& pr = task.profile;
  const auto& a = pr.activation;
  switch (pr.kind) {
    case ProfileKind::LogisticHessian: return 0.25;
    case ProfileKind::LogisticGradient: return 1.0;
    case ProfileKind::TwoLayerHessian: {
      const double v = std::abs(pr.second_layer(pr.alpha, pr.unit));
      return v * a.sup_d2h + 0.25 * v * v * a.sup_dh * a.sup_dh;
    }
    case ProfileKind::TwoLayerGradient: {
      const double v = std::abs(pr.second_layer(pr.alpha, pr.unit));
      return v * v * a.sup_dh * a.sup_dh;
    }
    case ProfileKind::MultiIndexHessian:
      return 2.0 * a.sup_dh * a.sup_dh + 2.0 * (task.C + task.k) * a.sup_h * a.sup_d2h;
    case ProfileKind::MultiIndexGradient: {
      const double r = 2.0 * (task.C + task.k) * a.sup_h * a.sup_dh;
      return r * r;
    }
    case ProfileKind::Custom: return pr.custom_bound;
  }
  return 0.0;
}

Vec profile_gradient(const Task& task, int b, const Vec& ip) {
  const auto& pr = task.profile;
  Vec grad = Vec::Zero(ip.size());
  if (pr.kind == ProfileKind::LogisticHessian || pr.kind == ProfileKind::LogisticGradient) {
    const Vec s = softmax(ip.head(task.C));
    const double p = s(pr.alpha);
    Vec dp = -p * s;
    dp(pr.alpha) += p;
    double outer;
    if (pr.kind == ProfileKind::LogisticHessian) {
      outer = 1.0 - 2.0 * p;
    } else {
      const double y = task.class_map[b] == pr.alpha ? 1.0 : 0.0;
      outer = -2.0 * (y - p);
    }
    grad.head(task.C) = outer * dp;
    return grad;
  }
  for (int i : profile_effective_dims(task)) {
    const double h = 1e-6 * (1.0 + std::abs(ip(i)));
    Vec up = ip, dn = ip;
    up(i) += h;
    dn(i) -= h;
    grad(i) = (profile_value(task, b, up) - profile_value(task, b, dn)) / (2.0 * h);
  }
  return grad;
}

LabeledSample Batch::sample(int i) const {
  LabeledSample s;
  s.Y = Y.col(i);
  s.hidden = hidden.empty() ? 0 : hidden[i];
  s.label = label.empty() ? 0 : label[i];
  s.target = target.size() ? target(i) : 0.0;
  return s;
}

Batch sample_batch(const Task& task, const Mat& means, int n, std::uint64_t seed, bool noiseless,
                   std::uint64_t stream) {
  if (n <= 0) throw std::invalid_argument("sample_batch: n must be positive");
  if (means.cols() != task.k) throw std::invalid_argument("sample_batch: means must have k columns");
  if (!means.allFinite()) throw std::invalid_argument("sample_batch: non-finite means");
  const int d = static_cast<int>(means.rows());
  CounterRng labels(seed, 2 * stream);
  CounterRng noise(seed, 2 * stream + 1);
  Batch out;
  out.Y.resize(d, n);
  out.hidden.resize(n);
  out.label.resize(n);
  const double sd = 1.0 / std::sqrt(task.lambda);
  if (task.centered) out.target.resize(n);
  for (int i = 0; i < n; ++i) {
    auto col = out.Y.col(i);
    if (noiseless) {
      col.setZero();
    } else {
      for (int r = 0; r < d; ++r) col(r) = sd * noise.normal();
    }
    if (task.centered) {
      out.hidden[i] = 0;
      out.label[i] = 0;
      out.target(i) = link_value(task, means.transpose() * col);
    } else {
      const int h = labels.categorical(task.weights.data(), task.k);
      out.hidden[i] = h;
      out.label[i] = task.class_map[h];
      col += means.col(h);
    }
  }
  return out;
}

}  // namespace effspec
