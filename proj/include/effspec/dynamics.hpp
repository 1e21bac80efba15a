// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "effspec/outliers.hpp"

namespace effspec {

// Online SGD with step c_eta/n and l2 penalty beta; time t = steps * c_eta / n
// (c_eta = 0 is the small-step limit).
struct DynamicsConfig {
  double c_eta = 0.0;
  double beta = 0.0;
  double dt = 1e-3;
  double T = 1.0;
  std::vector<double> checkpoints;  // extra save times; all steps are saved when empty
  int save_every = 1;
  bool check_halving = false;
  double psd_tol = 1e-4;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<SummaryMatrix> G;
  double halving_error = -1.0;   // |G_T(dt) - G_T(dt/2)|_F when checked
  double max_projection = 0.0;   // largest PSD-projection correction
};

// dG/dt; the mean block of the result is zero.
Mat drift(const SummaryMatrix& G, const Task& task, double beta, double c_eta, const ExpectOptions& eopts = {});

Trajectory integrate(const SummaryMatrix& G0, const Task& task, const DynamicsConfig& cfg,
                     const ExpectOptions& eopts = {});

struct SpectralSnapshot {
  double t = 0.0;
  SupportSet support;
  std::vector<OutlierRoot> roots;  // ascending
  std::vector<std::vector<int>> ids;  // one identity per unit of multiplicity
  std::vector<std::string> diagnostics;
};

// Spectra along a trajectory for the task's profile.  Roots are linked across
// checkpoints by nearest location with eigenvector overlap as tiebreak.
std::vector<SpectralSnapshot> spectral_flow(const Trajectory& traj, const Task& task, Scaling scaling = Scaling::Data,
                                            const ExpectOptions& eopts = {}, const OutlierOptions& oopts = {});

struct SplitFamily {
  std::string name;   // "c+", "c-", "xi'"
  double zeta = 0.0;
  int multiplicity = 1;
  double velocity = 0.0;  // dz*/dt at t = 0
};

struct SplittingReport {
  bool above_threshold = false;
  double z0 = 0.0;      // multiplicity-k root at t = 0
  double S0 = 0.0;
  double psi = 0.0;
  double b_prime = 0.0;
  std::vector<SplitFamily> families;
  double mean_fdot = 0.0;    // E_J E_g[d f_J/dt] at t = 0
  Mat mean_drift;            // d<x^a, mu_b>/dt at t = 0 from the generic drift
};

// First-order splitting of the zero-init outlier (equal weights, orthonormal
// means, small-step limit).
SplittingReport splitting_diagnostics(int k, double lambda, double phi, const ExpectOptions& eopts = {});

// Least-squares coefficients c0 + c1 t + c2 t^2.
Vec quadratic_fit(const std::vector<double>& t, const std::vector<double>& y);

struct TransitionResult {
  double lambda = 0.0;
  std::optional<double> t_star;  // first time a root exits the bulk on the right
};
std::vector<TransitionResult> dynamical_transition_scan(const Task& task, const std::vector<double>& lambdas,
                                                        const DynamicsConfig& cfg, double t_tol = 1e-3,
                                                        double grid_step = 0.05, const ExpectOptions& eopts = {});

}  // namespace effspec
