// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "effspec/dynamics.hpp"
#include "effspec/empirical.hpp"

namespace effspec {

// Invalid or unreadable configuration.  what() carries "file:line: field: message".
struct ConfigError : std::runtime_error {
  ConfigError(const std::string& msg, std::string field, int line)
      : std::runtime_error(msg), field(std::move(field)), line(line) {}
  std::string field;
  int line = 0;
};

enum class InitKind { Zero, Gaussian, Explicit };

struct InitConfig {
  InitKind kind = InitKind::Zero;
  Mat G;  // explicit only
};

struct SolverConfig {
  Scaling scaling = Scaling::Data;
  BulkOptions bulk;
  ExpectOptions expect;
  OutlierOptions outliers;
  int density_points = 4000;
  std::optional<double> density_eta;
};

struct EmpiricalConfig {
  int d = 2000;
  std::vector<std::uint64_t> seeds{1};
  DataMode mode = DataMode::Test;
  std::vector<double> times{0.0};  // SGD times at which spectra are taken
  int bins = 200;
};

struct FigureConfig {
  std::string name;  // static, gradient-lambda, hessian-training, gradient-training, two-layer-xor
  std::vector<double> lambdas;
  std::vector<DataMode> modes{DataMode::Test};
};

struct Scenario {
  Task task;
  InitConfig init;
  SolverConfig solver;
  DynamicsConfig dynamics;
  EmpiricalConfig empirical;
  FigureConfig figure;
  std::string output;
  std::string source;  // file the scenario was read from
};

// Strict parse: unknown keys, wrong types and non-positive tolerances are
// rejected.  A string "task" value is a path to a task file, resolved
// relative to base_dir.
Scenario parse_scenario(const std::string& text, const std::string& source = "<config>",
                        const std::string& base_dir = ".");
Scenario load_scenario(const std::string& path);

// Resolved scenario in canonical form; its dump is what gets hashed.
std::string canonical_json(const Scenario& s);

SummaryMatrix initial_summary(const Scenario& s);

}  // namespace effspec
