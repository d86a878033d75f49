#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "fedef/federation_engine.hpp"
#include "fedef/problems.hpp"

namespace fedef {

// File form of a run. A config is a UTF-8 `key = value` document with dotted
// section keys (problem.*, fl.*, compression.*, output.*); `#` starts a
// comment. Unknown keys are rejected with the offending key named.
struct ExperimentConfig {
  // problem
  std::string problem_kind = "quadratic";  // quadratic | logistic | mlp
  std::size_t problem_n = 4;               // clients
  std::size_t problem_d = 16;              // quadratic dimension
  double problem_spread = 1.0;
  double problem_sigma = 0.0;              // stochastic-gradient noise
  std::uint64_t problem_seed = 1;
  std::size_t problem_samples = 256;       // data problems
  std::size_t problem_features = 8;
  std::size_t problem_classes = 4;
  std::size_t problem_hidden = 16;         // mlp hidden width
  double problem_l2 = 1e-3;
  std::string problem_data;                // optional CSV path

  // fl
  std::size_t fl_m = 0;  // 0 = full participation
  int fl_T = 100;
  int fl_K = 1;
  double fl_eta = 1.0;
  double fl_eta_l = 0.1;
  double fl_beta1 = 0.9;
  double fl_beta2 = 0.999;
  double fl_epsilon = 1e-8;
  // "full" or a positive integer; empty picks the per-kind default
  // (full batch for quadratics, 32 for data problems).
  std::string fl_batch;
  std::string fl_optimizer = "sgd";  // sgd | ams

  // compression
  std::string comp_upload = "identity";
  std::string comp_download = "none";  // none = full-precision broadcast
  bool comp_ef = true;
  int comp_restart_S = 0;  // 0 = disabled
  int comp_restart_start = 1;

  // output
  std::string out_dir = "out";
  std::uint64_t seed = 42;  // master seed
  int metrics_every = 1;
};

ExperimentConfig parse_config_text(std::string_view text);
ExperimentConfig parse_config_file(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

RunConfig to_run_config(const ExperimentConfig& cfg);   // validates
Problem build_problem(const ExperimentConfig& cfg);

}  // namespace fedef
