#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "optlab/dynamics.hpp"
#include "optlab/ilqr.hpp"
#include "optlab/ltv.hpp"
#include "optlab/sampling.hpp"

namespace optlab {

// One trajectory-optimization problem statement: which plant, where it
// starts, where it must end, and how misses are weighed.
struct TaskSection {
  std::string system = "pendulum";
  std::map<std::string, double> system_params;  // overrides by field name
  Eigen::VectorXd x0;
  Eigen::VectorXd target;
  Eigen::VectorXd stage_weights;     // diagonal of W
  double control_weight = 1e-3;      // R_u = this * I
  Eigen::VectorXd terminal_weights;  // diagonal of W_T
  std::vector<int> angle_dims;
  int horizon = 30;
  double u_max = 0.0;  // 0 = keep the system's own limit
};

struct SindySection {
  std::string basis = "poly_trig:2:angles=0";
  double threshold = 0.0;
  double svd_cutoff = 1e-12;
};

struct MlpSection {
  std::vector<int> hidden = {16, 16};
  double lr = 0.05;
  int epochs = 150;
  int batch_size = 1024;
  std::uint64_t init_seed = 3;
  std::uint64_t shuffle_seed = 4;
};

struct LtvSection {
  int n_rollouts = 40;
  double state_scale = 1e-3;
  double control_scale = 0.1;
  LtvFitMode mode = LtvFitMode::Random;
  NoiseKind noise = NoiseKind::Gaussian;
  std::uint64_t seed = 2;
};

struct StudiesSection {
  std::vector<double> perturbation_levels = {0.1, 0.6};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<std::uint64_t> bench_seeds = {1, 2, 3};
  std::vector<double> sindy_variance_levels = {0.1, 1.0};
  std::vector<double> mlp_variance_levels = {0.05, 0.25};
  int mlp_variance_trajectories = 300;
  double sindy_conditioning_level = 0.05;
  std::vector<std::string> conditioning_bases = {"poly_trig:3:angles=0",
                                                 "monomial:4"};
  std::vector<double> mlp_conditioning_levels = {0.05, 0.15};
  std::vector<int> mlp_probe_epochs = {0, 50, 150};
  std::vector<int> conditioning_orders = {1, 2, 3, 4, 5, 6, 7, 8};
  long long conditioning_samples = 1000000;
  std::uint64_t conditioning_seed = 123;
};

struct ControlBenchSection {
  TaskSection task;  // defaults to the cartpole upright task
  IlqrOptions ilqr;
  std::string sindy_basis = "poly_trig:2:angles=1";
  double train_level = 0.4;          // fraction of u_max around the optimum
  int train_trajectories = 500;
  std::uint64_t train_seed = 21;
  std::vector<std::uint64_t> init_seeds = {1, 2, 3, 4, 5};
  double init_scale = 0.2;           // initial controls uniform on ±this*u_max
};

struct ExperimentConfig {
  std::string out_dir = "runs/lab";
  int workers = 4;
  TaskSection task;
  IlqrOptions ilqr;
  SamplingSpec sampling;
  SindySection sindy;
  MlpSection mlp;
  LtvSection ltv;
  StudiesSection studies;
  ControlBenchSection control_bench;

  // Canonical merged document and its hash, recorded in every manifest so a
  // run can be traced back to the exact configuration that produced it.
  std::string canonical_json;
  std::uint64_t config_hash = 0;
};

// Built-in defaults for the named system, as the JSON document a user file
// is merged over.  Unknown system names throw ConfigError.
std::string default_config_json(const std::string& system);

// Resolution order: file (or built-in defaults when path is empty), then
// `--set key.path=value` overrides with JSON-parsed values, then the
// out-dir override.  The merged document is validated before returning.
ExperimentConfig load_experiment_config(
    const std::string& config_path, const std::vector<std::string>& overrides,
    const std::string& out_dir_override);

std::unique_ptr<System> build_system(const TaskSection& task);
CostSpec build_cost(const TaskSection& task);

// Column labels for state coordinates of the named system; xi fallback.
std::vector<std::string> state_names(const std::string& system, int n);

}  // namespace optlab
