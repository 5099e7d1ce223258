#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "optlab/dynamics.hpp"
#include "optlab/rng.hpp"

namespace optlab {

enum class NoiseKind { Uniform, Gaussian };

struct SamplingSpec {
  double perturbation_level = 0.1;  // fraction of u_max
  int n_trajectories = 2000;
  std::uint64_t seed = 1;
  double split_ratio = 0.9;  // train fraction
  NoiseKind noise = NoiseKind::Uniform;
};

struct DatasetMeta {
  std::string system;
  std::uint64_t seed = 0;
  double perturbation_level = 0.0;
  int n_trajectories = 0;
  int horizon = 0;
  NoiseKind noise = NoiseKind::Uniform;
};

// One observed transition x -> xn under input u, tagged with its source
// trajectory and timestep.
struct Sample {
  int traj = 0;
  int t = 0;
  Eigen::VectorXd x, u, xn;
};

struct Dataset {
  std::vector<Sample> samples;
  DatasetMeta meta;

  int size() const { return static_cast<int>(samples.size()); }
  int state_dim() const { return samples.empty() ? 0 : (int)samples[0].x.size(); }
  int control_dim() const { return samples.empty() ? 0 : (int)samples[0].u.size(); }

  // Concatenated (state, control) inputs, one vector per sample.
  std::vector<Eigen::VectorXd> stacked_inputs() const;

  // R × n_x matrix of next states.
  Eigen::MatrixXd next_state_matrix() const;
};

// nominal[t] + δ with δ i.i.d. per component: uniform on
// [−level·u_max, +level·u_max] or gaussian with that standard deviation.
// The sum is saturated to [−u_max, u_max].
std::vector<Eigen::VectorXd> perturb_controls(
    const std::vector<Eigen::VectorXd>& nominal, double level, double u_max,
    NoiseKind noise, Rng& rng);

// n_trajectories rollouts from nominal.states[0] under independently
// perturbed copies of the nominal controls.  Trajectory i draws from
// substream(spec.seed, i), so the dataset does not depend on generation
// order and a prefix of trajectories is stable under growing the count.
Dataset generate_dataset(const System& system, const Trajectory& nominal,
                         const SamplingSpec& spec);

// Disjoint random partition by trajectory (never by sample, to keep test
// transitions out of training neighborhoods).  Sizes are within one
// trajectory of the requested ratio.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double ratio,
                                          Rng& rng);

}  // namespace optlab
