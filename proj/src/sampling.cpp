#include "optlab/sampling.hpp"

#include <algorithm>
#include <stdexcept>

#include "optlab/errors.hpp"

namespace optlab {

std::vector<Eigen::VectorXd> Dataset::stacked_inputs() const {
  std::vector<Eigen::VectorXd> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) {
    Eigen::VectorXd z(s.x.size() + s.u.size());
    z << s.x, s.u;
    out.push_back(std::move(z));
  }
  return out;
}

Eigen::MatrixXd Dataset::next_state_matrix() const {
  if (samples.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd Y(samples.size(), samples[0].xn.size());
  for (int i = 0; i < (int)samples.size(); ++i) Y.row(i) = samples[i].xn;
  return Y;
}

std::vector<Eigen::VectorXd> perturb_controls(
    const std::vector<Eigen::VectorXd>& nominal, double level, double u_max,
    NoiseKind noise, Rng& rng) {
  if (level < 0.0) throw ConfigError("perturbation level must be >= 0");
  if (u_max <= 0.0) throw ConfigError("u_max must be > 0");
  const double scale = level * u_max;
  std::vector<Eigen::VectorXd> out;
  out.reserve(nominal.size());
  for (const Eigen::VectorXd& u : nominal) {
    Eigen::VectorXd v(u.size());
    for (int j = 0; j < u.size(); ++j) {
      const double delta = (noise == NoiseKind::Uniform)
                               ? rng.uniform(-scale, scale)
                               : rng.normal(0.0, scale);
      v[j] = std::clamp(u[j] + delta, -u_max, u_max);
    }
    out.push_back(std::move(v));
  }
  return out;
}

Dataset generate_dataset(const System& system, const Trajectory& nominal,
                         const SamplingSpec& spec) {
  if (spec.n_trajectories < 1)
    throw ConfigError("n_trajectories must be >= 1");
  if (nominal.controls.empty())
    throw ConfigError("nominal trajectory has no controls");
  if (nominal.states.empty())
    throw ConfigError("nominal trajectory has no states");

  const int horizon = (int)nominal.controls.size();
  Dataset ds;
  ds.meta.system = system.name();
  ds.meta.seed = spec.seed;
  ds.meta.perturbation_level = spec.perturbation_level;
  ds.meta.n_trajectories = spec.n_trajectories;
  ds.meta.horizon = horizon;
  ds.meta.noise = spec.noise;
  ds.samples.reserve((size_t)spec.n_trajectories * horizon);

  Rng root(spec.seed);
  for (int i = 0; i < spec.n_trajectories; ++i) {
    Rng stream = root.substream(i);
    const std::vector<Eigen::VectorXd> controls = perturb_controls(
        nominal.controls, spec.perturbation_level, system.params().u_max,
        spec.noise, stream);
    Trajectory traj;
    try {
      traj = rollout(system, nominal.states[0], controls);
    } catch (const NumericalError& e) {
      throw NumericalError("trajectory " + std::to_string(i) + ": " +
                           e.what());
    }
    for (int t = 0; t < horizon; ++t) {
      Sample s;
      s.traj = i;
      s.t = t;
      s.x = traj.states[t];
      s.u = traj.controls[t];
      s.xn = traj.states[t + 1];
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double ratio,
                                          Rng& rng) {
  if (dataset.samples.empty()) throw ConfigError("cannot split empty dataset");
  if (!(ratio > 0.0 && ratio < 1.0))
    throw ConfigError("split ratio must lie strictly between 0 and 1");

  std::vector<int> ids;
  for (const Sample& s : dataset.samples)
    if (ids.empty() || s.traj != ids.back()) ids.push_back(s.traj);
  const int n = (int)ids.size();
  if (n < 2) throw ConfigError("need at least 2 trajectories to split");

  // Fisher-Yates on the trajectory ids.
  for (int i = n - 1; i > 0; --i) {
    const int j = (int)rng.uniform_int((std::uint64_t)i + 1);
    std::swap(ids[i], ids[j]);
  }
  int n_train = (int)std::lround(ratio * n);
  n_train = std::clamp(n_train, 1, n - 1);

  std::vector<char> in_train(
      *std::max_element(ids.begin(), ids.end()) + 1, 0);
  for (int i = 0; i < n_train; ++i) in_train[ids[i]] = 1;

  Dataset train, test;
  train.meta = dataset.meta;
  test.meta = dataset.meta;
  train.meta.n_trajectories = n_train;
  test.meta.n_trajectories = n - n_train;
  for (const Sample& s : dataset.samples)
    (in_train[s.traj] ? train : test).samples.push_back(s);
  return {std::move(train), std::move(test)};
}

}  // namespace optlab
