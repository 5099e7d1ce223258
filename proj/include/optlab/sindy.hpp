#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "optlab/basis.hpp"
#include "optlab/dynamics.hpp"
#include "optlab/sampling.hpp"

namespace optlab {

struct SindyMeta {
  double threshold = 0.0;
  double svd_cutoff = 1e-12;
  long long n_train = 0;
  std::uint64_t seed = 0;
  double perturbation_level = 0.0;
  double gram_cond = 0.0;              // of the full training Gram
  Eigen::VectorXd residual_rms;        // per state coordinate
  Eigen::VectorXd max_abs_residual;    // per state coordinate, over train
};

// Linear-in-features surrogate x' = Ξᵀ ψ([x; u]) fitted by least squares,
// optionally with sequentially thresholded support selection.  Behaves as a
// DynamicsModel so rollouts and linearization treat it like any plant.
class SindyModel final : public DynamicsModel {
 public:
  SindyModel(BasisSet basis, Eigen::MatrixXd xi, int state_dim,
             int control_dim, SindyMeta meta);

  int state_dim() const override { return state_dim_; }
  int control_dim() const override { return control_dim_; }

  // Ξᵀ ψ([x; u]).  Returns non-finite values untouched so that rollout can
  // name the diverging timestep; throws only on dimension mismatch or
  // non-finite inputs.
  Eigen::VectorXd step(const Eigen::VectorXd& x,
                       const Eigen::VectorXd& u) const override;

  const BasisSet& basis() const { return basis_; }
  const Eigen::MatrixXd& xi() const { return xi_; }  // n_features × n_x
  const SindyMeta& meta() const { return meta_; }

  std::string to_json_string() const;
  static SindyModel from_json_string(const std::string& text);

 private:
  BasisSet basis_;
  Eigen::MatrixXd xi_;
  int state_dim_;
  int control_dim_;
  SindyMeta meta_;
};

// Least squares per state coordinate over the basis features of [x; u].
// threshold > 0 runs sequential thresholding: drop features with |c| below
// the threshold and re-solve on the survivors until the support is stable
// (at most 10 sweeps).  An empty support is an error.
SindyModel fit_sindy(const Dataset& train, const BasisSet& basis,
                     double threshold = 0.0, double svd_cutoff = 1e-12);

}  // namespace optlab
