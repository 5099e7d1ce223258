#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "optlab/dynamics.hpp"
#include "optlab/sampling.hpp"

namespace optlab {

// How the local perturbations are generated.
//   Random:      zero-mean noise drawn fresh per rollout and timestep.
//   CentralDiff: deterministic +/- probes along each state and control axis;
//                the rollout count is fixed at 2*(n_x + n_u) regardless of
//                the requested n_rollouts.
enum class LtvFitMode { Random, CentralDiff };

struct LtvMeta {
  int n_rollouts = 0;
  double state_scale = 0.0;
  double control_scale = 0.0;
  std::uint64_t seed = 0;
  LtvFitMode mode = LtvFitMode::Random;
  NoiseKind noise = NoiseKind::Gaussian;
};

// Time-varying linear model of deviations around a nominal trajectory:
//   dx_{t+1} ~= A[t] dx_t + B[t] du_t,  t = 0 .. horizon-1.
class LtvModel {
 public:
  LtvModel() = default;
  LtvModel(std::vector<Eigen::MatrixXd> A, std::vector<Eigen::MatrixXd> B,
           Trajectory nominal, LtvMeta meta);

  int horizon() const { return static_cast<int>(A_.size()); }
  int state_dim() const;
  int control_dim() const;

  const Eigen::MatrixXd& A(int t) const;
  const Eigen::MatrixXd& B(int t) const;
  const Trajectory& nominal() const { return nominal_; }
  const LtvMeta& meta() const { return meta_; }

  // One-step deviation prediction A[t] dx + B[t] du.
  Eigen::VectorXd predict(int t, const Eigen::VectorXd& dx,
                          const Eigen::VectorXd& du) const;

  // Condition number of the per-timestep regressor Gram recorded during the
  // fit; +inf when the regressor was singular to working precision.
  double gram_conditioning(int t) const;

  // Norm of the mean fit residual at timestep t. A value far above the
  // perturbation scale squared indicates the local linear model is biased.
  double residual_mean_norm(int t) const;

  std::string to_json_string() const;
  static LtvModel from_json_string(const std::string& text);

  // Fit bookkeeping, filled by identify_ltv.
  std::vector<double> gram_cond;
  std::vector<double> residual_mean;

 private:
  void check_time(int t) const;

  std::vector<Eigen::MatrixXd> A_;
  std::vector<Eigen::MatrixXd> B_;
  Trajectory nominal_;
  LtvMeta meta_;
};

// Least-squares estimate of [A B] from one timestep's perturbation data.
// Rows of dZ are stacked [dx' du'], rows of dXn are the observed next-state
// deviations. Throws NumericalError naming `t` when the regressor Gram is
// rank deficient. Returns {A, B} and fills cond/residual outputs when the
// pointers are non-null.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> fit_ltv_timestep(
    const Eigen::MatrixXd& dZ, const Eigen::MatrixXd& dXn, int n_x, int n_u,
    int t, double* cond_out = nullptr, double* residual_mean_out = nullptr);

// Identifies per-timestep (A_t, B_t) around `nominal` by perturbing the state
// and control independently at each timestep, stepping the system once, and
// regressing next-state deviations on the injected ones. Perturbed states are
// set directly to xbar_t + dx_t; deviations are never propagated, so each
// timestep's fit is independent. No intercept is estimated; the mean residual
// is recorded per timestep instead.
LtvModel identify_ltv(const DynamicsModel& system, const Trajectory& nominal,
                      int n_rollouts, double state_scale, double control_scale,
                      std::uint64_t seed,
                      LtvFitMode mode = LtvFitMode::Random,
                      NoiseKind noise = NoiseKind::Gaussian);

}  // namespace optlab
