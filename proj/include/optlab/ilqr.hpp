#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "optlab/dynamics.hpp"
#include "optlab/ltv.hpp"

namespace optlab {

// Additive stage cost l(x_t) + u_t'R u_t / 2 for t < T plus a terminal
// quadratic, all centered on one target state. Coordinates listed in
// angle_dims use the wrapped difference to the target, so the dynamics can
// keep angles unwrapped while the cost treats theta and theta + 2*pi alike.
struct CostSpec {
  Eigen::MatrixXd W;        // stage state weight, n_x x n_x symmetric
  Eigen::MatrixXd R_u;      // control weight, n_u x n_u symmetric PD
  Eigen::MatrixXd W_T;      // terminal state weight, n_x x n_x symmetric
  Eigen::VectorXd x_target;
  std::vector<int> angle_dims;
  int horizon = 0;

  void validate(int n_x, int n_u) const;
  // Difference to the target with angle coordinates wrapped to (-pi, pi].
  Eigen::VectorXd state_error(const Eigen::VectorXd& x) const;
};

double evaluate_cost(const CostSpec& cost, const Trajectory& traj);

// Which linearization drives the backward pass inside solve().
//   TrueSystemLtv: re-identify a sampled LTV model around each accepted
//                  nominal from the stepped system itself.
//   Surrogate:     differentiate the model directly (analytically where the
//                  model supports it, finite differences otherwise).
enum class ModelSource { TrueSystemLtv, Surrogate };

struct IlqrOptions {
  double epsilon = 1e-4;      // relative cost-change convergence threshold
  double gain_tol = 1e-4;     // max ||k_t|| certifying convergence
  double alpha_init = 1.0;
  double alpha_decay = 0.5;
  double alpha_min = 1e-3;
  double mu_first = 1e-6;     // regularization starts at 0, first raise lands here
  double mu_factor = 10.0;
  double mu_max = 1e10;
  int max_iterations = 100;
  ModelSource source = ModelSource::TrueSystemLtv;
  int ltv_rollouts = 32;
  double ltv_state_scale = 1e-3;
  double ltv_control_scale = 0.0;  // 0 = default to 1e-2 * u_max
  std::uint64_t seed = 0;
  double fd_eps = 1e-6;            // surrogate-mode linearization step
};

struct IlqrTask {
  const DynamicsModel* model = nullptr;
  Eigen::VectorXd x0;
  CostSpec cost;
  std::vector<Eigen::VectorXd> u_init;
  double u_max = 0.0;  // 0 disables control saturation
};

struct BackwardPassResult {
  std::vector<Eigen::VectorXd> k;  // T
  std::vector<Eigen::MatrixXd> K;  // T
  std::vector<Eigen::VectorXd> v;  // T+1 value gradients along the nominal
  std::vector<Eigen::MatrixXd> V;  // T+1 value Hessians
  bool success = false;
  int failed_timestep = -1;        // first non-PD Q_uu when !success
  double max_gain_norm = 0.0;      // max_t ||k_t||
};

// Regularized backward sweep. On a non-positive-definite Q_uu the result
// carries success = false and no gains; the caller raises mu and retries.
BackwardPassResult backward_pass(const std::vector<Eigen::MatrixXd>& A,
                                 const std::vector<Eigen::MatrixXd>& B,
                                 const CostSpec& cost,
                                 const Trajectory& nominal, double mu);
BackwardPassResult backward_pass(const LtvModel& ltv, const CostSpec& cost,
                                 const Trajectory& nominal, double mu);

struct ForwardPassResult {
  Trajectory traj;
  double cost = 0.0;
  bool accepted = false;     // cost strictly below the reference cost
  int saturated_steps = 0;   // timesteps where the control hit the box
};

// Closed-loop rollout u_t = ubar_t + alpha k_t + K_t (x_t - xbar_t), clamped
// to [-u_max, u_max] when u_max > 0. Divergence is reported by rejection
// with an infinite cost, never by throwing.
ForwardPassResult forward_pass(const DynamicsModel& model,
                               const Trajectory& nominal,
                               const std::vector<Eigen::VectorXd>& k,
                               const std::vector<Eigen::MatrixXd>& K,
                               double alpha, const CostSpec& cost,
                               double reference_cost, double u_max = 0.0);

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;     // forward-pass cost at this alpha
  double alpha = 0.0;
  double mu = 0.0;
  bool accepted = false;
};

struct IlqrSolution {
  Trajectory nominal;
  std::vector<Eigen::VectorXd> k;     // gains from the final backward pass
  std::vector<Eigen::MatrixXd> K;
  std::vector<Eigen::VectorXd> v;     // value partials along the final nominal
  std::vector<Eigen::MatrixXd> V;
  std::vector<double> cost_history;   // initial cost, then each accepted cost
  std::vector<IterationRecord> iterates;  // every forward-pass attempt
  bool converged = false;
  int iterations = 0;                 // accepted improvement passes
  int saturated_steps = 0;            // saturation in the final nominal
  std::string to_json_string() const;
};

// Stationarity measure used for convergence: the largest per-timestep norm
// of clamp(ubar_t + k_t, box) - ubar_t. Without a box (u_max = 0) this is
// max_t ||k_t||; with one, outward-pointing components at saturated controls
// do not count against convergence because the box blocks them.
double projected_gain_norm(const Trajectory& nominal,
                           const std::vector<Eigen::VectorXd>& k,
                           double u_max);

// Iterates backward and forward passes with the alpha and mu schedules until
// the gains certify a local optimum, the improvement stalls below epsilon
// with small gains, or the budgets run out.
IlqrSolution solve_ilqr(const IlqrTask& task, const IlqrOptions& opts);

// A_t, B_t of a model at one operating point. SINDy surrogates are
// differentiated through their basis, MLPs by backpropagation, anything else
// by central differences.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> linearize_model(
    const DynamicsModel& model, const Eigen::VectorXd& x,
    const Eigen::VectorXd& u, double fd_eps = 1e-6);

// Second derivatives of the step map at one operating point, estimated by
// central differences of the Jacobians. hxx[i](j, l) = d^2 f_i / dx_j dx_l;
// hux[i](m, j) = d^2 f_i / du_m dx_j; huu[i](m, m') likewise in the control.
struct StepHessians {
  std::vector<Eigen::MatrixXd> hxx;
  std::vector<Eigen::MatrixXd> hux;
  std::vector<Eigen::MatrixXd> huu;
};
StepHessians fd_step_hessians(const DynamicsModel& model,
                              const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u, double eps = 1e-4);

// Single second-order backward pass along a converged nominal, returning
// stabilizing feedback gains for closed-loop execution
// u_t = ubar_t + K_t (x_t - xbar_t). Throws NumericalError if any Q_uu is
// not positive definite.
std::vector<Eigen::MatrixXd> ddp_feedback(const DynamicsModel& model,
                                          const Trajectory& nominal,
                                          const CostSpec& cost,
                                          double fd_eps = 1e-4);

}  // namespace optlab
