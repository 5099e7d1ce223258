#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

namespace optlab {

enum class Integrator { Rk4, Euler };

// Physical constants for the analytic benchmark systems.  Pendulum uses
// {mass, length, gravity, damping}; cartpole uses {cart_mass, pole_mass,
// pole_length, gravity, damping}.  Both share {dt, u_max, integrator}.
struct SystemParams {
  double dt = 0.05;
  double u_max = 5.0;
  Integrator integrator = Integrator::Rk4;
  double gravity = 9.81;

  double mass = 1.0;     // pendulum bob (kg)
  double length = 1.0;   // pendulum arm (m)
  double damping = 0.1;  // viscous damping at the pivot (N*m*s)

  double cart_mass = 1.0;   // kg
  double pole_mass = 0.1;   // kg
  double pole_length = 0.5; // pivot to bob (m)
};

struct Trajectory {
  std::vector<Eigen::VectorXd> states;   // length T+1
  std::vector<Eigen::VectorXd> controls; // length T
  double dt = 0.0;

  int horizon() const { return static_cast<int>(controls.size()); }
};

// Discrete-time state-transition map x_{t+1} = f(x_t, u_t).  Everything the
// identification and control pipeline touches (true plants and fitted
// surrogates alike) is driven through this interface, so downstream code
// cannot accidentally peek at analytic structure.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;
  virtual int state_dim() const = 0;
  virtual int control_dim() const = 0;
  virtual Eigen::VectorXd step(const Eigen::VectorXd& x,
                               const Eigen::VectorXd& u) const = 0;
};

// Continuous-time plant integrated over one dt per step.  Angles are left
// unwrapped by step; wrapping would put kinks into finite-difference
// Jacobians, so tasks wrap angles only inside cost evaluation.
class System : public DynamicsModel {
 public:
  explicit System(const SystemParams& params) : params_(params) {}

  Eigen::VectorXd step(const Eigen::VectorXd& x,
                       const Eigen::VectorXd& u) const override;

  // Time derivative of the state under the continuous model.
  virtual Eigen::VectorXd deriv(const Eigen::VectorXd& x,
                                const Eigen::VectorXd& u) const = 0;

  virtual std::string name() const = 0;

  const SystemParams& params() const { return params_; }
  double dt() const { return params_.dt; }
  double u_max() const { return params_.u_max; }

 protected:
  SystemParams params_;
};

// Torque-driven pendulum, state [θ, ω] with θ = 0 upright and θ = π hanging.
class Pendulum final : public System {
 public:
  explicit Pendulum(const SystemParams& params) : System(params) {}
  int state_dim() const override { return 2; }
  int control_dim() const override { return 1; }
  Eigen::VectorXd deriv(const Eigen::VectorXd& x,
                        const Eigen::VectorXd& u) const override;
  std::string name() const override { return "pendulum"; }
};

// Cart with an inverted point-mass pole, state [p, θ, ṗ, ω], θ = 0 upright.
// The control is a horizontal force on the cart.
class Cartpole final : public System {
 public:
  explicit Cartpole(const SystemParams& params) : System(params) {}
  int state_dim() const override { return 4; }
  int control_dim() const override { return 1; }
  Eigen::VectorXd deriv(const Eigen::VectorXd& x,
                        const Eigen::VectorXd& u) const override;
  std::string name() const override { return "cartpole"; }
};

// Discrete-time linear map x' = Mx + Nu, used as an exactness oracle for the
// identification and LQR paths.
class LinearSystem final : public DynamicsModel {
 public:
  LinearSystem(Eigen::MatrixXd M, Eigen::MatrixXd N);
  int state_dim() const override { return static_cast<int>(M_.rows()); }
  int control_dim() const override { return static_cast<int>(N_.cols()); }
  Eigen::VectorXd step(const Eigen::VectorXd& x,
                       const Eigen::VectorXd& u) const override;
  const Eigen::MatrixXd& M() const { return M_; }
  const Eigen::MatrixXd& N() const { return N_; }

 private:
  Eigen::MatrixXd M_, N_;
};

// Benchmark defaults; cartpole overrides u_max to 10 N.
SystemParams default_params(const std::string& name);

// name ∈ {"pendulum", "cartpole"}; throws ConfigError otherwise.
std::unique_ptr<System> make_system(const std::string& name,
                                    const SystemParams& params);
std::unique_ptr<System> make_system(const std::string& name);

// Propagates x0 through the model under the given control sequence.  Throws
// NumericalError naming the timestep if a state goes non-finite.
Trajectory rollout(const DynamicsModel& model, const Eigen::VectorXd& x0,
                   const std::vector<Eigen::VectorXd>& controls,
                   double dt = 0.0);

// Central-difference Jacobians of the one-step map:
//   A ≈ ∂f/∂x,  B ≈ ∂f/∂u  at (x, u).
// Exact (to roundoff) for linear maps.  Throws on eps ≤ 0 and on eps so
// small relative to the operating point that the differences degenerate.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> linearize_fd(
    const DynamicsModel& model, const Eigen::VectorXd& x,
    const Eigen::VectorXd& u, double eps);

}  // namespace optlab
