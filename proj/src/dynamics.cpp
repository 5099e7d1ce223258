#include "optlab/dynamics.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "optlab/errors.hpp"

namespace optlab {

namespace {

void check_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw NumericalError(std::string(what) + " is not finite");
}

void check_dims(const DynamicsModel& m, const Eigen::VectorXd& x,
                const Eigen::VectorXd& u) {
  if (x.size() != m.state_dim() || u.size() != m.control_dim())
    throw ConfigError("step: dimension mismatch (state " +
                      std::to_string(x.size()) + ", control " +
                      std::to_string(u.size()) + ")");
}

}  // namespace

Eigen::VectorXd System::step(const Eigen::VectorXd& x,
                             const Eigen::VectorXd& u) const {
  check_dims(*this, x, u);
  check_finite(x, "state");
  check_finite(u, "control");
  const double h = params_.dt;
  if (params_.integrator == Integrator::Euler) {
    return x + h * deriv(x, u);
  }
  const Eigen::VectorXd k1 = deriv(x, u);
  const Eigen::VectorXd k2 = deriv(x + 0.5 * h * k1, u);
  const Eigen::VectorXd k3 = deriv(x + 0.5 * h * k2, u);
  const Eigen::VectorXd k4 = deriv(x + h * k3, u);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Eigen::VectorXd Pendulum::deriv(const Eigen::VectorXd& x,
                                const Eigen::VectorXd& u) const {
  const double theta = x[0], omega = x[1];
  const double ml2 = params_.mass * params_.length * params_.length;
  Eigen::VectorXd dx(2);
  dx[0] = omega;
  // Gravity destabilizes the upright (θ = 0) configuration.
  dx[1] = (params_.gravity / params_.length) * std::sin(theta) +
          (u[0] - params_.damping * omega) / ml2;
  return dx;
}

Eigen::VectorXd Cartpole::deriv(const Eigen::VectorXd& x,
                                const Eigen::VectorXd& u) const {
  const double theta = x[1], pdot = x[2], omega = x[3];
  const double mc = params_.cart_mass, mp = params_.pole_mass;
  const double l = params_.pole_length, g = params_.gravity;
  const double s = std::sin(theta), c = std::cos(theta);
  const double f = u[0];

  // Point-mass pole at distance l from the pivot, θ measured from upright:
  //   (mc+mp) p̈ + mp l θ̈ cosθ − mp l ω² sinθ = f
  //   mp l p̈ cosθ + mp l² θ̈ − mp g l sinθ = −b ω
  const double denom = mc + mp * s * s;
  const double pddot = (f + mp * s * (l * omega * omega - g * c)) / denom;
  const double thetaddot = (g * s - pddot * c) / l -
                           params_.damping * omega / (mp * l * l);

  Eigen::VectorXd dx(4);
  dx[0] = pdot;
  dx[1] = omega;
  dx[2] = pddot;
  dx[3] = thetaddot;
  return dx;
}

LinearSystem::LinearSystem(Eigen::MatrixXd M, Eigen::MatrixXd N)
    : M_(std::move(M)), N_(std::move(N)) {
  if (M_.rows() != M_.cols() || N_.rows() != M_.rows())
    throw ConfigError("LinearSystem: incompatible M/N shapes");
}

Eigen::VectorXd LinearSystem::step(const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& u) const {
  check_dims(*this, x, u);
  return M_ * x + N_ * u;
}

SystemParams default_params(const std::string& name) {
  SystemParams p;
  if (name == "cartpole") {
    p.u_max = 10.0;
    p.damping = 0.0;
  }
  return p;
}

std::unique_ptr<System> make_system(const std::string& name,
                                    const SystemParams& params) {
  if (params.dt <= 0.0) throw ConfigError("make_system: dt must be positive");
  if (params.u_max <= 0.0) throw ConfigError("make_system: u_max must be positive");
  if (name == "pendulum") return std::make_unique<Pendulum>(params);
  if (name == "cartpole") return std::make_unique<Cartpole>(params);
  throw ConfigError("make_system: unknown system '" + name + "'");
}

std::unique_ptr<System> make_system(const std::string& name) {
  return make_system(name, default_params(name));
}

Trajectory rollout(const DynamicsModel& model, const Eigen::VectorXd& x0,
                   const std::vector<Eigen::VectorXd>& controls, double dt) {
  check_finite(x0, "initial state");
  if (x0.size() != model.state_dim())
    throw ConfigError("rollout: initial state dimension mismatch");

  Trajectory traj;
  traj.dt = dt;
  if (dt == 0.0) {
    if (const auto* sys = dynamic_cast<const System*>(&model)) traj.dt = sys->dt();
  }
  traj.states.reserve(controls.size() + 1);
  traj.controls = controls;
  traj.states.push_back(x0);
  for (std::size_t t = 0; t < controls.size(); ++t) {
    Eigen::VectorXd next = model.step(traj.states.back(), controls[t]);
    if (!next.allFinite())
      throw NumericalError("rollout: non-finite state at timestep " +
                           std::to_string(t + 1));
    traj.states.push_back(std::move(next));
  }
  return traj;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> linearize_fd(
    const DynamicsModel& model, const Eigen::VectorXd& x,
    const Eigen::VectorXd& u, double eps) {
  if (eps <= 0.0) throw ConfigError("linearize_fd: eps must be positive");
  const double scale = std::max(x.cwiseAbs().maxCoeff(),
                                u.size() > 0 ? u.cwiseAbs().maxCoeff() : 0.0);
  // Below this the perturbed inputs round back onto the base point and both
  // one-sided differences vanish identically.
  if (eps < 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + scale))
    throw NumericalError("linearize_fd: eps underflows at this operating point");

  const int nx = model.state_dim(), nu = model.control_dim();
  Eigen::MatrixXd A(nx, nx), B(nx, nu);
  Eigen::VectorXd xp = x, xm = x, up = u, um = u;
  for (int j = 0; j < nx; ++j) {
    xp[j] += eps;
    xm[j] -= eps;
    A.col(j) = (model.step(xp, u) - model.step(xm, u)) / (2.0 * eps);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  for (int j = 0; j < nu; ++j) {
    up[j] += eps;
    um[j] -= eps;
    B.col(j) = (model.step(x, up) - model.step(x, um)) / (2.0 * eps);
    up[j] = u[j];
    um[j] = u[j];
  }
  return {A, B};
}

}  // namespace optlab
