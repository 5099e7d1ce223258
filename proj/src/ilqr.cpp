#include "optlab/ilqr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "json.hpp"
#include "optlab/errors.hpp"
#include "optlab/mlp.hpp"
#include "optlab/rng.hpp"
#include "optlab/sindy.hpp"

namespace optlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double wrap_angle(double d) {
  // Wrapped difference in (-pi, pi]; remainder lands in [-pi, pi] which is
  // equivalent under the symmetric quadratic costs used here.
  return std::remainder(d, 2.0 * M_PI);
}

void require_symmetric(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols() || (m - m.transpose()).cwiseAbs().maxCoeff() > 0.0)
    throw ConfigError(std::string("cost: ") + what + " must be symmetric");
}

std::vector<std::vector<double>> rows_of(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> rows(m.rows());
  for (int r = 0; r < m.rows(); ++r) {
    rows[r].resize(m.cols());
    for (int c = 0; c < m.cols(); ++c) rows[r][c] = m(r, c);
  }
  return rows;
}

}  // namespace

void CostSpec::validate(int n_x, int n_u) const {
  if (horizon < 1) throw ConfigError("cost: horizon must be >= 1");
  if (W.rows() != n_x || W_T.rows() != n_x || x_target.size() != n_x)
    throw ConfigError("cost: state weight dimensions do not match the model");
  if (R_u.rows() != n_u)
    throw ConfigError("cost: control weight dimension does not match the model");
  require_symmetric(W, "stage weight");
  require_symmetric(W_T, "terminal weight");
  require_symmetric(R_u, "control weight");
  if (!W.allFinite() || !W_T.allFinite() || !R_u.allFinite() ||
      !x_target.allFinite())
    throw ConfigError("cost: weights must be finite");
  Eigen::LLT<Eigen::MatrixXd> llt(R_u);
  if (llt.info() != Eigen::Success)
    throw ConfigError("cost: control weight must be positive definite");
  for (const int d : angle_dims)
    if (d < 0 || d >= n_x)
      throw ConfigError("cost: angle dimension out of range");
}

Eigen::VectorXd CostSpec::state_error(const Eigen::VectorXd& x) const {
  Eigen::VectorXd d = x - x_target;
  for (const int i : angle_dims) d[i] = wrap_angle(d[i]);
  return d;
}

double evaluate_cost(const CostSpec& cost, const Trajectory& traj) {
  if (traj.horizon() != cost.horizon)
    throw ConfigError("cost: trajectory horizon " +
                      std::to_string(traj.horizon()) + " does not match " +
                      std::to_string(cost.horizon));
  const int n_x = static_cast<int>(traj.states[0].size());
  const int n_u = static_cast<int>(traj.controls[0].size());
  cost.validate(n_x, n_u);
  double total = 0.0;
  for (int t = 0; t < cost.horizon; ++t) {
    const Eigen::VectorXd d = cost.state_error(traj.states[t]);
    total += 0.5 * d.dot(cost.W * d);
    total += 0.5 * traj.controls[t].dot(cost.R_u * traj.controls[t]);
  }
  const Eigen::VectorXd dT = cost.state_error(traj.states[cost.horizon]);
  total += 0.5 * dT.dot(cost.W_T * dT);
  return total;
}

BackwardPassResult backward_pass(const std::vector<Eigen::MatrixXd>& A,
                                 const std::vector<Eigen::MatrixXd>& B,
                                 const CostSpec& cost,
                                 const Trajectory& nominal, double mu) {
  const int T = nominal.horizon();
  if (static_cast<int>(A.size()) != T || static_cast<int>(B.size()) != T)
    throw ConfigError("backward pass: linearization horizon mismatch");
  if (T != cost.horizon)
    throw ConfigError("backward pass: cost horizon mismatch");
  const int n_x = static_cast<int>(nominal.states[0].size());
  const int n_u = static_cast<int>(nominal.controls[0].size());
  cost.validate(n_x, n_u);
  if (mu < 0.0) throw ConfigError("backward pass: mu must be >= 0");

  BackwardPassResult out;
  out.v.assign(T + 1, Eigen::VectorXd());
  out.V.assign(T + 1, Eigen::MatrixXd());
  out.k.assign(T, Eigen::VectorXd());
  out.K.assign(T, Eigen::MatrixXd());

  out.v[T] = cost.W_T * cost.state_error(nominal.states[T]);
  out.V[T] = cost.W_T;
  const Eigen::MatrixXd muI = mu * Eigen::MatrixXd::Identity(n_x, n_x);

  double max_gain = 0.0;
  for (int t = T - 1; t >= 0; --t) {
    const Eigen::VectorXd& vn = out.v[t + 1];
    const Eigen::MatrixXd& Vn = out.V[t + 1];
    const Eigen::VectorXd d = cost.state_error(nominal.states[t]);

    const Eigen::VectorXd Qx = cost.W * d + A[t].transpose() * vn;
    const Eigen::VectorXd Qu =
        cost.R_u * nominal.controls[t] + B[t].transpose() * vn;
    const Eigen::MatrixXd Qxx = cost.W + A[t].transpose() * Vn * A[t];
    const Eigen::MatrixXd Qux = B[t].transpose() * (Vn + muI) * A[t];
    Eigen::MatrixXd Quu = cost.R_u + B[t].transpose() * (Vn + muI) * B[t];
    Quu = 0.5 * (Quu + Quu.transpose()).eval();

    Eigen::LLT<Eigen::MatrixXd> llt(Quu);
    if (llt.info() != Eigen::Success) {
      out.k.clear();
      out.K.clear();
      out.success = false;
      out.failed_timestep = t;
      return out;
    }
    out.k[t] = -llt.solve(Qu);
    out.K[t] = -llt.solve(Qux);
    max_gain = std::max(max_gain, out.k[t].norm());

    out.v[t] = Qx + out.K[t].transpose() * Quu * out.k[t] +
               out.K[t].transpose() * Qu + Qux.transpose() * out.k[t];
    Eigen::MatrixXd V = Qxx + out.K[t].transpose() * Quu * out.K[t] +
                        out.K[t].transpose() * Qux +
                        Qux.transpose() * out.K[t];
    out.V[t] = 0.5 * (V + V.transpose());
  }
  out.success = true;
  out.max_gain_norm = max_gain;
  return out;
}

BackwardPassResult backward_pass(const LtvModel& ltv, const CostSpec& cost,
                                 const Trajectory& nominal, double mu) {
  std::vector<Eigen::MatrixXd> A, B;
  for (int t = 0; t < ltv.horizon(); ++t) {
    A.push_back(ltv.A(t));
    B.push_back(ltv.B(t));
  }
  return backward_pass(A, B, cost, nominal, mu);
}

ForwardPassResult forward_pass(const DynamicsModel& model,
                               const Trajectory& nominal,
                               const std::vector<Eigen::VectorXd>& k,
                               const std::vector<Eigen::MatrixXd>& K,
                               double alpha, const CostSpec& cost,
                               double reference_cost, double u_max) {
  const int T = nominal.horizon();
  if (static_cast<int>(k.size()) != T || static_cast<int>(K.size()) != T)
    throw ConfigError("forward pass: gains length mismatch");

  ForwardPassResult out;
  out.traj.dt = nominal.dt;
  out.traj.states.push_back(nominal.states[0]);
  out.cost = kInf;
  for (int t = 0; t < T; ++t) {
    const Eigen::VectorXd& x = out.traj.states.back();
    Eigen::VectorXd u =
        nominal.controls[t] + alpha * k[t] + K[t] * (x - nominal.states[t]);
    if (u_max > 0.0) {
      const Eigen::VectorXd clamped = u.cwiseMax(-u_max).cwiseMin(u_max);
      if ((clamped - u).cwiseAbs().maxCoeff() > 0.0) ++out.saturated_steps;
      u = clamped;
    }
    const Eigen::VectorXd xn = model.step(x, u);
    if (!xn.allFinite()) return out;  // rejected, cost stays infinite
    out.traj.controls.push_back(std::move(u));
    out.traj.states.push_back(xn);
  }
  out.cost = evaluate_cost(cost, out.traj);
  out.accepted = std::isfinite(out.cost) && out.cost < reference_cost;
  return out;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> linearize_model(
    const DynamicsModel& model, const Eigen::VectorXd& x,
    const Eigen::VectorXd& u, double fd_eps) {
  const int n_x = model.state_dim();
  const int n_u = model.control_dim();
  if (const auto* sindy = dynamic_cast<const SindyModel*>(&model)) {
    Eigen::VectorXd z(n_x + n_u);
    z << x, u;
    const Eigen::MatrixXd J =
        sindy->xi().transpose() * sindy->basis().jacobian(z);
    return {J.leftCols(n_x), J.rightCols(n_u)};
  }
  if (const auto* mlp = dynamic_cast<const MlpModel*>(&model)) {
    Eigen::VectorXd z(n_x + n_u);
    z << x, u;
    const Eigen::MatrixXd J = mlp_input_jacobian(*mlp, z);
    return {J.leftCols(n_x), J.rightCols(n_u)};
  }
  return linearize_fd(model, x, u, fd_eps);
}

StepHessians fd_step_hessians(const DynamicsModel& model,
                              const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u, double eps) {
  if (!(eps > 0.0)) throw ConfigError("step hessians: eps must be positive");
  const int n_x = model.state_dim();
  const int n_u = model.control_dim();
  StepHessians out;
  out.hxx.assign(n_x, Eigen::MatrixXd::Zero(n_x, n_x));
  out.hux.assign(n_x, Eigen::MatrixXd::Zero(n_u, n_x));
  out.huu.assign(n_x, Eigen::MatrixXd::Zero(n_u, n_u));

  for (int j = 0; j < n_x; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += eps;
    xm[j] -= eps;
    const auto [Ap, Bp] = linearize_model(model, xp, u);
    const auto [Am, Bm] = linearize_model(model, xm, u);
    const Eigen::MatrixXd dA = (Ap - Am) / (2.0 * eps);
    const Eigen::MatrixXd dB = (Bp - Bm) / (2.0 * eps);
    for (int i = 0; i < n_x; ++i) {
      out.hxx[i].row(j) = dA.row(i);
      out.hux[i].col(j) = dB.row(i).transpose();
    }
  }
  for (int m = 0; m < n_u; ++m) {
    Eigen::VectorXd up = u, um = u;
    up[m] += eps;
    um[m] -= eps;
    const auto [Ap, Bp] = linearize_model(model, x, up);
    const auto [Am, Bm] = linearize_model(model, x, um);
    const Eigen::MatrixXd dB = (Bp - Bm) / (2.0 * eps);
    for (int i = 0; i < n_x; ++i) out.huu[i].row(m) = dB.row(i);
  }
  return out;
}

std::vector<Eigen::MatrixXd> ddp_feedback(const DynamicsModel& model,
                                          const Trajectory& nominal,
                                          const CostSpec& cost,
                                          double fd_eps) {
  const int T = nominal.horizon();
  const int n_x = model.state_dim();
  const int n_u = model.control_dim();
  if (T != cost.horizon)
    throw ConfigError("ddp feedback: cost horizon mismatch");
  cost.validate(n_x, n_u);

  Eigen::VectorXd v = cost.W_T * cost.state_error(nominal.states[T]);
  Eigen::MatrixXd V = cost.W_T;
  std::vector<Eigen::MatrixXd> K(T);
  for (int t = T - 1; t >= 0; --t) {
    const auto [A, B] = linearize_model(model, nominal.states[t],
                                        nominal.controls[t]);
    const StepHessians h =
        fd_step_hessians(model, nominal.states[t], nominal.controls[t], fd_eps);
    Eigen::MatrixXd Wxx = Eigen::MatrixXd::Zero(n_x, n_x);
    Eigen::MatrixXd Wux = Eigen::MatrixXd::Zero(n_u, n_x);
    Eigen::MatrixXd Wuu = Eigen::MatrixXd::Zero(n_u, n_u);
    for (int i = 0; i < n_x; ++i) {
      Wxx += v[i] * h.hxx[i];
      Wux += v[i] * h.hux[i];
      Wuu += v[i] * h.huu[i];
    }
    Wxx = 0.5 * (Wxx + Wxx.transpose()).eval();
    Wuu = 0.5 * (Wuu + Wuu.transpose()).eval();

    const Eigen::VectorXd d = cost.state_error(nominal.states[t]);
    const Eigen::VectorXd Qx = cost.W * d + A.transpose() * v;
    const Eigen::VectorXd Qu =
        cost.R_u * nominal.controls[t] + B.transpose() * v;
    const Eigen::MatrixXd Qxx = cost.W + A.transpose() * V * A + Wxx;
    const Eigen::MatrixXd Qux = B.transpose() * V * A + Wux;
    Eigen::MatrixXd Quu = cost.R_u + B.transpose() * V * B + Wuu;
    Quu = 0.5 * (Quu + Quu.transpose()).eval();

    Eigen::LLT<Eigen::MatrixXd> llt(Quu);
    if (llt.info() != Eigen::Success)
      throw NumericalError(
          "ddp feedback: Q_uu not positive definite at timestep " +
          std::to_string(t));
    const Eigen::VectorXd kt = -llt.solve(Qu);
    K[t] = -llt.solve(Qux);

    v = Qx + K[t].transpose() * Quu * kt + K[t].transpose() * Qu +
        Qux.transpose() * kt;
    Eigen::MatrixXd Vnew = Qxx + K[t].transpose() * Quu * K[t] +
                           K[t].transpose() * Qux + Qux.transpose() * K[t];
    V = 0.5 * (Vnew + Vnew.transpose());
  }
  return K;
}

namespace {

void validate_options(const IlqrOptions& opts) {
  if (!(opts.epsilon > 0.0)) throw ConfigError("ilqr: epsilon must be > 0");
  if (!(opts.gain_tol > 0.0)) throw ConfigError("ilqr: gain_tol must be > 0");
  if (!(opts.alpha_decay > 0.0) || !(opts.alpha_decay < 1.0))
    throw ConfigError("ilqr: alpha decay must lie in (0, 1)");
  if (!(opts.alpha_init > 0.0) || !(opts.alpha_min > 0.0) ||
      opts.alpha_min > opts.alpha_init)
    throw ConfigError("ilqr: alpha schedule must satisfy 0 < min <= init");
  if (!(opts.mu_first > 0.0) || !(opts.mu_factor > 1.0) ||
      !(opts.mu_max >= opts.mu_first))
    throw ConfigError("ilqr: mu schedule must satisfy 0 < first <= max");
  if (opts.max_iterations < 1)
    throw ConfigError("ilqr: max_iterations must be >= 1");
}

double raise_mu(double mu, const IlqrOptions& opts) {
  return mu == 0.0 ? opts.mu_first : std::min(mu * opts.mu_factor, opts.mu_max);
}

double lower_mu(double mu, const IlqrOptions& opts) {
  const double next = mu / opts.mu_factor;
  return next < opts.mu_first ? 0.0 : next;
}

}  // namespace

double projected_gain_norm(const Trajectory& nominal,
                           const std::vector<Eigen::VectorXd>& k,
                           double u_max) {
  if (static_cast<int>(k.size()) != nominal.horizon())
    throw ConfigError("projected gain norm: gains length mismatch");
  double worst = 0.0;
  for (int t = 0; t < nominal.horizon(); ++t) {
    Eigen::VectorXd cand = nominal.controls[t] + k[t];
    if (u_max > 0.0) cand = cand.cwiseMax(-u_max).cwiseMin(u_max);
    worst = std::max(worst, (cand - nominal.controls[t]).norm());
  }
  return worst;
}

IlqrSolution solve_ilqr(const IlqrTask& task, const IlqrOptions& opts) {
  validate_options(opts);
  if (task.model == nullptr) throw ConfigError("ilqr: task has no model");
  const DynamicsModel& model = *task.model;
  const int n_x = model.state_dim();
  const int n_u = model.control_dim();
  const int T = static_cast<int>(task.u_init.size());
  if (T < 1) throw ConfigError("ilqr: empty initial control sequence");
  task.cost.validate(n_x, n_u);
  if (task.cost.horizon != T)
    throw ConfigError("ilqr: cost horizon does not match u_init length");
  if (task.x0.size() != n_x) throw ConfigError("ilqr: x0 dimension mismatch");

  double ltv_control_scale = opts.ltv_control_scale;
  if (opts.source == ModelSource::TrueSystemLtv && ltv_control_scale == 0.0) {
    if (task.u_max > 0.0)
      ltv_control_scale = 1e-2 * task.u_max;
    else
      throw ConfigError(
          "ilqr: ltv_control_scale is required when u_max is unset");
  }

  std::vector<Eigen::VectorXd> u0 = task.u_init;
  if (task.u_max > 0.0)
    for (auto& u : u0) u = u.cwiseMax(-task.u_max).cwiseMin(task.u_max);
  Trajectory nominal = rollout(model, task.x0, u0);
  double current_cost = evaluate_cost(task.cost, nominal);

  IlqrSolution sol;
  sol.cost_history.push_back(current_cost);

  double mu = 0.0;
  BackwardPassResult bp;
  Rng seed_root(opts.seed);

  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    std::vector<Eigen::MatrixXd> A(T), B(T);
    if (opts.source == ModelSource::TrueSystemLtv) {
      const std::uint64_t iter_seed =
          seed_root.substream(static_cast<std::uint64_t>(iter)).key();
      const LtvModel ltv =
          identify_ltv(model, nominal, opts.ltv_rollouts, opts.ltv_state_scale,
                       ltv_control_scale, iter_seed);
      for (int t = 0; t < T; ++t) {
        A[t] = ltv.A(t);
        B[t] = ltv.B(t);
      }
    } else {
      for (int t = 0; t < T; ++t)
        std::tie(A[t], B[t]) = linearize_model(model, nominal.states[t],
                                               nominal.controls[t], opts.fd_eps);
    }

    bool backward_ok = false;
    while (true) {
      bp = backward_pass(A, B, task.cost, nominal, mu);
      if (bp.success) {
        backward_ok = true;
        break;
      }
      if (mu >= opts.mu_max) break;
      mu = raise_mu(mu, opts);
    }
    if (!backward_ok) break;  // persistently indefinite at mu_max

    const double stationarity = projected_gain_norm(nominal, bp.k, task.u_max);
    if (stationarity < opts.gain_tol) {
      // Vanishing open-loop correction certifies a local optimum; no forward
      // pass is needed and the iteration is not counted.
      sol.converged = true;
      break;
    }

    ForwardPassResult fp;
    bool improved = false;
    for (double alpha = opts.alpha_init; alpha >= opts.alpha_min;
         alpha *= opts.alpha_decay) {
      fp = forward_pass(model, nominal, bp.k, bp.K, alpha, task.cost,
                        current_cost, task.u_max);
      sol.iterates.push_back({iter, fp.cost, alpha, mu, fp.accepted});
      if (fp.accepted) {
        improved = true;
        break;
      }
    }
    if (!improved) {
      if (mu >= opts.mu_max) break;
      mu = raise_mu(mu, opts);
      continue;
    }

    const double rel_change =
        (current_cost - fp.cost) / std::max(std::abs(current_cost), 1e-300);
    nominal = std::move(fp.traj);
    current_cost = fp.cost;
    sol.cost_history.push_back(current_cost);
    sol.saturated_steps = fp.saturated_steps;
    ++sol.iterations;
    mu = lower_mu(mu, opts);

    if (rel_change < opts.epsilon && stationarity < opts.gain_tol) {
      sol.converged = true;
      break;
    }
  }

  sol.nominal = std::move(nominal);
  sol.k = std::move(bp.k);
  sol.K = std::move(bp.K);
  sol.v = std::move(bp.v);
  sol.V = std::move(bp.V);
  return sol;
}

std::string IlqrSolution::to_json_string() const {
  nlohmann::json j;
  std::vector<std::vector<double>> states, controls, k_list;
  for (const auto& x : nominal.states)
    states.emplace_back(x.data(), x.data() + x.size());
  for (const auto& u : nominal.controls)
    controls.emplace_back(u.data(), u.data() + u.size());
  for (const auto& g : k)
    k_list.emplace_back(g.data(), g.data() + g.size());
  j["nominal"] = {{"dt", nominal.dt},
                  {"states", states},
                  {"controls", controls}};
  j["k"] = k_list;
  std::vector<std::vector<std::vector<double>>> K_list;
  for (const auto& g : K) K_list.push_back(rows_of(g));
  j["K"] = K_list;
  j["cost_history"] = cost_history;
  j["converged"] = converged;
  j["iterations"] = iterations;
  j["saturated_steps"] = saturated_steps;
  nlohmann::json log = nlohmann::json::array();
  for (const auto& rec : iterates)
    log.push_back({{"iteration", rec.iteration},
                   {"cost", rec.cost},
                   {"alpha", rec.alpha},
                   {"mu", rec.mu},
                   {"accepted", rec.accepted}});
  j["iterates"] = log;
  return j.dump(2);
}

}  // namespace optlab
