#include "optlab/ltv.hpp"

#include <cmath>
#include <cstdio>
#include <utility>

#include "json.hpp"
#include "optlab/errors.hpp"
#include "optlab/hash.hpp"
#include "optlab/regress.hpp"
#include "optlab/rng.hpp"

namespace optlab {

namespace {

// Canonical byte rendering of the nominal trajectory, hashed into serialized
// models so a fit can be matched to the trajectory it was built around.
std::string nominal_bytes(const Trajectory& traj) {
  std::string out;
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g,", v);
    out += buf;
  };
  put(traj.dt);
  for (const auto& x : traj.states)
    for (int i = 0; i < x.size(); ++i) put(x[i]);
  for (const auto& u : traj.controls)
    for (int i = 0; i < u.size(); ++i) put(u[i]);
  return out;
}

std::vector<std::vector<double>> matrix_rows(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> rows(m.rows());
  for (int r = 0; r < m.rows(); ++r) {
    rows[r].resize(m.cols());
    for (int c = 0; c < m.cols(); ++c) rows[r][c] = m(r, c);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_rows(const nlohmann::json& j, int rows, int cols,
                                 const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    throw ConfigError(std::string("ltv model: bad row count for ") + what);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      throw ConfigError(std::string("ltv model: bad column count for ") + what);
    for (int c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

const char* mode_name(LtvFitMode mode) {
  return mode == LtvFitMode::Random ? "random" : "lls-cd";
}

LtvFitMode mode_from_name(const std::string& name) {
  if (name == "random") return LtvFitMode::Random;
  if (name == "lls-cd") return LtvFitMode::CentralDiff;
  throw ConfigError("ltv model: unknown fit mode '" + name + "'");
}

}  // namespace

LtvModel::LtvModel(std::vector<Eigen::MatrixXd> A, std::vector<Eigen::MatrixXd> B,
                   Trajectory nominal, LtvMeta meta)
    : A_(std::move(A)), B_(std::move(B)), nominal_(std::move(nominal)),
      meta_(std::move(meta)) {
  if (A_.size() != B_.size())
    throw ConfigError("ltv model: A and B horizons differ");
  if (static_cast<int>(A_.size()) != nominal_.horizon())
    throw ConfigError("ltv model: horizon does not match nominal trajectory");
  if (A_.empty()) throw ConfigError("ltv model: empty horizon");
  const int n_x = static_cast<int>(A_[0].rows());
  const int n_u = static_cast<int>(B_[0].cols());
  for (std::size_t t = 0; t < A_.size(); ++t) {
    if (A_[t].rows() != n_x || A_[t].cols() != n_x || B_[t].rows() != n_x ||
        B_[t].cols() != n_u)
      throw ConfigError("ltv model: inconsistent matrix shapes");
  }
}

int LtvModel::state_dim() const {
  return A_.empty() ? 0 : static_cast<int>(A_[0].rows());
}

int LtvModel::control_dim() const {
  return B_.empty() ? 0 : static_cast<int>(B_[0].cols());
}

void LtvModel::check_time(int t) const {
  if (t < 0 || t >= horizon())
    throw ConfigError("ltv model: timestep " + std::to_string(t) +
                      " outside horizon " + std::to_string(horizon()));
}

const Eigen::MatrixXd& LtvModel::A(int t) const {
  check_time(t);
  return A_[t];
}

const Eigen::MatrixXd& LtvModel::B(int t) const {
  check_time(t);
  return B_[t];
}

Eigen::VectorXd LtvModel::predict(int t, const Eigen::VectorXd& dx,
                                  const Eigen::VectorXd& du) const {
  check_time(t);
  if (dx.size() != state_dim() || du.size() != control_dim())
    throw ConfigError("ltv predict: deviation dimension mismatch");
  return A_[t] * dx + B_[t] * du;
}

double LtvModel::gram_conditioning(int t) const {
  check_time(t);
  if (gram_cond.size() != A_.size())
    throw ConfigError("ltv model: no fit diagnostics recorded");
  return gram_cond[static_cast<std::size_t>(t)];
}

double LtvModel::residual_mean_norm(int t) const {
  check_time(t);
  if (residual_mean.size() != A_.size())
    throw ConfigError("ltv model: no fit diagnostics recorded");
  return residual_mean[static_cast<std::size_t>(t)];
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> fit_ltv_timestep(
    const Eigen::MatrixXd& dZ, const Eigen::MatrixXd& dXn, int n_x, int n_u,
    int t, double* cond_out, double* residual_mean_out) {
  if (dZ.cols() != n_x + n_u)
    throw ConfigError("ltv fit: regressor width must be n_x + n_u");
  if (dXn.rows() != dZ.rows() || dXn.cols() != n_x)
    throw ConfigError("ltv fit: target shape mismatch");

  const GramMatrix G = gram(dZ);
  const ForcingVector F = forcing(dZ, dXn);
  const Coefficients sol = solve_normal(G, F);
  if (sol.n_truncated > 0 || !std::isfinite(sol.cond))
    throw NumericalError("ltv fit: rank-deficient regressor at timestep " +
                         std::to_string(t));
  if (cond_out != nullptr) *cond_out = sol.cond;
  if (residual_mean_out != nullptr) {
    const Eigen::VectorXd mean_resid =
        (dXn - dZ * sol.C).colwise().mean().transpose();
    *residual_mean_out = mean_resid.norm();
  }
  // sol.C maps [dx' du'] rows to next-state rows, so [A B] is its transpose.
  const Eigen::MatrixXd W = sol.C.transpose();
  return {W.leftCols(n_x), W.rightCols(n_u)};
}

LtvModel identify_ltv(const DynamicsModel& system, const Trajectory& nominal,
                      int n_rollouts, double state_scale, double control_scale,
                      std::uint64_t seed, LtvFitMode mode, NoiseKind noise) {
  const int n_x = system.state_dim();
  const int n_u = system.control_dim();
  const int T = nominal.horizon();
  if (T < 1) throw ConfigError("ltv identify: nominal trajectory is empty");
  if (!(state_scale > 0.0) || !(control_scale > 0.0))
    throw ConfigError("ltv identify: perturbation scales must be positive");
  if (static_cast<int>(nominal.states[0].size()) != n_x)
    throw ConfigError("ltv identify: nominal state dimension mismatch");
  if (static_cast<int>(nominal.controls[0].size()) != n_u)
    throw ConfigError("ltv identify: nominal control dimension mismatch");

  const int rows = mode == LtvFitMode::CentralDiff ? 2 * (n_x + n_u)
                                                   : n_rollouts;
  if (mode == LtvFitMode::Random && n_rollouts < n_x + n_u)
    throw ConfigError("ltv identify: n_rollouts " + std::to_string(n_rollouts) +
                      " is below n_x + n_u = " + std::to_string(n_x + n_u));

  // Uniform half-width giving unit variance, so both noise kinds share the
  // same second moment at a given scale.
  const double uniform_halfwidth = std::sqrt(3.0);
  Rng root(seed);

  std::vector<Eigen::MatrixXd> A(T), B(T);
  std::vector<double> cond(T), resid(T);
  for (int t = 0; t < T; ++t) {
    Rng stream = root.substream(static_cast<std::uint64_t>(t));
    Eigen::MatrixXd dZ(rows, n_x + n_u);
    if (mode == LtvFitMode::CentralDiff) {
      dZ.setZero();
      for (int i = 0; i < n_x + n_u; ++i) {
        const double scale = i < n_x ? state_scale : control_scale;
        dZ(2 * i, i) = scale;
        dZ(2 * i + 1, i) = -scale;
      }
    } else {
      // Unit draws are taken first and scaled afterwards so runs with the
      // same seed see proportional perturbations at every scale setting.
      for (int r = 0; r < rows; ++r)
        for (int i = 0; i < n_x + n_u; ++i) {
          const double unit = noise == NoiseKind::Gaussian
                                  ? stream.normal()
                                  : stream.uniform(-uniform_halfwidth,
                                                   uniform_halfwidth);
          dZ(r, i) = (i < n_x ? state_scale : control_scale) * unit;
        }
    }

    Eigen::MatrixXd dXn(rows, n_x);
    for (int r = 0; r < rows; ++r) {
      const Eigen::VectorXd x = nominal.states[t] + dZ.row(r).head(n_x).transpose();
      const Eigen::VectorXd u =
          nominal.controls[t] + dZ.row(r).tail(n_u).transpose();
      const Eigen::VectorXd xn = system.step(x, u);
      if (!xn.allFinite())
        throw NumericalError("ltv identify: divergent rollout " +
                             std::to_string(r) + " at timestep " +
                             std::to_string(t));
      dXn.row(r) = (xn - nominal.states[t + 1]).transpose();
    }

    auto [At, Bt] = fit_ltv_timestep(dZ, dXn, n_x, n_u, t, &cond[t], &resid[t]);
    A[t] = std::move(At);
    B[t] = std::move(Bt);
  }

  LtvMeta meta;
  meta.n_rollouts = rows;
  meta.state_scale = state_scale;
  meta.control_scale = control_scale;
  meta.seed = seed;
  meta.mode = mode;
  meta.noise = noise;

  LtvModel model(std::move(A), std::move(B), nominal, meta);
  model.gram_cond = std::move(cond);
  model.residual_mean = std::move(resid);
  return model;
}

std::string LtvModel::to_json_string() const {
  nlohmann::json j;
  j["state_dim"] = state_dim();
  j["control_dim"] = control_dim();
  j["horizon"] = horizon();
  std::vector<std::vector<std::vector<double>>> a, b;
  for (const auto& m : A_) a.push_back(matrix_rows(m));
  for (const auto& m : B_) b.push_back(matrix_rows(m));
  j["A"] = a;
  j["B"] = b;
  std::vector<std::vector<double>> states, controls;
  for (const auto& x : nominal_.states)
    states.emplace_back(x.data(), x.data() + x.size());
  for (const auto& u : nominal_.controls)
    controls.emplace_back(u.data(), u.data() + u.size());
  j["nominal"] = {{"dt", nominal_.dt},
                  {"states", states},
                  {"controls", controls}};
  char hash_hex[17];
  std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                static_cast<unsigned long long>(fnv1a(nominal_bytes(nominal_))));
  j["nominal_hash"] = hash_hex;
  j["meta"] = {{"n_rollouts", meta_.n_rollouts},
               {"state_scale", meta_.state_scale},
               {"control_scale", meta_.control_scale},
               {"seed", meta_.seed},
               {"mode", mode_name(meta_.mode)},
               {"noise", meta_.noise == NoiseKind::Gaussian ? "gaussian"
                                                            : "uniform"}};
  j["gram_cond"] = gram_cond;
  j["residual_mean"] = residual_mean;
  return j.dump(2);
}

LtvModel LtvModel::from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ltv model parse: ") + e.what());
  }
  try {
    const int n_x = j.at("state_dim").get<int>();
    const int n_u = j.at("control_dim").get<int>();
    const int T = j.at("horizon").get<int>();
    if (n_x < 1 || n_u < 1 || T < 1)
      throw ConfigError("ltv model: dimensions must be positive");

    Trajectory nominal;
    const auto& jn = j.at("nominal");
    nominal.dt = jn.at("dt").get<double>();
    for (const auto& row : jn.at("states")) {
      Eigen::VectorXd x(n_x);
      if (static_cast<int>(row.size()) != n_x)
        throw ConfigError("ltv model: bad nominal state width");
      for (int i = 0; i < n_x; ++i) x[i] = row[i].get<double>();
      nominal.states.push_back(std::move(x));
    }
    for (const auto& row : jn.at("controls")) {
      Eigen::VectorXd u(n_u);
      if (static_cast<int>(row.size()) != n_u)
        throw ConfigError("ltv model: bad nominal control width");
      for (int i = 0; i < n_u; ++i) u[i] = row[i].get<double>();
      nominal.controls.push_back(std::move(u));
    }
    if (nominal.horizon() != T)
      throw ConfigError("ltv model: nominal horizon mismatch");

    char hash_hex[17];
    std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a(nominal_bytes(nominal))));
    if (j.at("nominal_hash").get<std::string>() != hash_hex)
      throw ConfigError("ltv model: nominal trajectory hash mismatch");

    std::vector<Eigen::MatrixXd> A, B;
    const auto& ja = j.at("A");
    const auto& jb = j.at("B");
    if (static_cast<int>(ja.size()) != T || static_cast<int>(jb.size()) != T)
      throw ConfigError("ltv model: matrix horizon mismatch");
    for (int t = 0; t < T; ++t) {
      A.push_back(matrix_from_rows(ja[t], n_x, n_x, "A"));
      B.push_back(matrix_from_rows(jb[t], n_x, n_u, "B"));
    }

    LtvMeta meta;
    const auto& jm = j.at("meta");
    meta.n_rollouts = jm.at("n_rollouts").get<int>();
    meta.state_scale = jm.at("state_scale").get<double>();
    meta.control_scale = jm.at("control_scale").get<double>();
    meta.seed = jm.at("seed").get<std::uint64_t>();
    meta.mode = mode_from_name(jm.at("mode").get<std::string>());
    meta.noise = jm.at("noise").get<std::string>() == "uniform"
                     ? NoiseKind::Uniform
                     : NoiseKind::Gaussian;

    LtvModel model(std::move(A), std::move(B), std::move(nominal), meta);
    model.gram_cond = j.at("gram_cond").get<std::vector<double>>();
    model.residual_mean = j.at("residual_mean").get<std::vector<double>>();
    if (model.gram_cond.size() != static_cast<std::size_t>(T) ||
        model.residual_mean.size() != static_cast<std::size_t>(T))
      throw ConfigError("ltv model: diagnostic length mismatch");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ltv model fields: ") + e.what());
  }
}

}  // namespace optlab
