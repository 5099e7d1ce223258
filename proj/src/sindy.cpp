#include "optlab/sindy.hpp"

#include "json.hpp"

#include "optlab/errors.hpp"
#include "optlab/regress.hpp"

namespace optlab {

namespace {

// Thresholded refit for one target column.  Starts from the full-support
// solution and keeps shrinking; returns the full-length coefficient vector
// with zeros off the final support.
Eigen::VectorXd threshold_column(const GramMatrix& G, const Eigen::MatrixXd& F,
                                 const Eigen::VectorXd& msq, int j,
                                 double threshold, double svd_cutoff) {
  const int n = static_cast<int>(G.G.rows());
  std::vector<int> support(n);
  for (int i = 0; i < n; ++i) support[i] = i;

  Eigen::VectorXd full = Eigen::VectorXd::Zero(n);
  for (int sweep = 0; sweep < 10; ++sweep) {
    const int k = static_cast<int>(support.size());
    GramMatrix Gs;
    Gs.n_samples = G.n_samples;
    Gs.G.resize(k, k);
    ForcingVector Fs;
    Fs.n_samples = G.n_samples;
    Fs.F.resize(k, 1);
    Fs.target_mean_square = msq.segment(j, 1);
    for (int a = 0; a < k; ++a) {
      Fs.F(a, 0) = F(support[a], j);
      for (int b = 0; b < k; ++b) Gs.G(a, b) = G.G(support[a], support[b]);
    }
    const Coefficients sol = solve_normal(Gs, Fs, svd_cutoff);

    std::vector<int> kept;
    for (int a = 0; a < k; ++a)
      if (std::abs(sol.C(a, 0)) >= threshold) kept.push_back(support[a]);
    if (kept.empty())
      throw NumericalError(
          "thresholding removed every feature for state coordinate " +
          std::to_string(j));

    if (kept.size() == support.size()) {
      full.setZero();
      for (int a = 0; a < k; ++a) full[support[a]] = sol.C(a, 0);
      return full;
    }
    support = std::move(kept);
  }
  // Support still moving after the sweep budget: refit once on what's left.
  const int k = static_cast<int>(support.size());
  GramMatrix Gs;
  Gs.n_samples = G.n_samples;
  Gs.G.resize(k, k);
  ForcingVector Fs;
  Fs.n_samples = G.n_samples;
  Fs.F.resize(k, 1);
  Fs.target_mean_square = msq.segment(j, 1);
  for (int a = 0; a < k; ++a) {
    Fs.F(a, 0) = F(support[a], j);
    for (int b = 0; b < k; ++b) Gs.G(a, b) = G.G(support[a], support[b]);
  }
  const Coefficients sol = solve_normal(Gs, Fs, svd_cutoff);
  for (int a = 0; a < k; ++a) full[support[a]] = sol.C(a, 0);
  return full;
}

}  // namespace

SindyModel::SindyModel(BasisSet basis, Eigen::MatrixXd xi, int state_dim,
                       int control_dim, SindyMeta meta)
    : basis_(std::move(basis)),
      xi_(std::move(xi)),
      state_dim_(state_dim),
      control_dim_(control_dim),
      meta_(std::move(meta)) {
  if (state_dim_ < 1 || control_dim_ < 0)
    throw ConfigError("sindy model dimensions must be positive");
  if (basis_.input_dim() != state_dim_ + control_dim_)
    throw ConfigError("basis input_dim must equal state_dim + control_dim");
  if (xi_.rows() != basis_.size() || xi_.cols() != state_dim_)
    throw ConfigError("coefficient matrix shape mismatch");
}

Eigen::VectorXd SindyModel::step(const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& u) const {
  if (x.size() != state_dim_ || u.size() != control_dim_)
    throw ConfigError("sindy step: dimension mismatch");
  if (!x.allFinite() || !u.allFinite())
    throw NumericalError("sindy step: non-finite input");
  Eigen::VectorXd z(x.size() + u.size());
  z << x, u;
  return xi_.transpose() * basis_.evaluate(z);
}

SindyModel fit_sindy(const Dataset& train, const BasisSet& basis,
                     double threshold, double svd_cutoff) {
  if (train.samples.empty()) throw ConfigError("sindy fit: empty dataset");
  if (threshold < 0.0) throw ConfigError("sindy threshold must be >= 0");
  if (basis.input_dim() != train.state_dim() + train.control_dim())
    throw ConfigError("basis input_dim must equal state_dim + control_dim");

  const Eigen::MatrixXd design = basis.design_matrix(train.stacked_inputs());
  const Eigen::MatrixXd targets = train.next_state_matrix();
  const GramMatrix G = gram(design);
  const ForcingVector F = forcing(design, targets);

  const int n_x = train.state_dim();
  Eigen::MatrixXd xi(basis.size(), n_x);
  SindyMeta meta;
  meta.threshold = threshold;
  meta.svd_cutoff = svd_cutoff;
  meta.n_train = train.size();
  meta.seed = train.meta.seed;
  meta.perturbation_level = train.meta.perturbation_level;

  if (threshold == 0.0) {
    const Coefficients sol = solve_normal(G, F, svd_cutoff);
    xi = sol.C;
    meta.gram_cond = sol.cond;
    meta.residual_rms = sol.residual_rms;
  } else {
    for (int j = 0; j < n_x; ++j)
      xi.col(j) = threshold_column(G, F.F, F.target_mean_square, j, threshold,
                                   svd_cutoff);
    meta.gram_cond = condition_number(G.G);
    meta.residual_rms.resize(n_x);
    for (int j = 0; j < n_x; ++j) {
      const Eigen::VectorXd c = xi.col(j);
      const double r2 = c.dot(G.G * c) - 2.0 * c.dot(F.F.col(j)) +
                        F.target_mean_square[j];
      meta.residual_rms[j] = std::sqrt(std::max(0.0, r2));
    }
  }

  meta.max_abs_residual = Eigen::VectorXd::Zero(n_x);
  for (int i = 0; i < train.size(); ++i) {
    const Eigen::VectorXd err =
        (xi.transpose() * design.row(i).transpose() - targets.row(i).transpose())
            .cwiseAbs();
    meta.max_abs_residual = meta.max_abs_residual.cwiseMax(err);
  }

  return SindyModel(basis, std::move(xi), n_x, train.control_dim(),
                    std::move(meta));
}

std::string SindyModel::to_json_string() const {
  nlohmann::json j;
  j["basis"] = basis_.spec_string();
  j["state_dim"] = state_dim_;
  j["control_dim"] = control_dim_;
  std::vector<std::vector<double>> rows(xi_.rows());
  for (int r = 0; r < xi_.rows(); ++r) {
    rows[r].resize(xi_.cols());
    for (int c = 0; c < xi_.cols(); ++c) rows[r][c] = xi_(r, c);
  }
  j["xi"] = rows;
  j["meta"] = {
      {"threshold", meta_.threshold},
      {"svd_cutoff", meta_.svd_cutoff},
      {"n_train", meta_.n_train},
      {"seed", meta_.seed},
      {"perturbation_level", meta_.perturbation_level},
      {"gram_cond", meta_.gram_cond},
      {"residual_rms",
       std::vector<double>(meta_.residual_rms.begin(),
                           meta_.residual_rms.end())},
      {"max_abs_residual",
       std::vector<double>(meta_.max_abs_residual.begin(),
                           meta_.max_abs_residual.end())},
  };
  return j.dump(2);
}

SindyModel SindyModel::from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sindy model parse: ") + e.what());
  }
  try {
    const int state_dim = j.at("state_dim").get<int>();
    const int control_dim = j.at("control_dim").get<int>();
    BasisSet basis = BasisSet::parse(j.at("basis").get<std::string>(),
                                     state_dim + control_dim);
    const auto rows = j.at("xi").get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd xi(rows.size(), state_dim);
    for (size_t r = 0; r < rows.size(); ++r) {
      if ((int)rows[r].size() != state_dim)
        throw ConfigError("sindy model parse: xi row length mismatch");
      for (int c = 0; c < state_dim; ++c) xi(r, c) = rows[r][c];
    }
    const auto& m = j.at("meta");
    SindyMeta meta;
    meta.threshold = m.at("threshold").get<double>();
    meta.svd_cutoff = m.at("svd_cutoff").get<double>();
    meta.n_train = m.at("n_train").get<long long>();
    meta.seed = m.at("seed").get<std::uint64_t>();
    meta.perturbation_level = m.at("perturbation_level").get<double>();
    meta.gram_cond = m.at("gram_cond").get<double>();
    const auto rr = m.at("residual_rms").get<std::vector<double>>();
    const auto mr = m.at("max_abs_residual").get<std::vector<double>>();
    meta.residual_rms =
        Eigen::Map<const Eigen::VectorXd>(rr.data(), rr.size());
    meta.max_abs_residual =
        Eigen::Map<const Eigen::VectorXd>(mr.data(), mr.size());
    return SindyModel(std::move(basis), std::move(xi), state_dim, control_dim,
                      std::move(meta));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sindy model parse: ") + e.what());
  }
}

}  // namespace optlab
