#include "optlab/regress.hpp"

#include <cmath>
#include <limits>

#include "optlab/errors.hpp"

namespace optlab {

namespace {

inline void kahan_add(double term, double& sum, double& comp) {
  const double y = term - comp;
  const double t = sum + y;
  comp = (t - sum) - y;
  sum = t;
}

}  // namespace

GramMatrix gram(const Eigen::MatrixXd& design) {
  const long long R = design.rows();
  const int n = static_cast<int>(design.cols());
  if (R < 1) throw ConfigError("gram: need at least one sample");

  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, n);
  for (long long r = 0; r < R; ++r) {
    for (int i = 0; i < n; ++i) {
      const double pi = design(r, i);
      for (int j = i; j < n; ++j)
        kahan_add(pi * design(r, j), sum(i, j), comp(i, j));
    }
  }
  GramMatrix out;
  out.n_samples = R;
  out.G = sum / static_cast<double>(R);
  // Mirror the strictly-upper triangle; bitwise symmetry by construction.
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.G(j, i) = out.G(i, j);
  return out;
}

ForcingVector forcing(const Eigen::MatrixXd& design,
                      const Eigen::MatrixXd& targets) {
  const long long R = design.rows();
  const int n = static_cast<int>(design.cols());
  const int m = static_cast<int>(targets.cols());
  if (targets.rows() != R)
    throw ConfigError("forcing: targets have " + std::to_string(targets.rows()) +
                      " rows, design has " + std::to_string(R));

  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, m);
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, m);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd sq_comp = Eigen::VectorXd::Zero(m);
  for (long long r = 0; r < R; ++r) {
    for (int t = 0; t < m; ++t) {
      const double f = targets(r, t);
      for (int i = 0; i < n; ++i)
        kahan_add(design(r, i) * f, sum(i, t), comp(i, t));
      kahan_add(f * f, sq[t], sq_comp[t]);
    }
  }
  ForcingVector out;
  out.n_samples = R;
  out.F = sum / static_cast<double>(R);
  out.target_mean_square = sq / static_cast<double>(R);
  return out;
}

Coefficients solve_normal(const GramMatrix& G, const ForcingVector& F,
                          double svd_cutoff) {
  const int n = static_cast<int>(G.G.rows());
  if (F.F.rows() != n)
    throw ConfigError("solve_normal: Gram is " + std::to_string(n) + "x" +
                      std::to_string(n) + " but forcing has " +
                      std::to_string(F.F.rows()) + " rows");
  if (svd_cutoff < 0.0) throw ConfigError("solve_normal: cutoff must be >= 0");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G.G);
  if (es.info() != Eigen::Success)
    throw NumericalError("solve_normal: eigendecomposition failed");

  // Ascending eigenvalues; the Gram is PSD up to roundoff, so negatives are
  // treated as zero.
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  const double lam_max = lam[n - 1];

  Coefficients out;
  out.singular_values = lam.reverse();
  out.sigma_max = lam_max;
  out.sigma_min = lam[0];
  out.cond = (lam[0] > 0.0) ? lam_max / lam[0]
                            : std::numeric_limits<double>::infinity();

  Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
  int kept = 0;
  for (int i = 0; i < n; ++i) {
    const bool keep = (lam[i] > 0.0) && (lam[i] >= svd_cutoff * lam_max);
    if (keep) {
      inv[i] = 1.0 / lam[i];
      ++kept;
    }
  }
  out.n_truncated = n - kept;
  if (kept == 0)
    throw NumericalError("solve_normal: all singular values truncated (rank zero)");

  const Eigen::MatrixXd& V = es.eigenvectors();
  out.C = V * inv.asDiagonal() * V.transpose() * F.F;

  const int m = static_cast<int>(F.F.cols());
  out.residual_rms.resize(m);
  for (int t = 0; t < m; ++t) {
    if (F.target_mean_square.size() == m) {
      const Eigen::VectorXd c = out.C.col(t);
      const double msq = F.target_mean_square[t];
      const double val = c.dot(G.G * c) - 2.0 * c.dot(F.F.col(t)) + msq;
      out.residual_rms[t] = std::sqrt(std::max(0.0, val));
    } else {
      out.residual_rms[t] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

double condition_number(const Eigen::MatrixXd& G) {
  if (!G.allFinite()) throw NumericalError("condition_number: non-finite input");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(G);
  const auto& s = svd.singularValues();
  const double smin = s[s.size() - 1];
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return s[0] / smin;
}

double tail_bound(double epsilon, double sigma_g, double R) {
  if (epsilon <= 0.0) throw ConfigError("tail_bound: epsilon must be positive");
  if (sigma_g < 0.0) throw ConfigError("tail_bound: sigma_g must be >= 0");
  if (R < 1.0) throw ConfigError("tail_bound: R must be >= 1");
  if (sigma_g == 0.0) return 0.0;
  return sigma_g / std::sqrt(2.0 * M_PI * R) *
         std::exp(-epsilon * epsilon * R / (sigma_g * sigma_g));
}

}  // namespace optlab
