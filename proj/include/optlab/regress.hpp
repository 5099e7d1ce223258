#pragma once

#include <Eigen/Dense>

namespace optlab {

// Empirical Gram matrix G = (1/R) ΨᵀΨ.
struct GramMatrix {
  Eigen::MatrixXd G;
  long long n_samples = 0;
};

// Projection of the targets onto the features, F = (1/R) Ψᵀf.  Supports m
// target columns at once.  target_mean_square carries (1/R) Σ f² per target
// so a later solve can report residuals without re-touching the samples.
struct ForcingVector {
  Eigen::MatrixXd F;
  Eigen::VectorXd target_mean_square;
  long long n_samples = 0;
};

struct Coefficients {
  Eigen::MatrixXd C;  // n × m
  double cond = 0.0;  // σ_max/σ_min of G; +inf when σ_min = 0 numerically
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  Eigen::VectorXd singular_values;  // descending
  int n_truncated = 0;
  // Per-target RMS of (Ψc − f), from the c'Gc − 2c'F + mean(f²) identity.
  // NaN when the forcing carried no mean-square information.
  Eigen::VectorXd residual_rms;
};

// Both accumulators run compensated (Kahan) summation over samples: the
// high-order moment sums these matrices are made of lose many digits under
// naive accumulation, and compensation also makes the result insensitive to
// sample order to within one rounding of the compensated stream.
GramMatrix gram(const Eigen::MatrixXd& design);
ForcingVector forcing(const Eigen::MatrixXd& design, const Eigen::MatrixXd& targets);

// Minimum-norm solution of G C = F by eigendecomposition of the symmetric
// PSD Gram, truncating eigenvalues below svd_cutoff·σ_max.  Throws when
// every eigenvalue is truncated.  cutoff 0 keeps everything positive.
Coefficients solve_normal(const GramMatrix& G, const ForcingVector& F,
                          double svd_cutoff = 1e-12);

// σ_max/σ_min by full SVD, +inf sentinel for numerically singular input.
double condition_number(const Eigen::MatrixXd& G);

// Tail estimate for the deviation of an R-sample mean of g from its
// expectation, evaluated exactly as printed in its source:
//
//   Prob(|ḡ_R − ḡ| > ε) ≤ σ_g/sqrt(2πR) · exp(−ε²R/σ_g²)
//
// Note this is a density-style bound (it is not normalized like a CDF tail
// and exceeds what a Chernoff bound would give for small R); it is kept
// verbatim rather than corrected.  σ_g = 0 degenerates to 0 for ε > 0.
double tail_bound(double epsilon, double sigma_g, double R);

}  // namespace optlab
