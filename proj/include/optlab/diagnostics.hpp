#pragma once

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "optlab/basis.hpp"
#include "optlab/dynamics.hpp"
#include "optlab/rng.hpp"
#include "optlab/sampling.hpp"

namespace optlab {

using bigint = boost::multiprecision::cpp_int;

// n!! for n >= -1, with (-1)!! = 0!! = 1.  Exact.
bigint double_factorial(long long n);

bigint factorial(long long n);

// E[x^order] for x ~ N(0, sigma^2): zero for odd order,
// (order-1)!! sigma^order for even.  Throws NumericalError when the value
// exceeds double range, reporting the approximate magnitude.
double gaussian_moment(int order, double sigma);

struct Distribution {
  enum class Kind { Gaussian, Uniform };
  Kind kind = Kind::Gaussian;
  double sigma = 1.0;   // gaussian
  double a = -1.0;      // uniform support
  double b = 1.0;

  static Distribution gaussian(double sigma);
  static Distribution uniform(double a, double b);

  double sample(Rng& rng) const;
  double moment(int order) const;  // exact E[x^order]
};

struct MomentSpec {
  Distribution dist;
  int order = 2;
  long long n_samples = 10000;
  std::uint64_t seed = 1;
};

struct MomentEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

// Monte-Carlo estimate of E[x^order] with its standard error s/sqrt(n).
MomentEstimate moment_mc(const MomentSpec& spec);

// Samples R needed for the relative standard error of a degree-N Gram
// entry to reach a fixed target, up to that common constant:
//   monomial  ((4N-1)!! - ((2N-1)!!)^2) sigma^{4N}
//   hermite   ((4N-1)!! - ((2N-1)!!)^2) / (N!)^2 sigma^{2N}
//   legendre  (2N)!^2 4N^2 / ((N!)^4 (2N+1)^2 (4N+1)) sigma^{2N}
// Integer parts are evaluated exactly before conversion.
double sample_complexity(BasisFamily family, int degree, double sigma);

// Closed-form E[psi(x) psi(x)'] for a one-dimensional basis of the given
// order under the distribution.  Supported pairs: hermite x gaussian(1)
// (identity), monomial x gaussian, monomial x uniform, legendre x
// uniform(-1,1) (diag 1/(2k+1)).  Anything else throws ConfigError.
Eigen::MatrixXd analytic_gram(BasisFamily family, int order,
                              const Distribution& dist);

// Cosine similarity of every pair; zero-norm vectors yield 0 entries.
Eigen::MatrixXd pairwise_cosine(const std::vector<Eigen::VectorXd>& vs);

// Largest state distance between any two prediction sequences, taken over
// the common prefix on which both are finite.
double max_pairwise_spread(
    const std::vector<std::vector<Eigen::VectorXd>>& predictions);

struct SeedFitResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;               // set when the fit failed
  Eigen::VectorXd coefficients;    // flattened model parameters
  std::vector<Eigen::VectorXd> prediction;  // open-loop states, nominal controls
};

// Fit one model on (train, test) drawn with the given data seed.
using SeedFitFn = std::function<SeedFitResult(
    const Dataset& train, const Dataset& test, std::uint64_t seed)>;

struct VarianceStudy {
  std::vector<SeedFitResult> fits;   // one per seed, in input order
  Eigen::VectorXd coeff_mean;        // over successful fits
  Eigen::VectorXd coeff_std;         // ddof = 1; NaN when fewer than 2 succeed
  double max_prediction_spread = 0.0;
  double perturbation_level = 0.0;
  std::string model_tag;
};

// Refits the same model on datasets regenerated under each seed and
// measures how much the coefficients and open-loop predictions move.
// A failing fit is recorded with its message; the study continues.
VarianceStudy seed_variance_study(const System& system,
                                  const Trajectory& nominal, SamplingSpec spec,
                                  const std::vector<std::uint64_t>& seeds,
                                  const std::string& model_tag,
                                  const SeedFitFn& fit);

}  // namespace optlab
