#include "optlab/diagnostics.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <limits>

#include "optlab/errors.hpp"

namespace optlab {

namespace {

using bigfloat = boost::multiprecision::cpp_bin_float_100;

double to_double_checked(const bigint& v, const std::string& what) {
  const double d = v.convert_to<double>();
  if (!std::isfinite(d)) {
    const double mag =
        static_cast<double>(boost::multiprecision::msb(v)) * std::log10(2.0);
    throw NumericalError(what + " overflows double (magnitude ~1e" +
                         std::to_string((long long)mag) + ")");
  }
  return d;
}

double ipow(double x, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

}  // namespace

bigint double_factorial(long long n) {
  if (n < -1) throw ConfigError("double factorial requires n >= -1");
  bigint r = 1;
  for (long long k = n; k > 1; k -= 2) r *= k;
  return r;
}

bigint factorial(long long n) {
  if (n < 0) throw ConfigError("factorial requires n >= 0");
  bigint r = 1;
  for (long long k = 2; k <= n; ++k) r *= k;
  return r;
}

double gaussian_moment(int order, double sigma) {
  if (order < 0) throw ConfigError("moment order must be >= 0");
  if (sigma < 0.0) throw ConfigError("sigma must be >= 0");
  if (order % 2 == 1) return 0.0;
  const double df =
      to_double_checked(double_factorial(order - 1), "gaussian moment");
  const double m = df * ipow(sigma, order);
  if (!std::isfinite(m))
    throw NumericalError("gaussian moment overflows double");
  return m;
}

Distribution Distribution::gaussian(double sigma) {
  if (sigma <= 0.0) throw ConfigError("gaussian sigma must be > 0");
  Distribution d;
  d.kind = Kind::Gaussian;
  d.sigma = sigma;
  return d;
}

Distribution Distribution::uniform(double a, double b) {
  if (!(a < b)) throw ConfigError("uniform support requires a < b");
  Distribution d;
  d.kind = Kind::Uniform;
  d.a = a;
  d.b = b;
  return d;
}

double Distribution::sample(Rng& rng) const {
  return kind == Kind::Gaussian ? rng.normal(0.0, sigma) : rng.uniform(a, b);
}

double Distribution::moment(int order) const {
  if (order < 0) throw ConfigError("moment order must be >= 0");
  if (kind == Kind::Gaussian) return gaussian_moment(order, sigma);
  // integral of x^k on [a,b] over (b-a)
  const int k = order + 1;
  return (ipow(b, k) - ipow(a, k)) / (k * (b - a));
}

MomentEstimate moment_mc(const MomentSpec& spec) {
  if (spec.order < 0) throw ConfigError("moment order must be >= 0");
  if (spec.n_samples < 2) throw ConfigError("moment_mc needs n_samples >= 2");
  Rng rng(spec.seed);
  std::vector<double> vals((size_t)spec.n_samples);
  double sum = 0.0, comp = 0.0;
  for (auto& v : vals) {
    v = ipow(spec.dist.sample(rng), spec.order);
    const double y = v - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  const double n = (double)spec.n_samples;
  const double mean = sum / n;
  double sq = 0.0, sqc = 0.0;
  for (double v : vals) {
    const double d = (v - mean) * (v - mean);
    const double y = d - sqc;
    const double t = sq + y;
    sqc = (t - sq) - y;
    sq = t;
  }
  MomentEstimate out;
  out.estimate = mean;
  out.standard_error = std::sqrt(sq / (n - 1.0) / n);
  return out;
}

double sample_complexity(BasisFamily family, int degree, double sigma) {
  if (degree < 1) throw ConfigError("sample complexity requires degree >= 1");
  if (sigma <= 0.0) throw ConfigError("sigma must be > 0");
  const long long n = degree;
  const bigint d2n = double_factorial(2 * n - 1);
  const bigint variance_num = double_factorial(4 * n - 1) - d2n * d2n;

  bigfloat value;
  switch (family) {
    case BasisFamily::Monomial:
      value = bigfloat(variance_num) * pow(bigfloat(sigma), 4 * n);
      break;
    case BasisFamily::Hermite: {
      const bigint nf = factorial(n);
      value = bigfloat(variance_num) / bigfloat(nf * nf) *
              pow(bigfloat(sigma), 2 * n);
      break;
    }
    case BasisFamily::Legendre: {
      const bigint f2n = factorial(2 * n);
      const bigint nf = factorial(n);
      const bigint num = f2n * f2n * 4 * n * n;
      const bigint den =
          nf * nf * nf * nf * (2 * n + 1) * (2 * n + 1) * (4 * n + 1);
      value = bigfloat(num) / bigfloat(den) * pow(bigfloat(sigma), 2 * n);
      break;
    }
    default:
      throw ConfigError("no sample-complexity form for this basis family");
  }
  const double out = value.convert_to<double>();
  if (!std::isfinite(out))
    throw NumericalError("sample complexity overflows double");
  return out;
}

Eigen::MatrixXd analytic_gram(BasisFamily family, int order,
                              const Distribution& dist) {
  if (order < 0) throw ConfigError("basis order must be >= 0");
  const int m = order + 1;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, m);
  if (family == BasisFamily::Hermite &&
      dist.kind == Distribution::Kind::Gaussian) {
    if (dist.sigma != 1.0)
      throw ConfigError(
          "closed-form hermite gram requires unit-sigma gaussian input");
    return Eigen::MatrixXd::Identity(m, m);
  }
  if (family == BasisFamily::Monomial) {
    for (int k = 0; k < m; ++k)
      for (int l = k; l < m; ++l) G(k, l) = G(l, k) = dist.moment(k + l);
    return G;
  }
  if (family == BasisFamily::Legendre &&
      dist.kind == Distribution::Kind::Uniform) {
    if (dist.a != -1.0 || dist.b != 1.0)
      throw ConfigError("closed-form legendre gram requires uniform(-1,1)");
    for (int k = 0; k < m; ++k) G(k, k) = 1.0 / (2.0 * k + 1.0);
    return G;
  }
  throw ConfigError("no closed-form gram for this basis/distribution pair");
}

Eigen::MatrixXd pairwise_cosine(const std::vector<Eigen::VectorXd>& vs) {
  const int n = (int)vs.size();
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double ni = vs[i].norm(), nj = vs[j].norm();
      const double c =
          (ni > 0.0 && nj > 0.0) ? vs[i].dot(vs[j]) / (ni * nj) : 0.0;
      C(i, j) = C(j, i) = c;
    }
  }
  return C;
}

double max_pairwise_spread(
    const std::vector<std::vector<Eigen::VectorXd>>& predictions) {
  double spread = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    for (size_t j = i + 1; j < predictions.size(); ++j) {
      const size_t n = std::min(predictions[i].size(), predictions[j].size());
      for (size_t t = 0; t < n; ++t) {
        const Eigen::VectorXd& p = predictions[i][t];
        const Eigen::VectorXd& q = predictions[j][t];
        if (!p.allFinite() || !q.allFinite()) break;
        spread = std::max(spread, (p - q).norm());
      }
    }
  }
  return spread;
}

VarianceStudy seed_variance_study(const System& system,
                                  const Trajectory& nominal, SamplingSpec spec,
                                  const std::vector<std::uint64_t>& seeds,
                                  const std::string& model_tag,
                                  const SeedFitFn& fit) {
  if (seeds.size() < 2)
    throw ConfigError("variance study needs at least 2 seeds");
  VarianceStudy study;
  study.perturbation_level = spec.perturbation_level;
  study.model_tag = model_tag;

  for (std::uint64_t seed : seeds) {
    spec.seed = seed;
    SeedFitResult r;
    r.seed = seed;
    try {
      const Dataset ds = generate_dataset(system, nominal, spec);
      // The split stream sits past every per-trajectory substream.
      Rng split_rng = Rng(seed).substream(spec.n_trajectories);
      auto [train, test] = split_dataset(ds, spec.split_ratio, split_rng);
      r = fit(train, test, seed);
      r.seed = seed;
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
    study.fits.push_back(std::move(r));
  }

  std::vector<const SeedFitResult*> ok;
  for (const auto& f : study.fits)
    if (f.ok) ok.push_back(&f);

  if (!ok.empty()) {
    const Eigen::Index dim = ok[0]->coefficients.size();
    for (const auto* f : ok)
      if (f->coefficients.size() != dim)
        throw NumericalError(
            "coefficient vectors disagree in size across seeds");
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    for (const auto* f : ok) mean += f->coefficients;
    mean /= (double)ok.size();
    study.coeff_mean = mean;
    if (ok.size() >= 2) {
      Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
      for (const auto* f : ok) {
        const Eigen::VectorXd d = f->coefficients - mean;
        var += d.cwiseProduct(d);
      }
      var /= (double)(ok.size() - 1);
      study.coeff_std = var.cwiseSqrt();
    } else {
      study.coeff_std = Eigen::VectorXd::Constant(
          dim, std::numeric_limits<double>::quiet_NaN());
    }
    std::vector<std::vector<Eigen::VectorXd>> preds;
    for (const auto* f : ok)
      if (!f->prediction.empty()) preds.push_back(f->prediction);
    study.max_prediction_spread = max_pairwise_spread(preds);
  }
  return study;
}

}  // namespace optlab
