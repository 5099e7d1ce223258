#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "optlab/basis.hpp"
#include "optlab/errors.hpp"
#include "optlab/regress.hpp"
#include "optlab/rng.hpp"
#include "oracles.hpp"

using namespace optlab;

namespace {

Eigen::MatrixXd normal_design(const BasisSet& basis, long long R, Rng& rng) {
  Eigen::MatrixXd psi(R, basis.size());
  Eigen::VectorXd z(1);
  for (long long r = 0; r < R; ++r) {
    z[0] = rng.normal();
    psi.row(r) = basis.evaluate(z).transpose();
  }
  return psi;
}

// E[ψ_i ψ_j ψ_k ψ_l]-style expectations by Gauss-Hermite quadrature.
double gh_expect(const BasisSet& basis,
                 const std::function<double(const Eigen::VectorXd&)>& f) {
  std::vector<double> nodes, weights;
  oracle::gauss_hermite_normal(96, nodes, weights);
  double acc = 0.0;
  Eigen::VectorXd z(1);
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    z[0] = nodes[q];
    (void)basis;
    acc += weights[q] * f(z);
  }
  return acc;
}

}  // namespace

TEST_SUITE("regress") {

TEST_CASE("gram of a single monomial sample is the hand value") {
  BasisSet b(BasisFamily::Monomial, 1, 1);
  Eigen::VectorXd x(1);
  x << 2.0;
  GramMatrix G = gram(b.design_matrix({x}));
  CHECK(G.G(0, 0) == 1.0);
  CHECK(G.G(0, 1) == 2.0);
  CHECK(G.G(1, 0) == 2.0);
  CHECK(G.G(1, 1) == 4.0);
  CHECK(G.n_samples == 1);
}

TEST_CASE("gram of indicator rows is the diagonal of counts over R") {
  Eigen::MatrixXd psi(5, 3);
  psi << 1, 0, 0,
         0, 1, 0,
         0, 1, 0,
         0, 0, 1,
         0, 1, 0;
  GramMatrix G = gram(psi);
  Eigen::MatrixXd expected = Eigen::Vector3d(1.0, 3.0, 1.0).asDiagonal();
  CHECK((G.G - expected / 5.0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hermite gram converges to identity under Gaussian sampling") {
  const long long R = 1000000;
  BasisSet b(BasisFamily::Hermite, 3, 1);
  Rng rng(2024);
  GramMatrix G = gram(normal_design(b, R, rng));

  // CLT scale per entry from the quadrature fourth moments.
  double max_std = 0.0;
  for (int i = 0; i < b.size(); ++i) {
    for (int j = 0; j < b.size(); ++j) {
      const double m1 = gh_expect(b, [&](const Eigen::VectorXd& z) {
        Eigen::VectorXd f = b.evaluate(z);
        return f[i] * f[j];
      });
      const double m2 = gh_expect(b, [&](const Eigen::VectorXd& z) {
        Eigen::VectorXd f = b.evaluate(z);
        return f[i] * f[j] * f[i] * f[j];
      });
      max_std = std::max(max_std, std::sqrt(std::max(0.0, m2 - m1 * m1)));
    }
  }
  const double tol = 5.0 * max_std / std::sqrt(static_cast<double>(R));
  CHECK((G.G - Eigen::MatrixXd::Identity(b.size(), b.size())).cwiseAbs().maxCoeff()
        < tol);
}

TEST_CASE("gram and forcing are insensitive to sample order") {
  BasisSet b(BasisFamily::Hermite, 5, 1);
  Rng rng(7);
  Eigen::MatrixXd psi = normal_design(b, 5000, rng);
  Eigen::MatrixXd y(5000, 1);
  for (int r = 0; r < 5000; ++r) y(r, 0) = std::sin(psi(r, 1));

  // Reverse the sample order.
  Eigen::MatrixXd psi_rev = psi.colwise().reverse();
  Eigen::MatrixXd y_rev = y.colwise().reverse();

  GramMatrix g1 = gram(psi), g2 = gram(psi_rev);
  ForcingVector f1 = forcing(psi, y), f2 = forcing(psi_rev, y_rev);
  CHECK((g1.G - g2.G).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((f1.F - f2.F).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("forcing of zero targets vanishes; column targets reproduce gram columns") {
  BasisSet b(BasisFamily::Hermite, 3, 1);
  Rng rng(31);
  Eigen::MatrixXd psi = normal_design(b, 2000, rng);

  ForcingVector fz = forcing(psi, Eigen::MatrixXd::Zero(2000, 1));
  CHECK(fz.F.cwiseAbs().maxCoeff() == 0.0);

  GramMatrix G = gram(psi);
  for (int j = 0; j < b.size(); ++j) {
    ForcingVector f = forcing(psi, psi.col(j));
    // Same products accumulated in the same order: bitwise equality.
    CHECK((f.F.col(0) - G.G.col(j)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("cubic target projects onto He_1 and He_3 with known weights") {
  // x³ = He_3(x) + 3 He_1(x), so against the normalized family the nonzero
  // projections are sqrt(6) on ψ_3 and 3 on ψ_1.
  const long long R = 1000000;
  BasisSet b(BasisFamily::Hermite, 5, 1);
  Rng rng(99);
  Eigen::MatrixXd psi(R, b.size());
  Eigen::MatrixXd y(R, 1);
  Eigen::VectorXd z(1);
  for (long long r = 0; r < R; ++r) {
    z[0] = rng.normal();
    psi.row(r) = b.evaluate(z).transpose();
    y(r, 0) = z[0] * z[0] * z[0];
  }
  ForcingVector F = forcing(psi, y);

  Eigen::VectorXd expected = Eigen::VectorXd::Zero(b.size());
  expected[1] = 3.0;
  expected[3] = std::sqrt(6.0);
  for (int i = 0; i < b.size(); ++i) {
    const double var = gh_expect(b, [&](const Eigen::VectorXd& p) {
      Eigen::VectorXd f = b.evaluate(p);
      const double g = p[0] * p[0] * p[0] * f[i];
      return g * g;
    }) - expected[i] * expected[i];
    const double tol = 5.0 * std::sqrt(std::max(var, 0.0) / R);
    CHECK(std::abs(F.F(i, 0) - expected[i]) < tol);
  }
}

TEST_CASE("identity gram returns the forcing unchanged") {
  GramMatrix G{Eigen::MatrixXd::Identity(4, 4), 10};
  ForcingVector F;
  F.F = Eigen::VectorXd::LinSpaced(4, 1.0, 4.0);
  F.n_samples = 10;
  Coefficients c = solve_normal(G, F, 1e-12);
  CHECK((c.C - F.F).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(c.cond == 1.0);
  CHECK(c.n_truncated == 0);
}

TEST_CASE("noiseless data in span recovers exact coefficients") {
  BasisSet b(BasisFamily::Monomial, 3, 1);
  std::vector<Eigen::VectorXd> xs;
  for (int i = 0; i < 41; ++i) {
    Eigen::VectorXd v(1);
    v << -2.0 + 0.1 * i;
    xs.push_back(v);
  }
  Eigen::MatrixXd psi = b.design_matrix(xs);
  Eigen::MatrixXd y(41, 1);
  for (int i = 0; i < 41; ++i) y(i, 0) = std::pow(xs[i][0], 3);

  Coefficients c = solve_normal(gram(psi), forcing(psi, y), 1e-12);
  Eigen::VectorXd expected(4);
  expected << 0.0, 0.0, 0.0, 1.0;
  CHECK((c.C.col(0) - expected).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(c.residual_rms[0] < 1e-8);
}

TEST_CASE("sin x projected on hermite order 5 matches the quadrature oracle") {
  const long long R = 200000;
  BasisSet b(BasisFamily::Hermite, 5, 1);
  Rng rng(555);
  Eigen::MatrixXd psi(R, b.size());
  Eigen::MatrixXd y(R, 1);
  Eigen::VectorXd z(1);
  for (long long r = 0; r < R; ++r) {
    z[0] = rng.normal();
    psi.row(r) = b.evaluate(z).transpose();
    y(r, 0) = std::sin(z[0]);
  }
  Coefficients c = solve_normal(gram(psi), forcing(psi, y), 1e-12);

  Eigen::VectorXd c_inf(b.size());
  for (int i = 0; i < b.size(); ++i) {
    c_inf[i] = gh_expect(b, [&](const Eigen::VectorXd& p) {
      return std::sin(p[0]) * b.evaluate(p)[i];
    });
  }
  // The Gram is near identity, so coefficient errors scale like forcing
  // errors; 5/sqrt(R) is a generous CLT envelope for every entry here.
  CHECK((c.C.col(0) - c_inf).cwiseAbs().maxCoeff() < 5.0 / std::sqrt((double)R));
}

TEST_CASE("cutoff zero on a full-rank gram reproduces the direct solve") {
  BasisSet b(BasisFamily::Hermite, 4, 1);
  Rng rng(17);
  Eigen::MatrixXd psi = normal_design(b, 4000, rng);
  Eigen::MatrixXd y(4000, 1);
  for (int r = 0; r < 4000; ++r) y(r, 0) = std::cos(psi(r, 1));

  GramMatrix G = gram(psi);
  ForcingVector F = forcing(psi, y);
  Coefficients c = solve_normal(G, F, 0.0);
  Eigen::VectorXd direct = G.G.ldlt().solve(F.F.col(0));
  CHECK((c.C.col(0) - direct).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("rank-deficient gram yields the minimum-norm solution and a flag") {
  // One sample of the design [1, x] at x = 1: G = [[1,1],[1,1]] is rank one;
  // the minimum-norm least-squares coefficient split the target evenly.
  Eigen::MatrixXd psi(1, 2);
  psi << 1.0, 1.0;
  Eigen::MatrixXd y(1, 1);
  y << 3.0;
  Coefficients c = solve_normal(gram(psi), forcing(psi, y), 1e-12);
  CHECK(c.C(0, 0) == doctest::Approx(1.5));
  CHECK(c.C(1, 0) == doctest::Approx(1.5));
  CHECK(c.n_truncated == 1);
  CHECK(std::isinf(c.cond));
  CHECK(c.residual_rms[0] < 1e-12);
}

TEST_CASE("rank-zero gram is an error") {
  GramMatrix G{Eigen::MatrixXd::Zero(3, 3), 5};
  ForcingVector F;
  F.F = Eigen::VectorXd::Ones(3);
  F.n_samples = 5;
  CHECK_THROWS_AS(solve_normal(G, F, 1e-12), NumericalError);
}

TEST_CASE("residual rms matches the hand-computed line-fit-to-parabola value") {
  // Fit {1, x} to f(x) = x² on {-1, 0, 1}: c = (2/3, 0), residuals
  // (1/3, -2/3, 1/3), RMS = sqrt(2)/3.
  BasisSet b(BasisFamily::Monomial, 1, 1);
  std::vector<Eigen::VectorXd> xs;
  for (double v : {-1.0, 0.0, 1.0}) {
    Eigen::VectorXd x(1);
    x << v;
    xs.push_back(x);
  }
  Eigen::MatrixXd psi = b.design_matrix(xs);
  Eigen::MatrixXd y(3, 1);
  y << 1.0, 0.0, 1.0;
  Coefficients c = solve_normal(gram(psi), forcing(psi, y), 1e-12);
  CHECK(c.C(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(c.C(1, 0) == doctest::Approx(0.0));
  CHECK(c.residual_rms[0] == doctest::Approx(std::sqrt(2.0) / 3.0));
}

TEST_CASE("condition number basics and the singular sentinel") {
  CHECK(condition_number(Eigen::MatrixXd::Identity(3, 3)) == 1.0);
  Eigen::MatrixXd D = Eigen::Vector2d(1.0, 100.0).asDiagonal();
  CHECK(condition_number(D) == doctest::Approx(100.0));
  Eigen::MatrixXd S(2, 2);
  S << 1.0, 1.0, 1.0, 1.0;
  CHECK(std::isinf(condition_number(S)));
}

TEST_CASE("empirical monomial conditioning tracks the analytic moment gram") {
  const long long R = 200000;
  const int N = 3;
  BasisSet b(BasisFamily::Monomial, N, 1);
  Rng rng(4242);
  GramMatrix G = gram(normal_design(b, R, rng));

  // Moment matrix from E[x^k] = (k-1)!! for even k: features 1, x, x², x³.
  Eigen::MatrixXd M(4, 4);
  M << 1, 0, 1, 0,
       0, 1, 0, 3,
       1, 0, 3, 0,
       0, 3, 0, 15;
  const double emp = condition_number(G.G);
  const double ana = condition_number(M);
  CHECK(emp < 3.0 * ana);
  CHECK(emp > ana / 3.0);
}

TEST_CASE("tail bound evaluates the printed closed form") {
  CHECK(tail_bound(1.0, 1.0, 1.0) ==
        doctest::Approx(std::exp(-1.0) / std::sqrt(2.0 * M_PI)).epsilon(1e-12));
  CHECK(tail_bound(1.0, 1.0, 1.0) == doctest::Approx(0.1468).epsilon(1e-3));
  CHECK(tail_bound(1000.0, 1.0, 1.0) < 1e-300);

  // Monotone decreasing in R and in ε.
  double prev = tail_bound(0.5, 2.0, 1.0);
  for (double R : {2.0, 4.0, 8.0, 100.0}) {
    const double v = tail_bound(0.5, 2.0, R);
    CHECK(v < prev);
    prev = v;
  }
  CHECK(tail_bound(2.0, 1.0, 10.0) < tail_bound(1.0, 1.0, 10.0));

  CHECK(tail_bound(1.0, 0.0, 5.0) == 0.0);
  CHECK_THROWS_AS(tail_bound(0.0, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(tail_bound(1.0, -1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(tail_bound(1.0, 1.0, 0.0), ConfigError);
}

TEST_CASE("forcing rejects mismatched target length") {
  Eigen::MatrixXd psi(3, 2);
  psi.setOnes();
  CHECK_THROWS_AS(forcing(psi, Eigen::MatrixXd::Zero(4, 1)), ConfigError);
}

}  // TEST_SUITE
