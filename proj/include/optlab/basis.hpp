#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace optlab {

enum class BasisFamily { Monomial, Hermite, Legendre, PolyTrig };

// One scalar feature of the input vector.  Poly features are products of
// 1-D family polynomials, one per coordinate, with the given exponents;
// Sin/Cos features act on a single (angle) coordinate.
struct Feature {
  enum class Kind { Poly, Sin, Cos };
  Kind kind = Kind::Poly;
  std::vector<int> powers;
  int coord = -1;
};

// Dictionary {ψ_1..ψ_n} over a d-dimensional input, truncated at total
// degree `order` and enumerated in graded lexicographic order (degree blocks
// ascending, exponent tuples lexicographically descending within a block),
// so feature 0 is always the constant 1.  The poly_trig family appends
// sin/cos of each configured angle coordinate after the monomials.
//
// Conventions: Hermite is probabilists' He_k normalized by 1/sqrt(k!)
// (orthonormal under N(0,1)); Legendre is the classical unnormalized P_k
// (so ∫_{-1}^{1} P_k² = 2/(2k+1)).
class BasisSet {
 public:
  BasisSet(BasisFamily family, int order, int input_dim,
           std::vector<int> angle_coords = {});

  // Spec string `family:order[:angles=i,j]`, e.g. "poly_trig:3:angles=0".
  static BasisSet parse(const std::string& spec, int input_dim);
  std::string spec_string() const;

  BasisFamily family() const { return family_; }
  int order() const { return order_; }
  int input_dim() const { return input_dim_; }
  int size() const { return static_cast<int>(features_.size()); }
  const std::vector<Feature>& features() const { return features_; }
  const std::vector<int>& angle_coords() const { return angle_coords_; }

  // Feature values at z, in enumeration order.
  Eigen::VectorXd evaluate(const Eigen::VectorXd& z) const;

  // size() × input_dim matrix of feature gradients.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const;

  // R × n matrix with row k = evaluate(inputs[k]).  Throws on an empty
  // input set.
  Eigen::MatrixXd design_matrix(const std::vector<Eigen::VectorXd>& inputs) const;

  // Human-readable name of feature i, for coefficient tables.
  std::string feature_name(int i) const;

 private:
  // 1-D values v[k] and derivatives d[k] of the family polynomial for
  // k = 0..order at scalar input x.
  void eval_1d(double x, std::vector<double>& v, std::vector<double>& d) const;

  BasisFamily family_;
  int order_;
  int input_dim_;
  std::vector<int> angle_coords_;
  std::vector<Feature> features_;
};

std::string family_name(BasisFamily family);

}  // namespace optlab
