#include "optlab/basis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "optlab/errors.hpp"

namespace optlab {

namespace {

// All exponent tuples of total degree exactly `degree`, lexicographically
// descending (earlier coordinates most significant).
void enumerate_degree(int degree, int dim, std::vector<int>& prefix,
                      std::vector<std::vector<int>>& out) {
  if (dim == 1) {
    prefix.push_back(degree);
    out.push_back(prefix);
    prefix.pop_back();
    return;
  }
  for (int e = degree; e >= 0; --e) {
    prefix.push_back(e);
    enumerate_degree(degree - e, dim - 1, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

std::string family_name(BasisFamily family) {
  switch (family) {
    case BasisFamily::Monomial: return "monomial";
    case BasisFamily::Hermite: return "hermite";
    case BasisFamily::Legendre: return "legendre";
    case BasisFamily::PolyTrig: return "poly_trig";
  }
  return "?";
}

BasisSet::BasisSet(BasisFamily family, int order, int input_dim,
                   std::vector<int> angle_coords)
    : family_(family), order_(order), input_dim_(input_dim),
      angle_coords_(std::move(angle_coords)) {
  if (order < 0) throw ConfigError("basis: order must be >= 0");
  if (input_dim < 1) throw ConfigError("basis: input_dim must be >= 1");
  if (family != BasisFamily::PolyTrig && !angle_coords_.empty())
    throw ConfigError("basis: angle coordinates only apply to poly_trig");
  for (int a : angle_coords_)
    if (a < 0 || a >= input_dim)
      throw ConfigError("basis: angle coordinate " + std::to_string(a) +
                        " out of range");

  for (int degree = 0; degree <= order; ++degree) {
    std::vector<std::vector<int>> tuples;
    std::vector<int> prefix;
    enumerate_degree(degree, input_dim, prefix, tuples);
    for (auto& t : tuples) {
      Feature f;
      f.kind = Feature::Kind::Poly;
      f.powers = std::move(t);
      features_.push_back(std::move(f));
    }
  }
  for (int a : angle_coords_) {
    Feature s;
    s.kind = Feature::Kind::Sin;
    s.coord = a;
    features_.push_back(s);
    Feature c;
    c.kind = Feature::Kind::Cos;
    c.coord = a;
    features_.push_back(c);
  }
}

BasisSet BasisSet::parse(const std::string& spec, int input_dim) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.size() < 2 || parts.size() > 3)
    throw ConfigError("basis spec '" + spec + "': expected family:order[:angles=i,j]");

  BasisFamily family;
  if (parts[0] == "monomial") family = BasisFamily::Monomial;
  else if (parts[0] == "hermite") family = BasisFamily::Hermite;
  else if (parts[0] == "legendre") family = BasisFamily::Legendre;
  else if (parts[0] == "poly_trig") family = BasisFamily::PolyTrig;
  else throw ConfigError("basis spec '" + spec + "': unknown family '" + parts[0] + "'");

  int order = 0;
  try {
    std::size_t pos = 0;
    order = std::stoi(parts[1], &pos);
    if (pos != parts[1].size()) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw ConfigError("basis spec '" + spec + "': bad order '" + parts[1] + "'");
  }

  std::vector<int> angles;
  if (parts.size() == 3) {
    const std::string prefix = "angles=";
    if (parts[2].rfind(prefix, 0) != 0)
      throw ConfigError("basis spec '" + spec + "': expected angles=i,j");
    std::stringstream as(parts[2].substr(prefix.size()));
    std::string tok;
    while (std::getline(as, tok, ',')) {
      try {
        angles.push_back(std::stoi(tok));
      } catch (const std::exception&) {
        throw ConfigError("basis spec '" + spec + "': bad angle index '" + tok + "'");
      }
    }
  }
  return BasisSet(family, order, input_dim, std::move(angles));
}

std::string BasisSet::spec_string() const {
  std::ostringstream out;
  out << family_name(family_) << ":" << order_;
  if (!angle_coords_.empty()) {
    out << ":angles=";
    for (std::size_t i = 0; i < angle_coords_.size(); ++i) {
      if (i) out << ",";
      out << angle_coords_[i];
    }
  }
  return out.str();
}

void BasisSet::eval_1d(double x, std::vector<double>& v,
                       std::vector<double>& d) const {
  const int N = order_;
  v.assign(N + 1, 0.0);
  d.assign(N + 1, 0.0);
  v[0] = 1.0;
  d[0] = 0.0;
  if (N == 0) return;

  switch (family_) {
    case BasisFamily::Monomial:
    case BasisFamily::PolyTrig:
      for (int k = 1; k <= N; ++k) {
        v[k] = v[k - 1] * x;
        d[k] = k * v[k - 1];
      }
      break;
    case BasisFamily::Hermite:
      // Normalized probabilists' Hermite:
      //   ψ_k = (x ψ_{k-1} − sqrt(k−1) ψ_{k-2}) / sqrt(k),  ψ_k' = sqrt(k) ψ_{k-1}
      v[1] = x;
      d[1] = 1.0;
      for (int k = 2; k <= N; ++k) {
        v[k] = (x * v[k - 1] - std::sqrt(k - 1.0) * v[k - 2]) / std::sqrt(double(k));
        d[k] = std::sqrt(double(k)) * v[k - 1];
      }
      break;
    case BasisFamily::Legendre:
      // k P_k = (2k−1) x P_{k-1} − (k−1) P_{k-2};  P_k' = P_{k-2}' + (2k−1) P_{k-1}
      v[1] = x;
      d[1] = 1.0;
      for (int k = 2; k <= N; ++k) {
        v[k] = ((2.0 * k - 1.0) * x * v[k - 1] - (k - 1.0) * v[k - 2]) / k;
        d[k] = d[k - 2] + (2.0 * k - 1.0) * v[k - 1];
      }
      break;
  }
}

Eigen::VectorXd BasisSet::evaluate(const Eigen::VectorXd& z) const {
  if (z.size() != input_dim_)
    throw ConfigError("basis evaluate: input has dimension " +
                      std::to_string(z.size()) + ", expected " +
                      std::to_string(input_dim_));

  // 1-D tables per coordinate.
  std::vector<std::vector<double>> v(input_dim_), dv(input_dim_);
  for (int j = 0; j < input_dim_; ++j) eval_1d(z[j], v[j], dv[j]);

  Eigen::VectorXd out(size());
  for (int i = 0; i < size(); ++i) {
    const Feature& f = features_[i];
    switch (f.kind) {
      case Feature::Kind::Poly: {
        double p = 1.0;
        for (int j = 0; j < input_dim_; ++j) p *= v[j][f.powers[j]];
        out[i] = p;
        break;
      }
      case Feature::Kind::Sin: out[i] = std::sin(z[f.coord]); break;
      case Feature::Kind::Cos: out[i] = std::cos(z[f.coord]); break;
    }
  }
  return out;
}

Eigen::MatrixXd BasisSet::jacobian(const Eigen::VectorXd& z) const {
  if (z.size() != input_dim_)
    throw ConfigError("basis jacobian: input dimension mismatch");

  std::vector<std::vector<double>> v(input_dim_), dv(input_dim_);
  for (int j = 0; j < input_dim_; ++j) eval_1d(z[j], v[j], dv[j]);

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(size(), input_dim_);
  for (int i = 0; i < size(); ++i) {
    const Feature& f = features_[i];
    switch (f.kind) {
      case Feature::Kind::Poly:
        for (int j = 0; j < input_dim_; ++j) {
          if (f.powers[j] == 0) continue;
          double g = dv[j][f.powers[j]];
          for (int l = 0; l < input_dim_; ++l)
            if (l != j) g *= v[l][f.powers[l]];
          J(i, j) = g;
        }
        break;
      case Feature::Kind::Sin: J(i, f.coord) = std::cos(z[f.coord]); break;
      case Feature::Kind::Cos: J(i, f.coord) = -std::sin(z[f.coord]); break;
    }
  }
  return J;
}

Eigen::MatrixXd BasisSet::design_matrix(
    const std::vector<Eigen::VectorXd>& inputs) const {
  if (inputs.empty()) throw ConfigError("design_matrix: empty input set");
  Eigen::MatrixXd psi(inputs.size(), size());
  for (std::size_t r = 0; r < inputs.size(); ++r)
    psi.row(r) = evaluate(inputs[r]).transpose();
  return psi;
}

std::string BasisSet::feature_name(int i) const {
  const Feature& f = features_.at(i);
  if (f.kind == Feature::Kind::Sin) return "sin(z" + std::to_string(f.coord) + ")";
  if (f.kind == Feature::Kind::Cos) return "cos(z" + std::to_string(f.coord) + ")";
  std::string name;
  const char* sym = family_ == BasisFamily::Hermite   ? "He"
                    : family_ == BasisFamily::Legendre ? "P"
                                                       : "z";
  for (int j = 0; j < input_dim_; ++j) {
    if (f.powers[j] == 0) continue;
    if (!name.empty()) name += "*";
    if (family_ == BasisFamily::Monomial || family_ == BasisFamily::PolyTrig) {
      name += std::string(sym) + std::to_string(j);
      if (f.powers[j] > 1) name += "^" + std::to_string(f.powers[j]);
    } else {
      name += std::string(sym) + std::to_string(f.powers[j]) + "(z" +
              std::to_string(j) + ")";
    }
  }
  return name.empty() ? "1" : name;
}

}  // namespace optlab
