#include "optlab/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "optlab/errors.hpp"
#include "optlab/regress.hpp"
#include "optlab/rng.hpp"

namespace optlab {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;

int n_layers(const std::vector<int>& widths) {
  return static_cast<int>(widths.size()) - 1;
}

// Flat offset of layer l's weight block; biases follow the weights.
long long layer_offset(const std::vector<int>& widths, int l) {
  long long off = 0;
  for (int i = 0; i < l; ++i)
    off += (long long)widths[i + 1] * (widths[i] + 1);
  return off;
}

Eigen::Map<const RowMat> weight(const std::vector<int>& widths,
                                const Eigen::VectorXd& theta, int l) {
  return {theta.data() + layer_offset(widths, l), widths[l + 1], widths[l]};
}

Eigen::Map<const Eigen::VectorXd> bias(const std::vector<int>& widths,
                                       const Eigen::VectorXd& theta, int l) {
  return {theta.data() + layer_offset(widths, l) +
              (long long)widths[l + 1] * widths[l],
          widths[l + 1]};
}

Eigen::Map<RowMat> weight_mut(const std::vector<int>& widths,
                              Eigen::VectorXd& theta, int l) {
  return {theta.data() + layer_offset(widths, l), widths[l + 1], widths[l]};
}

Eigen::Map<Eigen::VectorXd> bias_mut(const std::vector<int>& widths,
                                     Eigen::VectorXd& theta, int l) {
  return {theta.data() + layer_offset(widths, l) +
              (long long)widths[l + 1] * widths[l],
          widths[l + 1]};
}

// Post-activation values per layer; entry 0 is the input itself and the
// last entry is the (linear) network output.
std::vector<Eigen::MatrixXd> forward_batch(const MlpModel& m,
                                           const Eigen::MatrixXd& X) {
  const auto& w = m.widths();
  const int k = n_layers(w);
  std::vector<Eigen::MatrixXd> A(k + 1);
  A[0] = X;
  for (int l = 0; l < k; ++l) {
    Eigen::MatrixXd Z = A[l] * weight(w, m.theta(), l).transpose();
    Z.rowwise() += bias(w, m.theta(), l).transpose();
    if (l + 1 < k && m.activation() == Activation::Tanh)
      A[l + 1] = Z.array().tanh();
    else
      A[l + 1] = std::move(Z);
  }
  return A;
}

// Derivative of the activation expressed through its output value.
Eigen::ArrayXXd act_deriv(const MlpModel& m, const Eigen::MatrixXd& a) {
  if (m.activation() == Activation::Tanh) return 1.0 - a.array().square();
  return Eigen::ArrayXXd::Ones(a.rows(), a.cols());
}

void dataset_matrices(const Dataset& data, const std::vector<int>& widths,
                      Eigen::MatrixXd& X, Eigen::MatrixXd& Y) {
  if (data.samples.empty()) throw ConfigError("mlp: empty dataset");
  if (data.state_dim() + data.control_dim() != widths.front() ||
      data.state_dim() != widths.back())
    throw ConfigError("mlp: dataset dimensions do not match layer widths");
  X.resize(data.size(), widths.front());
  Y.resize(data.size(), widths.back());
  for (int i = 0; i < data.size(); ++i) {
    X.row(i).head(data.state_dim()) = data.samples[i].x;
    X.row(i).tail(data.control_dim()) = data.samples[i].u;
    Y.row(i) = data.samples[i].xn;
  }
}

}  // namespace

MlpModel::MlpModel(std::vector<int> widths, Activation act,
                   Eigen::VectorXd theta)
    : widths_(std::move(widths)), act_(act), theta_(std::move(theta)) {
  if (widths_.size() < 2) throw ConfigError("mlp needs at least one layer");
  for (int wdt : widths_)
    if (wdt < 1) throw ConfigError("mlp layer widths must be >= 1");
  if (widths_.front() < widths_.back())
    throw ConfigError("mlp input width must cover the predicted state");
  if (theta_.size() != mlp_param_count(widths_))
    throw ConfigError("mlp parameter vector length mismatch");
  if (!theta_.allFinite()) throw NumericalError("mlp parameters non-finite");
}

Eigen::VectorXd MlpModel::step(const Eigen::VectorXd& x,
                               const Eigen::VectorXd& u) const {
  if (x.size() != state_dim() || u.size() != control_dim())
    throw ConfigError("mlp step: dimension mismatch");
  Eigen::VectorXd z(x.size() + u.size());
  z << x, u;
  return mlp_forward(*this, z);
}

long long mlp_param_count(const std::vector<int>& widths) {
  if (widths.size() < 2) throw ConfigError("mlp needs at least one layer");
  long long n = 0;
  for (size_t i = 0; i + 1 < widths.size(); ++i)
    n += (long long)widths[i + 1] * (widths[i] + 1);
  return n;
}

MlpModel init_mlp(const std::vector<int>& widths, std::uint64_t seed,
                  Activation act) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(mlp_param_count(widths));
  MlpModel model(widths, act, std::move(theta));
  Rng rng(seed);
  for (int l = 0; l < n_layers(widths); ++l) {
    const double bound = 1.0 / std::sqrt((double)widths[l]);
    auto W = weight_mut(model.widths(), model.theta(), l);
    for (int r = 0; r < W.rows(); ++r)
      for (int c = 0; c < W.cols(); ++c) W(r, c) = rng.uniform(-bound, bound);
    // Biases start at zero.
  }
  return model;
}

Eigen::VectorXd mlp_forward(const MlpModel& model, const Eigen::VectorXd& z) {
  if (z.size() != model.widths().front())
    throw ConfigError("mlp forward: input dimension mismatch");
  if (!z.allFinite()) throw NumericalError("mlp forward: non-finite input");
  const auto& w = model.widths();
  const int k = n_layers(w);
  Eigen::VectorXd a = z;
  for (int l = 0; l < k; ++l) {
    Eigen::VectorXd v =
        weight(w, model.theta(), l) * a + bias(w, model.theta(), l);
    if (l + 1 < k && model.activation() == Activation::Tanh)
      a = v.array().tanh();
    else
      a = std::move(v);
  }
  return a;
}

Eigen::MatrixXd mlp_input_jacobian(const MlpModel& model,
                                   const Eigen::VectorXd& z) {
  if (z.size() != model.widths().front())
    throw ConfigError("mlp input jacobian: input dimension mismatch");
  if (!z.allFinite())
    throw NumericalError("mlp input jacobian: non-finite input");
  const auto& w = model.widths();
  const int k = n_layers(w);
  Eigen::VectorXd a = z;
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(w.front(), w.front());
  for (int l = 0; l < k; ++l) {
    Eigen::VectorXd v =
        weight(w, model.theta(), l) * a + bias(w, model.theta(), l);
    J = weight(w, model.theta(), l) * J;
    if (l + 1 < k && model.activation() == Activation::Tanh) {
      a = v.array().tanh();
      J = (1.0 - a.array().square()).matrix().asDiagonal() * J;
    } else {
      a = std::move(v);
    }
  }
  return J;
}

std::pair<double, Eigen::VectorXd> mlp_loss_grad(const MlpModel& model,
                                                 const Eigen::MatrixXd& X,
                                                 const Eigen::MatrixXd& Y) {
  if (X.rows() == 0) throw ConfigError("mlp: empty dataset");
  if (X.rows() != Y.rows()) throw ConfigError("mlp: input/target row mismatch");
  const auto& w = model.widths();
  const int k = n_layers(w);
  const double R = (double)X.rows();

  const std::vector<Eigen::MatrixXd> A = forward_batch(model, X);
  const Eigen::MatrixXd residual = A[k] - Y;
  const double J = residual.squaredNorm() / R;

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.n_params());
  Eigen::MatrixXd D = (2.0 / R) * residual;
  for (int l = k - 1; l >= 0; --l) {
    weight_mut(w, grad, l) = D.transpose() * A[l];
    bias_mut(w, grad, l) = D.colwise().sum().transpose();
    if (l > 0)
      D = (D * weight(w, model.theta(), l)).array() * act_deriv(model, A[l]);
  }
  return {J, std::move(grad)};
}

std::pair<double, Eigen::VectorXd> mlp_loss_grad(const MlpModel& model,
                                                 const Dataset& data) {
  Eigen::MatrixXd X, Y;
  dataset_matrices(data, model.widths(), X, Y);
  return mlp_loss_grad(model, X, Y);
}

double mlp_loss(const MlpModel& model, const Dataset& data) {
  Eigen::MatrixXd X, Y;
  dataset_matrices(data, model.widths(), X, Y);
  const std::vector<Eigen::MatrixXd> A = forward_batch(model, X);
  return (A.back() - Y).squaredNorm() / (double)X.rows();
}

std::pair<MlpModel, TrainReport> train_mlp(MlpModel model,
                                           const Dataset& train,
                                           const Dataset& test,
                                           const TrainHyper& hyper) {
  if (hyper.lr <= 0.0) throw ConfigError("mlp train: lr must be > 0");
  if (hyper.epochs < 1) throw ConfigError("mlp train: epochs must be >= 1");
  Eigen::MatrixXd X, Y, Xt, Yt;
  dataset_matrices(train, model.widths(), X, Y);
  dataset_matrices(test, model.widths(), Xt, Yt);
  const int R = (int)X.rows();
  if (hyper.batch_size < 0 || hyper.batch_size > R)
    throw ConfigError("mlp train: batch_size out of range");

  TrainReport report;
  report.lr = hyper.lr;
  report.batch_size = hyper.batch_size;
  report.seed = hyper.seed;
  report.train_loss.reserve(hyper.epochs);

  std::vector<int> order(R);
  for (int i = 0; i < R; ++i) order[i] = i;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    if (hyper.batch_size == 0) {
      const auto [J, grad] = mlp_loss_grad(model, X, Y);
      if (!std::isfinite(J))
        throw NumericalError("mlp training diverged at epoch " +
                             std::to_string(epoch));
      report.train_loss.push_back(J);
      model.theta() -= hyper.lr * grad;
    } else {
      const std::vector<Eigen::MatrixXd> A = forward_batch(model, X);
      const double J = (A.back() - Y).squaredNorm() / (double)R;
      if (!std::isfinite(J))
        throw NumericalError("mlp training diverged at epoch " +
                             std::to_string(epoch));
      report.train_loss.push_back(J);

      Rng shuffle = Rng(hyper.seed).substream(epoch);
      for (int i = R - 1; i > 0; --i)
        std::swap(order[i], order[(int)shuffle.uniform_int((std::uint64_t)i + 1)]);
      for (int start = 0; start < R; start += hyper.batch_size) {
        const int n = std::min(hyper.batch_size, R - start);
        Eigen::MatrixXd Xb(n, X.cols()), Yb(n, Y.cols());
        for (int i = 0; i < n; ++i) {
          Xb.row(i) = X.row(order[start + i]);
          Yb.row(i) = Y.row(order[start + i]);
        }
        const auto [Jb, grad] = mlp_loss_grad(model, Xb, Yb);
        (void)Jb;
        model.theta() -= hyper.lr * grad;
      }
    }
  }
  report.epochs = hyper.epochs;
  {
    const std::vector<Eigen::MatrixXd> A = forward_batch(model, X);
    report.final_train_loss = (A.back() - Y).squaredNorm() / (double)R;
    const std::vector<Eigen::MatrixXd> At = forward_batch(model, Xt);
    report.final_test_loss =
        (At.back() - Yt).squaredNorm() / (double)Xt.rows();
  }
  if (!std::isfinite(report.final_train_loss) ||
      !std::isfinite(report.final_test_loss))
    throw NumericalError("mlp training diverged at epoch " +
                         std::to_string(hyper.epochs));
  return {std::move(model), std::move(report)};
}

namespace {

// ∂h_coord(z)/∂θ for one input, given cached activations.  Writes the full
// row; `row` must be zero on entry.
void jacobian_row(const MlpModel& m, const std::vector<Eigen::MatrixXd>& A,
                  int sample, int coord, Eigen::VectorXd& row) {
  const auto& w = m.widths();
  const int k = n_layers(w);
  Eigen::VectorXd d = Eigen::VectorXd::Unit(w[k], coord);
  for (int l = k - 1; l >= 0; --l) {
    const Eigen::VectorXd a = A[l].row(sample).transpose();
    weight_mut(w, row, l) = d * a.transpose();
    bias_mut(w, row, l) = d;
    if (l > 0) {
      d = weight(w, m.theta(), l).transpose() * d;
      if (m.activation() == Activation::Tanh) {
        const Eigen::ArrayXd av = A[l].row(sample).transpose().array();
        d.array() *= 1.0 - av.square();
      }
    }
  }
}

}  // namespace

Eigen::MatrixXd param_jacobian(const MlpModel& model,
                               const std::vector<Eigen::VectorXd>& inputs,
                               int output_coord) {
  if (inputs.empty()) throw ConfigError("param_jacobian: no inputs");
  if (output_coord < 0 || output_coord >= model.widths().back())
    throw ConfigError("param_jacobian: output coordinate out of range");
  Eigen::MatrixXd X(inputs.size(), model.widths().front());
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != model.widths().front())
      throw ConfigError("param_jacobian: input dimension mismatch");
    X.row(i) = inputs[i];
  }
  const std::vector<Eigen::MatrixXd> A = forward_batch(model, X);
  Eigen::MatrixXd H(inputs.size(), model.n_params());
  Eigen::VectorXd row = Eigen::VectorXd::Zero(model.n_params());
  for (int i = 0; i < (int)inputs.size(); ++i) {
    row.setZero();
    jacobian_row(model, A, i, output_coord, row);
    H.row(i) = row;
  }
  return H;
}

std::vector<int> last_layer_subset(const MlpModel& model) {
  const auto& w = model.widths();
  const int k = n_layers(w);
  const long long off = layer_offset(w, k - 1);
  const long long count = (long long)w[k] * (w[k - 1] + 1);
  std::vector<int> subset(count);
  for (long long i = 0; i < count; ++i) subset[i] = (int)(off + i);
  return subset;
}

GaussNewtonDiag gauss_newton_diag(const MlpModel& model, const Dataset& data,
                                  std::vector<int> subset, int epoch_tag) {
  if (subset.empty()) subset = last_layer_subset(model);
  if (subset.size() > 512)
    throw ConfigError("gauss_newton_diag: subset larger than 512 parameters");
  for (size_t i = 0; i < subset.size(); ++i) {
    if (subset[i] < 0 || subset[i] >= model.n_params())
      throw ConfigError("gauss_newton_diag: subset index out of range");
    if (i > 0 && subset[i] <= subset[i - 1])
      throw ConfigError("gauss_newton_diag: subset must be ascending");
  }

  Eigen::MatrixXd X, Y;
  dataset_matrices(data, model.widths(), X, Y);
  const std::vector<Eigen::MatrixXd> A = forward_batch(model, X);
  const Eigen::MatrixXd residual = Y - A.back();  // Δ = target − prediction

  const int k = (int)subset.size();
  GaussNewtonDiag out;
  out.subset = subset;
  out.epoch_tag = epoch_tag;
  out.gram = Eigen::MatrixXd::Zero(k, k);
  out.forcing = Eigen::VectorXd::Zero(k);

  Eigen::VectorXd row = Eigen::VectorXd::Zero(model.n_params());
  Eigen::VectorXd sub(k);
  for (int i = 0; i < (int)X.rows(); ++i) {
    for (int c = 0; c < model.widths().back(); ++c) {
      row.setZero();
      jacobian_row(model, A, i, c, row);
      for (int j = 0; j < k; ++j) sub[j] = row[subset[j]];
      out.gram.selfadjointView<Eigen::Lower>().rankUpdate(sub, 1.0);
      out.forcing += sub * residual(i, c);
    }
  }
  const double R = (double)X.rows();
  const Eigen::MatrixXd full = out.gram.selfadjointView<Eigen::Lower>();
  out.gram = full / R;
  out.forcing /= R;
  out.cond = condition_number(out.gram);
  return out;
}

std::string MlpModel::to_json_string() const {
  nlohmann::json j;
  j["widths"] = widths_;
  j["activation"] = act_ == Activation::Tanh ? "tanh" : "identity";
  j["theta"] = std::vector<double>(theta_.begin(), theta_.end());
  return j.dump(2);
}

MlpModel MlpModel::from_json_string(const std::string& text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    const auto widths = j.at("widths").get<std::vector<int>>();
    const std::string act_name = j.at("activation").get<std::string>();
    Activation act;
    if (act_name == "tanh")
      act = Activation::Tanh;
    else if (act_name == "identity")
      act = Activation::Identity;
    else
      throw ConfigError("mlp model parse: unknown activation " + act_name);
    const auto theta = j.at("theta").get<std::vector<double>>();
    return MlpModel(
        widths, act,
        Eigen::Map<const Eigen::VectorXd>(theta.data(), theta.size()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mlp model parse: ") + e.what());
  }
}

}  // namespace optlab
