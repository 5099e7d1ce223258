#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "optlab/dynamics.hpp"
#include "optlab/sampling.hpp"

namespace optlab {

enum class Activation { Tanh, Identity };

// Fully connected network h(z, θ) with the given layer widths, hidden
// activations, and a linear output layer.  Parameters are flattened
// layer-major: for each layer, W (output × input, row-major) then b.  When
// used as a DynamicsModel the input splits as [state; control] with
// state_dim = widths.back().
class MlpModel final : public DynamicsModel {
 public:
  MlpModel(std::vector<int> widths, Activation act, Eigen::VectorXd theta);

  int state_dim() const override { return widths_.back(); }
  int control_dim() const override { return widths_.front() - widths_.back(); }
  Eigen::VectorXd step(const Eigen::VectorXd& x,
                       const Eigen::VectorXd& u) const override;

  const std::vector<int>& widths() const { return widths_; }
  Activation activation() const { return act_; }
  const Eigen::VectorXd& theta() const { return theta_; }
  Eigen::VectorXd& theta() { return theta_; }
  long long n_params() const { return theta_.size(); }

  std::string to_json_string() const;
  static MlpModel from_json_string(const std::string& text);

 private:
  std::vector<int> widths_;
  Activation act_;
  Eigen::VectorXd theta_;
};

long long mlp_param_count(const std::vector<int>& widths);

// Weights uniform on ±1/sqrt(fan_in), biases zero, drawn from Rng(seed).
MlpModel init_mlp(const std::vector<int>& widths, std::uint64_t seed,
                  Activation act = Activation::Tanh);

// Network evaluation on a raw input vector (no state/control split).
Eigen::VectorXd mlp_forward(const MlpModel& model, const Eigen::VectorXd& z);

// Jacobian of the network output with respect to its input, n_out × n_in.
Eigen::MatrixXd mlp_input_jacobian(const MlpModel& model,
                                   const Eigen::VectorXd& z);

// Mean squared residual J = (1/R) Σ_i |y_i − h(z_i)|² and its exact
// parameter gradient.  Rows of X are inputs, rows of Y are targets.
std::pair<double, Eigen::VectorXd> mlp_loss_grad(const MlpModel& model,
                                                 const Eigen::MatrixXd& X,
                                                 const Eigen::MatrixXd& Y);
std::pair<double, Eigen::VectorXd> mlp_loss_grad(const MlpModel& model,
                                                 const Dataset& data);
double mlp_loss(const MlpModel& model, const Dataset& data);

struct TrainHyper {
  double lr = 1e-2;
  int epochs = 1000;
  int batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
};

struct TrainReport {
  std::vector<double> train_loss;  // J at the start of each epoch
  double final_train_loss = 0.0;
  double final_test_loss = 0.0;
  int epochs = 0;
  double lr = 0.0;
  int batch_size = 0;
  std::uint64_t seed = 0;
};

// Gradient descent on the training loss.  Full batch is deterministic with
// no randomness; mini-batch mode shuffles per epoch from hyper.seed.
// Throws NumericalError naming the epoch if the loss goes non-finite.
std::pair<MlpModel, TrainReport> train_mlp(MlpModel model,
                                           const Dataset& train,
                                           const Dataset& test,
                                           const TrainHyper& hyper);

// Rows are ∂h_coord(z_i)/∂θ for each input, by reverse-mode accumulation.
Eigen::MatrixXd param_jacobian(const MlpModel& model,
                               const std::vector<Eigen::VectorXd>& inputs,
                               int output_coord);

struct GaussNewtonDiag {
  Eigen::MatrixXd gram;      // (1/R) H'H on the parameter subset
  Eigen::VectorXd forcing;   // (1/R) H'Δ with Δ = target − prediction
  std::vector<int> subset;   // parameter coordinates, ascending
  int epoch_tag = -1;
  double cond = 0.0;
};

// Flat indices of the output layer's weights and biases.
std::vector<int> last_layer_subset(const MlpModel& model);

// Normal-equation blocks of the least-squares step linearized at the
// current parameters, restricted to ≤ 512 coordinates.  H stacks one row
// per (sample, output coordinate).
GaussNewtonDiag gauss_newton_diag(const MlpModel& model, const Dataset& data,
                                  std::vector<int> subset = {},
                                  int epoch_tag = -1);

}  // namespace optlab
