#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "backstep/grid.hpp"

namespace backstep {

enum class Activation { tanh, relu };
enum class OptimizerKind { sgd, adam };

// Fully connected network; hidden layers use the activation, output is linear.
struct Mlp {
  std::vector<Eigen::MatrixXd> W;  // W[l] maps layer l input to output (rows x cols = out x in)
  std::vector<Eigen::VectorXd> b;
  Activation activation = Activation::tanh;

  std::size_t n_layers() const { return W.size(); }
  std::size_t param_count() const;
};

// Adam first/second moments mirroring an Mlp pair; persisted for exact resume.
struct AdamState {
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  std::int64_t t = 0;
};

// Operator lambda -> k realized as prediction(x,y) = y * sum_k branch_k(lambda_m) trunk_k(x,y).
// The structural factor y pins prediction(x, 0) = 0 for any parameters. The
// branch reads lambda at m equispaced sensors, scaled by 1/input_scale.
struct DeepOperatorModel {
  std::size_t m = 101;
  std::size_t p = 64;
  Mlp branch;
  Mlp trunk;
  double input_scale = 1.0;
  std::uint64_t seed = 0;
  int trained_epochs = 0;
  std::optional<AdamState> branch_opt;  // present while/after Adam training
  std::optional<AdamState> trunk_opt;

  std::size_t param_count() const { return branch.param_count() + trunk.param_count(); }
};

// Glorot-uniform initialization, deterministic in seed.
DeepOperatorModel make_model(std::size_t m, const std::vector<std::size_t>& branch_hidden,
                             const std::vector<std::size_t>& trunk_hidden, std::size_t p,
                             Activation activation, double input_scale, std::uint64_t seed);

struct TrainingConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  int epochs = 2000;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double split = 0.9;  // used only when the set carries no split
};

// In-memory training data: per-sample lambda on the grid and the matching
// kernel triangle (row-major). Index lists select the train/test split.
struct TrainingSet {
  UniformGrid1D grid{3};
  std::vector<std::vector<double>> lambdas;
  std::vector<std::vector<double>> kernels;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;

  std::size_t size() const { return lambdas.size(); }
};

struct TrainResult {
  // Entry 0 is the untrained model; entry e is after epoch e.
  std::vector<double> train_rel_l2;
  std::vector<double> test_rel_l2;
  std::vector<double> train_mse;
};

struct OperatorErrorReport {
  double kernel_sup_err = 0.0;     // eps0 = sup |k - k_hat|
  double diag_deriv_err = 0.0;     // eps1 = sup |2 d/dx (k - k_hat)(x,x)|
  double pde_functional_err = 0.0; // eps2 = sup |(dxx - dyy)(k - k_hat) - lambda(y)(k - k_hat)|
  double epsilon = 0.0;            // eps0 + eps1 + eps2
  double rel_l2 = 0.0;             // ||k - k_hat|| / ||k|| over triangle nodes
};

// y * sum_k b_k t_k at each query point; points must lie in the triangle.
std::vector<double> evaluate(const DeepOperatorModel& model, const ReactionProfile& lambda,
                             const std::vector<std::pair<double, double>>& points);

// Evaluate on every triangle node of an n-point grid.
KernelField predict_kernel(const DeepOperatorModel& model, const ReactionProfile& lambda,
                           std::size_t n_points);

// Minibatch gradient descent on the MSE over triangle nodes; gradients are
// computed by explicit backpropagation. Deterministic in config.seed; resumes
// from model.trained_epochs when the model was trained before.
TrainResult train(DeepOperatorModel& model, const TrainingSet& data, const TrainingConfig& config);

// Worst relative discrepancy between backprop gradients and central finite
// differences (step 1e-6) of the same loss. Intended for small models.
double gradient_check(const DeepOperatorModel& model, const ReactionProfile& lambda,
                      std::uint64_t seed);

OperatorErrorReport operator_error(const DeepOperatorModel& model, const ReactionProfile& lambda,
                                   const KernelField& exact_k);

// Persistence: <dir>/model.json (architecture, seed, normalization, checksum)
// plus <dir>/model.bin (little-endian float64 parameters) and, when optimizer
// state exists, <dir>/optim.bin. Loading reproduces inference bit-exactly.
void save_model(const DeepOperatorModel& model, const std::string& dir);
DeepOperatorModel load_model(const std::string& dir);

// splitmix64 mix of a seed and a stream tag; used everywhere a named
// deterministic substream is needed.
std::uint64_t substream(std::uint64_t seed, std::uint64_t tag);

}  // namespace backstep
