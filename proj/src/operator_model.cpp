#include "backstep/operator_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "backstep/errors.hpp"
#include "backstep/sha256.hpp"

namespace backstep {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void apply_activation(MatrixXd& z, Activation act) {
  if (act == Activation::tanh) {
    // tanh via the vectorized exp kernel; saturates cleanly at +-1.
    z.array() = 1.0 - 2.0 * ((2.0 * z.array()).exp() + 1.0).inverse();
  } else {
    z = z.cwiseMax(0.0);
  }
}

// Derivative through the stored activation values.
MatrixXd activation_grad(const MatrixXd& a, Activation act) {
  if (act == Activation::tanh) return (1.0 - a.array().square()).matrix();
  return (a.array() > 0.0).cast<double>().matrix();
}

struct MlpCache {
  std::vector<MatrixXd> a;  // a[0] = input, a[l+1] = output of layer l
};

const MatrixXd& mlp_forward(const Mlp& net, const MatrixXd& x, MlpCache& cache) {
  cache.a.assign(1, x);
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    MatrixXd z = net.W[l] * cache.a[l];
    z.colwise() += net.b[l];
    if (l + 1 < net.n_layers()) apply_activation(z, net.activation);
    cache.a.push_back(std::move(z));
  }
  return cache.a.back();
}

struct MlpGrads {
  std::vector<MatrixXd> dW;
  std::vector<VectorXd> db;
};

// Backpropagate d(loss)/d(output) through the cached forward pass. Every
// gradient entry is overwritten, so the workspace needs no zeroing.
void mlp_backward(const Mlp& net, const MlpCache& cache, MatrixXd dout, MlpGrads& grads) {
  grads.dW.resize(net.n_layers());
  grads.db.resize(net.n_layers());
  for (std::size_t l = net.n_layers(); l-- > 0;) {
    if (l + 1 < net.n_layers()) dout = dout.cwiseProduct(activation_grad(cache.a[l + 1], net.activation));
    grads.dW[l] = dout * cache.a[l].transpose();
    grads.db[l] = dout.rowwise().sum();
    if (l > 0) dout = (net.W[l].transpose() * dout).eval();
  }
}

// Trunk inputs (2 x P) and the structural y factor for the triangle nodes of
// an n-point grid, ordered like KernelField storage.
void triangle_points(std::size_t n, MatrixXd& xt, VectorXd& y) {
  UniformGrid1D grid(n);
  std::size_t np = n * (n + 1) / 2;
  xt.resize(2, np);
  y.resize(np);
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j, ++c) {
      xt(0, c) = grid.node(i);
      xt(1, c) = grid.node(j);
      y(c) = grid.node(j);
    }
  }
}

// prediction matrix (P x B) = (trunk^T branch) row-scaled by y.
MatrixXd head_forward(const MatrixXd& branch_out, const MatrixXd& trunk_out, const VectorXd& y) {
  MatrixXd pred = trunk_out.transpose() * branch_out;
  pred.array().colwise() *= y.array();
  return pred;
}

struct LossWorkspace {
  MlpCache branch_cache, trunk_cache;
  MlpGrads branch_grads, trunk_grads;
};

// MSE over all entries of (pred - targets) plus its parameter gradients.
double loss_and_grads(const DeepOperatorModel& model, const MatrixXd& xb, const MatrixXd& xt,
                      const VectorXd& y, const MatrixXd& targets, LossWorkspace& ws) {
  const MatrixXd& bo = mlp_forward(model.branch, xb, ws.branch_cache);
  const MatrixXd& to = mlp_forward(model.trunk, xt, ws.trunk_cache);
  MatrixXd pred = head_forward(bo, to, y);
  MatrixXd diff = pred - targets;
  double loss = diff.squaredNorm() / static_cast<double>(diff.size());

  MatrixXd dpred = diff * (2.0 / static_cast<double>(diff.size()));
  dpred.array().colwise() *= y.array();
  mlp_backward(model.branch, ws.branch_cache, to * dpred, ws.branch_grads);
  mlp_backward(model.trunk, ws.trunk_cache, bo * dpred.transpose(), ws.trunk_grads);
  return loss;
}

MatrixXd predict_matrix(const DeepOperatorModel& model, const MatrixXd& xb, const MatrixXd& xt,
                        const VectorXd& y) {
  MlpCache bc, tc;
  const MatrixXd& bo = mlp_forward(model.branch, xb, bc);
  const MatrixXd& to = mlp_forward(model.trunk, xt, tc);
  return head_forward(bo, to, y);
}

// Branch inputs (m x B): lambda at the sensor locations, scaled.
MatrixXd branch_inputs(const DeepOperatorModel& model, const UniformGrid1D& grid,
                       const std::vector<std::vector<double>>& lambdas,
                       const std::vector<std::size_t>& idx) {
  MatrixXd xb(model.m, idx.size());
  UniformGrid1D sensors(model.m);
  for (std::size_t c = 0; c < idx.size(); ++c) {
    const std::vector<double>& lam = lambdas[idx[c]];
    for (std::size_t s = 0; s < model.m; ++s) {
      double v = (grid.n == model.m) ? lam[s] : linear_interpolate(grid, lam, sensors.node(s));
      xb(s, c) = v / model.input_scale;
    }
  }
  return xb;
}

MatrixXd target_matrix(const std::vector<std::vector<double>>& kernels,
                       const std::vector<std::size_t>& idx) {
  MatrixXd t(kernels[idx[0]].size(), idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) {
    const auto& k = kernels[idx[c]];
    for (std::size_t r = 0; r < k.size(); ++r) t(r, c) = k[r];
  }
  return t;
}

// Mean over samples of ||pred_s - target_s|| / ||target_s||.
double mean_rel_l2(const MatrixXd& pred, const MatrixXd& targets) {
  double acc = 0.0;
  for (Eigen::Index c = 0; c < pred.cols(); ++c) {
    acc += (pred.col(c) - targets.col(c)).norm() / targets.col(c).norm();
  }
  return acc / static_cast<double>(pred.cols());
}

void adam_update(Mlp& net, const MlpGrads& grads, AdamState& st, double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  st.t += 1;
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    st.mW[l] = beta1 * st.mW[l] + (1.0 - beta1) * grads.dW[l];
    st.vW[l].array() = beta2 * st.vW[l].array() + (1.0 - beta2) * grads.dW[l].array().square();
    net.W[l].array() -= lr * (st.mW[l].array() / c1) / ((st.vW[l].array() / c2).sqrt() + eps);
    st.mb[l] = beta1 * st.mb[l] + (1.0 - beta1) * grads.db[l];
    st.vb[l].array() = beta2 * st.vb[l].array() + (1.0 - beta2) * grads.db[l].array().square();
    net.b[l].array() -= lr * (st.mb[l].array() / c1) / ((st.vb[l].array() / c2).sqrt() + eps);
  }
}

void sgd_update(Mlp& net, const MlpGrads& grads, double lr) {
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    net.W[l] -= lr * grads.dW[l];
    net.b[l] -= lr * grads.db[l];
  }
}

AdamState make_adam_state(const Mlp& net) {
  AdamState st;
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    st.mW.emplace_back(MatrixXd::Zero(net.W[l].rows(), net.W[l].cols()));
    st.vW.emplace_back(MatrixXd::Zero(net.W[l].rows(), net.W[l].cols()));
    st.mb.emplace_back(VectorXd::Zero(net.b[l].size()));
    st.vb.emplace_back(VectorXd::Zero(net.b[l].size()));
  }
  return st;
}

Mlp make_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
             Activation act, std::uint64_t seed) {
  Mlp net;
  net.activation = act;
  std::vector<std::size_t> widths;
  widths.push_back(in);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(out);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    std::size_t fi = widths[l], fo = widths[l + 1];
    double s = std::sqrt(6.0 / static_cast<double>(fi + fo));
    std::mt19937_64 rng(substream(seed, l));
    std::uniform_real_distribution<double> dist(-s, s);
    MatrixXd w(fo, fi);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
    }
    net.W.push_back(std::move(w));
    net.b.emplace_back(VectorXd::Zero(fo));
  }
  return net;
}

std::vector<double> flatten_params(const Mlp& net) {
  std::vector<double> out;
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    for (Eigen::Index r = 0; r < net.W[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < net.W[l].cols(); ++c) out.push_back(net.W[l](r, c));
    }
    for (Eigen::Index r = 0; r < net.b[l].size(); ++r) out.push_back(net.b[l](r));
  }
  return out;
}

}  // namespace

std::uint64_t substream(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::size_t Mlp::param_count() const {
  std::size_t c = 0;
  for (std::size_t l = 0; l < n_layers(); ++l) {
    c += static_cast<std::size_t>(W[l].size()) + static_cast<std::size_t>(b[l].size());
  }
  return c;
}

DeepOperatorModel make_model(std::size_t m, const std::vector<std::size_t>& branch_hidden,
                             const std::vector<std::size_t>& trunk_hidden, std::size_t p,
                             Activation activation, double input_scale, std::uint64_t seed) {
  // The sensor readout spans [0,1] with a uniform grid, which needs 3 nodes.
  if (m < 3 || p < 1) throw InvalidInputError("model needs m >= 3 sensors and p >= 1 basis terms");
  if (input_scale <= 0.0) throw InvalidInputError("input_scale must be positive");
  DeepOperatorModel model;
  model.m = m;
  model.p = p;
  model.input_scale = input_scale;
  model.seed = seed;
  model.branch = make_mlp(m, branch_hidden, p, activation, substream(seed, 0x42));
  model.trunk = make_mlp(2, trunk_hidden, p, activation, substream(seed, 0x43));
  return model;
}

std::vector<double> evaluate(const DeepOperatorModel& model, const ReactionProfile& lambda,
                             const std::vector<std::pair<double, double>>& points) {
  MatrixXd xt(2, points.size());
  VectorXd y(points.size());
  for (std::size_t c = 0; c < points.size(); ++c) {
    auto [px, py] = points[c];
    if (py < 0.0 || py > px || px > 1.0) throw DomainError("evaluation point outside the triangle");
    xt(0, c) = px;
    xt(1, c) = py;
    y(c) = py;
  }
  MatrixXd xb = branch_inputs(model, lambda.grid, {lambda.values}, {0});
  MatrixXd pred = predict_matrix(model, xb, xt, y);
  return {pred.data(), pred.data() + pred.size()};
}

KernelField predict_kernel(const DeepOperatorModel& model, const ReactionProfile& lambda,
                           std::size_t n_points) {
  MatrixXd xt;
  VectorXd y;
  triangle_points(n_points, xt, y);
  MatrixXd xb = branch_inputs(model, lambda.grid, {lambda.values}, {0});
  MatrixXd pred = predict_matrix(model, xb, xt, y);
  KernelField k{UniformGrid1D(n_points)};
  for (std::size_t idx = 0; idx < k.values.size(); ++idx) {
    k.values[idx] = pred(static_cast<Eigen::Index>(idx), 0);
  }
  return k;
}

TrainResult train(DeepOperatorModel& model, const TrainingSet& data, const TrainingConfig& config) {
  if (data.size() == 0) throw InvalidInputError("empty training set");
  if (config.learning_rate <= 0.0) throw InvalidInputError("learning rate must be positive");
  if (config.split <= 0.0 || config.split >= 1.0) throw InvalidInputError("split must be in (0,1)");

  std::vector<std::size_t> train_idx = data.train_idx;
  std::vector<std::size_t> test_idx = data.test_idx;
  if (train_idx.empty()) {
    // Unsplit data: seeded shuffle, first round(split * n) samples train.
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(substream(config.seed, 0x51));
    std::shuffle(order.begin(), order.end(), rng);
    auto cut = static_cast<std::size_t>(std::llround(config.split * static_cast<double>(order.size())));
    cut = std::clamp<std::size_t>(cut, 1, order.size());
    train_idx.assign(order.begin(), order.begin() + cut);
    test_idx.assign(order.begin() + cut, order.end());
  }

  MatrixXd xt;
  VectorXd y;
  triangle_points(data.grid.n, xt, y);
  MatrixXd xb_train = branch_inputs(model, data.grid, data.lambdas, train_idx);
  MatrixXd t_train = target_matrix(data.kernels, train_idx);
  MatrixXd xb_test, t_test;
  if (!test_idx.empty()) {
    xb_test = branch_inputs(model, data.grid, data.lambdas, test_idx);
    t_test = target_matrix(data.kernels, test_idx);
  }

  if (config.optimizer == OptimizerKind::adam) {
    if (!model.branch_opt) model.branch_opt = make_adam_state(model.branch);
    if (!model.trunk_opt) model.trunk_opt = make_adam_state(model.trunk);
  }

  TrainResult result;
  auto record_metrics = [&]() {
    MatrixXd pred = predict_matrix(model, xb_train, xt, y);
    result.train_rel_l2.push_back(mean_rel_l2(pred, t_train));
    result.train_mse.push_back((pred - t_train).squaredNorm() / static_cast<double>(pred.size()));
    if (t_test.size() > 0) {
      result.test_rel_l2.push_back(mean_rel_l2(predict_matrix(model, xb_test, xt, y), t_test));
    } else {
      result.test_rel_l2.push_back(0.0);
    }
  };
  record_metrics();

  const std::size_t bsz = std::max<std::size_t>(1, config.batch_size);
  LossWorkspace ws;
  std::vector<std::size_t> order(train_idx.size());
  std::iota(order.begin(), order.end(), 0);

  // Epoch numbering continues from any earlier training so a resumed run
  // replays the identical shuffle sequence.
  for (int epoch = model.trained_epochs; epoch < config.epochs; ++epoch) {
    std::mt19937_64 rng(substream(config.seed, 0x1000 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t s = 0; s < order.size(); s += bsz) {
      std::size_t b = std::min(bsz, order.size() - s);
      MatrixXd xb(model.m, b), tb(t_train.rows(), b);
      for (std::size_t c = 0; c < b; ++c) {
        xb.col(c) = xb_train.col(static_cast<Eigen::Index>(order[s + c]));
        tb.col(c) = t_train.col(static_cast<Eigen::Index>(order[s + c]));
      }
      double loss = loss_and_grads(model, xb, xt, y, tb, ws);
      if (!std::isfinite(loss)) {
        throw TrainingDivergenceError("training loss diverged at epoch " + std::to_string(epoch),
                                      epoch);
      }
      if (config.optimizer == OptimizerKind::adam) {
        adam_update(model.branch, ws.branch_grads, *model.branch_opt, config.learning_rate);
        adam_update(model.trunk, ws.trunk_grads, *model.trunk_opt, config.learning_rate);
      } else {
        sgd_update(model.branch, ws.branch_grads, config.learning_rate);
        sgd_update(model.trunk, ws.trunk_grads, config.learning_rate);
      }
    }
    model.trained_epochs = epoch + 1;
    record_metrics();
    if (!std::isfinite(result.train_mse.back())) {
      throw TrainingDivergenceError("training loss diverged at epoch " + std::to_string(epoch),
                                    epoch);
    }
  }
  return result;
}

double gradient_check(const DeepOperatorModel& model, const ReactionProfile& lambda,
                      std::uint64_t seed) {
  DeepOperatorModel work = model;
  MatrixXd xt;
  VectorXd y;
  triangle_points(lambda.grid.n, xt, y);
  MatrixXd xb = branch_inputs(work, lambda.grid, {lambda.values}, {0});

  // Synthetic O(1) targets keep the finite-difference loss well conditioned.
  std::mt19937_64 rng(substream(seed, 0x77));
  std::normal_distribution<double> dist(0.0, 1.0);
  MatrixXd targets(xt.cols(), 1);
  for (Eigen::Index r = 0; r < targets.rows(); ++r) targets(r, 0) = dist(rng);

  LossWorkspace ws;
  loss_and_grads(work, xb, xt, y, targets, ws);
  std::vector<double> analytic;
  for (const auto& g : {std::cref(ws.branch_grads), std::cref(ws.trunk_grads)}) {
    for (std::size_t l = 0; l < g.get().dW.size(); ++l) {
      const MatrixXd& dw = g.get().dW[l];
      analytic.insert(analytic.end(), dw.data(), dw.data() + dw.size());
      const VectorXd& db = g.get().db[l];
      analytic.insert(analytic.end(), db.data(), db.data() + db.size());
    }
  }

  // Walk parameters in the same order, perturbing each in place.
  const double step = 1e-6;
  double worst = 0.0;
  std::size_t pos = 0;
  auto probe = [&](double* ptr, std::size_t count) {
    MlpCache bc, tc;
    for (std::size_t i = 0; i < count; ++i, ++pos) {
      double saved = ptr[i];
      ptr[i] = saved + step;
      double lp = (head_forward(mlp_forward(work.branch, xb, bc), mlp_forward(work.trunk, xt, tc), y) -
                   targets)
                      .squaredNorm() /
                  static_cast<double>(targets.size());
      ptr[i] = saved - step;
      double lm = (head_forward(mlp_forward(work.branch, xb, bc), mlp_forward(work.trunk, xt, tc), y) -
                   targets)
                      .squaredNorm() /
                  static_cast<double>(targets.size());
      ptr[i] = saved;
      double fd = (lp - lm) / (2.0 * step);
      double denom = std::max({std::abs(fd), std::abs(analytic[pos]), 1e-3});
      worst = std::max(worst, std::abs(fd - analytic[pos]) / denom);
    }
  };
  for (Mlp* net : {&work.branch, &work.trunk}) {
    for (std::size_t l = 0; l < net->n_layers(); ++l) {
      probe(net->W[l].data(), static_cast<std::size_t>(net->W[l].size()));
      probe(net->b[l].data(), static_cast<std::size_t>(net->b[l].size()));
    }
  }
  return worst;
}

OperatorErrorReport operator_error(const DeepOperatorModel& model, const ReactionProfile& lambda,
                                   const KernelField& exact_k) {
  if (!(exact_k.grid == lambda.grid)) throw InvalidInputError("kernel and profile grids differ");
  const std::size_t n = exact_k.grid.n;
  const double h = exact_k.grid.h;
  KernelField khat = predict_kernel(model, lambda, n);

  OperatorErrorReport rep;
  double num = 0.0, den = 0.0;
  for (std::size_t idx = 0; idx < exact_k.values.size(); ++idx) {
    double d = exact_k.values[idx] - khat.values[idx];
    rep.kernel_sup_err = std::max(rep.kernel_sup_err, std::abs(d));
    num += d * d;
    den += exact_k.values[idx] * exact_k.values[idx];
  }
  rep.rel_l2 = std::sqrt(num / den);

  // Diagonal trace of k - k_hat, differentiated at second order.
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = exact_k.at(i, i) - khat.at(i, i);
  auto diag_deriv = [&](std::size_t i) {
    if (i == 0) return (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * h);
    if (i == n - 1) return (3.0 * g[n - 1] - 4.0 * g[n - 2] + g[n - 3]) / (2.0 * h);
    return (g[i + 1] - g[i - 1]) / (2.0 * h);
  };
  for (std::size_t i = 0; i < n; ++i) {
    rep.diag_deriv_err = std::max(rep.diag_deriv_err, std::abs(2.0 * diag_deriv(i)));
  }

  for (std::size_t i = 2; i + 1 < n; ++i) {
    for (std::size_t j = 1; j + 1 < i; ++j) {
      auto kt = [&](std::size_t a, std::size_t b) { return exact_k.at(a, b) - khat.at(a, b); };
      double kxx = kt(i + 1, j) - 2.0 * kt(i, j) + kt(i - 1, j);
      double kyy = kt(i, j + 1) - 2.0 * kt(i, j) + kt(i, j - 1);
      double r = (kxx - kyy) / (h * h) - lambda.values[j] * kt(i, j);
      rep.pde_functional_err = std::max(rep.pde_functional_err, std::abs(r));
    }
  }
  rep.epsilon = rep.kernel_sup_err + rep.diag_deriv_err + rep.pde_functional_err;
  return rep;
}

namespace {

void append_mlp_params(const Mlp& net, std::vector<double>& out) {
  std::vector<double> p = flatten_params(net);
  out.insert(out.end(), p.begin(), p.end());
}

void read_mlp_params(Mlp& net, const std::vector<double>& flat, std::size_t& pos) {
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    for (Eigen::Index r = 0; r < net.W[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < net.W[l].cols(); ++c) net.W[l](r, c) = flat[pos++];
    }
    for (Eigen::Index r = 0; r < net.b[l].size(); ++r) net.b[l](r) = flat[pos++];
  }
}

void write_f64(const std::string& path, const std::vector<double>& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  // Little-endian layout; the build targets little-endian hosts.
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!f) throw IoError("short write to " + path);
}

std::vector<double> read_f64(const std::string& path, std::size_t expected) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot read " + path);
  auto bytes = static_cast<std::size_t>(f.tellg());
  if (bytes != expected * sizeof(double)) {
    throw FormatError(path + " has wrong size: got " + std::to_string(bytes) + " bytes, want " +
                      std::to_string(expected * sizeof(double)));
  }
  std::vector<double> data(expected);
  f.seekg(0);
  f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if (!f) throw IoError("short read from " + path);
  return data;
}

std::vector<std::size_t> hidden_widths(const Mlp& net) {
  std::vector<std::size_t> w;
  for (std::size_t l = 0; l + 1 < net.n_layers(); ++l) {
    w.push_back(static_cast<std::size_t>(net.W[l].rows()));
  }
  return w;
}

std::vector<double> adam_flat(const AdamState& st) {
  std::vector<double> out;
  for (std::size_t l = 0; l < st.mW.size(); ++l) {
    out.insert(out.end(), st.mW[l].data(), st.mW[l].data() + st.mW[l].size());
    out.insert(out.end(), st.mb[l].data(), st.mb[l].data() + st.mb[l].size());
    out.insert(out.end(), st.vW[l].data(), st.vW[l].data() + st.vW[l].size());
    out.insert(out.end(), st.vb[l].data(), st.vb[l].data() + st.vb[l].size());
  }
  return out;
}

void adam_unflat(AdamState& st, const std::vector<double>& flat, std::size_t& pos) {
  for (std::size_t l = 0; l < st.mW.size(); ++l) {
    for (Eigen::Index i = 0; i < st.mW[l].size(); ++i) st.mW[l].data()[i] = flat[pos++];
    for (Eigen::Index i = 0; i < st.mb[l].size(); ++i) st.mb[l].data()[i] = flat[pos++];
    for (Eigen::Index i = 0; i < st.vW[l].size(); ++i) st.vW[l].data()[i] = flat[pos++];
    for (Eigen::Index i = 0; i < st.vb[l].size(); ++i) st.vb[l].data()[i] = flat[pos++];
  }
}

}  // namespace

void save_model(const DeepOperatorModel& model, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<double> flat;
  append_mlp_params(model.branch, flat);
  append_mlp_params(model.trunk, flat);
  write_f64(dir + "/model.bin", flat);

  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "deep_operator_model";
  j["m"] = model.m;
  j["p"] = model.p;
  j["branch_hidden"] = hidden_widths(model.branch);
  j["trunk_hidden"] = hidden_widths(model.trunk);
  j["activation"] = model.branch.activation == Activation::tanh ? "tanh" : "relu";
  j["sensors"] = "equispaced";
  j["input_scale"] = model.input_scale;
  j["seed"] = model.seed;
  j["trained_epochs"] = model.trained_epochs;
  j["param_count"] = flat.size();
  j["params_file"] = "model.bin";
  j["params_sha256"] = sha256_file(dir + "/model.bin");
  std::ofstream f(dir + "/model.json");
  if (!f) throw IoError("cannot write " + dir + "/model.json");
  f << j.dump(2) << "\n";

  if (model.branch_opt && model.trunk_opt) {
    std::vector<double> opt = adam_flat(*model.branch_opt);
    std::vector<double> t2 = adam_flat(*model.trunk_opt);
    opt.insert(opt.end(), t2.begin(), t2.end());
    opt.push_back(static_cast<double>(model.branch_opt->t));
    write_f64(dir + "/optim.bin", opt);
  }
}

DeepOperatorModel load_model(const std::string& dir) {
  std::ifstream f(dir + "/model.json");
  if (!f) throw IoError("cannot read " + dir + "/model.json");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir + "/model.json: " + e.what());
  }
  if (j.value("schema_version", 0) != 1 || j.value("kind", "") != "deep_operator_model") {
    throw FormatError(dir + "/model.json: unsupported schema");
  }
  Activation act = j.at("activation") == "tanh" ? Activation::tanh : Activation::relu;
  DeepOperatorModel model =
      make_model(j.at("m"), j.at("branch_hidden").get<std::vector<std::size_t>>(),
                 j.at("trunk_hidden").get<std::vector<std::size_t>>(), j.at("p"), act,
                 j.at("input_scale"), j.at("seed"));
  model.trained_epochs = j.at("trained_epochs");

  // Size first, then digest: a short file is a format defect, a full-length
  // file with a digest mismatch is corruption. Same split the dataset loader uses.
  std::string bin = dir + "/" + j.value("params_file", "model.bin");
  std::vector<double> flat = read_f64(bin, j.at("param_count"));
  std::string want = j.at("params_sha256");
  if (sha256_file(bin) != want) throw ChecksumError(bin + ": checksum mismatch");
  std::size_t pos = 0;
  read_mlp_params(model.branch, flat, pos);
  read_mlp_params(model.trunk, flat, pos);

  if (std::filesystem::exists(dir + "/optim.bin")) {
    AdamState bs = make_adam_state(model.branch);
    AdamState ts = make_adam_state(model.trunk);
    std::size_t count = 2 * model.param_count() + 1;
    std::vector<double> opt = read_f64(dir + "/optim.bin", count);
    std::size_t op = 0;
    adam_unflat(bs, opt, op);
    adam_unflat(ts, opt, op);
    bs.t = ts.t = static_cast<std::int64_t>(opt.back());
    model.branch_opt = std::move(bs);
    model.trunk_opt = std::move(ts);
  }
  return model;
}

}  // namespace backstep
