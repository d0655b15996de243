// Command-line surface for the backstepping toolkit: dataset generation,
// operator training, kernel solves, simulations, certificate analysis and
// timing. Every command writes a run.json with the resolved configuration and
// content hashes of its inputs; outputs carry no timestamps, so identical
// invocations produce identical bytes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "backstep/analysis.hpp"
#include "backstep/dataset.hpp"
#include "backstep/errors.hpp"
#include "backstep/grid.hpp"
#include "backstep/kernel_solver.hpp"
#include "backstep/operator_model.hpp"
#include "backstep/sha256.hpp"
#include "backstep/simulator.hpp"

namespace {

using backstep::InvalidInputError;
using nlohmann::ordered_json;

constexpr const char* kToolVersion = "backstep 1.0.0";
constexpr int kConfigSchemaVersion = 1;

constexpr double kPi = 3.14159265358979323846;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Experiment configuration: defaults, JSON overrides, strict key checking.

struct ExperimentConfig {
  backstep::SimulationConfig sim;
  std::string ic = "const10";
  std::string observer_ic = "const20";
  std::string signal = "zero";

  backstep::TrainingConfig training;

  std::vector<std::size_t> branch_hidden{128, 128};
  std::vector<std::size_t> trunk_hidden{128, 128};
  std::size_t p = 64;
  std::string activation = "tanh";
  double input_scale = 0.0;  // 0: derive from the training profiles

  backstep::LambdaFamilySpec family;
  double split = 0.9;

  backstep::GoursatSolveOptions solver;
};

void check_keys(const nlohmann::json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw InvalidInputError("unknown config key: " + section + item.key());
    }
  }
}

backstep::Stepper parse_stepper(const std::string& s) {
  if (s == "crank_nicolson") return backstep::Stepper::crank_nicolson;
  if (s == "backward_euler") return backstep::Stepper::backward_euler;
  throw InvalidInputError("unknown stepper: " + s);
}

backstep::KernelMethod parse_method(const std::string& s) {
  if (s == "fd") return backstep::KernelMethod::fd_marching;
  if (s == "integral") return backstep::KernelMethod::integral_fixed_point;
  throw InvalidInputError("unknown kernel method: " + s);
}

backstep::OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return backstep::OptimizerKind::adam;
  if (s == "sgd") return backstep::OptimizerKind::sgd;
  throw InvalidInputError("unknown optimizer: " + s);
}

backstep::Activation parse_activation(const std::string& s) {
  if (s == "tanh") return backstep::Activation::tanh;
  if (s == "relu") return backstep::Activation::relu;
  throw InvalidInputError("unknown activation: " + s);
}

std::string stepper_name(backstep::Stepper s) {
  return s == backstep::Stepper::crank_nicolson ? "crank_nicolson" : "backward_euler";
}

std::string method_name(backstep::KernelMethod m) {
  return m == backstep::KernelMethod::fd_marching ? "fd" : "integral";
}

std::string optimizer_name(backstep::OptimizerKind o) {
  return o == backstep::OptimizerKind::adam ? "adam" : "sgd";
}

void apply_config_json(ExperimentConfig& cfg, const nlohmann::json& j) {
  check_keys(j, "",
             {"schema_version", "simulation", "training", "model", "family", "solver", "split"});
  if (j.contains("schema_version") && j.at("schema_version").get<int>() != kConfigSchemaVersion) {
    throw InvalidInputError("unsupported config schema_version");
  }
  if (j.contains("simulation")) {
    const auto& s = j.at("simulation");
    check_keys(s, "simulation.",
               {"n_points", "dt", "T", "stepper", "ic", "observer_ic", "signal",
                "snapshot_stride"});
    if (s.contains("n_points")) cfg.sim.n_points = s.at("n_points").get<std::size_t>();
    if (s.contains("dt")) cfg.sim.dt = s.at("dt").get<double>();
    if (s.contains("T")) cfg.sim.T = s.at("T").get<double>();
    if (s.contains("stepper")) cfg.sim.stepper = parse_stepper(s.at("stepper").get<std::string>());
    if (s.contains("ic")) cfg.ic = s.at("ic").get<std::string>();
    if (s.contains("observer_ic")) cfg.observer_ic = s.at("observer_ic").get<std::string>();
    if (s.contains("signal")) cfg.signal = s.at("signal").get<std::string>();
    if (s.contains("snapshot_stride")) {
      cfg.sim.snapshot_stride = s.at("snapshot_stride").get<std::size_t>();
    }
  }
  if (j.contains("training")) {
    const auto& s = j.at("training");
    check_keys(s, "training.",
               {"learning_rate", "batch_size", "epochs", "seed", "optimizer", "split"});
    if (s.contains("learning_rate")) cfg.training.learning_rate = s.at("learning_rate").get<double>();
    if (s.contains("batch_size")) cfg.training.batch_size = s.at("batch_size").get<std::size_t>();
    if (s.contains("epochs")) cfg.training.epochs = s.at("epochs").get<int>();
    if (s.contains("seed")) cfg.training.seed = s.at("seed").get<std::uint64_t>();
    if (s.contains("optimizer")) {
      cfg.training.optimizer = parse_optimizer(s.at("optimizer").get<std::string>());
    }
    if (s.contains("split")) cfg.training.split = s.at("split").get<double>();
  }
  if (j.contains("model")) {
    const auto& s = j.at("model");
    check_keys(s, "model.", {"branch_hidden", "trunk_hidden", "p", "activation", "input_scale"});
    if (s.contains("branch_hidden")) {
      cfg.branch_hidden = s.at("branch_hidden").get<std::vector<std::size_t>>();
    }
    if (s.contains("trunk_hidden")) {
      cfg.trunk_hidden = s.at("trunk_hidden").get<std::vector<std::size_t>>();
    }
    if (s.contains("p")) cfg.p = s.at("p").get<std::size_t>();
    if (s.contains("activation")) cfg.activation = s.at("activation").get<std::string>();
    if (s.contains("input_scale")) cfg.input_scale = s.at("input_scale").get<double>();
  }
  if (j.contains("family")) {
    const auto& s = j.at("family");
    check_keys(s, "family.", {"c", "gamma_lo", "gamma_hi", "seed"});
    if (s.contains("c")) cfg.family.c = s.at("c").get<double>();
    if (s.contains("gamma_lo")) cfg.family.gamma_lo = s.at("gamma_lo").get<double>();
    if (s.contains("gamma_hi")) cfg.family.gamma_hi = s.at("gamma_hi").get<double>();
    if (s.contains("seed")) cfg.family.seed = s.at("seed").get<std::uint64_t>();
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    check_keys(s, "solver.", {"n_points", "method", "max_iters", "tol"});
    if (s.contains("n_points")) cfg.solver.n_points = s.at("n_points").get<std::size_t>();
    if (s.contains("method")) cfg.solver.method = parse_method(s.at("method").get<std::string>());
    if (s.contains("max_iters")) cfg.solver.max_iters = s.at("max_iters").get<int>();
    if (s.contains("tol")) cfg.solver.tol = s.at("tol").get<double>();
  }
  if (j.contains("split")) cfg.split = j.at("split").get<double>();
}

void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  if (path.empty()) return;
  std::ifstream f(path);
  if (!f) throw backstep::IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInputError(std::string("config is not valid JSON: ") + e.what());
  }
  apply_config_json(cfg, j);
}

ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig cfg;
  apply_config_file(cfg, path);
  return cfg;
}

ordered_json echo_config(const ExperimentConfig& cfg) {
  ordered_json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["simulation"] = {{"n_points", cfg.sim.n_points},
                     {"dt", cfg.sim.dt},
                     {"T", cfg.sim.T},
                     {"stepper", stepper_name(cfg.sim.stepper)},
                     {"ic", cfg.ic},
                     {"observer_ic", cfg.observer_ic},
                     {"signal", cfg.signal},
                     {"snapshot_stride", cfg.sim.snapshot_stride}};
  j["training"] = {{"learning_rate", cfg.training.learning_rate},
                   {"batch_size", cfg.training.batch_size},
                   {"epochs", cfg.training.epochs},
                   {"seed", cfg.training.seed},
                   {"optimizer", optimizer_name(cfg.training.optimizer)},
                   {"split", cfg.training.split}};
  j["model"] = {{"branch_hidden", cfg.branch_hidden},
                {"trunk_hidden", cfg.trunk_hidden},
                {"p", cfg.p},
                {"activation", cfg.activation},
                {"input_scale", cfg.input_scale}};
  j["family"] = {{"c", cfg.family.c},
                 {"gamma_lo", cfg.family.gamma_lo},
                 {"gamma_hi", cfg.family.gamma_hi},
                 {"seed", cfg.family.seed}};
  j["solver"] = {{"n_points", cfg.solver.n_points},
                 {"method", method_name(cfg.solver.method)},
                 {"max_iters", cfg.solver.max_iters},
                 {"tol", cfg.solver.tol}};
  j["split"] = cfg.split;
  return j;
}

// ---------------------------------------------------------------------------
// Artifact plumbing.

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw backstep::IoError("cannot write " + path.string());
  f << text;
  if (!f) throw backstep::IoError("write failed for " + path.string());
}

using InputHashes = std::vector<std::pair<std::string, std::string>>;

void hash_input(InputHashes& inputs, const std::string& path) {
  if (!path.empty()) inputs.emplace_back(path, backstep::sha256_file(path));
}

void write_run_json(const std::string& out_dir, const std::string& command,
                    const ordered_json& resolved, const InputHashes& inputs) {
  ordered_json j;
  j["tool_version"] = kToolVersion;
  j["command"] = command;
  j["config"] = resolved;
  ordered_json in = ordered_json::object();
  for (const auto& [path, hash] : inputs) in[path] = hash;
  j["inputs"] = in;
  write_text(std::filesystem::path(out_dir) / "run.json", j.dump(2) + "\n");
}

std::vector<double> build_ic(const std::string& name, std::size_t n) {
  if (name == "const10") return backstep::ic_constant(10.0, n);
  if (name == "const20") return backstep::ic_constant(20.0, n);
  if (name == "sine") return backstep::ic_sine(n);
  if (name == "zero") return backstep::ic_constant(0.0, n);
  throw InvalidInputError("unknown initial condition: " + name);
}

std::function<double(double)> build_signal(const std::string& name) {
  if (name == "zero") return [](double) { return 0.0; };
  if (name == "two-tone") {
    return [](double t) { return 7.0 * std::sin(16.0 * kPi * t) + 10.0 * std::cos(2.0 * kPi * t); };
  }
  throw InvalidInputError("unknown boundary signal: " + name);
}

backstep::ReactionProfile lambda_preset(const std::string& name, std::size_t n) {
  if (name == "zero") return backstep::ReactionProfile(backstep::UniformGrid1D(n));
  if (name == "gamma5") return backstep::chebyshev_profile(50.0, 5.0, n);
  if (name == "gamma8") return backstep::chebyshev_profile(50.0, 8.0, n);
  if (name == "gamma5c20") return backstep::chebyshev_profile(20.0, 5.0, n);
  throw InvalidInputError("unknown lambda preset: " + name);
}

backstep::ReactionProfile lambda_from_file(const std::string& path, std::size_t n) {
  std::ifstream f(path);
  if (!f) throw backstep::IoError("cannot open lambda file " + path);
  std::vector<double> v;
  double x = 0.0;
  while (f >> x) v.push_back(x);
  if (v.size() != n) {
    throw InvalidInputError("lambda file has " + std::to_string(v.size()) +
                            " values, grid needs " + std::to_string(n));
  }
  return backstep::ReactionProfile(backstep::UniformGrid1D(n), std::move(v));
}

std::string kernel_csv(const backstep::KernelField& k) {
  std::string out = "i,j,x,y,k\n";
  for (std::size_t i = 0; i < k.grid.n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      out += std::to_string(i) + "," + std::to_string(j) + "," + fmt_double(k.grid.node(i)) + "," +
             fmt_double(k.grid.node(j)) + "," + fmt_double(k.at(i, j)) + "\n";
    }
  }
  return out;
}

std::string snapshot_csv(const backstep::SimulationTrace& trace,
                         const std::vector<std::vector<double>>& states, std::size_t n) {
  std::string out = "t";
  for (std::size_t i = 0; i < n; ++i) out += ",u" + std::to_string(i);
  out += "\n";
  for (std::size_t s = 0; s < states.size(); ++s) {
    out += fmt_double(trace.times[s * trace.snapshot_stride]);
    for (double v : states[s]) out += "," + fmt_double(v);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
  std::string spec_path, out_dir;
  std::size_t n_samples = 900;
  std::size_t grid = 101;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double c = 0.0;
  bool c_set = false;
};

void run_gen_data(const GenDataArgs& a) {
  ExperimentConfig cfg = load_config(a.spec_path);
  if (a.seed_set) cfg.family.seed = a.seed;
  if (a.c_set) cfg.family.c = a.c;

  backstep::DatasetManifest m =
      backstep::build_dataset(cfg.family, a.n_samples, a.grid, cfg.solver, cfg.split, a.out_dir);

  ordered_json resolved = echo_config(cfg);
  resolved["gen_data"] = {{"n_samples", a.n_samples}, {"grid", a.grid}};
  InputHashes inputs;
  hash_input(inputs, a.spec_path);
  write_run_json(a.out_dir, "gen-data", resolved, inputs);

  std::cout << "dataset " << a.out_dir << " samples " << m.n_samples << " grid " << m.n_points
            << " data_sha256 " << m.data_sha256 << "\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data_dir, config_path, out_model;
  bool resume = false;
};

void run_train(const TrainArgs& a) {
  ExperimentConfig cfg = load_config(a.config_path);
  backstep::Dataset ds = backstep::load_dataset(a.data_dir);
  backstep::TrainingSet set = backstep::to_training_set(ds);

  InputHashes inputs;
  hash_input(inputs, a.config_path);
  hash_input(inputs, (std::filesystem::path(a.data_dir) / "manifest.json").string());
  hash_input(inputs, (std::filesystem::path(a.data_dir) / "data.bin").string());

  backstep::DeepOperatorModel model;
  if (a.resume) {
    hash_input(inputs, (std::filesystem::path(a.out_model) / "model.json").string());
    hash_input(inputs, (std::filesystem::path(a.out_model) / "model.bin").string());
    model = backstep::load_model(a.out_model);
    if (model.m != ds.grid.n) {
      throw InvalidInputError("resumed model sensor count does not match the dataset grid");
    }
  } else {
    double scale = cfg.input_scale;
    if (scale == 0.0) {
      for (const backstep::ReactionProfile& lam : ds.lambdas) {
        scale = std::max(scale, lam.sup_norm);
      }
      if (scale == 0.0) scale = 1.0;
    }
    model = backstep::make_model(ds.grid.n, cfg.branch_hidden, cfg.trunk_hidden, cfg.p,
                                 parse_activation(cfg.activation), scale, cfg.training.seed);
  }

  int first_epoch = model.trained_epochs;
  backstep::TrainResult result = backstep::train(model, set, cfg.training);
  backstep::save_model(model, a.out_model);

  std::string csv = "epoch,train_rel_l2,test_rel_l2,train_mse\n";
  for (std::size_t r = 0; r < result.train_rel_l2.size(); ++r) {
    csv += std::to_string(first_epoch + static_cast<int>(r)) + "," +
           fmt_double(result.train_rel_l2[r]) + "," + fmt_double(result.test_rel_l2[r]) + "," +
           fmt_double(result.train_mse[r]) + "\n";
  }
  write_text(std::filesystem::path(a.out_model) / "loss.csv", csv);

  ordered_json resolved = echo_config(cfg);
  resolved["train"] = {{"data", a.data_dir},
                       {"resume", a.resume},
                       {"trained_epochs", model.trained_epochs},
                       {"input_scale", model.input_scale}};
  write_run_json(a.out_model, "train", resolved, inputs);

  std::cout << "trained " << model.trained_epochs << " epochs, final train rel_l2 = "
            << fmt_double(result.train_rel_l2.back())
            << ", final test rel_l2 = " << fmt_double(result.test_rel_l2.back()) << "\n";
}

// ---------------------------------------------------------------------------
// solve-kernel

struct SolveKernelArgs {
  std::string preset, lambda_file, method, out_dir;
  std::size_t grid = 0;
  std::string config_path;
};

void run_solve_kernel(const SolveKernelArgs& a) {
  ExperimentConfig cfg = load_config(a.config_path);
  if (a.grid != 0) cfg.solver.n_points = a.grid;
  if (!a.method.empty()) cfg.solver.method = parse_method(a.method);
  if (a.preset.empty() == a.lambda_file.empty()) {
    throw InvalidInputError("need exactly one of --lambda-preset or --lambda-file");
  }
  backstep::ReactionProfile lam = a.preset.empty()
                                      ? lambda_from_file(a.lambda_file, cfg.solver.n_points)
                                      : lambda_preset(a.preset, cfg.solver.n_points);

  backstep::KernelField k = backstep::solve_kernel(lam, cfg.solver);
  backstep::KernelResidualReport res = backstep::kernel_residuals(k, lam);

  write_text(std::filesystem::path(a.out_dir) / "kernel.csv", kernel_csv(k));
  ordered_json rj;
  rj["method"] = method_name(cfg.solver.method);
  rj["n_points"] = cfg.solver.n_points;
  rj["lambda_bar"] = lam.sup_norm;
  rj["pde_residual_sup"] = res.pde_residual_sup;
  rj["bc_zero_sup"] = res.bc_zero_sup;
  rj["bc_diag_sup"] = res.bc_diag_sup;
  rj["bound_margin"] = res.bound_margin;
  write_text(std::filesystem::path(a.out_dir) / "residuals.json", rj.dump(2) + "\n");

  ordered_json resolved = echo_config(cfg);
  resolved["solve_kernel"] = {{"lambda_preset", a.preset}, {"lambda_file", a.lambda_file}};
  InputHashes inputs;
  hash_input(inputs, a.config_path);
  hash_input(inputs, a.lambda_file);
  write_run_json(a.out_dir, "solve-kernel", resolved, inputs);

  std::cout << "kernel " << method_name(cfg.solver.method) << " n " << cfg.solver.n_points
            << " pde_residual_sup " << fmt_double(res.pde_residual_sup) << " bound_margin "
            << fmt_double(res.bound_margin) << "\n";
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string preset, mode, lambda, gain = "exact", config_path, out_dir;
};

void run_simulate(const SimulateArgs& a) {
  std::string mode = a.mode, lambda_name = a.lambda;

  ExperimentConfig cfg;
  if (!a.preset.empty()) {
    if (a.preset == "openloop-gamma5") {
      if (mode.empty()) mode = "open";
      if (lambda_name.empty()) lambda_name = "gamma5";
    } else if (a.preset == "openloop-gamma8") {
      if (mode.empty()) mode = "open";
      if (lambda_name.empty()) lambda_name = "gamma8";
    } else if (a.preset == "closedloop-gamma5") {
      if (mode.empty()) mode = "closed";
      if (lambda_name.empty()) lambda_name = "gamma5";
    } else if (a.preset == "observer-c20") {
      if (mode.empty()) mode = "observer";
      if (lambda_name.empty()) lambda_name = "gamma5c20";
      cfg.signal = "two-tone";
    } else {
      throw InvalidInputError("unknown preset: " + a.preset);
    }
  }
  if (mode.empty()) throw InvalidInputError("need --mode or --preset");
  if (lambda_name.empty()) throw InvalidInputError("need --lambda-preset or --preset");

  apply_config_file(cfg, a.config_path);

  const std::size_t n = cfg.sim.n_points;
  backstep::ReactionProfile lam = lambda_preset(lambda_name, n);
  cfg.sim.u0 = build_ic(cfg.ic, n);
  std::vector<double> observer_ic = build_ic(cfg.observer_ic, n);
  std::function<double(double)> signal = build_signal(cfg.signal);

  InputHashes inputs;
  hash_input(inputs, a.config_path);

  // Gain resolution; the loaded model is kept for the certificate epsilon.
  backstep::KernelField gain{backstep::UniformGrid1D(n)};
  std::optional<backstep::DeepOperatorModel> model;
  backstep::GoursatSolveOptions gain_opts = cfg.solver;
  gain_opts.n_points = n;
  if (mode != "open") {
    if (a.gain == "exact") {
      gain = backstep::solve_kernel(lam, gain_opts);
    } else if (a.gain == "zero") {
      // zero field as constructed
    } else if (a.gain.rfind("operator:", 0) == 0) {
      std::string dir = a.gain.substr(9);
      hash_input(inputs, (std::filesystem::path(dir) / "model.json").string());
      hash_input(inputs, (std::filesystem::path(dir) / "model.bin").string());
      model = backstep::load_model(dir);
      gain = backstep::predict_kernel(*model, lam, n);
    } else {
      throw InvalidInputError("unknown gain spec: " + a.gain);
    }
  }

  backstep::SimulationTrace trace;
  if (mode == "open") {
    trace = backstep::simulate_open_loop(lam, signal, cfg.sim);
  } else if (mode == "closed") {
    trace = backstep::simulate_closed_loop(lam, gain, cfg.sim);
  } else if (mode == "observer") {
    trace = backstep::simulate_observer(lam, gain, cfg.sim, observer_ic, signal);
  } else if (mode == "output-feedback") {
    trace = backstep::simulate_output_feedback(lam, gain, cfg.sim, observer_ic);
  } else {
    throw InvalidInputError("unknown mode: " + mode);
  }

  write_text(std::filesystem::path(a.out_dir) / "trace.csv", trace.to_csv());
  if (trace.snapshot_stride > 0) {
    write_text(std::filesystem::path(a.out_dir) / "snapshots.csv",
               snapshot_csv(trace, trace.snapshots, n));
    if (!trace.est_snapshots.empty()) {
      write_text(std::filesystem::path(a.out_dir) / "est_snapshots.csv",
                 snapshot_csv(trace, trace.est_snapshots, n));
    }
  }

  ordered_json summary;
  summary["mode"] = mode;
  summary["lambda"] = lambda_name;
  summary["gain"] = mode == "open" ? std::string("none") : a.gain;
  summary["lambda_bar"] = lam.sup_norm;
  summary["l2_initial"] = trace.l2_norms.front();
  summary["l2_final"] = trace.l2_norms.back();
  summary["l2_ratio"] = trace.l2_norms.back() / trace.l2_norms.front();
  summary["control_sup"] = backstep::sup_norm(trace.control);
  if (!trace.err_norms.empty()) {
    summary["err_initial"] = trace.err_norms.front();
    summary["err_final"] = trace.err_norms.back();
    summary["err_ratio"] = trace.err_norms.back() / trace.err_norms.front();
  }

  bool certifiable = (mode == "closed" || mode == "observer") && a.gain != "zero";
  if (certifiable) {
    double eps = 0.0;
    if (model) {
      backstep::KernelField k_exact = backstep::solve_kernel_fd(lam, n);
      eps = backstep::operator_error(*model, lam, k_exact).epsilon;
    }
    backstep::StabilityReport rep = backstep::make_stability_report(eps, lam.sup_norm);
    rep = backstep::certify_trace(trace, rep, mode == "observer");
    summary["certificate"] = nlohmann::ordered_json::parse(rep.to_json());
  }
  write_text(std::filesystem::path(a.out_dir) / "summary.json", summary.dump(2) + "\n");

  ordered_json resolved = echo_config(cfg);
  resolved["simulate"] = {{"preset", a.preset},
                          {"mode", mode},
                          {"lambda", lambda_name},
                          {"gain", mode == "open" ? std::string("none") : a.gain}};
  write_run_json(a.out_dir, "simulate", resolved, inputs);

  std::cout << "simulate " << mode << " lambda " << lambda_name << " l2 "
            << fmt_double(trace.l2_norms.front()) << " -> " << fmt_double(trace.l2_norms.back());
  if (!trace.err_norms.empty()) {
    std::cout << " err " << fmt_double(trace.err_norms.front()) << " -> "
              << fmt_double(trace.err_norms.back());
  }
  std::cout << "\n";
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  std::string model_dir, data_dir, out_dir;
  bool self_test = false;
};

void run_analyze(const AnalyzeArgs& a) {
  if (a.self_test) {
    ordered_json j;
    j["overshoot_M_0_0"] = backstep::overshoot_M(0.0, 0.0);
    j["delta_star_0"] = {{"0", backstep::delta_star(0.0, 0.0)},
                         {"1", backstep::delta_star(0.0, 1.0)},
                         {"50", backstep::delta_star(0.0, 50.0)}};
    j["epsilon_star_0"] = backstep::epsilon_star(0.0);
    j["vacuous_at_50"] = backstep::make_stability_report(0.0, 50.0).vacuous_bound;
    std::string text = j.dump(2) + "\n";
    if (!a.out_dir.empty()) {
      write_text(std::filesystem::path(a.out_dir) / "stability.json", text);
      write_run_json(a.out_dir, "analyze", ordered_json{{"self_test", true}}, {});
    }
    std::cout << "M(0,0) = " << fmt_double(backstep::overshoot_M(0.0, 0.0)) << "\n" << text;
    return;
  }
  if (a.model_dir.empty() || a.data_dir.empty() || a.out_dir.empty()) {
    throw InvalidInputError("analyze needs --model, --data and --out (or --self-test)");
  }

  backstep::DeepOperatorModel model = backstep::load_model(a.model_dir);
  backstep::Dataset ds = backstep::load_dataset(a.data_dir);
  backstep::TrainingSet set = backstep::to_training_set(ds);

  std::string csv = "index,kernel_sup_err,diag_deriv_err,pde_functional_err,epsilon,rel_l2\n";
  double eps_worst = 0.0, lambda_bar = 0.0;
  std::size_t worst_idx = 0;
  for (std::size_t idx : set.test_idx) {
    backstep::OperatorErrorReport r = backstep::operator_error(model, ds.lambdas[idx],
                                                               ds.kernels[idx]);
    lambda_bar = std::max(lambda_bar, ds.lambdas[idx].sup_norm);
    if (r.epsilon > eps_worst) {
      eps_worst = r.epsilon;
      worst_idx = idx;
    }
    csv += std::to_string(idx) + "," + fmt_double(r.kernel_sup_err) + "," +
           fmt_double(r.diag_deriv_err) + "," + fmt_double(r.pde_functional_err) + "," +
           fmt_double(r.epsilon) + "," + fmt_double(r.rel_l2) + "\n";
  }
  write_text(std::filesystem::path(a.out_dir) / "epsilons.csv", csv);

  backstep::StabilityReport rep = backstep::make_stability_report(eps_worst, lambda_bar);
  ordered_json j = ordered_json::parse(rep.to_json());
  j["held_out_samples"] = set.test_idx.size();
  j["worst_sample_index"] = worst_idx;
  write_text(std::filesystem::path(a.out_dir) / "stability.json", j.dump(2) + "\n");

  InputHashes inputs;
  hash_input(inputs, (std::filesystem::path(a.model_dir) / "model.json").string());
  hash_input(inputs, (std::filesystem::path(a.model_dir) / "model.bin").string());
  hash_input(inputs, (std::filesystem::path(a.data_dir) / "manifest.json").string());
  hash_input(inputs, (std::filesystem::path(a.data_dir) / "data.bin").string());
  ordered_json resolved;
  resolved["analyze"] = {{"model", a.model_dir}, {"data", a.data_dir}};
  write_run_json(a.out_dir, "analyze", resolved, inputs);

  std::cout << "analyze held-out " << set.test_idx.size() << " samples, worst epsilon "
            << fmt_double(eps_worst) << ", certified " << (rep.certified ? "yes" : "no")
            << ", vacuous_bound " << (rep.vacuous_bound ? "yes" : "no") << "\n";
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string model_dir, out_dir, grid_list = "101";
  std::size_t samples = 20;
  int reps = 3;
};

std::vector<std::size_t> parse_grid_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    out.push_back(static_cast<std::size_t>(std::stoul(s.substr(pos, comma - pos))));
    pos = comma + 1;
  }
  if (out.empty()) throw InvalidInputError("empty grid list");
  return out;
}

void run_bench(const BenchArgs& a) {
  backstep::DeepOperatorModel model = backstep::load_model(a.model_dir);
  std::vector<std::size_t> grids = parse_grid_list(a.grid_list);

  backstep::LambdaFamilySpec family;  // defaults: c = 50, gamma in (4,9)
  ordered_json per_grid = ordered_json::array();
  std::vector<double> solver_meds, predict_meds;
  for (std::size_t n : grids) {
    std::vector<backstep::ReactionProfile> lams;
    lams.reserve(a.samples);
    for (std::size_t i = 0; i < a.samples; ++i) {
      lams.push_back(backstep::sample_lambda(family, i, n));
    }
    backstep::GoursatSolveOptions opts;
    opts.n_points = n;
    backstep::SpeedupReport rep = backstep::speedup_benchmark(model, opts, lams, a.reps);
    per_grid.push_back(ordered_json::parse(rep.to_json()));
    solver_meds.push_back(rep.solver_median_s);
    predict_meds.push_back(rep.predict_median_s);
    std::cout << "bench n " << n << " solver_median_s " << fmt_double(rep.solver_median_s)
              << " predict_median_s " << fmt_double(rep.predict_median_s) << " ratio "
              << fmt_double(rep.ratio) << "\n";
  }

  ordered_json j;
  j["per_grid"] = per_grid;
  if (grids.size() >= 2) {
    j["solver_exponent"] = backstep::fit_scaling_exponent(grids, solver_meds);
    j["predict_exponent"] = backstep::fit_scaling_exponent(grids, predict_meds);
  }
  write_text(std::filesystem::path(a.out_dir) / "bench.json", j.dump(2) + "\n");

  InputHashes inputs;
  hash_input(inputs, (std::filesystem::path(a.model_dir) / "model.json").string());
  hash_input(inputs, (std::filesystem::path(a.model_dir) / "model.bin").string());
  ordered_json resolved;
  resolved["bench"] = {{"model", a.model_dir},
                       {"grid_list", a.grid_list},
                       {"samples", a.samples},
                       {"repetitions", a.reps}};
  write_run_json(a.out_dir, "bench", resolved, inputs);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Backstepping boundary control toolkit: kernels, operator learning, simulation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  GenDataArgs gd;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate a lambda/kernel dataset");
  gen->add_option("--spec,--config", gd.spec_path, "Experiment config JSON");
  gen->add_option("--out", gd.out_dir, "Output directory")->required();
  gen->add_option("--n", gd.n_samples, "Sample count");
  gen->add_option("--grid", gd.grid, "Grid points per sample");
  gen->add_option("--seed", gd.seed, "Family RNG seed")->each([&](const std::string&) {
    gd.seed_set = true;
  });
  gen->add_option("--c", gd.c, "Profile amplitude")->each([&](const std::string&) {
    gd.c_set = true;
  });
  gen->callback([&] { run_gen_data(gd); });

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "Train the gain-kernel operator");
  train->add_option("--data", tr.data_dir, "Dataset directory")->required();
  train->add_option("--config", tr.config_path, "Experiment config JSON");
  train->add_option("--out-model", tr.out_model, "Model output directory")->required();
  train->add_flag("--resume", tr.resume, "Continue training the saved model");
  train->callback([&] { run_train(tr); });

  SolveKernelArgs sk;
  CLI::App* solve = app.add_subcommand("solve-kernel", "Solve the gain kernel for one profile");
  solve->add_option("--lambda-preset", sk.preset, "zero | gamma5 | gamma8 | gamma5c20");
  solve->add_option("--lambda-file", sk.lambda_file, "Whitespace-separated node values");
  solve->add_option("--method", sk.method, "fd | integral");
  solve->add_option("--grid", sk.grid, "Grid points");
  solve->add_option("--config", sk.config_path, "Experiment config JSON");
  solve->add_option("--out", sk.out_dir, "Output directory")->required();
  solve->callback([&] { run_solve_kernel(sk); });

  SimulateArgs sm;
  CLI::App* sim = app.add_subcommand("simulate", "Run plant/observer simulations");
  sim->add_option("--preset", sm.preset,
                  "openloop-gamma5 | openloop-gamma8 | closedloop-gamma5 | observer-c20");
  sim->add_option("--mode", sm.mode, "open | closed | observer | output-feedback");
  sim->add_option("--lambda-preset", sm.lambda, "zero | gamma5 | gamma8 | gamma5c20");
  sim->add_option("--gain", sm.gain, "exact | zero | operator:DIR (default exact)");
  sim->add_option("--config", sm.config_path, "Experiment config JSON");
  sim->add_option("--out", sm.out_dir, "Output directory")->required();
  sim->callback([&] { run_simulate(sm); });

  AnalyzeArgs an;
  CLI::App* analyze = app.add_subcommand("analyze", "Stability certificates for a trained model");
  analyze->add_option("--model", an.model_dir, "Model directory");
  analyze->add_option("--data", an.data_dir, "Dataset directory");
  analyze->add_option("--out", an.out_dir, "Output directory");
  analyze->add_flag("--self-test", an.self_test, "Echo the closed-form certificate values");
  analyze->callback([&] { run_analyze(an); });

  BenchArgs be;
  CLI::App* bench = app.add_subcommand("bench", "Time predict_kernel against the direct solver");
  bench->add_option("--model", be.model_dir, "Model directory")->required();
  bench->add_option("--grid-list", be.grid_list, "Comma-separated grid sizes");
  bench->add_option("--samples", be.samples, "Profiles per grid size (>= 20)");
  bench->add_option("--reps", be.reps, "Benchmark repetitions");
  bench->add_option("--out", be.out_dir, "Output directory")->required();
  bench->callback([&] { run_bench(be); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const InvalidInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const backstep::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const backstep::ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const backstep::TrainingDivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const backstep::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
