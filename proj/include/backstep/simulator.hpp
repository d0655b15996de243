#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "backstep/grid.hpp"

namespace backstep {

enum class Stepper { backward_euler, crank_nicolson };

struct SimulationConfig {
  std::size_t n_points = 101;
  double dt = 1e-4;
  double T = 1.0;
  Stepper stepper = Stepper::crank_nicolson;
  std::vector<double> u0;          // initial condition; u0[0] must be 0
  std::size_t snapshot_stride = 0; // 0 = no snapshots
};

// Named initial conditions: constant 10 (clamped to 0 at x=0) and sin(pi x).
std::vector<double> ic_constant(double value, std::size_t n_points);
std::vector<double> ic_sine(std::size_t n_points);

struct SimulationTrace {
  std::vector<double> times;
  std::vector<double> l2_norms;
  std::vector<double> control;            // U(t) applied at each sample
  std::vector<double> err_norms;          // observer runs: ||u - u_hat||
  std::vector<double> est_norms;          // observer runs: ||u_hat||
  std::size_t snapshot_stride = 0;
  std::vector<std::vector<double>> snapshots;      // plant states
  std::vector<std::vector<double>> est_snapshots;  // observer states (observer runs)

  // CSV with header t,l2_norm,control[,err_norm], one row per sample.
  std::string to_csv() const;
};

// One implicit step of u_t = u_xx + lambda u with u(0)=0, u(1)=U_now. The
// boundary input is held at U_now across the step.
PdeState step_plant(const PdeState& state, const ReactionProfile& lambda, double U_now,
                    double dt, Stepper stepper);

// U(t) = int_0^1 gain_row(y) u(y,t) dy.
double full_state_control(const std::vector<double>& gain_row, const PdeState& state);

SimulationTrace simulate_open_loop(const ReactionProfile& lambda,
                                   const std::function<double(double)>& U_signal,
                                   const SimulationConfig& config);

// Feedback U = int k(1,y) u(y) dy evaluated from the state at each step start.
SimulationTrace simulate_closed_loop(const ReactionProfile& lambda, const KernelField& gain,
                                     const SimulationConfig& config);

// Plant driven by U_signal plus an estimator copying the plant and injecting
// the boundary flux mismatch u_x(1) - u_hat_x(1) through the gain k(1,x).
// config.u0 is the plant state; observer_ic the estimator's.
SimulationTrace simulate_observer(const ReactionProfile& lambda, const KernelField& gain,
                                  const SimulationConfig& config,
                                  const std::vector<double>& observer_ic,
                                  const std::function<double(double)>& U_signal);

// Observer-based feedback U = int k(1,y) u_hat(y) dy; no certificate attached.
SimulationTrace simulate_output_feedback(const ReactionProfile& lambda, const KernelField& gain,
                                         const SimulationConfig& config,
                                         const std::vector<double>& observer_ic);

// w(x) = u(x) - int_0^x k(x,y) u(y) dy.
PdeState backstepping_transform(const PdeState& u, const KernelField& k);
// u(x) = w(x) + int_0^x l(x,y) w(y) dy, with l the inverse kernel.
PdeState backstepping_inverse_transform(const PdeState& w, const KernelField& l);

}  // namespace backstep
