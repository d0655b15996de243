#include "backstep/simulator.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <utility>

#include "backstep/errors.hpp"

namespace backstep {
namespace {

// Factored theta-scheme for u_t = u_xx + lambda u on the interior nodes with
// Dirichlet ends. Solves (I - theta dt A) u1 = (I + (1-theta) dt A) u0 + BC
// terms, A = tridiag(1,-2,1)/h^2 + diag(lambda).
class ImplicitStepper {
 public:
  ImplicitStepper(const ReactionProfile& lambda, double dt, Stepper stepper)
      : lam_(lambda.values),
        n_(lambda.grid.n),
        h_(lambda.grid.h),
        dt_(dt),
        theta_(stepper == Stepper::backward_euler ? 1.0 : 0.5) {
    if (dt <= 0.0) throw InvalidInputError("dt must be positive");
    const double r = dt_ / (h_ * h_);
    const std::size_t m = n_ - 2;
    diag_.resize(m);
    lower_.resize(m);
    upper_.resize(m);
    cprime_.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      diag_[i] = 1.0 - theta_ * (dt_ * lam_[i + 1] - 2.0 * r);
      lower_[i] = -theta_ * r;
      upper_[i] = -theta_ * r;
    }
    // Thomas factorization; the system is a fixed tridiagonal matrix, so the
    // forward-elimination coefficients are precomputed once.
    cprime_[0] = upper_[0] / diag_[0];
    for (std::size_t i = 1; i < m; ++i) {
      cprime_[i] = upper_[i] / (diag_[i] - lower_[i] * cprime_[i - 1]);
    }
  }

  // u's boundary entries carry the previous boundary value; U_now is imposed
  // at x = 1 for the new level (and both levels of the averaged flux term).
  std::vector<double> step(const std::vector<double>& u, double U_now) const {
    const double r = dt_ / (h_ * h_);
    const std::size_t m = n_ - 2;
    std::vector<double> rhs(m);
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t g = i + 1;
      double left = (i == 0) ? 0.0 : u[g - 1];
      double right = (i == m - 1) ? U_now : u[g + 1];
      rhs[i] = u[g] + (1.0 - theta_) * (r * (left - 2.0 * u[g] + right) + dt_ * lam_[g] * u[g]);
    }
    rhs[m - 1] += theta_ * r * U_now;
    // rhs[0] boundary term is zero (u(0) = 0).
    std::vector<double> out(n_);
    std::vector<double> d(m);
    d[0] = rhs[0] / diag_[0];
    for (std::size_t i = 1; i < m; ++i) {
      d[i] = (rhs[i] - lower_[i] * d[i - 1]) / (diag_[i] - lower_[i] * cprime_[i - 1]);
    }
    out[n_ - 1] = U_now;
    out[0] = 0.0;
    out[m] = d[m - 1];
    for (std::size_t i = m - 1; i-- > 0;) {
      out[i + 1] = d[i] - cprime_[i] * out[i + 2];
    }
    return out;
  }

  // Step with an additional source held constant across the step:
  // u_t = u_xx + lambda u + f.
  std::vector<double> step_with_source(const std::vector<double>& u, double U_now,
                                       const std::vector<double>& f) const {
    const double r = dt_ / (h_ * h_);
    const std::size_t m = n_ - 2;
    std::vector<double> rhs(m);
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t g = i + 1;
      double left = (i == 0) ? 0.0 : u[g - 1];
      double right = (i == m - 1) ? U_now : u[g + 1];
      rhs[i] = u[g] + (1.0 - theta_) * (r * (left - 2.0 * u[g] + right) + dt_ * lam_[g] * u[g]) +
               dt_ * f[g];
    }
    rhs[m - 1] += theta_ * r * U_now;
    std::vector<double> out(n_);
    std::vector<double> d(m);
    d[0] = rhs[0] / diag_[0];
    for (std::size_t i = 1; i < m; ++i) {
      d[i] = (rhs[i] - lower_[i] * d[i - 1]) / (diag_[i] - lower_[i] * cprime_[i - 1]);
    }
    out[n_ - 1] = U_now;
    out[0] = 0.0;
    out[m] = d[m - 1];
    for (std::size_t i = m - 1; i-- > 0;) {
      out[i + 1] = d[i] - cprime_[i] * out[i + 2];
    }
    return out;
  }

 private:
  std::vector<double> lam_;
  std::size_t n_;
  double h_, dt_, theta_;
  std::vector<double> diag_, lower_, upper_, cprime_;
};

void check_ic(const std::vector<double>& u0, std::size_t n) {
  if (u0.size() != n) throw InvalidInputError("initial condition length does not match grid");
  for (double v : u0) {
    if (!std::isfinite(v)) throw InvalidInputError("non-finite initial condition");
  }
  if (u0[0] != 0.0) throw InvalidInputError("initial condition must vanish at x = 0");
}

// One-sided second-order flux at x = 1: (3 u_N - 4 u_{N-1} + u_{N-2}) / (2h).
double boundary_flux(const std::vector<double>& u, double h) {
  std::size_t n = u.size();
  return (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
}

std::size_t step_count(const SimulationConfig& c) {
  auto steps = static_cast<std::size_t>(std::llround(c.T / c.dt));
  if (steps < 1) throw InvalidInputError("T must cover at least one step");
  return steps;
}

}  // namespace

std::vector<double> ic_constant(double value, std::size_t n_points) {
  std::vector<double> u(n_points, value);
  u[0] = 0.0;
  return u;
}

std::vector<double> ic_sine(std::size_t n_points) {
  UniformGrid1D g(n_points);
  std::vector<double> u(n_points);
  for (std::size_t i = 0; i < n_points; ++i) u[i] = std::sin(std::numbers::pi * g.node(i));
  return u;
}

PdeState step_plant(const PdeState& state, const ReactionProfile& lambda, double U_now,
                    double dt, Stepper stepper) {
  if (!(state.grid == lambda.grid)) throw InvalidInputError("state and profile grids differ");
  ImplicitStepper s(lambda, dt, stepper);
  return {state.grid, s.step(state.u, U_now), state.t + dt};
}

double full_state_control(const std::vector<double>& gain_row, const PdeState& state) {
  if (gain_row.size() != state.grid.n) throw InvalidInputError("gain row length does not match grid");
  std::vector<double> prod(gain_row.size());
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = gain_row[i] * state.u[i];
  return trapezoid(prod, state.grid.h);
}

namespace {

// Shared driver: evolve the plant (and optionally an estimator) with a
// caller-supplied control law.
SimulationTrace run(const ReactionProfile& lambda, const SimulationConfig& config,
                    const std::vector<double>* observer_ic, const std::vector<double>& gain_row,
                    const std::function<double(double, const std::vector<double>&,
                                               const std::vector<double>&)>& control_law) {
  UniformGrid1D grid(config.n_points);
  if (!(grid == lambda.grid)) throw InvalidInputError("config and profile grids differ");
  check_ic(config.u0, grid.n);
  const bool with_observer = observer_ic != nullptr;
  if (with_observer) check_ic(*observer_ic, grid.n);

  ImplicitStepper stepper(lambda, config.dt, config.stepper);
  std::vector<double> u = config.u0;
  std::vector<double> uh = with_observer ? *observer_ic : std::vector<double>{};
  const std::size_t steps = step_count(config);

  SimulationTrace trace;
  trace.snapshot_stride = config.snapshot_stride;
  trace.times.reserve(steps + 1);
  auto record = [&](std::size_t step_idx, double t, double U) {
    trace.times.push_back(t);
    trace.l2_norms.push_back(l2_norm(u, grid.h));
    trace.control.push_back(U);
    if (with_observer) {
      std::vector<double> err(grid.n);
      for (std::size_t i = 0; i < grid.n; ++i) err[i] = u[i] - uh[i];
      trace.err_norms.push_back(l2_norm(err, grid.h));
      trace.est_norms.push_back(l2_norm(uh, grid.h));
    }
    if (config.snapshot_stride > 0 && step_idx % config.snapshot_stride == 0) {
      trace.snapshots.push_back(u);
      if (with_observer) trace.est_snapshots.push_back(uh);
    }
  };

  for (std::size_t s = 0; s <= steps; ++s) {
    double t = static_cast<double>(s) * config.dt;
    double U = control_law(t, u, uh);
    record(s, t, U);
    if (s == steps) break;
    if (with_observer) {
      // Output injection k(1,x)[u_x(1) - uhat_x(1)]: the error system then
      // carries -k(1,x) e_x(1), which the transposed-kernel transformation
      // maps to the Dirichlet heat equation. The opposite sign is unstable.
      double flux_err = boundary_flux(u, grid.h) - boundary_flux(uh, grid.h);
      std::vector<double> inj(grid.n);
      for (std::size_t i = 0; i < grid.n; ++i) inj[i] = gain_row[i] * flux_err;
      std::vector<double> u_new = stepper.step(u, U);
      uh = stepper.step_with_source(uh, U, inj);
      u = std::move(u_new);
    } else {
      u = stepper.step(u, U);
    }
  }
  return trace;
}

}  // namespace

SimulationTrace simulate_open_loop(const ReactionProfile& lambda,
                                   const std::function<double(double)>& U_signal,
                                   const SimulationConfig& config) {
  return run(lambda, config, nullptr, {},
             [&](double t, const std::vector<double>&, const std::vector<double>&) {
               return U_signal(t);
             });
}

SimulationTrace simulate_closed_loop(const ReactionProfile& lambda, const KernelField& gain,
                                     const SimulationConfig& config) {
  if (gain.grid.n != config.n_points) throw InvalidInputError("gain and config grids differ");
  std::vector<double> row = gain.last_row();
  UniformGrid1D grid(config.n_points);
  return run(lambda, config, nullptr, {},
             [&](double, const std::vector<double>& u, const std::vector<double>&) {
               std::vector<double> prod(u.size());
               for (std::size_t i = 0; i < u.size(); ++i) prod[i] = row[i] * u[i];
               return trapezoid(prod, grid.h);
             });
}

SimulationTrace simulate_observer(const ReactionProfile& lambda, const KernelField& gain,
                                  const SimulationConfig& config,
                                  const std::vector<double>& observer_ic,
                                  const std::function<double(double)>& U_signal) {
  if (gain.grid.n != config.n_points) throw InvalidInputError("gain and config grids differ");
  std::vector<double> row = gain.last_row();
  return run(lambda, config, &observer_ic, row,
             [&](double t, const std::vector<double>&, const std::vector<double>&) {
               return U_signal(t);
             });
}

SimulationTrace simulate_output_feedback(const ReactionProfile& lambda, const KernelField& gain,
                                         const SimulationConfig& config,
                                         const std::vector<double>& observer_ic) {
  if (gain.grid.n != config.n_points) throw InvalidInputError("gain and config grids differ");
  std::vector<double> row = gain.last_row();
  UniformGrid1D grid(config.n_points);
  return run(lambda, config, &observer_ic, row,
             [&](double, const std::vector<double>&, const std::vector<double>& uh) {
               std::vector<double> prod(uh.size());
               for (std::size_t i = 0; i < uh.size(); ++i) prod[i] = row[i] * uh[i];
               return trapezoid(prod, grid.h);
             });
}

PdeState backstepping_transform(const PdeState& u, const KernelField& k) {
  if (!(u.grid == k.grid)) throw InvalidInputError("state and kernel grids differ");
  const std::size_t n = u.grid.n;
  const double h = u.grid.h;
  PdeState w{u.grid, std::vector<double>(n, 0.0), u.t};
  w.u[0] = u.u[0];
  for (std::size_t i = 1; i < n; ++i) {
    double integral = 0.0;
    for (std::size_t j = 0; j < i; ++j) {
      integral += 0.5 * h * (k.at(i, j) * u.u[j] + k.at(i, j + 1) * u.u[j + 1]);
    }
    w.u[i] = u.u[i] - integral;
  }
  return w;
}

PdeState backstepping_inverse_transform(const PdeState& w, const KernelField& l) {
  if (!(w.grid == l.grid)) throw InvalidInputError("state and kernel grids differ");
  const std::size_t n = w.grid.n;
  const double h = w.grid.h;
  PdeState u{w.grid, std::vector<double>(n, 0.0), w.t};
  u.u[0] = w.u[0];
  for (std::size_t i = 1; i < n; ++i) {
    double integral = 0.0;
    for (std::size_t j = 0; j < i; ++j) {
      integral += 0.5 * h * (l.at(i, j) * w.u[j] + l.at(i, j + 1) * w.u[j + 1]);
    }
    u.u[i] = w.u[i] + integral;
  }
  return u;
}

std::string SimulationTrace::to_csv() const {
  std::string out;
  const bool with_err = !err_norms.empty();
  out += with_err ? "t,l2_norm,control,err_norm\n" : "t,l2_norm,control\n";
  char buf[128];
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (with_err) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", times[i], l2_norms[i],
                    control[i], err_norms[i]);
    } else {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", times[i], l2_norms[i], control[i]);
    }
    out += buf;
  }
  return out;
}

}  // namespace backstep
