#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "backstep/errors.hpp"
#include "backstep/grid.hpp"
#include "backstep/kernel_solver.hpp"
#include "backstep/simulator.hpp"

using namespace backstep;

namespace {

const auto kZeroSignal = [](double) { return 0.0; };

ReactionProfile constant_profile(double lam, std::size_t n) {
  return {UniformGrid1D(n), std::vector<double>(n, lam)};
}

double two_tone_signal(double t) {
  return 7.0 * std::sin(16.0 * M_PI * t) + 10.0 * std::cos(2.0 * M_PI * t);
}

}  // namespace

TEST(Simulator, HeatEquationDecaysAtPiSquared) {
  SimulationConfig cfg;
  cfg.T = 0.1;
  cfg.u0 = ic_sine(cfg.n_points);
  ReactionProfile lam{UniformGrid1D(cfg.n_points)};
  SimulationTrace tr = simulate_open_loop(lam, kZeroSignal, cfg);
  double ratio = tr.l2_norms.back() / tr.l2_norms.front();
  EXPECT_NEAR(ratio, std::exp(-0.1 * M_PI * M_PI), 1e-3 * ratio);
}

TEST(Simulator, TraceSamplingCoversEveryStep) {
  SimulationConfig cfg;
  cfg.T = 0.01;
  cfg.dt = 1e-3;
  cfg.n_points = 21;
  cfg.u0 = ic_sine(21);
  cfg.snapshot_stride = 4;
  ReactionProfile lam{UniformGrid1D(21)};
  SimulationTrace tr = simulate_open_loop(lam, kZeroSignal, cfg);
  ASSERT_EQ(tr.times.size(), 11u);
  EXPECT_EQ(tr.l2_norms.size(), 11u);
  EXPECT_EQ(tr.control.size(), 11u);
  EXPECT_TRUE(tr.err_norms.empty());
  EXPECT_DOUBLE_EQ(tr.times.front(), 0.0);
  EXPECT_NEAR(tr.times.back(), 0.01, 1e-15);
  // Snapshots at steps 0,4,8 plus nothing else.
  EXPECT_EQ(tr.snapshots.size(), 3u);
}

TEST(Simulator, CrankNicolsonIsSecondOrderInTime) {
  ReactionProfile lam = constant_profile(4.0, 101);
  auto run = [&](Stepper s, double dt) {
    SimulationConfig cfg;
    cfg.stepper = s;
    cfg.dt = dt;
    cfg.T = 0.05;
    cfg.u0 = ic_sine(cfg.n_points);
    return simulate_open_loop(lam, kZeroSignal, cfg).l2_norms.back();
  };
  for (Stepper s : {Stepper::crank_nicolson, Stepper::backward_euler}) {
    double n1 = run(s, 2e-3), n2 = run(s, 1e-3), n3 = run(s, 5e-4);
    double rate = (n1 - n2) / (n2 - n3);
    if (s == Stepper::crank_nicolson) {
      EXPECT_NEAR(rate, 4.0, 0.6);
    } else {
      EXPECT_NEAR(rate, 2.0, 0.3);
    }
  }
}

TEST(Simulator, ClosedLoopIsExactlyHomogeneous) {
  // Every update is linear, so doubling the initial state doubles the
  // trajectory bit-for-bit (scaling by 2 commutes with rounding).
  ReactionProfile lam = chebyshev_profile(20.0, 5.0, 101);
  KernelField k = solve_kernel_fd(lam, 101);
  SimulationConfig cfg;
  cfg.T = 0.02;
  cfg.u0 = ic_constant(10.0, 101);
  cfg.snapshot_stride = 100;
  SimulationTrace base = simulate_closed_loop(lam, k, cfg);
  for (double& v : cfg.u0) v *= 2.0;
  SimulationTrace twice = simulate_closed_loop(lam, k, cfg);
  ASSERT_EQ(base.snapshots.size(), twice.snapshots.size());
  for (std::size_t s = 0; s < base.snapshots.size(); ++s) {
    for (std::size_t i = 0; i < base.snapshots[s].size(); ++i) {
      EXPECT_DOUBLE_EQ(2.0 * base.snapshots[s][i], twice.snapshots[s][i]);
    }
  }
  for (std::size_t t = 0; t < base.control.size(); ++t) {
    EXPECT_DOUBLE_EQ(2.0 * base.control[t], twice.control[t]);
  }
}

TEST(Simulator, UnstableReactionGrowsOpenLoop) {
  SimulationConfig cfg;
  cfg.T = 0.3;
  cfg.u0 = ic_constant(10.0, cfg.n_points);
  ReactionProfile lam = chebyshev_profile(50.0, 5.0, cfg.n_points);
  SimulationTrace tr = simulate_open_loop(lam, kZeroSignal, cfg);
  EXPECT_GT(tr.l2_norms.back() / tr.l2_norms.front(), 10.0);
}

TEST(Simulator, BacksteppingFeedbackStabilizes) {
  SimulationConfig cfg;
  cfg.u0 = ic_constant(10.0, cfg.n_points);
  ReactionProfile lam = chebyshev_profile(50.0, 5.0, cfg.n_points);
  KernelField k = solve_kernel_fd(lam, cfg.n_points);
  SimulationTrace tr = simulate_closed_loop(lam, k, cfg);
  EXPECT_LT(tr.l2_norms.back() / tr.l2_norms.front(), 0.05);
  // The applied boundary value at t=0 is the feedback of the initial state.
  PdeState s0{UniformGrid1D(cfg.n_points), cfg.u0, 0.0};
  EXPECT_DOUBLE_EQ(tr.control.front(), full_state_control(k.last_row(), s0));
}

TEST(Simulator, FullStateControlIsKernelWeightedIntegral) {
  UniformGrid1D g(11);
  PdeState state{g, std::vector<double>(11, 0.0), 0.0};
  for (std::size_t i = 0; i < 11; ++i) state.u[i] = g.node(i);
  std::vector<double> ones(11, 1.0);
  EXPECT_DOUBLE_EQ(full_state_control(ones, state), trapezoid(state.u, g.h));
}

TEST(Simulator, TargetStateDecaysAtNearHeatRate) {
  SimulationConfig cfg;
  cfg.u0 = ic_constant(10.0, cfg.n_points);
  cfg.snapshot_stride = 1000;
  ReactionProfile lam = chebyshev_profile(50.0, 5.0, cfg.n_points);
  KernelField k = solve_kernel_fd(lam, cfg.n_points);
  SimulationTrace tr = simulate_closed_loop(lam, k, cfg);
  ASSERT_EQ(tr.snapshots.size(), 11u);
  std::vector<double> wn;
  for (const auto& snap : tr.snapshots) {
    PdeState s{UniformGrid1D(cfg.n_points), snap, 0.0};
    wn.push_back(l2_norm(backstepping_transform(s, k)));
  }
  double rate = std::log(wn[10] / wn[5]) / 0.5;
  EXPECT_LE(rate, -M_PI * M_PI + 0.5);
  EXPECT_GE(rate, -M_PI * M_PI - 0.5);
}

TEST(Simulator, ObserverWithMatchedStartTracksExactly) {
  SimulationConfig cfg;
  cfg.T = 0.05;
  cfg.u0 = ic_constant(10.0, cfg.n_points);
  ReactionProfile lam = chebyshev_profile(20.0, 5.0, cfg.n_points);
  KernelField k = solve_kernel_fd(lam, cfg.n_points);
  SimulationTrace tr = simulate_observer(lam, k, cfg, cfg.u0, two_tone_signal);
  double scale = l2_norm(cfg.u0, 0.01);
  for (double e : tr.err_norms) EXPECT_LE(e, 1e-8 * scale);
}

TEST(Simulator, ObserverErrorReducesToHeatEquation) {
  SimulationConfig cfg;
  cfg.T = 0.1;
  cfg.u0.assign(cfg.n_points, 0.0);
  ReactionProfile lam{UniformGrid1D(cfg.n_points)};
  KernelField kz{UniformGrid1D(cfg.n_points)};
  SimulationTrace tr = simulate_observer(lam, kz, cfg, ic_sine(cfg.n_points), kZeroSignal);
  double ratio = tr.err_norms.back() / tr.err_norms.front();
  EXPECT_NEAR(ratio, std::exp(-0.1 * M_PI * M_PI), 1e-3 * ratio);
}

TEST(Simulator, FluxInjectionDrivesObserverError) {
  SimulationConfig cfg;
  cfg.u0 = ic_constant(10.0, cfg.n_points);
  ReactionProfile lam = chebyshev_profile(20.0, 5.0, cfg.n_points);
  KernelField k = solve_kernel_fd(lam, cfg.n_points);
  SimulationTrace tr = simulate_observer(lam, k, cfg, ic_constant(20.0, cfg.n_points), two_tone_signal);
  EXPECT_NEAR(tr.err_norms.front(), 10.0, 0.1);
  EXPECT_LT(tr.err_norms.back() / tr.err_norms.front(), 1e-2);
  EXPECT_EQ(tr.est_norms.size(), tr.times.size());
}

TEST(Simulator, OutputFeedbackWithMatchedObserverEqualsFullState) {
  SimulationConfig cfg;
  cfg.T = 0.05;
  cfg.u0 = ic_constant(10.0, cfg.n_points);
  ReactionProfile lam = chebyshev_profile(50.0, 5.0, cfg.n_points);
  KernelField k = solve_kernel_fd(lam, cfg.n_points);
  SimulationTrace full = simulate_closed_loop(lam, k, cfg);
  SimulationTrace out = simulate_output_feedback(lam, k, cfg, cfg.u0);
  ASSERT_EQ(full.l2_norms.size(), out.l2_norms.size());
  double scale = l2_norm(cfg.u0, 0.01);
  for (std::size_t t = 0; t < full.l2_norms.size(); ++t) {
    EXPECT_NEAR(full.l2_norms[t], out.l2_norms[t], 1e-8 * scale);
    EXPECT_NEAR(full.control[t], out.control[t], 1e-8 * scale);
  }
}

TEST(Transforms, ZeroKernelIsIdentity) {
  UniformGrid1D g(51);
  KernelField kz{g};
  PdeState u{g, ic_sine(51), 0.0};
  PdeState w = backstepping_transform(u, kz);
  for (std::size_t i = 0; i < g.n; ++i) EXPECT_DOUBLE_EQ(w.u[i], u.u[i]);
}

TEST(Transforms, RoundTripRecoversState) {
  std::size_t n = 101;
  ReactionProfile lam = chebyshev_profile(5.0, 3.0, n);
  KernelField k = solve_kernel_fd(lam, n);
  KernelField l = inverse_kernel(k);
  PdeState u{UniformGrid1D(n), ic_sine(n), 0.0};
  for (std::size_t i = 1; i < n; ++i) u.u[i] += 0.3;
  PdeState w = backstepping_transform(u, k);
  PdeState back = backstepping_inverse_transform(w, l);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(back.u[i], u.u[i], 1e-4);
}

TEST(Simulator, RejectsIllFormedConfigurations) {
  ReactionProfile lam = constant_profile(1.0, 101);
  SimulationConfig cfg;
  cfg.u0 = ic_sine(101);

  SimulationConfig bad_dt = cfg;
  bad_dt.dt = 0.0;
  EXPECT_THROW(simulate_open_loop(lam, kZeroSignal, bad_dt), InvalidInputError);

  SimulationConfig bad_T = cfg;
  bad_T.T = 1e-6;  // shorter than one step
  EXPECT_THROW(simulate_open_loop(lam, kZeroSignal, bad_T), InvalidInputError);

  SimulationConfig bad_ic = cfg;
  bad_ic.u0 = std::vector<double>(50, 1.0);
  EXPECT_THROW(simulate_open_loop(lam, kZeroSignal, bad_ic), InvalidInputError);

  SimulationConfig nonzero_left = cfg;
  nonzero_left.u0[0] = 0.5;
  EXPECT_THROW(simulate_open_loop(lam, kZeroSignal, nonzero_left), InvalidInputError);

  KernelField coarse{UniformGrid1D(51)};
  EXPECT_THROW(simulate_closed_loop(lam, coarse, cfg), InvalidInputError);
  EXPECT_THROW(simulate_observer(lam, coarse, cfg, cfg.u0, kZeroSignal), InvalidInputError);
}

TEST(Simulator, CsvCarriesOneRowPerSample) {
  SimulationConfig cfg;
  cfg.T = 0.002;
  cfg.dt = 1e-3;
  cfg.n_points = 21;
  cfg.u0 = ic_sine(21);
  ReactionProfile lam{UniformGrid1D(21)};

  SimulationTrace open = simulate_open_loop(lam, kZeroSignal, cfg);
  std::istringstream csv(open.to_csv());
  std::string line;
  ASSERT_TRUE(std::getline(csv, line));
  EXPECT_EQ(line, "t,l2_norm,control");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, open.times.size());

  KernelField kz{UniformGrid1D(21)};
  SimulationTrace obs = simulate_observer(lam, kz, cfg, ic_sine(21), kZeroSignal);
  std::istringstream ocsv(obs.to_csv());
  ASSERT_TRUE(std::getline(ocsv, line));
  EXPECT_EQ(line, "t,l2_norm,control,err_norm");
}
