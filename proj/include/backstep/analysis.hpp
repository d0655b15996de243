#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "backstep/grid.hpp"
#include "backstep/kernel_solver.hpp"
#include "backstep/operator_model.hpp"
#include "backstep/simulator.hpp"

namespace backstep {

struct StabilityReport {
  double lambda_bar = 0.0;
  double epsilon = 0.0;             // measured approximation accuracy (sum of three sups)
  double overshoot = 1.0;           // M(eps, lambda_bar)
  double delta_star = 0.0;          // perturbation budget at eps
  double epsilon_star = 0.0;        // largest eps with delta_star <= 1/2
  bool certified = false;           // epsilon < epsilon_star
  bool vacuous_bound = false;       // M overflowed; envelope trivially satisfied
  long envelope_violations = -1;    // -1 until certify_trace fills it

  std::string to_json() const;
};

// M(eps, lb) = (1 + lb e^{2 lb})(1 + lb e^{2 lb} + eps) e^{lb e^{2 lb} + eps}.
// Overflows to +inf beyond lb of a few units; callers should check
// vacuous_bound on the report rather than the raw value.
double overshoot_M(double eps, double lambda_bar);

// delta*(eps, lb) = 2 eps (1 + lb e^{2 lb} + eps) e^{lb e^{2 lb} + eps}.
// Exactly 0 at eps = 0 (the limit value; avoids 0 * inf at large lb).
double delta_star(double eps, double lambda_bar);

// Unique root of delta*(eps, lb) = 1/2, bisected to a relative width of
// 1e-12. The comparison runs in log form so the bracket survives the
// e^{lb e^{2 lb}} factor; the root itself underflows toward the smallest
// positive double once lb exceeds about 3, and the returned value is then
// that representable floor rather than exact zero.
double epsilon_star(double lambda_bar);

StabilityReport make_stability_report(double epsilon, double lambda_bar);

struct PerturbationFields {
  std::vector<double> delta_k0;  // 2 d/dx k_hat(x,x) + lambda(x), via -2 d/dx of the defect
  KernelField delta_k1;          // PDE functional of k_hat, via the defect; interior nodes only
  double k0_identity_gap = 0.0;  // sup | delta_k0 - (2 d/dx k_hat + lambda) |
  double k1_identity_gap = 0.0;  // sup | delta_k1 - (k_hat_xx - k_hat_yy - lambda k_hat) |
};

// Finite-difference perturbation fields of an approximate kernel against the
// exact one. Both fields are evaluated through the defect k - k_hat, and the
// gap to the direct evaluation on k_hat alone is returned; it equals the
// stencil residual of the exact kernel, O(h^2) for smooth lambda.
PerturbationFields perturbation_fields(const KernelField& k_hat, const KernelField& k,
                                       const ReactionProfile& lambda);

// Counts samples with norm(t) > M e^{-(t - t0)/2} norm(t0) (1 + 1e-9), where
// norm is the state l2 trace, or the observer error trace when
// use_err_norms is set.
StabilityReport certify_trace(const SimulationTrace& trace, StabilityReport report,
                              bool use_err_norms = false);

struct SpeedupReport {
  std::size_t n_points = 0;
  double solver_median_s = 0.0;
  double predict_median_s = 0.0;
  double ratio = 0.0;  // solver / predict; > 1 means inference is faster
  std::vector<double> solver_medians_rep;  // per-repetition medians
  std::vector<double> predict_medians_rep;
  double solver_cv = 0.0;  // coefficient of variation across repetitions
  double predict_cv = 0.0;

  std::string to_json() const;
};

// Median wall time of predict_kernel vs the direct solver on the same grid
// over the given profiles, after a warmup pass, repeated `repetitions` times.
// Requires at least 20 profiles so the medians are stable.
SpeedupReport speedup_benchmark(const DeepOperatorModel& model, const GoursatSolveOptions& options,
                                const std::vector<ReactionProfile>& lambdas, int repetitions = 3);

// Least-squares slope of log(time) against log(n): the empirical cost
// exponent of a timing series.
double fit_scaling_exponent(const std::vector<std::size_t>& ns, const std::vector<double>& times);

}  // namespace backstep
