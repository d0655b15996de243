#include "backstep/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "backstep/errors.hpp"

namespace backstep {

namespace {

double exp_factor(double lambda_bar) { return lambda_bar * std::exp(2.0 * lambda_bar); }

void check_nonnegative(double eps, double lambda_bar) {
  if (!(eps >= 0.0)) throw InvalidInputError("epsilon must be nonnegative");
  if (!(lambda_bar >= 0.0)) throw InvalidInputError("lambda_bar must be nonnegative");
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double coeff_of_variation(const std::vector<double>& v) {
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (mean == 0.0) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size())) / mean;
}

}  // namespace

double overshoot_M(double eps, double lambda_bar) {
  check_nonnegative(eps, lambda_bar);
  double a = exp_factor(lambda_bar);
  return (1.0 + a) * (1.0 + a + eps) * std::exp(a + eps);
}

double delta_star(double eps, double lambda_bar) {
  check_nonnegative(eps, lambda_bar);
  if (eps == 0.0) return 0.0;
  double a = exp_factor(lambda_bar);
  return 2.0 * eps * (1.0 + a + eps) * std::exp(a + eps);
}

double epsilon_star(double lambda_bar) {
  if (!(lambda_bar >= 0.0)) throw InvalidInputError("lambda_bar must be nonnegative");
  double a = exp_factor(lambda_bar);
  // log delta*(eps) - log(1/2); strictly increasing in eps, -inf at eps -> 0.
  auto g = [a](double eps) {
    return std::log(2.0 * eps) + std::log1p(a + eps) + (a + eps) + std::log(2.0);
  };
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 1200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (g(mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-12 * hi) break;
  }
  return hi;
}

StabilityReport make_stability_report(double epsilon, double lambda_bar) {
  StabilityReport rep;
  rep.lambda_bar = lambda_bar;
  rep.epsilon = epsilon;
  rep.overshoot = overshoot_M(epsilon, lambda_bar);
  rep.delta_star = delta_star(epsilon, lambda_bar);
  rep.epsilon_star = epsilon_star(lambda_bar);
  rep.certified = epsilon < rep.epsilon_star;
  rep.vacuous_bound = !std::isfinite(rep.overshoot);
  return rep;
}

std::string StabilityReport::to_json() const {
  nlohmann::ordered_json j;
  j["lambda_bar"] = lambda_bar;
  j["epsilon"] = epsilon;
  j["overshoot"] = overshoot;
  j["delta_star"] = delta_star;
  j["epsilon_star"] = epsilon_star;
  j["certified"] = certified;
  j["vacuous_bound"] = vacuous_bound;
  j["envelope_violations"] = envelope_violations;
  return j.dump(2);
}

PerturbationFields perturbation_fields(const KernelField& k_hat, const KernelField& k,
                                       const ReactionProfile& lambda) {
  if (!(k_hat.grid == k.grid) || !(k.grid == lambda.grid)) {
    throw InvalidInputError("perturbation_fields requires a shared grid");
  }
  const std::size_t n = k.grid.n;
  const double h = k.grid.h;

  PerturbationFields out;
  out.delta_k0.assign(n, 0.0);
  out.delta_k1 = KernelField(k.grid);

  // Defect and approximation on the diagonal, differentiated with the same
  // stencil as operator_error so the two paths agree to the bit.
  std::vector<double> g(n), ghat(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = k.at(i, i) - k_hat.at(i, i);
    ghat[i] = k_hat.at(i, i);
  }
  auto ddx = [&](const std::vector<double>& f, std::size_t i) {
    if (i == 0) return (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    if (i == n - 1) return (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    return (f[i + 1] - f[i - 1]) / (2.0 * h);
  };
  for (std::size_t i = 0; i < n; ++i) {
    out.delta_k0[i] = -(2.0 * ddx(g, i));
    double direct = 2.0 * ddx(ghat, i) + lambda.values[i];
    out.k0_identity_gap = std::max(out.k0_identity_gap, std::abs(out.delta_k0[i] - direct));
  }

  auto stencil = [&](const KernelField& f, std::size_t i, std::size_t j) {
    double fxx = f.at(i + 1, j) - 2.0 * f.at(i, j) + f.at(i - 1, j);
    double fyy = f.at(i, j + 1) - 2.0 * f.at(i, j) + f.at(i, j - 1);
    return (fxx - fyy) / (h * h) - lambda.values[j] * f.at(i, j);
  };
  KernelField defect(k.grid);
  for (std::size_t idx = 0; idx < defect.values.size(); ++idx) {
    defect.values[idx] = k.values[idx] - k_hat.values[idx];
  }
  for (std::size_t i = 2; i + 1 < n; ++i) {
    for (std::size_t j = 1; j + 1 < i; ++j) {
      out.delta_k1.at(i, j) = -stencil(defect, i, j);
      double direct = stencil(k_hat, i, j);
      out.k1_identity_gap =
          std::max(out.k1_identity_gap, std::abs(out.delta_k1.at(i, j) - direct));
    }
  }
  return out;
}

StabilityReport certify_trace(const SimulationTrace& trace, StabilityReport report,
                              bool use_err_norms) {
  if (trace.times.empty()) throw InvalidInputError("empty trace");
  const std::vector<double>& norms = use_err_norms ? trace.err_norms : trace.l2_norms;
  if (norms.size() != trace.times.size()) {
    throw InvalidInputError("trace norm series does not match its time series");
  }
  const double t0 = trace.times.front();
  const double n0 = norms.front();
  long violations = 0;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    double envelope =
        report.overshoot * std::exp(-0.5 * (trace.times[i] - t0)) * n0 * (1.0 + 1e-9);
    if (norms[i] > envelope) ++violations;
  }
  report.envelope_violations = violations;
  return report;
}

std::string SpeedupReport::to_json() const {
  nlohmann::ordered_json j;
  j["n_points"] = n_points;
  j["solver_median_s"] = solver_median_s;
  j["predict_median_s"] = predict_median_s;
  j["ratio"] = ratio;
  j["solver_medians_rep"] = solver_medians_rep;
  j["predict_medians_rep"] = predict_medians_rep;
  j["solver_cv"] = solver_cv;
  j["predict_cv"] = predict_cv;
  return j.dump(2);
}

SpeedupReport speedup_benchmark(const DeepOperatorModel& model, const GoursatSolveOptions& options,
                                const std::vector<ReactionProfile>& lambdas, int repetitions) {
  if (lambdas.size() < 20) throw InvalidInputError("benchmark needs at least 20 profiles");
  if (repetitions < 1) throw InvalidInputError("repetitions must be positive");

  using clock = std::chrono::steady_clock;
  volatile double sink = 0.0;

  // Warmup pass touches both code paths so allocator and cache effects do
  // not land on the first timed sample.
  sink = sink + solve_kernel(lambdas[0], options).values.back();
  sink = sink + predict_kernel(model, lambdas[0], options.n_points).values.back();

  SpeedupReport rep;
  rep.n_points = options.n_points;
  for (int r = 0; r < repetitions; ++r) {
    std::vector<double> ts, tp;
    ts.reserve(lambdas.size());
    tp.reserve(lambdas.size());
    for (const ReactionProfile& lam : lambdas) {
      auto a = clock::now();
      KernelField ks = solve_kernel(lam, options);
      auto b = clock::now();
      sink = sink + ks.values.back();
      ts.push_back(std::chrono::duration<double>(b - a).count());

      a = clock::now();
      KernelField kp = predict_kernel(model, lam, options.n_points);
      b = clock::now();
      sink = sink + kp.values.back();
      tp.push_back(std::chrono::duration<double>(b - a).count());
    }
    rep.solver_medians_rep.push_back(median_of(ts));
    rep.predict_medians_rep.push_back(median_of(tp));
  }
  rep.solver_median_s = median_of(rep.solver_medians_rep);
  rep.predict_median_s = median_of(rep.predict_medians_rep);
  rep.ratio = rep.solver_median_s / rep.predict_median_s;
  rep.solver_cv = coeff_of_variation(rep.solver_medians_rep);
  rep.predict_cv = coeff_of_variation(rep.predict_medians_rep);
  return rep;
}

double fit_scaling_exponent(const std::vector<std::size_t>& ns, const std::vector<double>& times) {
  if (ns.size() != times.size() || ns.size() < 2) {
    throw InvalidInputError("scaling fit needs matching series of at least two sizes");
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double m = static_cast<double>(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) {
    double x = std::log(static_cast<double>(ns[i]));
    double y = std::log(times[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace backstep
