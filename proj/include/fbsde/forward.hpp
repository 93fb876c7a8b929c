#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fbsde/drivers.hpp"
#include "fbsde/time_grid.hpp"

namespace fbsde {

using Coefficient =
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, int)>;

// dx = b(s, x, regime) ds + sum_i sigma_i(s, x, regime) dW_i + gamma(s) dB^H
struct ForwardSpec {
  int state_dim = 1;
  Coefficient b;
  std::vector<Coefficient> sigma;
  std::function<Eigen::VectorXd(double)> gamma;  // deterministic, empty = 0
  std::function<Eigen::VectorXd(int)> x0;        // per-path initial draw
  // declared Assumption A constants
  double kappa_x = 0.0;
  double l_bx = 0.0;
  double l_sx = 0.0;
  double K = 0.0;
};

std::function<Eigen::VectorXd(int)> fixed_x0(const Eigen::VectorXd& v);
std::function<Eigen::VectorXd(int)> fixed_x0(double v);

struct PathSolution {
  TimeGrid grid;
  Ensemble x;  // path -> state_dim x n_nodes
  std::string method;
};

// Per-path additive terms; the coupling channel used by the continuation
// solver, where forcings are built from a previously solved ensemble.
struct PathTerms {
  std::function<Eigen::VectorXd(int path, int k)> drift;
  std::function<Eigen::VectorXd(int path, int k, int i)> diffusion;
  std::function<Eigen::VectorXd(int path)> x0_override;
};

PathSolution euler_solve(const ForwardSpec& spec, const DriverBundle& bundle,
                         Exec exec = default_exec());

PathSolution euler_solve(const ForwardSpec& spec, const DriverBundle& bundle,
                         const PathTerms& extra, Exec exec = default_exec());

struct ContractionReport {
  double theoretical_factor = 0.0;
  std::vector<double> distances;  // sup_t e^{-a t} E int_0^t |dx|^2, per iterate
  std::vector<double> ratios;
  int iterations = 0;
  bool converged = false;
};

// Iterates the integral map behind the fixed-point construction, starting
// from the constant path x == x0. Refuses when the contraction factor
// [1 - e^{-aT}] 2 L^2 (T+1) / a is not < 1 (raise `a`).
std::pair<PathSolution, ContractionReport> picard_solve(
    const ForwardSpec& spec, const DriverBundle& bundle, double T, double a,
    double tol, int max_iter, Exec exec = default_exec());

struct AssumptionAProbe {
  double l_bx_hat = 0.0;
  double l_sx_hat = 0.0;
  double kappa_x_hat = 0.0;  // tightest monotonicity constant observed
  int violations_lipschitz = 0;
  int violations_monotonicity = 0;
  int samples = 0;
};

AssumptionAProbe probe_assumption_a(const ForwardSpec& spec, int sample_count,
                                    const Eigen::VectorXd& box_lo,
                                    const Eigen::VectorXd& box_hi,
                                    double t_lo, double t_hi, int n_regimes,
                                    std::uint64_t seed);

struct DecayDiagnostic {
  std::vector<double> weighted_second_moment;  // E|x(u)|^2 e^{2Ku} at nodes
  double tail_slope = 0.0;                     // fitted d/du log curve
  bool decays = false;
};

DecayDiagnostic decay_diagnostic(const PathSolution& sol, double K);

struct InequalityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  double fbm_constant = 0.0;
  bool pass = false;
};

// Single-spec estimate: weighted-energy bound with explicit constants.
InequalityReport apriori_check(const ForwardSpec& spec,
                               const PathSolution& sol,
                               const DriverBundle& bundle, double K,
                               double mu);

// Stability estimate between two coefficient sets solved on one bundle.
InequalityReport apriori_check(const ForwardSpec& spec,
                               const ForwardSpec& other,
                               const PathSolution& sol,
                               const PathSolution& other_sol,
                               const DriverBundle& bundle, double K,
                               double mu);

}  // namespace fbsde
