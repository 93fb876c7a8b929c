#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "fbsde/drivers.hpp"
#include "fbsde/time_grid.hpp"

namespace fbsde {

// Driver g(s, y, z, r, f, regime). z carries d columns, f one column per
// ordered regime pair.
using BackwardDriver = std::function<Eigen::VectorXd(
    double, const Eigen::VectorXd&, const Eigen::MatrixXd&,
    const Eigen::VectorXd&, const Eigen::MatrixXd&, int)>;

// Optional affine decomposition g = c0 + Ay y + sum_i Azi z_i + Ar r +
// sum_p Afp f_p used to cross-check the `linear` flag.
struct AffineDriver {
  std::function<Eigen::VectorXd(double, int)> c0;
  std::function<Eigen::MatrixXd(double, int)> Ay;
  std::function<Eigen::MatrixXd(double, int, int)> Az;  // (t, i0, which i)
  std::function<Eigen::MatrixXd(double, int)> Ar;
  std::function<Eigen::MatrixXd(double, int, int)> Af;  // (t, i0, which pair)
};

struct BackwardSpec {
  int y_dim = 1;
  BackwardDriver g;
  double l_gy = 0.0, l_gz = 0.0, l_gr = 0.0, l_gf = 0.0;
  double L = 0.0;  // monotonicity constant of the Lemma 4.2 regime
  double K = 0.0;
  bool linear = false;
  std::optional<AffineDriver> affine;
};

// Probes g at random points against the affine decomposition (1e-10).
void validate_linearity(const BackwardSpec& spec, int d, int n_pairs,
                        std::uint64_t seed);

// Conditional expectations are estimated by least-squares projection on
// polynomials of the registered state features times regime indicators.
struct RegressionBasis {
  std::function<Eigen::VectorXd(int path, int k)> features;  // empty: none
  int n_features = 0;
  int degree = 2;
  bool strict_rank = false;  // throw instead of rank-truncating
};

struct BackwardSolution {
  TimeGrid grid;
  int y_dim = 1;
  Ensemble y;   // path -> y_dim x n_nodes
  Ensemble z;   // path -> (y_dim * d) x n_nodes, z_i stacked
  Ensemble r;   // path -> y_dim x n_nodes
  Ensemble fm;  // path -> (y_dim * n_pairs) x n_nodes
  double truncation_level = 0.0;

  Eigen::MatrixXd z_at(int path, int k, int d) const;
  Eigen::MatrixXd f_at(int path, int k, int n_pairs) const;
};

BackwardDriver truncate_driver(const BackwardDriver& g, double n);

// Per-path additive drift, the coupling channel of the continuation solver.
using PathDrift = std::function<Eigen::VectorXd(int path, int k)>;

// Backward sweep from y(n) = 0 with one implicit fixed-point pass in y;
// (z, r, f) extracted by regressing the martingale part of y_{k+1} on the
// driver increments over the basis.
BackwardSolution solve_truncated(const BackwardSpec& spec,
                                 const DriverBundle& bundle, double n,
                                 const RegressionBasis& basis = {},
                                 Exec exec = default_exec());

BackwardSolution solve_truncated(const BackwardSpec& spec,
                                 const DriverBundle& bundle, double n,
                                 const RegressionBasis& basis,
                                 const PathDrift& extra_drift,
                                 Exec exec = default_exec());

struct CauchyReport {
  std::vector<double> levels;
  std::vector<double> distances;  // ||y_n - y_{n'}||_{L^{2,K}}
  bool converged = false;
};

// Solves at increasing truncation levels until the weighted distance
// between consecutive solutions drops below tol. Requires K > 0.
std::pair<BackwardSolution, CauchyReport> solve_infinite(
    const BackwardSpec& spec, const DriverBundle& bundle, double tol,
    const std::vector<double>& n_schedule, const RegressionBasis& basis = {},
    Exec exec = default_exec());

struct BsdeInequalityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  double fbm_constant = 0.0;
  bool pass = false;
};

BsdeInequalityReport bsde_estimate_check(const BackwardSpec& spec,
                                         const BackwardSolution& sol,
                                         const DriverBundle& bundle,
                                         double mu);

BsdeInequalityReport bsde_estimate_check(const BackwardSpec& spec,
                                         const BackwardSpec& other,
                                         const BackwardSolution& sol,
                                         const BackwardSolution& other_sol,
                                         const DriverBundle& bundle,
                                         double mu);

}  // namespace fbsde
