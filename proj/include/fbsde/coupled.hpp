#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "fbsde/backward.hpp"
#include "fbsde/drivers.hpp"
#include "fbsde/forward.hpp"

namespace fbsde {

// One point of the solution tuple theta = (x, y, z, r, f).
struct ThetaPoint {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::MatrixXd z;  // y_dim x d
  Eigen::VectorXd r;
  Eigen::MatrixXd f;  // y_dim x n_pairs (one zero column when no pairs)
};

using ThetaCoefficient =
    std::function<Eigen::VectorXd(double, const ThetaPoint&, int)>;

// Fully coupled system
//   dx = b(s, theta) ds + sum_i sigma_i(s, theta) dW_i + gamma(s) dB^H
//   dy = g(s, theta) ds + z dW + r dB^H + f . dM
//   x(t0) = psi(y(t0))
struct FBSDESpec {
  int x_dim = 1;
  int y_dim = 1;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, int)> psi;
  ThetaCoefficient b;
  std::vector<ThetaCoefficient> sigma;
  ThetaCoefficient g;
  std::function<Eigen::VectorXd(double)> gamma;
  double kappa_x = 0.0;
  double kappa_y = 0.0;
  double K = 0.0;
  // declared Lipschitz table, rows (psi, g, b, sigma) x cols (x, y, z, r, f)
  Eigen::MatrixXd lipschitz = Eigen::MatrixXd::Zero(4, 5);
};

struct ThetaProcess {
  TimeGrid grid;
  int x_dim = 1;
  int y_dim = 1;
  Ensemble x;   // path -> x_dim x n_nodes
  Ensemble y;   // path -> y_dim x n_nodes
  Ensemble z;   // path -> (y_dim * d) x n_nodes
  Ensemble r;   // path -> y_dim x n_nodes
  Ensemble fm;  // path -> (y_dim * max(1, n_pairs)) x n_nodes

  int n_paths() const { return static_cast<int>(x.size()); }
  ThetaPoint at(int path, int k, int d, int n_pairs) const;
  // allocation-free variant reusing the point's storage
  void read(ThetaPoint& pt, int path, int k, int d, int n_pairs) const;
};

ThetaProcess zero_theta(const FBSDESpec& spec, const DriverBundle& bundle);

// Squared weighted distance from the stability estimate's left side:
// E{ |dy(t0) e^{K t0}|^2 + int |dtheta e^{Ks}|^2 ds }.
double theta_distance_sq(const ThetaProcess& a, const ThetaProcess& b,
                         double K);

// Forcing (xi, rho = (phi, psi, eta)) added to the tau-family equations.
struct ThetaForcing {
  std::function<Eigen::VectorXd(int path)> xi;                 // x_dim
  std::function<Eigen::VectorXd(int path, int k)> phi;         // y_dim
  std::function<Eigen::VectorXd(int path, int k)> psi_drift;   // x_dim
  std::function<Eigen::VectorXd(int path, int k, int i)> eta;  // x_dim
};

// psi^tau = tau psi, g^tau = tau g - (1-tau) kappa_y y,
// b^tau = tau b - (1-tau) kappa_x x, sigma^tau = tau sigma,
// gamma^tau = tau gamma.
FBSDESpec build_tau_family(const FBSDESpec& spec, double tau);

// Decoupled tau = 0 system under the Corollary 5.1 admissibility
// (kappa_x > kappa_y, K strictly between them).
ThetaProcess solve_tau0(const FBSDESpec& spec, const ThetaForcing& forcing,
                        const DriverBundle& bundle,
                        const RegressionBasis& basis = {},
                        Exec exec = default_exec());

struct ContinuationStepReport {
  double tau_from = 0.0;
  double delta = 0.0;
  int outer_iterations = 0;
  int inner_sweeps = 0;
  double final_distance_sq = 0.0;
  double contraction_ratio = 0.0;  // mean ratio of successive sq distances
  double c5_hat = 0.0;             // contraction_ratio / delta^2
};

// One continuation advance tau0 -> tau0 + delta: repeatedly plugs the
// current iterate into the delta-scaled forcing increments and re-solves
// the level-tau0 system (realized as a damped Picard pass on the decoupled
// monotone structure, warm-started at the iterate).
std::pair<ThetaProcess, ContinuationStepReport> continuation_step(
    const FBSDESpec& spec, double tau0, double delta,
    const ThetaProcess& prior, const DriverBundle& bundle, double tol,
    int max_iter, const ThetaForcing& base_forcing = {},
    const RegressionBasis& basis = {}, Exec exec = default_exec());

struct ContinuationTrace {
  std::vector<ContinuationStepReport> steps;
  double delta0 = 0.0;         // 1 / (2 sqrt(max c5_hat))
  double final_residual = 0.0; // theta change of one plugged-in re-sweep
  bool reached_one = false;
};

std::pair<ThetaProcess, ContinuationTrace> solve_fbsde(
    const FBSDESpec& spec, const DriverBundle& bundle, double tol,
    const RegressionBasis& basis = {}, Exec exec = default_exec());

struct StabilityReport {
  double lhs = 0.0;    // weighted distance of the two solutions
  double rhs = 0.0;    // weighted size of the coefficient perturbation
  double ratio = 0.0;  // lhs / rhs, a witness for the constant C
};

StabilityReport coupled_stability_check(const FBSDESpec& spec,
                                        const FBSDESpec& perturbed,
                                        const ThetaProcess& theta,
                                        const ThetaProcess& theta_bar,
                                        const DriverBundle& bundle);

}  // namespace fbsde
