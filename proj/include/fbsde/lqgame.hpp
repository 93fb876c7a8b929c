#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "fbsde/coupled.hpp"
#include "fbsde/drivers.hpp"

namespace fbsde {

using MatrixCoefficient = std::function<Eigen::MatrixXd(double, int)>;

// Two-player zero-sum LQ data. All matrix coefficients are callables over
// (time, regime); the fractional coefficient is renamed Gamma_fbm to avoid
// the clash with the Hurst index.
struct LQProblem {
  int n = 1;   // state dimension
  int m1 = 1;  // player-1 control dimension
  int m2 = 1;  // player-2 control dimension
  int d = 1;   // Brownian dimension
  MatrixCoefficient A;
  MatrixCoefficient B1, B2;
  std::vector<MatrixCoefficient> C;        // d entries, n x n
  std::vector<MatrixCoefficient> D1, D2;   // d entries, n x m1 / n x m2
  std::function<Eigen::VectorXd(double)> Gamma_fbm;  // n
  MatrixCoefficient Q;
  MatrixCoefficient S1, S2;                // m1 x n, m2 x n
  MatrixCoefficient R11, R12, R21, R22;
  double K = 0.0;
  double hurst = 0.75;
  double t0 = 0.0;
  Eigen::VectorXd x0;
  GeneratorMatrix gen;
  int start_regime = 0;

  int mu() const { return m1 + m2; }
  Eigen::MatrixXd B(double t, int i0) const;   // n x (m1+m2)
  Eigen::MatrixXd Di(double t, int i0, int i) const;
  Eigen::MatrixXd S(double t, int i0) const;   // (m1+m2) x n
  Eigen::MatrixXd R(double t, int i0) const;   // block 2x2
  Eigen::MatrixXd Pi(double t, int i0) const;  // full quadratic form
};

// Probe set: (time, regime) pairs at which the esssup-style quantities are
// evaluated.
std::vector<std::pair<double, int>> default_probes(const LQProblem& prob,
                                                   double t_end,
                                                   int n_times = 33);

// kappa_x = -1/2 max over probes of lambda_max(A + A^T)
double compute_kappa_x(const LQProblem& prob,
                       const std::vector<std::pair<double, int>>& probes);

// K_max = kappa_x - ||C||^2 / 2; throws when prob.K is not below it.
double admissible_k_bound(const LQProblem& prob, double kappa_x,
                          const std::vector<std::pair<double, int>>& probes);

struct AssumptionDReport {
  bool zero_sum_pattern = false;  // R11 > 0, R22 < 0, blocks PSD/NSD
  bool literal_r_pos = false;     // the displayed R > 0, kept informational
  double min_r11_eig = 0.0;
  double max_r22_eig = 0.0;
  double min_block1_eig = 0.0;
  double max_block2_eig = 0.0;
};

AssumptionDReport check_assumption_d(
    const LQProblem& prob, const std::vector<std::pair<double, int>>& probes);

using ControlFn = std::function<Eigen::VectorXd(int path, int k)>;

ControlFn deterministic_control(std::function<Eigen::VectorXd(double)> u,
                                const TimeGrid& grid);
ControlFn zero_control(int dim);
ControlFn ensemble_control(const Ensemble& u);

struct CostEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// Solves the controlled state equation and integrates the discounted
// quadratic form by Monte Carlo.
CostEstimate evaluate_cost(const LQProblem& prob, const ControlFn& u1,
                           const ControlFn& u2, const DriverBundle& bundle,
                           Exec exec = default_exec());

// Hamiltonian system obtained by substituting the stationarity control into
// the state and adjoint equations.
FBSDESpec assemble_coupled_system(const LQProblem& prob);

struct GameSolution {
  ThetaProcess theta;  // x*, (y*, z*, r*, f*)
  Ensemble u1, u2;
  double value = 0.0;
  double value_std_error = 0.0;
  double stationarity = 0.0;
  AssumptionDReport assumption_d;
  ContinuationTrace trace;
};

struct GameSolveOptions {
  bool enforce_pattern = true;  // require the zero-sum pattern up front
  RegressionBasis basis;
};

GameSolution solve_game(const LQProblem& prob, const DriverBundle& bundle,
                        double tol, const GameSolveOptions& opts = {},
                        Exec exec = default_exec());

// Weighted L^{2,K} norm of B^T y + D^T z + S^T x + R u over the ensemble.
double stationarity_residual(const LQProblem& prob, const Ensemble& u,
                             const Ensemble& x, const Ensemble& y,
                             const Ensemble& z, const DriverBundle& bundle);

struct SaddleCheckReport {
  int perturbations = 0;
  int violations = 0;
  double max_first_order = 0.0;   // largest |Gateaux first-order term|
  bool second_order_signs_ok = true;
};

SaddleCheckReport saddle_check(const LQProblem& prob, const GameSolution& sol,
                               int n_perturbations,
                               const std::vector<double>& eps_list,
                               const DriverBundle& bundle, std::uint64_t seed,
                               Exec exec = default_exec());

struct CrossTermReduction {
  LQProblem transformed;  // S = 0, Q and A, C absorbed
  // u = u_tilde - R^{-1} S x and back
  std::function<Eigen::MatrixXd(double, int)> gain;  // R^{-1} S
};

CrossTermReduction cross_term_reduce(const LQProblem& prob);

}  // namespace fbsde
