#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace fbsde {

// Uniform grid on [t0, t_end]. node(n_steps) is forced to t_end exactly so
// repeated runs and refinements agree on the endpoint.
struct TimeGrid {
  double t0 = 0.0;
  double t_end = 1.0;
  int n_steps = 1;
  double dt = 1.0;

  int n_nodes() const { return n_steps + 1; }
  double node(int k) const {
    if (k == n_steps) return t_end;
    return t0 + k * dt;
  }
  double span() const { return t_end - t0; }
  bool same_as(const TimeGrid& o) const {
    return t0 == o.t0 && t_end == o.t_end && n_steps == o.n_steps;
  }
};

TimeGrid make_grid(double t0, double t_end, int n_steps);

// Discount exponent K and Hurst index H; H must lie strictly inside
// (1/2, 1), the regime where the phi_H kernel is integrable but singular.
struct WeightParams {
  double K = 0.0;
  double H = 0.75;
};

void validate_hurst(double H);

// phi_H(u, s) = H(2H-1)|u-s|^(2H-2); throws on the diagonal u == s where
// the kernel blows up (use the integrated cell masses instead).
double phi_h(double u, double s, double H);

// Exact integral of phi_H over the rectangle [a,b] x [c,d]. Valid for
// cells touching or straddling the diagonal: phi_H = -1/2 d^2/duds |u-s|^(2H)
// and |u-s|^(2H) is C^1 for H > 1/2, so the corner difference is exact.
double phi_h_cell_mass(double a, double b, double c, double d, double H);

// Exact integral of phi_H(u, t) du over [a, b] for fixed t (one-dimensional
// kernel mass used by the generator correction).
double phi_h_line_mass(double a, double b, double t, double H);

// Grid-indexed path ensemble: one (dim x n_nodes) matrix per path.
using Ensemble = std::vector<Eigen::MatrixXd>;

Ensemble single_path(const Eigen::VectorXd& values);

struct WeightedNorm {
  double value = 0.0;       // { mean_paths trapz |f(s) e^{Ks}|^2 ds }^(1/2)
  double tail_bound = 0.0;  // |f(t_end) e^{K t_end}|^2 / (2|K|), K < 0 only
  double horizon = 0.0;
};

// Monte Carlo average over paths of the trapezoidal quadrature of
// |f(s) e^{Ks}|^2, reported with the truncation horizon and a tail estimate.
WeightedNorm weighted_l2k_norm(const Ensemble& f, double K,
                               const TimeGrid& grid);

// Double quadrature of f(u) f(s) phi_H(u, s) for a deterministic scalar
// path f given at the nodes. Returns the double integral itself (no square
// root), following the displayed formula for the L^{2,H} quantity.
double l2h_norm(const Eigen::VectorXd& f, double H, const TimeGrid& grid);

}  // namespace fbsde
