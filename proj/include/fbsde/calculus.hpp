#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "fbsde/drivers.hpp"
#include "fbsde/time_grid.hpp"

namespace fbsde {

// Smooth test function f(t, x, i0) with its supplied derivatives.
struct TestFunction {
  std::function<double(double, const Eigen::VectorXd&, int)> value;
  std::function<double(double, const Eigen::VectorXd&, int)> time_deriv;
  std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, int)> grad;
  std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&, int)> hess;
};

// Checks hessian symmetry and gradient-vs-central-difference consistency at
// the given sample points; throws on violation.
void check_test_function(
    const TestFunction& tf,
    const std::vector<std::tuple<double, Eigen::VectorXd, int>>& samples);

// Builds the derivative callables by central finite differences from the
// value alone (used by the CLI, where f arrives as an expression).
TestFunction finite_difference_test_function(
    std::function<double(double, const Eigen::VectorXd&, int)> value,
    double step = 1e-5);

struct GeneratorInputs {
  std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, int)> b;
  std::vector<std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, int)>>
      sigma;                                     // d diffusion columns
  std::function<Eigen::VectorXd(double)> gamma;  // deterministic, empty = 0
  GeneratorMatrix q;
  double hurst = 0.75;
  double t_origin = 0.0;       // history start of the fBm correction
  int correction_steps = 512;  // quadrature cells for the history integral
};

// Second-moment rate contributed by the fractional term at time t:
// 2 Sym(gamma(t) c(t)^T) with c(t) = H(2H-1) int_{t0}^t |u-t|^(2H-2) gamma(u) du,
// the time derivative of the fBm part of Cov(X(t)). The symmetric outer
// product keeps the object a matrix for vector states; it reduces to
// 2 gamma(t) c(t) in the scalar case and reproduces d/dt t^(2H) for
// gamma == 1.
Eigen::MatrixXd fbm_correction(const GeneratorInputs& gi, double t);

// Full generator: d/dt f + b . grad f + 1/2 tr(hess f A) + Q f, with
// A = sigma sigma^T + fbm_correction.
double generator_apply(const TestFunction& tf, const GeneratorInputs& gi,
                       double t, const Eigen::VectorXd& x, int i0);

// Two numerically meaningful readings of the fractional integral in the
// formula. `pathwise` treats it as a Young integral (left-endpoint sums, no
// correction term in the generator): the residual vanishes pathwise at rate
// dt^(2H-1). `wick_mean` keeps the correction term and estimates the
// divergence-type integral as the forward sum minus its predictable trace,
// which makes the ensemble mean of the residual vanish.
enum class FbmConvention { pathwise, wick_mean };

struct ItoResidualStats {
  double mean = 0.0;
  double std_error = 0.0;
  double rms = 0.0;
  int n_paths = 0;
};

ItoResidualStats ito_residual(const TestFunction& tf,
                              const GeneratorInputs& gi,
                              const DriverBundle& bundle,
                              const Ensemble& x_paths, double t1, double t2,
                              FbmConvention conv = FbmConvention::wick_mean,
                              Exec exec = default_exec());

}  // namespace fbsde
