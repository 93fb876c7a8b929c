#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fbsde/calculus.hpp"
#include "fbsde/forward.hpp"

using namespace fbsde;

namespace {

TestFunction quadratic_tf() {
  TestFunction tf;
  tf.value = [](double, const Eigen::VectorXd& x, int) {
    return x.squaredNorm();
  };
  tf.time_deriv = [](double, const Eigen::VectorXd&, int) { return 0.0; };
  tf.grad = [](double, const Eigen::VectorXd& x, int) {
    return (2.0 * x).eval();
  };
  tf.hess = [](double, const Eigen::VectorXd& x, int) {
    return (2.0 * Eigen::MatrixXd::Identity(x.size(), x.size())).eval();
  };
  return tf;
}

TestFunction linear_tf() {
  TestFunction tf;
  tf.value = [](double, const Eigen::VectorXd& x, int) { return x[0]; };
  tf.time_deriv = [](double, const Eigen::VectorXd&, int) { return 0.0; };
  tf.grad = [](double, const Eigen::VectorXd& x, int) {
    return Eigen::VectorXd::Ones(x.size()).eval();
  };
  tf.hess = [](double, const Eigen::VectorXd& x, int) {
    return Eigen::MatrixXd::Zero(x.size(), x.size()).eval();
  };
  return tf;
}

TestFunction regime_tf() {
  TestFunction tf;
  tf.value = [](double, const Eigen::VectorXd&, int i0) {
    return static_cast<double>(i0 + 1);
  };
  tf.time_deriv = [](double, const Eigen::VectorXd&, int) { return 0.0; };
  tf.grad = [](double, const Eigen::VectorXd& x, int) {
    return Eigen::VectorXd::Zero(x.size()).eval();
  };
  tf.hess = [](double, const Eigen::VectorXd& x, int) {
    return Eigen::MatrixXd::Zero(x.size(), x.size()).eval();
  };
  return tf;
}

Coefficient constant_coeff(double v) {
  return [v](double, const Eigen::VectorXd& x, int) {
    return (v * Eigen::VectorXd::Ones(x.size())).eval();
  };
}

GeneratorMatrix trivial_chain() {
  Eigen::MatrixXd q(1, 1);
  q << 0.0;
  return validate_generator(q);
}

GeneratorMatrix two_state_chain() {
  Eigen::MatrixXd q(2, 2);
  q << -1.0, 1.0, 1.0, -1.0;
  return validate_generator(q);
}

double fitted_order(const std::vector<double>& dts,
                    const std::vector<double>& errs) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = static_cast<int>(dts.size());
  for (int i = 0; i < n; ++i) {
    double x = std::log(dts[i]), y = std::log(std::max(errs[i], 1e-300));
    sx += x; sy += y; sxx += x * x; sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("generator_apply: drift and diffusion terms") {
  auto tf = quadratic_tf();
  GeneratorInputs gi;
  gi.b = [](double, const Eigen::VectorXd& x, int) { return (-x).eval(); };
  gi.sigma = {constant_coeff(1.0)};
  gi.q = trivial_chain();
  Eigen::VectorXd x(1);
  for (double xv : {-1.5, 0.0, 0.7, 2.0}) {
    x[0] = xv;
    // b.grad f = -2x^2, 1/2 tr(2 * 1) = 1
    CHECK(generator_apply(tf, gi, 0.3, x, 0) ==
          doctest::Approx(-2.0 * xv * xv + 1.0).epsilon(1e-12));
  }
}

TEST_CASE("generator_apply: fractional correction reproduces d/dt t^{2H}") {
  auto tf = quadratic_tf();
  GeneratorInputs gi;
  gi.gamma = [](double) { return Eigen::VectorXd::Ones(1).eval(); };
  gi.hurst = 0.75;
  gi.t_origin = 0.0;
  gi.q = trivial_chain();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  // 1/2 * f'' * 2 gamma c = 2 H t^{2H-1}; at t = 1, H = 0.75 that is 1.5
  CHECK(generator_apply(tf, gi, 1.0, x, 0) ==
        doctest::Approx(1.5).epsilon(1e-6));
  CHECK(generator_apply(tf, gi, 2.0, x, 0) ==
        doctest::Approx(2.0 * 0.75 * std::pow(2.0, 0.5)).epsilon(1e-6));
  CHECK_THROWS_AS(generator_apply(tf, gi, -0.5, x, 0), std::domain_error);
}

TEST_CASE("generator_apply vanishes for x-independent static functions") {
  auto tf = regime_tf();
  GeneratorInputs gi;
  gi.q = trivial_chain();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  CHECK(generator_apply(tf, gi, 0.5, x, 0) == 0.0);
}

TEST_CASE("finite-difference test function passes the consistency check") {
  auto value = [](double t, const Eigen::VectorXd& x, int i0) {
    return std::sin(x[0]) * std::exp(-t) + i0 * x[0] * x[0];
  };
  auto tf = finite_difference_test_function(value);
  std::vector<std::tuple<double, Eigen::VectorXd, int>> samples;
  Eigen::VectorXd x(1);
  x[0] = 0.7;
  samples.push_back({0.5, x, 1});
  CHECK_NOTHROW(check_test_function(tf, samples));
}

TEST_CASE("ito_residual: classical Brownian case is centered") {
  TimeGrid g = make_grid(0.0, 1.0, 100);
  auto bundle = make_bundle(g, 1, 0.75, trivial_chain(), 0, 10000, 99);
  ForwardSpec fs;
  fs.sigma = {constant_coeff(1.0)};
  fs.x0 = fixed_x0(0.0);
  auto sol = euler_solve(fs, bundle);
  GeneratorInputs gi;
  gi.sigma = {constant_coeff(1.0)};
  gi.q = trivial_chain();
  auto st = ito_residual(quadratic_tf(), gi, bundle, sol.x, 0.0, 1.0);
  CHECK(std::abs(st.mean) < 5.0 * st.std_error);
}

TEST_CASE("ito_residual: linear f closure error has order ~1") {
  GeneratorInputs gi;
  gi.b = [](double, const Eigen::VectorXd& x, int) { return (-x).eval(); };
  gi.sigma = {constant_coeff(1.0)};
  gi.q = trivial_chain();
  ForwardSpec fs;
  fs.b = gi.b;
  fs.sigma = gi.sigma;
  fs.x0 = fixed_x0(0.0);
  std::vector<double> dts, errs;
  auto fine = make_bundle(make_grid(0.0, 1.0, 256), 1, 0.75, trivial_chain(),
                          0, 4000, 7);
  DriverBundle bundles[3] = {coarsen(coarsen(fine)), coarsen(fine), fine};
  for (auto& b : bundles) {
    auto sol = euler_solve(fs, b);
    auto st = ito_residual(linear_tf(), gi, b, sol.x, 0.0, 1.0);
    dts.push_back(b.grid.dt);
    errs.push_back(st.rms);
  }
  double slope = fitted_order(dts, errs);
  CHECK(slope > 0.8);
  CHECK(slope < 1.2);
}

TEST_CASE("ito_residual: fractional case") {
  GeneratorInputs gi;
  gi.gamma = [](double) { return Eigen::VectorXd::Ones(1).eval(); };
  gi.hurst = 0.75;
  gi.q = trivial_chain();
  ForwardSpec fs;
  fs.gamma = gi.gamma;
  fs.x0 = fixed_x0(0.0);

  SUBCASE("divergence-type estimate has zero-mean residual") {
    TimeGrid g = make_grid(0.0, 1.0, 128);
    auto bundle = make_bundle(g, 1, 0.75, trivial_chain(), 0, 10000, 21);
    auto sol = euler_solve(fs, bundle);
    // the Euler path for dx = dB^H is the fBm itself
    for (int p = 0; p < 10; ++p)
      CHECK(sol.x[p](0, 37) == doctest::Approx(bundle.bh_path[p][37]));
    auto st = ito_residual(quadratic_tf(), gi, bundle, sol.x, 0.0, 1.0,
                           FbmConvention::wick_mean);
    CHECK(std::abs(st.mean) < 5.0 * st.std_error);
  }

  SUBCASE("pathwise (Young) mean bias decays at order 2H-1") {
    auto fine = make_bundle(make_grid(0.0, 1.0, 128), 1, 0.75, trivial_chain(),
                            0, 4000, 23);
    DriverBundle bundles[3] = {coarsen(coarsen(fine)), coarsen(fine), fine};
    std::vector<double> dts, biases;
    for (auto& b : bundles) {
      auto sol = euler_solve(fs, b);
      auto st = ito_residual(quadratic_tf(), gi, b, sol.x, 0.0, 1.0,
                             FbmConvention::pathwise);
      dts.push_back(b.grid.dt);
      biases.push_back(std::abs(st.mean));
    }
    CHECK(biases[1] < biases[0]);
    CHECK(biases[2] < biases[1]);
    double slope = fitted_order(dts, biases);
    CHECK(slope >= 0.4);  // theoretical 2H-1 = 0.5
    // the level itself matches n^{1-2H} = dt^{1/2}
    CHECK(biases[2] == doctest::Approx(std::sqrt(1.0 / 128.0)).epsilon(0.15));
  }
}

TEST_CASE("ito_residual: pure chain case is centered") {
  TimeGrid g = make_grid(0.0, 2.0, 100);
  auto bundle = make_bundle(g, 1, 0.75, two_state_chain(), 0, 8000, 31);
  Ensemble zero_paths(bundle.n_paths(),
                      Eigen::MatrixXd::Zero(1, g.n_nodes()));
  GeneratorInputs gi;
  gi.q = two_state_chain();
  auto st = ito_residual(regime_tf(), gi, bundle, zero_paths, 0.0, 2.0);
  CHECK(std::abs(st.mean) < 5.0 * st.std_error + 1e-12);
}

TEST_CASE("ito_residual: sub-window and mismatched grids") {
  TimeGrid g = make_grid(0.0, 1.0, 64);
  auto bundle = make_bundle(g, 1, 0.75, trivial_chain(), 0, 2000, 41);
  ForwardSpec fs;
  fs.sigma = {constant_coeff(1.0)};
  fs.x0 = fixed_x0(0.0);
  auto sol = euler_solve(fs, bundle);
  GeneratorInputs gi;
  gi.sigma = {constant_coeff(1.0)};
  gi.q = trivial_chain();
  auto st = ito_residual(quadratic_tf(), gi, bundle, sol.x, 0.5, 1.0);
  CHECK(std::abs(st.mean) < 5.0 * st.std_error);
  Ensemble wrong(bundle.n_paths(), Eigen::MatrixXd::Zero(1, 5));
  CHECK_THROWS_AS(
      ito_residual(quadratic_tf(), gi, bundle, wrong, 0.0, 1.0),
      std::invalid_argument);
}
