#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fbsde/time_grid.hpp"

using namespace fbsde;

TEST_CASE("make_grid produces the expected nodes") {
  TimeGrid g = make_grid(0.0, 1.0, 4);
  CHECK(g.n_nodes() == 5);
  CHECK(g.node(0) == doctest::Approx(0.0));
  CHECK(g.node(1) == doctest::Approx(0.25));
  CHECK(g.node(2) == doctest::Approx(0.5));
  CHECK(g.node(3) == doctest::Approx(0.75));
  CHECK(g.node(4) == 1.0);  // last node exact

  TimeGrid g1 = make_grid(0.0, 2.0, 1);
  CHECK(g1.node(0) == 0.0);
  CHECK(g1.node(1) == 2.0);

  CHECK_THROWS_AS(make_grid(1.0, 1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(0.0, 1.0, 0), std::invalid_argument);
}

TEST_CASE("phi_h values and symmetry") {
  CHECK(phi_h(2.0, 1.0, 0.75) == doctest::Approx(0.375));
  CHECK(phi_h(1.0, 2.0, 0.75) == doctest::Approx(0.375));
  CHECK(phi_h(3.0, 1.0, 0.9) ==
        doctest::Approx(0.9 * 0.8 * std::pow(2.0, -0.2)).epsilon(1e-10));
  CHECK_THROWS_AS(phi_h(1.0, 1.0, 0.75), std::domain_error);
  CHECK_THROWS_AS(phi_h(1.0, 2.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(phi_h(1.0, 2.0, 1.0), std::invalid_argument);

  // symmetry at random points
  for (int i = 1; i <= 20; ++i) {
    double u = 0.1 * i, s = 2.3 - 0.07 * i;
    if (u == s) continue;
    CHECK(phi_h(u, s, 0.6) == doctest::Approx(phi_h(s, u, 0.6)));
  }
}

TEST_CASE("phi_h cell mass matches a dense quadrature away from the diagonal") {
  // reference: integrate phi_h over [2,3] x [0,1] by analytic formula
  double got = phi_h_cell_mass(2.0, 3.0, 0.0, 1.0, 0.75);
  double expect =
      0.5 * ((3.0 * std::sqrt(3.0) - 2.0 * std::sqrt(2.0)) -
             (2.0 * std::sqrt(2.0) - 1.0));
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
  // diagonal cell integrates to h^{2H}
  CHECK(phi_h_cell_mass(0.0, 0.5, 0.0, 0.5, 0.75) ==
        doctest::Approx(std::pow(0.5, 1.5)).epsilon(1e-12));
}

TEST_CASE("weighted_l2k_norm examples") {
  TimeGrid g = make_grid(0.0, 20.0, 4000);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(g.n_nodes());
  CHECK(weighted_l2k_norm(single_path(zero), 1.0, g).value == 0.0);

  Eigen::VectorXd f(g.n_nodes());
  for (int k = 0; k < g.n_nodes(); ++k) f[k] = std::exp(-2.0 * g.node(k));
  auto norm = weighted_l2k_norm(single_path(f), 1.0, g);
  CHECK(norm.value == doctest::Approx(std::sqrt(0.5)).epsilon(1e-4));

  TimeGrid g1 = make_grid(0.0, 1.0, 64);
  Eigen::VectorXd one = Eigen::VectorXd::Ones(g1.n_nodes());
  CHECK(weighted_l2k_norm(single_path(one), 0.0, g1).value ==
        doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(weighted_l2k_norm(Ensemble{}, 0.0, g1),
                  std::invalid_argument);
}

TEST_CASE("weighted_l2k_norm is absolutely homogeneous") {
  TimeGrid g = make_grid(0.0, 3.0, 100);
  Eigen::VectorXd f(g.n_nodes());
  for (int k = 0; k < g.n_nodes(); ++k) f[k] = std::sin(2.0 * g.node(k)) + 0.3;
  double base = weighted_l2k_norm(single_path(f), -0.5, g).value;
  for (double c : {-3.0, 0.25, 7.5}) {
    double scaled =
        weighted_l2k_norm(single_path((c * f).eval()), -0.5, g).value;
    CHECK(scaled == doctest::Approx(std::abs(c) * base).epsilon(1e-13));
  }
}

TEST_CASE("weighted norm reports a tail bound for K < 0") {
  TimeGrid g = make_grid(0.0, 5.0, 50);
  Eigen::VectorXd one = Eigen::VectorXd::Ones(g.n_nodes());
  auto norm = weighted_l2k_norm(single_path(one), -1.0, g);
  CHECK(norm.horizon == 5.0);
  CHECK(norm.tail_bound ==
        doctest::Approx(std::exp(-10.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("l2h_norm kernel identity: indicator integrates to t^{2H}") {
  for (double t : {1.0, 2.0}) {
    TimeGrid g = make_grid(0.0, t, 256);
    Eigen::VectorXd one = Eigen::VectorXd::Ones(g.n_nodes());
    CHECK(l2h_norm(one, 0.75, g) ==
          doctest::Approx(std::pow(t, 1.5)).epsilon(1e-10));
  }
  TimeGrid g = make_grid(0.0, 1.0, 64);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(g.n_nodes());
  CHECK(l2h_norm(zero, 0.75, g) == 0.0);
}

TEST_CASE("l2h_norm converges for a smooth non-constant integrand") {
  // f(s) = s on [0,1]: exact value via int int u s phi_H = H/(2)... use a
  // fine-grid self-reference instead of a closed form.
  auto value_at = [](int steps) {
    TimeGrid g = make_grid(0.0, 1.0, steps);
    Eigen::VectorXd f(g.n_nodes());
    for (int k = 0; k < g.n_nodes(); ++k) f[k] = g.node(k);
    return l2h_norm(f, 0.75, g);
  };
  double ref = value_at(2048);
  double e1 = std::abs(value_at(32) - ref);
  double e2 = std::abs(value_at(64) - ref);
  double e3 = std::abs(value_at(128) - ref);
  CHECK(e2 < e1);
  CHECK(e3 < e2);
}
