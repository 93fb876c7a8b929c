#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fbsde/lqgame.hpp"

using namespace fbsde;

namespace {

MatrixCoefficient const_mat(double v) {
  return [v](double, int) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = v;
    return m;
  };
}

GeneratorMatrix two_state() {
  Eigen::MatrixXd q(2, 2);
  q << -1.0, 1.0, 1.0, -1.0;
  return validate_generator(q);
}

GeneratorMatrix one_state() {
  return validate_generator(Eigen::MatrixXd::Zero(1, 1));
}

// the saddle example: dx = (u1 + u2) ds + (u1 + u2) dW + dB^H,
// cost (u1^2 - u2^2)/2
LQProblem saddle_example(double K) {
  LQProblem prob;
  prob.n = 1;
  prob.m1 = 1;
  prob.m2 = 1;
  prob.d = 1;
  prob.A = const_mat(0.0);
  prob.B1 = const_mat(1.0);
  prob.B2 = const_mat(1.0);
  prob.C = {const_mat(0.0)};
  prob.D1 = {const_mat(1.0)};
  prob.D2 = {const_mat(1.0)};
  prob.Gamma_fbm = [](double) { return Eigen::VectorXd::Ones(1).eval(); };
  prob.Q = const_mat(0.0);
  prob.S1 = const_mat(0.0);
  prob.S2 = const_mat(0.0);
  prob.R11 = const_mat(1.0);
  prob.R12 = const_mat(0.0);
  prob.R21 = const_mat(0.0);
  prob.R22 = const_mat(-1.0);
  prob.K = K;
  prob.x0 = 0.5 * Eigen::VectorXd::Ones(1);
  prob.gen = two_state();
  return prob;
}

LQProblem cross_term_problem() {
  LQProblem prob;
  prob.n = 1;
  prob.m1 = 1;
  prob.m2 = 1;
  prob.d = 1;
  prob.A = const_mat(-2.0);
  prob.B1 = const_mat(1.0);
  prob.B2 = const_mat(0.5);
  prob.C = {const_mat(0.3)};
  prob.D1 = {const_mat(0.0)};
  prob.D2 = {const_mat(0.0)};
  prob.Gamma_fbm = [](double) { return (0.5 * Eigen::VectorXd::Ones(1)).eval(); };
  prob.Q = const_mat(1.0);
  prob.S1 = const_mat(0.4);
  prob.S2 = const_mat(-0.3);
  prob.R11 = const_mat(2.0);
  prob.R12 = const_mat(0.0);
  prob.R21 = const_mat(0.0);
  prob.R22 = const_mat(-3.0);
  prob.K = -1.0;
  prob.x0 = Eigen::VectorXd::Ones(1);
  prob.gen = one_state();
  return prob;
}

}  // namespace

TEST_CASE("compute_kappa_x") {
  LQProblem prob = saddle_example(-0.1);
  auto probes = default_probes(prob, 5.0);

  prob.A = const_mat(-2.0);
  CHECK(compute_kappa_x(prob, probes) == doctest::Approx(2.0));

  prob.A = [](double, int i0) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = i0 == 0 ? -2.0 : -3.0;
    return m;
  };
  CHECK(compute_kappa_x(prob, probes) == doctest::Approx(2.0));

  LQProblem skew = prob;
  skew.n = 2;
  skew.A = [](double, int) {
    Eigen::MatrixXd m(2, 2);
    m << 0.0, 1.0, -1.0, 0.0;
    return m;
  };
  CHECK(compute_kappa_x(skew, probes) == doctest::Approx(0.0));
}

TEST_CASE("admissible_k_bound") {
  LQProblem prob = saddle_example(-0.1);
  prob.A = const_mat(-2.0);
  auto probes = default_probes(prob, 5.0);
  double kx = compute_kappa_x(prob, probes);

  prob.C = {const_mat(1.0)};
  prob.K = 1.0;
  CHECK(admissible_k_bound(prob, kx, probes) == doctest::Approx(1.5));

  prob.C = {const_mat(0.0)};
  CHECK(admissible_k_bound(prob, kx, probes) == doctest::Approx(2.0));

  prob.C = {const_mat(1.0)};
  prob.K = 1.6;
  CHECK_THROWS_WITH_AS(admissible_k_bound(prob, kx, probes),
                       doctest::Contains("inadmissible K"),
                       std::invalid_argument);
}

TEST_CASE("check_assumption_d") {
  auto probes = default_probes(saddle_example(-0.1), 5.0);

  SUBCASE("saddle example: pattern passes, literal R > 0 fails") {
    auto rep = check_assumption_d(saddle_example(-0.1), probes);
    CHECK(rep.zero_sum_pattern);
    CHECK_FALSE(rep.literal_r_pos);
  }

  SUBCASE("positive Q with negative R22 breaks the NSD block") {
    LQProblem prob = saddle_example(-0.1);
    prob.Q = const_mat(1.0);
    auto rep = check_assumption_d(prob, probes);
    CHECK_FALSE(rep.zero_sum_pattern);
  }

  SUBCASE("diagonal R with the right signs passes") {
    LQProblem prob = saddle_example(-0.1);
    prob.R11 = const_mat(2.0);
    prob.R22 = const_mat(-3.0);
    auto rep = check_assumption_d(prob, probes);
    CHECK(rep.zero_sum_pattern);
  }
}

TEST_CASE("evaluate_cost on the saddle example") {
  const double T = 6.0;
  TimeGrid g = make_grid(0.0, T, 300);
  LQProblem prob = saddle_example(0.0);  // K = 0 for the closed forms
  prob.x0 = Eigen::VectorXd::Zero(1);
  auto bundle = make_bundle(g, 1, 0.75, prob.gen, 0, 2000, 5);

  auto decay =
      deterministic_control([](double t) {
        return (std::exp(-t) * Eigen::VectorXd::Ones(1)).eval();
      }, g);

  SUBCASE("zero controls give exactly zero cost") {
    auto est = evaluate_cost(prob, zero_control(1), zero_control(1), bundle);
    CHECK(est.value == 0.0);
  }

  SUBCASE("deterministic player-1 control matches the quadrature oracle") {
    auto est = evaluate_cost(prob, decay, zero_control(1), bundle);
    double expect = (1.0 - std::exp(-2.0 * T)) / 4.0;
    CHECK(est.value == doctest::Approx(expect).epsilon(0.01));
  }

  SUBCASE("the same control for player 2 flips the sign") {
    auto est = evaluate_cost(prob, zero_control(1), decay, bundle);
    double expect = -(1.0 - std::exp(-2.0 * T)) / 4.0;
    CHECK(est.value == doctest::Approx(expect).epsilon(0.01));
  }
}

TEST_CASE("assemble_coupled_system coefficient algebra") {
  ThetaPoint pt;
  pt.x = Eigen::VectorXd::Ones(1) * 1.3;
  pt.y = Eigen::VectorXd::Ones(1) * -0.8;
  pt.z = Eigen::MatrixXd::Ones(1, 1) * 0.6;
  pt.r = Eigen::VectorXd::Zero(1);
  pt.f = Eigen::MatrixXd::Zero(1, 2);

  SUBCASE("scalar drift a x - (b^2 / rho) y when S = D = 0") {
    LQProblem prob = saddle_example(-0.1);
    prob.A = const_mat(0.7);
    prob.B1 = const_mat(2.0);
    prob.B2 = const_mat(0.0);
    prob.D1 = {const_mat(0.0)};
    prob.D2 = {const_mat(0.0)};
    prob.R11 = const_mat(4.0);
    auto spec = assemble_coupled_system(prob);
    // drift = a x - (b^2/rho) y = 0.7*1.3 - (4/4)*(-0.8)
    CHECK(spec.b(0.0, pt, 0)[0] == doctest::Approx(0.7 * 1.3 + 0.8));
  }

  SUBCASE("Q = S = 0 removes the x feedback in the adjoint") {
    LQProblem prob = saddle_example(-0.1);
    auto spec = assemble_coupled_system(prob);
    ThetaPoint only_x = pt;
    only_x.y.setZero();
    only_x.z.setZero();
    CHECK(spec.g(0.0, only_x, 0)[0] == 0.0);
  }

  SUBCASE("saddle example loses all (y,z) coupling in the forward part") {
    LQProblem prob = saddle_example(-0.1);
    auto spec = assemble_coupled_system(prob);
    // B R^{-1} B^T = 1 - 1 = 0 and D R^{-1} D^T = 0
    ThetaPoint p1 = pt, p2 = pt;
    p2.y[0] = 3.0;
    p2.z(0, 0) = -2.0;
    CHECK(spec.b(0.0, p1, 0)[0] == doctest::Approx(spec.b(0.0, p2, 0)[0]));
    CHECK(spec.sigma[0](0.0, p1, 0)[0] ==
          doctest::Approx(spec.sigma[0](0.0, p2, 0)[0]));
  }

  SUBCASE("S = 0 system matches the reduced display exactly") {
    LQProblem prob = cross_term_problem();
    prob.S1 = const_mat(0.0);
    prob.S2 = const_mat(0.0);
    auto spec = assemble_coupled_system(prob);
    for (double t : {0.0, 1.0, 3.0}) {
      Eigen::MatrixXd r = prob.R(t, 0);
      Eigen::MatrixXd ri = r.inverse();
      Eigen::MatrixXd b = prob.B(t, 0);
      double drift = (prob.A(t, 0) * pt.x -
                      b * ri * b.transpose() * pt.y)(0, 0);
      CHECK(spec.b(t, pt, 0)[0] == doctest::Approx(drift).epsilon(1e-12));
      double adj = -((2.0 * prob.K + prob.A(t, 0)(0, 0)) * pt.y[0] +
                     prob.C[0](t, 0)(0, 0) * pt.z(0, 0) +
                     prob.Q(t, 0)(0, 0) * pt.x[0]);
      CHECK(spec.g(t, pt, 0)[0] == doctest::Approx(adj).epsilon(1e-12));
    }
  }

  SUBCASE("singular R is rejected") {
    LQProblem prob = saddle_example(-0.1);
    prob.R22 = const_mat(0.0);
    prob.R12 = const_mat(0.0);
    CHECK_THROWS_AS(assemble_coupled_system(prob), std::runtime_error);
  }
}

TEST_CASE("solve_game on the saddle example") {
  TimeGrid g = make_grid(0.0, 5.0, 100);
  LQProblem prob = saddle_example(-0.1);
  auto bundle = make_bundle(g, 1, 0.75, prob.gen, 0, 3000, 7);
  GameSolution sol = solve_game(prob, bundle, 1e-6);

  CHECK(sol.assumption_d.zero_sum_pattern);
  CHECK_FALSE(sol.assumption_d.literal_r_pos);
  CHECK(sol.stationarity < 1e-10);
  CHECK(std::abs(sol.value) < 3.0 * sol.value_std_error + 1e-12);
  auto u1n = weighted_l2k_norm(sol.u1, prob.K, g);
  auto u2n = weighted_l2k_norm(sol.u2, prob.K, g);
  CHECK(u1n.value < 1e-8);
  CHECK(u2n.value < 1e-8);
  for (int p = 0; p < 5; ++p)
    CHECK(sol.theta.y[p].cwiseAbs().maxCoeff() < 1e-10);
  // the optimal state is x0 + B^H
  for (int p = 0; p < 5; ++p)
    CHECK(sol.theta.x[p](0, 50) ==
          doctest::Approx(0.5 + bundle.bh_path[p][50]).epsilon(1e-9));
}

TEST_CASE("solve_game refuses a broken pattern unless asked not to") {
  TimeGrid g = make_grid(0.0, 4.0, 80);
  LQProblem prob = cross_term_problem();  // S != 0 contradicts the blocks
  auto bundle = make_bundle(g, 1, 0.75, prob.gen, 0, 500, 9);
  CHECK_THROWS_AS(solve_game(prob, bundle, 1e-4), std::invalid_argument);
  GameSolveOptions opts;
  opts.enforce_pattern = false;
  CHECK_NOTHROW(solve_game(prob, bundle, 1e-4, opts));
}

TEST_CASE("stationarity_residual") {
  TimeGrid g = make_grid(0.0, 5.0, 100);
  LQProblem prob = saddle_example(-0.1);
  auto bundle = make_bundle(g, 1, 0.75, prob.gen, 0, 200, 11);
  const int n_paths = bundle.n_paths();
  Ensemble zero1(n_paths, Eigen::MatrixXd::Zero(1, g.n_nodes()));
  Ensemble zero2(n_paths, Eigen::MatrixXd::Zero(2, g.n_nodes()));

  SUBCASE("all-zero candidate satisfies the example's condition") {
    CHECK(stationarity_residual(prob, zero2, zero1, zero1, zero1, bundle) ==
          0.0);
  }

  SUBCASE("residual is linear in a control offset") {
    Ensemble u_eps = zero2;
    for (auto& m : u_eps) m.row(0).setConstant(0.1);
    double r1 = stationarity_residual(prob, u_eps, zero1, zero1, zero1, bundle);
    for (auto& m : u_eps) m.row(0).setConstant(0.2);
    double r2 = stationarity_residual(prob, u_eps, zero1, zero1, zero1, bundle);
    CHECK(r2 == doctest::Approx(2.0 * r1).epsilon(1e-12));
  }
}

TEST_CASE("saddle_check on the example") {
  TimeGrid g = make_grid(0.0, 5.0, 100);
  LQProblem prob = saddle_example(-0.1);
  auto bundle = make_bundle(g, 1, 0.75, prob.gen, 0, 2000, 13);
  GameSolution sol = solve_game(prob, bundle, 1e-6);
  auto rep = saddle_check(prob, sol, 6, {0.1, 0.2}, bundle, 99);
  CHECK(rep.violations == 0);
  CHECK(rep.second_order_signs_ok);
  CHECK(rep.max_first_order < 1e-8);
}

TEST_CASE("cross_term_reduce") {
  SUBCASE("S = 0 is the identity transformation") {
    LQProblem prob = saddle_example(-0.1);
    auto red = cross_term_reduce(prob);
    for (double t : {0.0, 1.0}) {
      CHECK(red.transformed.A(t, 0)(0, 0) ==
            doctest::Approx(prob.A(t, 0)(0, 0)));
      CHECK(red.transformed.Q(t, 0)(0, 0) ==
            doctest::Approx(prob.Q(t, 0)(0, 0)));
      CHECK(red.gain(t, 0).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("scalar arithmetic of the reduction") {
    LQProblem prob = saddle_example(-0.1);
    prob.A = const_mat(1.0);
    prob.B1 = const_mat(1.0);
    prob.B2 = const_mat(0.0);
    prob.S1 = const_mat(1.0);
    prob.S2 = const_mat(0.0);
    prob.R11 = const_mat(1.0);
    prob.Q = const_mat(2.0);
    auto red = cross_term_reduce(prob);
    CHECK(red.transformed.A(0.0, 0)(0, 0) == doctest::Approx(0.0));
    CHECK(red.transformed.Q(0.0, 0)(0, 0) == doctest::Approx(1.0));
    CHECK(red.transformed.S1(0.0, 0)(0, 0) == 0.0);
  }
}

TEST_CASE("cross-term round trip agrees with the direct solve") {
  TimeGrid g = make_grid(0.0, 6.0, 120);
  LQProblem prob = cross_term_problem();
  auto bundle = make_bundle(g, 1, 0.75, prob.gen, 0, 1500, 15);
  GameSolveOptions opts;
  opts.enforce_pattern = false;
  GameSolution direct = solve_game(prob, bundle, 1e-5, opts);
  CHECK(direct.stationarity < 1e-6);

  auto red = cross_term_reduce(prob);
  GameSolution trans = solve_game(red.transformed, bundle, 1e-5, opts);

  Ensemble du(bundle.n_paths());
  for (int p = 0; p < bundle.n_paths(); ++p) {
    Eigen::MatrixXd m(2, g.n_nodes());
    for (int k = 0; k < g.n_nodes(); ++k) {
      Eigen::VectorXd shift = red.gain(g.node(k), 0) * trans.theta.x[p].col(k);
      m(0, k) = trans.u1[p](0, k) - shift[0] - direct.u1[p](0, k);
      m(1, k) = trans.u2[p](0, k) - shift[1] - direct.u2[p](0, k);
    }
    du[p] = std::move(m);
  }
  CHECK(weighted_l2k_norm(du, prob.K, g).value < 1e-3);

  // matched costs agree (the transformed value equals the original cost)
  CHECK(std::abs(trans.value - direct.value) <
        3.0 * (trans.value_std_error + direct.value_std_error) + 1e-6);
}
