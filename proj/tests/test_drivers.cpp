#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include "fbsde/drivers.hpp"

using namespace fbsde;

namespace {

GeneratorMatrix symmetric_two_state() {
  Eigen::MatrixXd q(2, 2);
  q << -1.0, 1.0, 1.0, -1.0;
  return validate_generator(q);
}

GeneratorMatrix absorbing() {
  Eigen::MatrixXd q(1, 1);
  q << 0.0;
  return validate_generator(q);
}

}  // namespace

TEST_CASE("validate_generator") {
  CHECK_NOTHROW(symmetric_two_state());
  CHECK_NOTHROW(absorbing());
  Eigen::MatrixXd bad(2, 2);
  bad << -1.0, 2.0, 1.0, -1.0;
  CHECK_THROWS_AS(validate_generator(bad), std::invalid_argument);
  Eigen::MatrixXd neg(2, 2);
  neg << 1.0, -1.0, 1.0, -1.0;
  CHECK_THROWS_AS(validate_generator(neg), std::invalid_argument);
}

TEST_CASE("pair indexing round-trips") {
  const int m = 3;
  CHECK(pair_count(m) == 6);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      auto [a, b] = pair_from_index(pair_index(i, j, m), m);
      CHECK(a == i);
      CHECK(b == j);
    }
  CHECK_THROWS_AS(pair_index(1, 1, m), std::invalid_argument);
}

TEST_CASE("brownian increments: moments, determinism, independence") {
  TimeGrid g = make_grid(0.0, 1.0, 100);
  const int n_paths = 10000;
  auto w = simulate_brownian(g, 2, n_paths, 42);

  // per-step sample mean within 5 CLT standard errors of 0
  double se = std::sqrt(g.dt / n_paths);
  for (int k = 0; k < g.n_steps; k += 17) {
    double mean = 0.0;
    for (const auto& path : w) mean += path(0, k);
    mean /= n_paths;
    CHECK(std::abs(mean) < 5.0 * se);
  }

  // per-step variance close to dt
  double var = 0.0;
  for (const auto& path : w) var += path(0, 3) * path(0, 3);
  var /= n_paths;
  CHECK(var == doctest::Approx(g.dt).epsilon(0.1));

  // same seed twice: bit-identical
  auto w2 = simulate_brownian(g, 2, 32, 42);
  for (int p = 0; p < 32; ++p) CHECK((w2[p] - w[p]).cwiseAbs().maxCoeff() == 0.0);

  // cross-correlation between the two coordinates ~ 0
  double cross = 0.0;
  for (const auto& path : w) cross += path(0, 0) * path(1, 0);
  cross /= (n_paths * g.dt);
  CHECK(std::abs(cross) < 5.0 / std::sqrt(static_cast<double>(n_paths)));
}

TEST_CASE("fbm marginal variance matches t^{2H}") {
  TimeGrid g = make_grid(0.0, 2.0, 100);
  const int n_paths = 10000;
  for (double H : {0.6, 0.75, 0.9}) {
    auto bh = simulate_fbm(g, H, n_paths, 7);
    for (const auto& path : bh) CHECK(path[0] == 0.0);
    for (double t : {1.0, 2.0}) {
      int k = static_cast<int>(t / g.dt);
      double var = 0.0;
      for (const auto& path : bh) var += path[k] * path[k];
      var /= n_paths;
      double expect = std::pow(t, 2.0 * H);
      // Var of the variance estimator for a Gaussian: 2 sigma^4 / n
      double se = expect * std::sqrt(2.0 / n_paths);
      CHECK(std::abs(var - expect) < 5.0 * se);
    }
  }
}

TEST_CASE("fbm covariance matches the closed form at chosen nodes") {
  TimeGrid g = make_grid(0.0, 2.0, 200);
  const int n_paths = 10000;
  const double H = 0.75;
  auto bh = simulate_fbm(g, H, n_paths, 11);
  auto p2h = [&](double x) { return std::pow(x, 2.0 * H); };
  double nodes[3] = {0.5, 1.0, 2.0};
  for (double ti : nodes)
    for (double tj : nodes) {
      int a = static_cast<int>(std::lround(ti / g.dt));
      int b = static_cast<int>(std::lround(tj / g.dt));
      double cov = 0.0;
      for (const auto& path : bh) cov += path[a] * path[b];
      cov /= n_paths;
      double expect = 0.5 * (p2h(ti) + p2h(tj) - p2h(std::abs(ti - tj)));
      double var_prod = p2h(ti) * p2h(tj) + expect * expect;
      double se = std::sqrt(var_prod / n_paths);
      CHECK(std::abs(cov - expect) < 5.0 * se);
    }
}

TEST_CASE("regime chain: absorbing, holding times, occupation") {
  TimeGrid g = make_grid(0.0, 50.0, 500);
  auto paths_abs = simulate_regime_path(g, absorbing(), 0, 100, 3);
  for (const auto& p : paths_abs) CHECK(p.jump_times.empty());

  const int n_paths = 4000;
  auto paths = simulate_regime_path(g, symmetric_two_state(), 0, n_paths, 5);

  // mean first holding time in state 1 ~ Exp(1)
  double mean_hold = 0.0;
  int count = 0;
  for (const auto& p : paths)
    if (!p.jump_times.empty()) {
      mean_hold += p.jump_times[0];
      ++count;
    }
  mean_hold /= count;
  CHECK(std::abs(mean_hold - 1.0) < 5.0 / std::sqrt(static_cast<double>(count)));

  // long-horizon occupation fraction of state 1 ~ 1/2
  double occ = 0.0;
  for (const auto& p : paths) occ += p.occupation(0, 0.0, 50.0) / 50.0;
  occ /= n_paths;
  CHECK(std::abs(occ - 0.5) < 5.0 * 0.02 / std::sqrt(static_cast<double>(n_paths)) + 0.01);
}

TEST_CASE("regime empirical transition matrix matches expm(q dt)") {
  TimeGrid g = make_grid(0.0, 10.0, 100);
  Eigen::MatrixXd q(2, 2);
  q << -0.7, 0.7, 0.4, -0.4;
  auto gen = validate_generator(q);
  const int n_paths = 20000;
  auto paths = simulate_regime_path(g, gen, 0, n_paths, 13);
  const double window = 0.5;
  Eigen::MatrixXd expect = (q * window).exp();
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(2, 2);
  for (const auto& p : paths) {
    int from = p.state_at(3.0);
    int to = p.state_at(3.0 + window);
    counts(from, to) += 1.0;
  }
  for (int i = 0; i < 2; ++i) {
    double row = counts.row(i).sum();
    for (int j = 0; j < 2; ++j) {
      double phat = counts(i, j) / row;
      double se = std::sqrt(expect(i, j) * (1 - expect(i, j)) / row);
      CHECK(std::abs(phat - expect(i, j)) < 5.0 * se);
    }
  }
}

TEST_CASE("compensated martingales") {
  TimeGrid g = make_grid(0.0, 4.0, 80);

  SUBCASE("absorbing chain has zero increments") {
    auto paths = simulate_regime_path(g, absorbing(), 0, 10, 1);
    for (const auto& p : paths) {
      auto inc = compensated_martingales(p, absorbing(), g);
      CHECK(inc.rows() == 0);
    }
  }

  SUBCASE("single-path identity with one jump") {
    RegimeJumpPath p;
    p.start_state = 0;
    p.jump_times = {1.3};
    p.post_jump_states = {1};
    auto gen = symmetric_two_state();
    auto inc = compensated_martingales(p, gen, g);
    // M_{12}(t) accumulated to any node past the jump: 1 - q_12 * 1.3
    int idx = pair_index(0, 1, 2);
    double m_at_2 = inc.row(idx).head(40).sum();  // nodes up to t=2
    CHECK(m_at_2 == doctest::Approx(1.0 - 1.0 * 1.3).epsilon(1e-12));
    // the reverse pair only accrues compensator while in state 2
    int rdx = pair_index(1, 0, 2);
    double m_rev = inc.row(rdx).head(40).sum();
    CHECK(m_rev == doctest::Approx(-(2.0 - 1.3)).epsilon(1e-12));
  }

  SUBCASE("ensemble mean of M_12(t) is zero within 5 SE") {
    const int n_paths = 8000;
    auto gen = symmetric_two_state();
    auto paths = simulate_regime_path(g, gen, 0, n_paths, 17);
    int idx = pair_index(0, 1, 2);
    for (int node : {20, 40, 80}) {
      double mean = 0.0, sq = 0.0;
      for (const auto& p : paths) {
        auto inc = compensated_martingales(p, gen, g);
        double m = inc.row(idx).head(node).sum();
        mean += m;
        sq += m * m;
      }
      mean /= n_paths;
      double var = sq / n_paths - mean * mean;
      double se = std::sqrt(var / n_paths);
      CHECK(std::abs(mean) < 5.0 * se);
    }
  }
}

TEST_CASE("bundle: independent drivers and deterministic coarsening") {
  TimeGrid g = make_grid(0.0, 1.0, 64);
  auto gen = symmetric_two_state();
  auto bundle = make_bundle(g, 1, 0.75, gen, 0, 6000, 23);

  // correlation between fBm increments and W increments ~ 0
  double acc = 0.0;
  for (int p = 0; p < bundle.n_paths(); ++p)
    acc += bundle.bh_increment(p, 10) * bundle.w_increments[p](0, 10);
  double se = std::sqrt(std::pow(g.dt, 2 * 0.75) * g.dt / bundle.n_paths());
  CHECK(std::abs(acc / bundle.n_paths()) < 5.0 * se);

  auto coarse = coarsen(bundle);
  CHECK(coarse.grid.n_steps == 32);
  for (int p = 0; p < 20; ++p) {
    CHECK(coarse.w_increments[p](0, 3) ==
          doctest::Approx(bundle.w_increments[p](0, 6) +
                          bundle.w_increments[p](0, 7)).epsilon(1e-15));
    CHECK(coarse.bh_path[p][5] == bundle.bh_path[p][10]);
    // martingale increments still telescope to the same totals
    CHECK(coarse.m_increments[p].row(0).sum() ==
          doctest::Approx(bundle.m_increments[p].row(0).sum()).epsilon(1e-9));
  }
}
