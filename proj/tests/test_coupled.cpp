#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fbsde/coupled.hpp"

using namespace fbsde;

namespace {

GeneratorMatrix trivial_chain() {
  Eigen::MatrixXd q(1, 1);
  q << 0.0;
  return validate_generator(q);
}

ThetaCoefficient theta_scalar(std::function<double(double, const ThetaPoint&,
                                                   int)> f) {
  return [f](double t, const ThetaPoint& th, int i0) {
    Eigen::VectorXd out(1);
    out[0] = f(t, th, i0);
    return out;
  };
}

// linear two-way coupled scalar system used by the contraction and
// stability tests
FBSDESpec linear_spec() {
  FBSDESpec spec;
  spec.x_dim = 1;
  spec.y_dim = 1;
  spec.psi = [](const Eigen::VectorXd& y, int) {
    Eigen::VectorXd out(1);
    out[0] = 0.3 * y[0] + 0.5;
    return out;
  };
  spec.b = theta_scalar([](double, const ThetaPoint& th, int) {
    return -th.x[0] + 0.2 * th.y[0];
  });
  spec.sigma = {theta_scalar([](double, const ThetaPoint& th, int) {
    return 0.1 * th.z(0, 0);
  })};
  spec.g = theta_scalar([](double t, const ThetaPoint& th, int) {
    return 0.5 * th.y[0] + 0.3 * th.x[0] + std::exp(-t);
  });
  spec.gamma = [](double) { return (0.1 * Eigen::VectorXd::Ones(1)).eval(); };
  spec.kappa_x = 1.0;
  spec.kappa_y = -0.5;
  spec.K = 0.0;
  return spec;
}

ThetaPoint zero_point() {
  ThetaPoint pt;
  pt.x = Eigen::VectorXd::Zero(1);
  pt.y = Eigen::VectorXd::Zero(1);
  pt.z = Eigen::MatrixXd::Zero(1, 1);
  pt.r = Eigen::VectorXd::Zero(1);
  pt.f = Eigen::MatrixXd::Zero(1, 1);
  return pt;
}

}  // namespace

TEST_CASE("build_tau_family endpoints and midpoint") {
  FBSDESpec spec = linear_spec();
  spec.kappa_x = 2.0;

  ThetaPoint pt = zero_point();
  pt.x[0] = 1.5;
  pt.y[0] = -0.7;
  pt.z(0, 0) = 0.4;

  SUBCASE("tau = 0 keeps only the monotone anchors") {
    FBSDESpec f0 = build_tau_family(spec, 0.0);
    CHECK(f0.b(0.3, pt, 0)[0] == doctest::Approx(-2.0 * 1.5));
    CHECK(f0.g(0.3, pt, 0)[0] == doctest::Approx(0.5 * (-0.7)));
    CHECK(f0.sigma[0](0.3, pt, 0)[0] == 0.0);
    CHECK(f0.psi(pt.y, 0)[0] == 0.0);
    CHECK(f0.gamma(0.5)[0] == 0.0);
  }

  SUBCASE("tau = 1 reproduces the original coefficients") {
    FBSDESpec f1 = build_tau_family(spec, 1.0);
    for (double t : {0.0, 0.7, 2.0}) {
      CHECK(f1.b(t, pt, 0)[0] ==
            doctest::Approx(spec.b(t, pt, 0)[0]).epsilon(1e-14));
      CHECK(f1.g(t, pt, 0)[0] ==
            doctest::Approx(spec.g(t, pt, 0)[0]).epsilon(1e-14));
      CHECK(f1.sigma[0](t, pt, 0)[0] ==
            doctest::Approx(spec.sigma[0](t, pt, 0)[0]).epsilon(1e-14));
    }
  }

  SUBCASE("tau = 1/2 with b = 0 gives the half anchor") {
    FBSDESpec plain = spec;
    plain.b = theta_scalar([](double, const ThetaPoint&, int) { return 0.0; });
    FBSDESpec fh = build_tau_family(plain, 0.5);
    // b^{1/2} = 0.5*0 - 0.5 * kappa_x * x = -x for kappa_x = 2
    CHECK(fh.b(0.0, pt, 0)[0] == doctest::Approx(-1.5));
  }

  SUBCASE("tau outside [0,1] is rejected") {
    CHECK_THROWS_AS(build_tau_family(spec, 1.5), std::invalid_argument);
  }
}

TEST_CASE("solve_tau0 on the reduced system") {
  TimeGrid g = make_grid(0.0, 8.0, 800);
  auto bundle = make_bundle(g, 1, 0.75, trivial_chain(), 0, 64, 3);

  SUBCASE("pure dissipative forward: x(t) = e^{-t}") {
    FBSDESpec spec;
    spec.kappa_x = 1.0;
    spec.kappa_y = -1.0;
    spec.K = 0.0;
    ThetaForcing forcing;
    forcing.xi = [](int) { return Eigen::VectorXd::Ones(1).eval(); };
    auto theta = solve_tau0(spec, forcing, bundle);
    int k1 = static_cast<int>(std::lround(1.0 / g.dt));
    CHECK(theta.x[0](0, k1) == doctest::Approx(std::exp(-1.0)).epsilon(5e-3));
    CHECK(theta.y[0].cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("zero backward forcing keeps y = z = r = f = 0") {
    FBSDESpec spec;
    spec.kappa_x = 1.0;
    spec.kappa_y = -1.0;
    spec.K = 0.0;
    auto theta = solve_tau0(spec, ThetaForcing{}, bundle);
    CHECK(theta.y[0].cwiseAbs().maxCoeff() == 0.0);
    CHECK(theta.z[0].cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("exponential backward forcing selects the decaying solution") {
    FBSDESpec spec;
    spec.kappa_x = 1.0;
    spec.kappa_y = -1.0;  // live driver becomes +y
    spec.K = -0.25;
    ThetaForcing forcing;
    forcing.phi = [&g](int, int k) {
      Eigen::VectorXd out(1);
      out[0] = std::exp(-g.node(k));
      return out;
    };
    auto theta = solve_tau0(spec, forcing, bundle);
    CHECK(theta.y[0](0, 0) == doctest::Approx(-0.5).epsilon(0.02));
  }

  SUBCASE("inadmissible constants are rejected") {
    FBSDESpec spec;
    spec.kappa_x = -1.0;
    spec.kappa_y = 1.0;
    CHECK_THROWS_AS(solve_tau0(spec, ThetaForcing{}, bundle),
                    std::invalid_argument);
  }
}

TEST_CASE("continuation_step") {
  TimeGrid g = make_grid(0.0, 5.0, 100);
  auto bundle = make_bundle(g, 1, 0.75, trivial_chain(), 0, 400, 11);
  FBSDESpec spec = linear_spec();

  SUBCASE("delta = 0 returns the prior unchanged") {
    auto prior = solve_tau0(spec, ThetaForcing{}, bundle);
    auto [theta, report] =
        continuation_step(spec, 0.0, 0.0, prior, bundle, 1e-9, 10);
    CHECK(report.outer_iterations == 1);
    CHECK(theta_distance_sq(theta, prior, spec.K) == 0.0);
  }

  SUBCASE("contraction ratio scales like c5 delta^2") {
    auto prior = solve_tau0(spec, ThetaForcing{}, bundle);
    auto [theta1, rep1] =
        continuation_step(spec, 0.0, 0.5, prior, bundle, 1e-5, 30);
    REQUIRE(rep1.c5_hat > 0.0);
    // short probe windows under-weigh the slow mode, so refine the constant
    // once with a step at the implied delta0 and keep the larger estimate
    double c5 = rep1.c5_hat;
    double delta0 = std::min(1.0, 1.0 / (2.0 * std::sqrt(c5)));
    auto [theta2, rep2] =
        continuation_step(spec, 0.0, delta0, prior, bundle, 1e-5, 40);
    if (rep2.c5_hat > c5) {
      c5 = rep2.c5_hat;
      delta0 = std::min(1.0, 1.0 / (2.0 * std::sqrt(c5)));
      auto [theta3, rep3] =
          continuation_step(spec, 0.0, delta0, prior, bundle, 1e-5, 40);
      CHECK(rep3.contraction_ratio <= 0.25 + 0.15);
    } else {
      CHECK(rep2.contraction_ratio <= 0.25 + 0.15);
    }
  }

  SUBCASE("exceeding tau = 1 is rejected") {
    auto prior = solve_tau0(spec, ThetaForcing{}, bundle);
    CHECK_THROWS_AS(
        continuation_step(spec, 0.9, 0.2, prior, bundle, 1e-8, 10),
        std::invalid_argument);
  }
}

TEST_CASE("solve_fbsde") {
  TimeGrid g = make_grid(0.0, 5.0, 100);
  auto bundle = make_bundle(g, 1, 0.75, trivial_chain(), 0, 500, 13);

  SUBCASE("zero spec solves to the zero tuple at every tau") {
    FBSDESpec spec;
    spec.kappa_x = 1.0;
    spec.kappa_y = -1.0;
    spec.K = 0.0;
    auto [theta, trace] = solve_fbsde(spec, bundle, 1e-5);
    CHECK(trace.reached_one);
    for (int p = 0; p < 5; ++p) {
      CHECK(theta.x[p].cwiseAbs().maxCoeff() == 0.0);
      CHECK(theta.y[p].cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("linear coupled spec reaches tau = 1 with a small replay residual") {
    FBSDESpec spec = linear_spec();
    auto [theta, trace] = solve_fbsde(spec, bundle, 1e-4);
    CHECK(trace.reached_one);
    CHECK(trace.final_residual < 10.0 * 1e-4);
    // delta never exceeds one doubling above the measured delta0
    double running_delta0 = 0.0;
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
      if (i > 0 && running_delta0 > 0.0)
        CHECK(trace.steps[i].delta <= 2.0 * running_delta0 + 1e-12);
      if (trace.steps[i].c5_hat > 0.0) {
        double d0 = 1.0 / (2.0 * std::sqrt(trace.steps[i].c5_hat));
        running_delta0 =
            running_delta0 == 0.0 ? d0 : std::min(running_delta0, d0);
      }
    }
  }
}

TEST_CASE("coupled_stability_check scaling") {
  TimeGrid g = make_grid(0.0, 5.0, 100);
  auto bundle = make_bundle(g, 1, 0.75, trivial_chain(), 0, 400, 17);
  FBSDESpec spec = linear_spec();
  auto [theta, trace] = solve_fbsde(spec, bundle, 1e-5);

  SUBCASE("identical specs have zero distance") {
    auto rep = coupled_stability_check(spec, spec, theta, theta, bundle);
    CHECK(rep.lhs == 0.0);
    CHECK(rep.rhs == 0.0);
  }

  SUBCASE("additive psi perturbation scales quadratically") {
    auto perturbed_by = [&](double c) {
      FBSDESpec pert = spec;
      pert.psi = [c, base = spec.psi](const Eigen::VectorXd& y, int i0) {
        return (base(y, i0).array() + c).matrix().eval();
      };
      return pert;
    };
    FBSDESpec p1 = perturbed_by(0.1);
    FBSDESpec p2 = perturbed_by(0.2);
    auto [t1, tr1] = solve_fbsde(p1, bundle, 1e-5);
    auto [t2, tr2] = solve_fbsde(p2, bundle, 1e-5);
    auto r1 = coupled_stability_check(spec, p1, theta, t1, bundle);
    auto r2 = coupled_stability_check(spec, p2, theta, t2, bundle);
    CHECK(r1.lhs > 0.0);
    double factor = r2.lhs / r1.lhs;
    CHECK(factor == doctest::Approx(4.0).epsilon(0.2));
  }

  SUBCASE("driver perturbation ratio is stable in epsilon") {
    auto perturbed_by = [&](double eps) {
      FBSDESpec pert = spec;
      pert.g = [eps, base = spec.g](double t, const ThetaPoint& th, int i0) {
        return (base(t, th, i0).array() + eps).matrix().eval();
      };
      return pert;
    };
    FBSDESpec p1 = perturbed_by(0.1);
    FBSDESpec p2 = perturbed_by(0.05);
    auto [t1, tr1] = solve_fbsde(p1, bundle, 1e-5);
    auto [t2, tr2] = solve_fbsde(p2, bundle, 1e-5);
    auto r1 = coupled_stability_check(spec, p1, theta, t1, bundle);
    auto r2 = coupled_stability_check(spec, p2, theta, t2, bundle);
    double q1 = r1.lhs / (0.1 * 0.1);
    double q2 = r2.lhs / (0.05 * 0.05);
    CHECK(q1 / q2 == doctest::Approx(1.0).epsilon(0.25));
    // the stability constant witness is consistent across the pair
    CHECK(r1.ratio > 0.0);
    CHECK(r2.ratio > 0.0);
  }
}
