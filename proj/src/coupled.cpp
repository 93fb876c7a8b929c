#include "fbsde/coupled.hpp"

#include <cmath>
#include <stdexcept>

namespace fbsde {

void ThetaProcess::read(ThetaPoint& pt, int path, int k, int d,
                        int n_pairs) const {
  pt.x = x[path].col(k);
  pt.y = y[path].col(k);
  pt.z.resize(y_dim, d);
  for (int i = 0; i < d; ++i)
    pt.z.col(i) = z[path].block(i * y_dim, k, y_dim, 1);
  pt.r = r[path].col(k);
  const int cols = std::max(1, n_pairs);
  pt.f.resize(y_dim, cols);
  for (int i = 0; i < cols; ++i)
    pt.f.col(i) = fm[path].block(i * y_dim, k, y_dim, 1);
  if (n_pairs == 0) pt.f.setZero();
}

ThetaPoint ThetaProcess::at(int path, int k, int d, int n_pairs) const {
  ThetaPoint pt;
  pt.x = x[path].col(k);
  pt.y = y[path].col(k);
  pt.z.resize(y_dim, d);
  for (int i = 0; i < d; ++i)
    pt.z.col(i) = z[path].block(i * y_dim, k, y_dim, 1);
  pt.r = r[path].col(k);
  const int cols = std::max(1, n_pairs);
  pt.f.resize(y_dim, cols);
  for (int i = 0; i < cols; ++i)
    pt.f.col(i) = fm[path].block(i * y_dim, k, y_dim, 1);
  if (n_pairs == 0) pt.f.setZero();
  return pt;
}

ThetaProcess zero_theta(const FBSDESpec& spec, const DriverBundle& bundle) {
  ThetaProcess th;
  th.grid = bundle.grid;
  th.x_dim = spec.x_dim;
  th.y_dim = spec.y_dim;
  const int n_paths = bundle.n_paths();
  const int nn = bundle.grid.n_nodes();
  const int np = pair_count(bundle.n_regimes());
  th.x.assign(n_paths, Eigen::MatrixXd::Zero(spec.x_dim, nn));
  th.y.assign(n_paths, Eigen::MatrixXd::Zero(spec.y_dim, nn));
  th.z.assign(n_paths, Eigen::MatrixXd::Zero(spec.y_dim * bundle.d, nn));
  th.r.assign(n_paths, Eigen::MatrixXd::Zero(spec.y_dim, nn));
  th.fm.assign(n_paths,
               Eigen::MatrixXd::Zero(spec.y_dim * std::max(1, np), nn));
  return th;
}

namespace {

double weighted_sq(const Ensemble& a, const Ensemble& b, const TimeGrid& grid,
                   double K) {
  double acc = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    double integral = 0.0, prev = 0.0;
    for (int k = 0; k < grid.n_nodes(); ++k) {
      double v = (a[p].col(k) - b[p].col(k)).squaredNorm() *
                 std::exp(2.0 * K * grid.node(k));
      if (k > 0) integral += 0.5 * grid.dt * (prev + v);
      prev = v;
    }
    acc += integral;
  }
  return acc / static_cast<double>(a.size());
}

}  // namespace

double theta_distance_sq(const ThetaProcess& a, const ThetaProcess& b,
                         double K) {
  double init = 0.0;
  for (std::size_t p = 0; p < a.y.size(); ++p)
    init += (a.y[p].col(0) - b.y[p].col(0)).squaredNorm() *
            std::exp(2.0 * K * a.grid.t0);
  init /= static_cast<double>(a.y.size());
  return init + weighted_sq(a.x, b.x, a.grid, K) +
         weighted_sq(a.y, b.y, a.grid, K) + weighted_sq(a.z, b.z, a.grid, K) +
         weighted_sq(a.r, b.r, a.grid, K) + weighted_sq(a.fm, b.fm, a.grid, K);
}

FBSDESpec build_tau_family(const FBSDESpec& spec, double tau) {
  if (tau < 0.0 || tau > 1.0)
    throw std::invalid_argument("build_tau_family: tau must lie in [0, 1]");
  FBSDESpec out = spec;
  const double kx = spec.kappa_x, ky = spec.kappa_y;
  out.psi = [tau, base = spec.psi, nx = spec.x_dim](const Eigen::VectorXd& y,
                                                    int i0) {
    if (tau == 0.0 || !base)
      return Eigen::VectorXd::Zero(nx).eval();
    return (tau * base(y, i0)).eval();
  };
  out.b = [tau, kx, base = spec.b](double t, const ThetaPoint& th, int i0) {
    Eigen::VectorXd v = -(1.0 - tau) * kx * th.x;
    if (base && tau != 0.0) v += tau * base(t, th, i0);
    return v;
  };
  out.g = [tau, ky, base = spec.g](double t, const ThetaPoint& th, int i0) {
    Eigen::VectorXd v = -(1.0 - tau) * ky * th.y;
    if (base && tau != 0.0) v += tau * base(t, th, i0);
    return v;
  };
  out.sigma.clear();
  for (const auto& s : spec.sigma)
    out.sigma.push_back(
        [tau, s](double t, const ThetaPoint& th, int i0) {
          return (tau * s(t, th, i0)).eval();
        });
  if (spec.gamma)
    out.gamma = [tau, g = spec.gamma](double t) { return (tau * g(t)).eval(); };
  return out;
}

namespace {

void check_admissibility(const FBSDESpec& spec) {
  if (!(spec.kappa_x > spec.kappa_y))
    throw std::invalid_argument(
        "coupled solve: admissibility requires kappa_x > kappa_y");
  if (!(spec.K > spec.kappa_y) || !(spec.K < spec.kappa_x))
    throw std::invalid_argument(
        "coupled solve: admissibility requires K in (kappa_y, kappa_x)");
}

// One pass of the decoupled monotone solve at level tau: the tau-scaled
// coupling terms are frozen at `frozen`, the monotone anchors
// -(1-tau) kappa x and -(1-tau) kappa_y y stay live, and `forcing` is added
// on top. This is the workhorse behind both the tau = 0 solve and the
// frozen-coefficient inner solve of the continuation map. The fractional
// coefficient enters at gamma_scale, which the continuation sets to the
// target level (the family's gamma^tau carries no theta coupling).
ThetaProcess level_pass(const FBSDESpec& spec, double tau, double gamma_scale,
                        const ThetaForcing& forcing,
                        const ThetaProcess& frozen, const DriverBundle& bundle,
                        const RegressionBasis& basis, Exec exec) {
  const int d = bundle.d;
  const int np = pair_count(bundle.n_regimes());
  const TimeGrid& grid = bundle.grid;
  const int nn = grid.n_nodes();
  const int n_paths = bundle.n_paths();
  const bool live = tau != 0.0;

  // The tau-scaled coupling terms frozen at theta^m plus the forcing are
  // evaluated once per sweep into dense arrays; the downstream Euler and
  // regression sweeps then only read them.
  Ensemble fdrift(n_paths), fdiff(n_paths), gdrift(n_paths);
  std::vector<Eigen::VectorXd> x0(n_paths);
  parallel_for(n_paths, exec, [&](std::int64_t p) {
    const int pi = static_cast<int>(p);
    Eigen::MatrixXd dr = Eigen::MatrixXd::Zero(spec.x_dim, nn);
    Eigen::MatrixXd df = Eigen::MatrixXd::Zero(spec.x_dim * d, nn);
    Eigen::MatrixXd gd = Eigen::MatrixXd::Zero(spec.y_dim, nn);
    ThetaPoint pt;
    for (int k = 0; k < nn; ++k) {
      const double t = grid.node(k);
      const int i0 = bundle.regime_nodes[p][k];
      if (live) frozen.read(pt, pi, k, d, np);
      if (live && spec.b) dr.col(k) += tau * spec.b(t, pt, i0);
      if (forcing.psi_drift) dr.col(k) += forcing.psi_drift(pi, k);
      for (int i = 0; i < d; ++i) {
        if (live && i < static_cast<int>(spec.sigma.size()))
          df.block(i * spec.x_dim, k, spec.x_dim, 1) +=
              tau * spec.sigma[i](t, pt, i0);
        if (forcing.eta)
          df.block(i * spec.x_dim, k, spec.x_dim, 1) += forcing.eta(pi, k, i);
      }
      if (live && spec.g) gd.col(k) += tau * spec.g(t, pt, i0);
      if (forcing.phi) gd.col(k) += forcing.phi(pi, k);
    }
    Eigen::VectorXd v = Eigen::VectorXd::Zero(spec.x_dim);
    if (live && spec.psi)
      v += tau * spec.psi(frozen.y[p].col(0), bundle.start_regime);
    if (forcing.xi) v += forcing.xi(pi);
    x0[p] = v;
    fdrift[p] = std::move(dr);
    fdiff[p] = std::move(df);
    gdrift[p] = std::move(gd);
  });

  // forward: dX = [-(1-tau) kx X + frozen drift] ds
  //              + sum_i [frozen diffusion_i] dW_i + gamma_scale gamma dB^H
  ForwardSpec fwd;
  fwd.state_dim = spec.x_dim;
  const double kx_live = (1.0 - tau) * spec.kappa_x;
  fwd.b = [kx_live](double, const Eigen::VectorXd& x, int) {
    return (-kx_live * x).eval();
  };
  if (spec.gamma && gamma_scale != 0.0)
    fwd.gamma = [gamma_scale, g = spec.gamma](double t) {
      return (gamma_scale * g(t)).eval();
    };
  PathTerms terms;
  terms.x0_override = [&x0](int p) { return x0[p]; };
  terms.drift = [&fdrift](int p, int k) {
    return fdrift[p].col(k).eval();
  };
  terms.diffusion = [&fdiff, &spec](int p, int k, int i) {
    return fdiff[p].block(i * spec.x_dim, k, spec.x_dim, 1).eval();
  };
  PathSolution xsol = euler_solve(fwd, bundle, terms, exec);

  // backward: dY = [-(1-tau) ky Y + frozen driver] ds + Z dW + ...
  BackwardSpec bwd;
  bwd.y_dim = spec.y_dim;
  const double ky_live = (1.0 - tau) * spec.kappa_y;
  bwd.g = [ky_live](double, const Eigen::VectorXd& y, const Eigen::MatrixXd&,
                    const Eigen::VectorXd&, const Eigen::MatrixXd&,
                    int) -> Eigen::VectorXd { return -ky_live * y; };
  PathDrift bdrift = [&gdrift](int p, int k) {
    return gdrift[p].col(k).eval();
  };
  RegressionBasis bwd_basis = basis;
  if (!bwd_basis.features) {
    // default features: the freshly solved forward state
    bwd_basis.features = [&xsol](int p, int k) {
      return xsol.x[p].col(k).eval();
    };
    bwd_basis.n_features = spec.x_dim;
    bwd_basis.degree = 2;
  }
  BackwardSolution ysol =
      solve_truncated(bwd, bundle, grid.t_end, bwd_basis, bdrift, exec);

  ThetaProcess out;
  out.grid = grid;
  out.x_dim = spec.x_dim;
  out.y_dim = spec.y_dim;
  out.x = std::move(xsol.x);
  out.y = std::move(ysol.y);
  out.z = std::move(ysol.z);
  out.r = std::move(ysol.r);
  out.fm = std::move(ysol.fm);
  return out;
}

ThetaProcess blend(const ThetaProcess& a, const ThetaProcess& b, double w) {
  // (1-w) a + w b
  ThetaProcess out = a;
  for (std::size_t p = 0; p < a.x.size(); ++p) {
    out.x[p] = (1.0 - w) * a.x[p] + w * b.x[p];
    out.y[p] = (1.0 - w) * a.y[p] + w * b.y[p];
    out.z[p] = (1.0 - w) * a.z[p] + w * b.z[p];
    out.r[p] = (1.0 - w) * a.r[p] + w * b.r[p];
    out.fm[p] = (1.0 - w) * a.fm[p] + w * b.fm[p];
  }
  return out;
}

// Damped Picard solve of the level-tau system with fixed forcing, starting
// from `init`. Returns the solution and the number of sweeps taken.
std::pair<ThetaProcess, int> solve_level(const FBSDESpec& spec, double tau,
                                         double gamma_scale,
                                         const ThetaForcing& forcing,
                                         const DriverBundle& bundle,
                                         const ThetaProcess& init, double tol,
                                         int max_iter,
                                         const RegressionBasis& basis,
                                         Exec exec) {
  ThetaProcess cur = init;
  if (tau == 0.0) {
    // no live coupling: a single pass is the exact solve
    return {level_pass(spec, tau, gamma_scale, forcing, cur, bundle, basis,
                       exec),
            1};
  }
  double omega = 1.0;
  double prev_dist = std::numeric_limits<double>::infinity();
  int rising = 0;
  for (int it = 0; it < max_iter; ++it) {
    ThetaProcess next =
        level_pass(spec, tau, gamma_scale, forcing, cur, bundle, basis, exec);
    if (omega != 1.0) next = blend(cur, next, omega);
    double dist = theta_distance_sq(next, cur, spec.K);
    cur = std::move(next);
    if (dist < tol * tol) return {std::move(cur), it + 1};
    if (dist > prev_dist && dist > 100.0 * tol * tol) {
      if (++rising >= 2) {
        omega = 0.5 * omega;
        rising = 0;
        if (omega < 0.05)
          throw std::runtime_error(
              "coupled solve: inner level iteration diverges");
      }
    } else {
      rising = 0;
    }
    prev_dist = dist;
  }
  return {std::move(cur), max_iter};
}

}  // namespace

ThetaProcess solve_tau0(const FBSDESpec& spec, const ThetaForcing& forcing,
                        const DriverBundle& bundle,
                        const RegressionBasis& basis, Exec exec) {
  check_admissibility(spec);
  ThetaProcess zero = zero_theta(spec, bundle);
  return level_pass(spec, 0.0, 0.0, forcing, zero, bundle, basis, exec);
}

std::pair<ThetaProcess, ContinuationStepReport> continuation_step(
    const FBSDESpec& spec, double tau0, double delta,
    const ThetaProcess& prior, const DriverBundle& bundle, double tol,
    int max_iter, const ThetaForcing& base_forcing,
    const RegressionBasis& basis, Exec exec) {
  if (tau0 + delta > 1.0 + 1e-12)
    throw std::invalid_argument("continuation_step: tau0 + delta exceeds 1");
  ContinuationStepReport report;
  report.tau_from = tau0;
  report.delta = delta;
  if (delta == 0.0) {
    report.outer_iterations = 1;
    return {prior, report};
  }
  const int d = bundle.d;
  const int np = pair_count(bundle.n_regimes());
  const TimeGrid& grid = bundle.grid;
  const double tau1 = tau0 + delta;

  ThetaProcess cur = prior;
  double prev_dist = 0.0;
  double first_dist = 0.0;
  int rising = 0;
  std::vector<double> ratios;
  for (int it = 0; it < max_iter; ++it) {
    // delta-scaled forcing increments built from the current iterate
    ThetaForcing forcing;
    forcing.xi = [&](int p) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(spec.x_dim);
      if (spec.psi)
        v += delta * spec.psi(cur.y[p].col(0), bundle.start_regime);
      if (base_forcing.xi) v += base_forcing.xi(p);
      return v;
    };
    forcing.phi = [&](int p, int k) {
      ThetaPoint th = cur.at(p, k, d, np);
      Eigen::VectorXd v = delta * spec.kappa_y * th.y;
      if (spec.g)
        v += delta * spec.g(grid.node(k), th, bundle.regime_nodes[p][k]);
      if (base_forcing.phi) v += base_forcing.phi(p, k);
      return v;
    };
    forcing.psi_drift = [&](int p, int k) {
      ThetaPoint th = cur.at(p, k, d, np);
      Eigen::VectorXd v = delta * spec.kappa_x * th.x;
      if (spec.b)
        v += delta * spec.b(grid.node(k), th, bundle.regime_nodes[p][k]);
      if (base_forcing.psi_drift) v += base_forcing.psi_drift(p, k);
      return v;
    };
    forcing.eta = [&](int p, int k, int i) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(spec.x_dim);
      if (i < static_cast<int>(spec.sigma.size()))
        v += delta * spec.sigma[i](grid.node(k), cur.at(p, k, d, np),
                                   bundle.regime_nodes[p][k]);
      if (base_forcing.eta) v += base_forcing.eta(p, k, i);
      return v;
    };
    // the inner solve must resolve tighter than the outer map distance,
    // or its truncation noise masks the tau-step contraction
    auto [next, sweeps] =
        solve_level(spec, tau0, tau1, forcing, bundle, cur, 0.2 * tol,
                    2 * max_iter, basis, exec);
    report.inner_sweeps += sweeps;
    double dist = theta_distance_sq(next, cur, spec.K);
    cur = std::move(next);
    report.outer_iterations = it + 1;
    report.final_distance_sq = dist;
    if (it == 0) first_dist = dist;
    if (it > 0 && prev_dist > 0.0 && dist > 100.0 * tol * tol) {
      double ratio = dist / prev_dist;
      ratios.push_back(ratio);
      // transient overshoots of a non-normal map are tolerated; repeated
      // growth past the initial displacement is not
      if (ratio >= 1.0) {
        if (++rising >= 3 && dist > first_dist)
          throw std::runtime_error(
              "continuation_step: iteration diverges; reduce delta");
      } else {
        rising = 0;
      }
    }
    if (dist < tol * tol) break;
    prev_dist = dist;
  }
  if (!ratios.empty()) {
    // geometric mean: the effective per-iteration rate, robust against the
    // transient overshoots of a non-normal affine map
    double acc = 0.0;
    for (double r : ratios) acc += std::log(r);
    report.contraction_ratio =
        std::exp(acc / static_cast<double>(ratios.size()));
    report.c5_hat = report.contraction_ratio / (delta * delta);
  }
  return {std::move(cur), std::move(report)};
}

std::pair<ThetaProcess, ContinuationTrace> solve_fbsde(
    const FBSDESpec& spec, const DriverBundle& bundle, double tol,
    const RegressionBasis& basis, Exec exec) {
  check_admissibility(spec);
  ContinuationTrace trace;
  ThetaProcess theta = solve_tau0(spec, ThetaForcing{}, bundle, basis, exec);
  double tau = 0.0;
  double delta = 1.0;
  double delta_cap = 1.0;
  const int max_iter = 60;
  while (tau < 1.0 - 1e-12) {
    delta = std::min({delta, 1.0 - tau, delta_cap});
    if (delta < 1e-4)
      throw std::runtime_error(
          "continuation failure: delta underflow at tau = " +
          std::to_string(tau));
    try {
      auto [next, report] = continuation_step(spec, tau, delta, theta, bundle,
                                              tol, max_iter, ThetaForcing{},
                                              basis, exec);
      if (report.final_distance_sq >= tol * tol)
        throw std::runtime_error("continuation step did not reach tol");
      theta = std::move(next);
      tau += delta;
      trace.steps.push_back(report);
      if (report.c5_hat > 0.0) {
        double delta0 = 1.0 / (2.0 * std::sqrt(report.c5_hat));
        trace.delta0 = trace.delta0 == 0.0 ? delta0
                                           : std::min(trace.delta0, delta0);
        // allow at most one adaptive doubling above the measured delta0
        delta_cap = 2.0 * trace.delta0;
        delta = std::min(2.0 * delta, delta_cap);
      } else {
        delta = std::min(2.0 * delta, delta_cap);
      }
    } catch (const std::runtime_error&) {
      delta *= 0.5;
      if (delta < 1e-4)
        throw std::runtime_error(
            "continuation failure: delta underflow at tau = " +
            std::to_string(tau));
    }
  }
  trace.reached_one = true;
  // residual check: one plugged-in re-sweep at tau = 1 must barely move theta
  ThetaProcess replay =
      level_pass(spec, 1.0, 1.0, ThetaForcing{}, theta, bundle, basis, exec);
  trace.final_residual = std::sqrt(theta_distance_sq(replay, theta, spec.K));
  return {std::move(theta), std::move(trace)};
}

StabilityReport coupled_stability_check(const FBSDESpec& spec,
                                        const FBSDESpec& perturbed,
                                        const ThetaProcess& theta,
                                        const ThetaProcess& theta_bar,
                                        const DriverBundle& bundle) {
  const int d = bundle.d;
  const int np = pair_count(bundle.n_regimes());
  const TimeGrid& grid = bundle.grid;
  StabilityReport rep;
  rep.lhs = theta_distance_sq(theta, theta_bar, spec.K);
  // perturbation size evaluated along theta_bar
  double init = 0.0;
  double integral_acc = 0.0;
  const int n_paths = theta_bar.n_paths();
  for (int p = 0; p < n_paths; ++p) {
    if (spec.psi || perturbed.psi) {
      Eigen::VectorXd a = spec.psi ? spec.psi(theta_bar.y[p].col(0),
                                              bundle.start_regime)
                                   : Eigen::VectorXd::Zero(spec.x_dim);
      Eigen::VectorXd b = perturbed.psi
                              ? perturbed.psi(theta_bar.y[p].col(0),
                                              bundle.start_regime)
                              : Eigen::VectorXd::Zero(spec.x_dim);
      init += (a - b).squaredNorm() * std::exp(2.0 * spec.K * grid.t0);
    }
    double integral = 0.0, prev = 0.0;
    for (int k = 0; k < grid.n_nodes(); ++k) {
      double s = grid.node(k);
      int i0 = bundle.regime_nodes[p][k];
      ThetaPoint th = theta_bar.at(p, k, d, np);
      double v = 0.0;
      auto diff_norm2 = [&](const ThetaCoefficient& f1,
                            const ThetaCoefficient& f2, int dim) {
        Eigen::VectorXd a =
            f1 ? f1(s, th, i0) : Eigen::VectorXd::Zero(dim).eval();
        Eigen::VectorXd b =
            f2 ? f2(s, th, i0) : Eigen::VectorXd::Zero(dim).eval();
        return (a - b).squaredNorm();
      };
      v += diff_norm2(spec.g, perturbed.g, spec.y_dim);
      v += diff_norm2(spec.b, perturbed.b, spec.x_dim);
      std::size_t ns = std::max(spec.sigma.size(), perturbed.sigma.size());
      for (std::size_t i = 0; i < ns; ++i)
        v += diff_norm2(i < spec.sigma.size() ? spec.sigma[i]
                                              : ThetaCoefficient{},
                        i < perturbed.sigma.size() ? perturbed.sigma[i]
                                                   : ThetaCoefficient{},
                        spec.x_dim);
      v *= std::exp(2.0 * spec.K * s);
      if (k > 0) integral += 0.5 * grid.dt * (prev + v);
      prev = v;
    }
    integral_acc += integral;
  }
  rep.rhs = init / n_paths + integral_acc / n_paths;
  rep.ratio = rep.rhs > 0.0 ? rep.lhs / rep.rhs : 0.0;
  return rep;
}

}  // namespace fbsde
