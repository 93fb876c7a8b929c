#include "fbsde/forward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "fbsde/calculus.hpp"
#include "fbsde/rng.hpp"

namespace fbsde {

std::function<Eigen::VectorXd(int)> fixed_x0(const Eigen::VectorXd& v) {
  return [v](int) { return v; };
}

std::function<Eigen::VectorXd(int)> fixed_x0(double v) {
  Eigen::VectorXd x(1);
  x[0] = v;
  return fixed_x0(x);
}

namespace {

Eigen::VectorXd eval_coefficient(const Coefficient& c, double t,
                                 const Eigen::VectorXd& x, int i0,
                                 const char* name) {
  try {
    return c(t, x, i0);
  } catch (const std::exception& e) {
    std::ostringstream os;
    os << "coefficient evaluation: " << name << " failed at t=" << t
       << ", regime=" << (i0 + 1) << ", |x|=" << x.norm() << ": " << e.what();
    throw std::runtime_error(os.str());
  }
}

void check_finite(const Ensemble& x, const char* what) {
  for (const auto& path : x)
    if (!path.allFinite())
      throw std::runtime_error(std::string(what) +
                               ": solution contains NaN/Inf entries");
}

}  // namespace

PathSolution euler_solve(const ForwardSpec& spec, const DriverBundle& bundle,
                         Exec exec) {
  return euler_solve(spec, bundle, PathTerms{}, exec);
}

PathSolution euler_solve(const ForwardSpec& spec, const DriverBundle& bundle,
                         const PathTerms& extra, Exec exec) {
  const TimeGrid& grid = bundle.grid;
  const int n_paths = bundle.n_paths();
  const int n = spec.state_dim;
  const bool has_gamma = static_cast<bool>(spec.gamma);
  PathSolution sol;
  sol.grid = grid;
  sol.method = "euler";
  sol.x.resize(n_paths);
  parallel_for(n_paths, exec, [&](std::int64_t p) {
    const int pi = static_cast<int>(p);
    Eigen::MatrixXd x(n, grid.n_nodes());
    x.col(0) = extra.x0_override ? extra.x0_override(pi) : spec.x0(pi);
    for (int k = 0; k < grid.n_steps; ++k) {
      const double t = grid.node(k);
      const int i0 = bundle.regime_nodes[p][k];
      Eigen::VectorXd xk = x.col(k);
      Eigen::VectorXd next = xk;
      if (spec.b)
        next += grid.dt * eval_coefficient(spec.b, t, xk, i0, "b");
      if (extra.drift) next += grid.dt * extra.drift(pi, k);
      for (std::size_t i = 0; i < spec.sigma.size(); ++i)
        next += eval_coefficient(spec.sigma[i], t, xk, i0, "sigma") *
                bundle.w_increments[p](static_cast<int>(i), k);
      if (extra.diffusion)
        for (int i = 0; i < bundle.d; ++i)
          next += extra.diffusion(pi, k, i) * bundle.w_increments[p](i, k);
      if (has_gamma) next += spec.gamma(t) * bundle.bh_increment(pi, k);
      x.col(k + 1) = next;
    }
    sol.x[p] = std::move(x);
  });
  check_finite(sol.x, "euler_solve");
  return sol;
}

namespace {

// sup over nodes <= kT of e^{-a t_k} * mean_paths trapz_0^{t_k} |dx|^2
double equivalent_norm_distance(const Ensemble& a, const Ensemble& b,
                                const TimeGrid& grid, int kT, double aa) {
  const int n_paths = static_cast<int>(a.size());
  Eigen::VectorXd mean_sq = Eigen::VectorXd::Zero(kT + 1);
  for (int p = 0; p < n_paths; ++p)
    for (int k = 0; k <= kT; ++k)
      mean_sq[k] += (a[p].col(k) - b[p].col(k)).squaredNorm();
  mean_sq /= n_paths;
  double best = 0.0;
  double integral = 0.0;
  for (int k = 1; k <= kT; ++k) {
    integral += 0.5 * grid.dt * (mean_sq[k - 1] + mean_sq[k]);
    best = std::max(best, std::exp(-aa * (grid.node(k) - grid.t0)) * integral);
  }
  return best;
}

}  // namespace

std::pair<PathSolution, ContractionReport> picard_solve(
    const ForwardSpec& spec, const DriverBundle& bundle, double T, double a,
    double tol, int max_iter, Exec exec) {
  const TimeGrid& grid = bundle.grid;
  if (a <= 0.0) throw std::invalid_argument("picard_solve: a must be > 0");
  if (T > grid.t_end + 1e-12)
    throw std::invalid_argument("picard_solve: T exceeds the bundle horizon");
  const double L = std::max(spec.l_bx, spec.l_sx);
  ContractionReport report;
  report.theoretical_factor =
      (1.0 - std::exp(-a * T)) * 2.0 * L * L * (T + 1.0) / a;
  if (report.theoretical_factor >= 1.0)
    throw std::invalid_argument(
        "picard_solve: contraction factor " +
        std::to_string(report.theoretical_factor) +
        " is not < 1; take a larger weight parameter a");
  const int kT = static_cast<int>(std::lround((T - grid.t0) / grid.dt));
  const int n_paths = bundle.n_paths();
  const int n = spec.state_dim;
  const bool has_gamma = static_cast<bool>(spec.gamma);

  Ensemble cur(n_paths);
  for (int p = 0; p < n_paths; ++p) {
    Eigen::MatrixXd x(n, kT + 1);
    x.colwise() = spec.x0(p).eval();
    cur[p] = std::move(x);
  }
  Ensemble next(n_paths);
  for (int it = 0; it < max_iter; ++it) {
    next.resize(n_paths);
    parallel_for(n_paths, exec, [&](std::int64_t p) {
      Eigen::MatrixXd x(n, kT + 1);
      x.col(0) = spec.x0(static_cast<int>(p));
      Eigen::VectorXd acc = x.col(0);
      for (int k = 0; k < kT; ++k) {
        const double t = grid.node(k);
        const int i0 = bundle.regime_nodes[p][k];
        Eigen::VectorXd xk = cur[p].col(k);
        if (spec.b)
          acc += grid.dt * eval_coefficient(spec.b, t, xk, i0, "b");
        for (std::size_t i = 0; i < spec.sigma.size(); ++i)
          acc += eval_coefficient(spec.sigma[i], t, xk, i0, "sigma") *
                 bundle.w_increments[p](static_cast<int>(i), k);
        if (has_gamma) acc += spec.gamma(t) * bundle.bh_increment(p, k);
        x.col(k + 1) = acc;
      }
      next[p] = std::move(x);
    });
    double dist = equivalent_norm_distance(next, cur, grid, kT, a);
    report.distances.push_back(dist);
    if (report.distances.size() > 1 && report.distances[it - 1] > 0)
      report.ratios.push_back(dist / report.distances[it - 1]);
    std::swap(cur, next);
    report.iterations = it + 1;
    if (dist < tol) {
      report.converged = true;
      break;
    }
  }
  PathSolution sol;
  sol.grid = make_grid(grid.t0, grid.node(kT), kT);
  sol.method = "picard";
  sol.x = std::move(cur);
  check_finite(sol.x, "picard_solve");
  return {std::move(sol), std::move(report)};
}

AssumptionAProbe probe_assumption_a(const ForwardSpec& spec, int sample_count,
                                    const Eigen::VectorXd& box_lo,
                                    const Eigen::VectorXd& box_hi,
                                    double t_lo, double t_hi, int n_regimes,
                                    std::uint64_t seed) {
  if ((box_hi - box_lo).minCoeff() <= 0.0)
    throw std::invalid_argument("probe_assumption_a: degenerate box");
  auto eng = rng::make_engine(seed, 0, rng::DriverTag::probe);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int n = spec.state_dim;
  AssumptionAProbe probe;
  probe.samples = sample_count;
  probe.kappa_x_hat = std::numeric_limits<double>::infinity();
  auto draw_x = [&] {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i)
      x[i] = box_lo[i] + unif(eng) * (box_hi[i] - box_lo[i]);
    return x;
  };
  const double tol = 1e-9;
  for (int s = 0; s < sample_count; ++s) {
    double t = t_lo + unif(eng) * (t_hi - t_lo);
    int i0 = std::min(n_regimes - 1,
                      static_cast<int>(unif(eng) * n_regimes));
    Eigen::VectorXd x = draw_x(), xb = draw_x();
    Eigen::VectorXd dxv = x - xb;
    double dx = dxv.norm();
    if (dx < 1e-12) continue;
    if (spec.b) {
      Eigen::VectorXd db = spec.b(t, x, i0) - spec.b(t, xb, i0);
      double lb = db.norm() / dx;
      probe.l_bx_hat = std::max(probe.l_bx_hat, lb);
      if (lb > spec.l_bx + tol) ++probe.violations_lipschitz;
      double kappa = -db.dot(dxv) / (dx * dx);
      probe.kappa_x_hat = std::min(probe.kappa_x_hat, kappa);
      if (db.dot(dxv) > -spec.kappa_x * dx * dx + tol)
        ++probe.violations_monotonicity;
    }
    for (const auto& sig : spec.sigma) {
      double ls = (sig(t, x, i0) - sig(t, xb, i0)).norm() / dx;
      probe.l_sx_hat = std::max(probe.l_sx_hat, ls);
      if (ls > spec.l_sx + tol) ++probe.violations_lipschitz;
    }
  }
  if (!std::isfinite(probe.kappa_x_hat)) probe.kappa_x_hat = 0.0;
  return probe;
}

DecayDiagnostic decay_diagnostic(const PathSolution& sol, double K) {
  const int n_paths = static_cast<int>(sol.x.size());
  if (n_paths < 100)
    throw std::invalid_argument(
        "decay_diagnostic: needs an ensemble of at least 100 paths");
  const int nn = sol.grid.n_nodes();
  DecayDiagnostic d;
  d.weighted_second_moment.resize(nn, 0.0);
  for (const auto& path : sol.x)
    for (int k = 0; k < nn; ++k)
      d.weighted_second_moment[k] += path.col(k).squaredNorm();
  for (int k = 0; k < nn; ++k)
    d.weighted_second_moment[k] *=
        std::exp(2.0 * K * sol.grid.node(k)) / n_paths;
  // least-squares slope of log(curve) over the last quarter of the window
  int k_from = (3 * nn) / 4;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (int k = k_from; k < nn; ++k) {
    double v = d.weighted_second_moment[k];
    if (v <= 0.0) continue;
    double xk = sol.grid.node(k), yk = std::log(v);
    sx += xk; sy += yk; sxx += xk * xk; sxy += xk * yk;
    ++cnt;
  }
  if (cnt >= 2 && sxx * cnt - sx * sx > 0)
    d.tail_slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  d.decays = d.tail_slope < 0.0;
  return d;
}

namespace {

double fbm_energy_constant(const std::function<Eigen::VectorXd(double)>& gamma,
                           double H, const TimeGrid& grid, double K) {
  if (!gamma) return 0.0;
  GeneratorInputs gi;
  gi.gamma = gamma;
  gi.hurst = H;
  gi.t_origin = grid.t0;
  gi.correction_steps = std::min(grid.n_steps, 512);
  // trapezoid of e^{2Ks} |tr A_fbm(s)| over the truncation window
  double acc = 0.0, prev = 0.0;
  for (int k = 0; k < grid.n_nodes(); ++k) {
    double s = grid.node(k);
    double val = std::exp(2.0 * K * s) * std::abs(fbm_correction(gi, s).trace());
    if (k > 0) acc += 0.5 * grid.dt * (prev + val);
    prev = val;
  }
  return acc;
}

double weighted_energy(const Ensemble& x, const TimeGrid& grid, double K) {
  double acc = 0.0;
  for (const auto& path : x) {
    double integral = 0.0, prev = 0.0;
    for (int k = 0; k < grid.n_nodes(); ++k) {
      double v = path.col(k).squaredNorm() * std::exp(2.0 * K * grid.node(k));
      if (k > 0) integral += 0.5 * grid.dt * (prev + v);
      prev = v;
    }
    acc += integral;
  }
  return acc / static_cast<double>(x.size());
}

}  // namespace

InequalityReport apriori_check(const ForwardSpec& spec,
                               const PathSolution& sol,
                               const DriverBundle& bundle, double K,
                               double mu) {
  const double mu_max = spec.kappa_x - K - 0.5 * spec.l_sx * spec.l_sx;
  if (!(mu > 0.0) || !(mu < mu_max))
    throw std::invalid_argument(
        "apriori_check: mu must lie in (0, kappa_x - K - l_sx^2/2)");
  const TimeGrid& grid = sol.grid;
  InequalityReport r;
  const double coeff =
      2.0 * spec.kappa_x - 2.0 * K - spec.l_sx * spec.l_sx - 2.0 * mu;
  r.lhs = coeff * weighted_energy(sol.x, grid, K);

  const int n_paths = static_cast<int>(sol.x.size());
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(spec.state_dim);
  double init = 0.0, drift_term = 0.0, diff_term = 0.0;
  for (int p = 0; p < n_paths; ++p) {
    init += sol.x[p].col(0).squaredNorm() * std::exp(2.0 * K * grid.t0);
    double ib = 0.0, is = 0.0, pb = 0.0, ps = 0.0;
    for (int k = 0; k < grid.n_nodes(); ++k) {
      double s = grid.node(k);
      int i0 = bundle.regime_nodes[p][k];
      double w = std::exp(2.0 * K * s);
      double vb = spec.b ? spec.b(s, zero, i0).squaredNorm() * w : 0.0;
      double vs = 0.0;
      for (const auto& sig : spec.sigma) vs += sig(s, zero, i0).squaredNorm();
      vs *= w;
      if (k > 0) {
        ib += 0.5 * grid.dt * (pb + vb);
        is += 0.5 * grid.dt * (ps + vs);
      }
      pb = vb;
      ps = vs;
    }
    drift_term += ib;
    diff_term += is;
  }
  init /= n_paths;
  drift_term /= n_paths;
  diff_term /= n_paths;
  r.fbm_constant = fbm_energy_constant(spec.gamma, bundle.hurst, grid, K);
  r.rhs = init + drift_term / mu +
          (1.0 + spec.l_sx * spec.l_sx / mu) * diff_term + r.fbm_constant;
  r.margin = r.rhs - r.lhs;
  r.pass = r.lhs <= r.rhs + 1e-12;
  return r;
}

InequalityReport apriori_check(const ForwardSpec& spec,
                               const ForwardSpec& other,
                               const PathSolution& sol,
                               const PathSolution& other_sol,
                               const DriverBundle& bundle, double K,
                               double mu) {
  const double mu_max = spec.kappa_x - K - 0.5 * spec.l_sx * spec.l_sx;
  if (!(mu > 0.0) || !(mu < mu_max))
    throw std::invalid_argument(
        "apriori_check: mu must lie in (0, kappa_x - K - l_sx^2/2)");
  if (sol.x.size() != other_sol.x.size())
    throw std::invalid_argument("apriori_check: ensembles differ in size");
  const TimeGrid& grid = sol.grid;
  InequalityReport r;
  const double coeff =
      2.0 * spec.kappa_x - 2.0 * K - spec.l_sx * spec.l_sx - 2.0 * mu;
  const int n_paths = static_cast<int>(sol.x.size());
  Ensemble diff(n_paths);
  for (int p = 0; p < n_paths; ++p) diff[p] = sol.x[p] - other_sol.x[p];
  r.lhs = coeff * weighted_energy(diff, grid, K);

  double init = 0.0, drift_term = 0.0, diff_term = 0.0;
  for (int p = 0; p < n_paths; ++p) {
    init += diff[p].col(0).squaredNorm() * std::exp(2.0 * K * grid.t0);
    double ib = 0.0, is = 0.0, pb = 0.0, ps = 0.0;
    for (int k = 0; k < grid.n_nodes(); ++k) {
      double s = grid.node(k);
      int i0 = bundle.regime_nodes[p][k];
      double w = std::exp(2.0 * K * s);
      Eigen::VectorXd xb = other_sol.x[p].col(k);
      double vb = 0.0;
      if (spec.b || other.b) {
        Eigen::VectorXd b1 = spec.b ? spec.b(s, xb, i0)
                                    : Eigen::VectorXd::Zero(spec.state_dim);
        Eigen::VectorXd b2 = other.b ? other.b(s, xb, i0)
                                     : Eigen::VectorXd::Zero(spec.state_dim);
        vb = (b1 - b2).squaredNorm() * w;
      }
      double vs = 0.0;
      std::size_t nsig = std::max(spec.sigma.size(), other.sigma.size());
      for (std::size_t i = 0; i < nsig; ++i) {
        Eigen::VectorXd s1 = i < spec.sigma.size()
                                 ? spec.sigma[i](s, xb, i0)
                                 : Eigen::VectorXd::Zero(spec.state_dim);
        Eigen::VectorXd s2 = i < other.sigma.size()
                                 ? other.sigma[i](s, xb, i0)
                                 : Eigen::VectorXd::Zero(spec.state_dim);
        vs += (s1 - s2).squaredNorm();
      }
      vs *= w;
      if (k > 0) {
        ib += 0.5 * grid.dt * (pb + vb);
        is += 0.5 * grid.dt * (ps + vs);
      }
      pb = vb;
      ps = vs;
    }
    drift_term += ib;
    diff_term += is;
  }
  init /= n_paths;
  drift_term /= n_paths;
  diff_term /= n_paths;
  // gamma-difference constant only when the fractional coefficients differ
  bool gamma_differs = false;
  if (static_cast<bool>(spec.gamma) != static_cast<bool>(other.gamma))
    gamma_differs = true;
  else if (spec.gamma && other.gamma) {
    for (int k = 0; k < grid.n_nodes(); k += std::max(1, grid.n_steps / 16))
      if ((spec.gamma(grid.node(k)) - other.gamma(grid.node(k))).norm() >
          1e-14)
        gamma_differs = true;
  }
  if (gamma_differs) {
    auto gdiff = [&](double s) {
      Eigen::VectorXd g1 = spec.gamma ? spec.gamma(s)
                                      : Eigen::VectorXd::Zero(spec.state_dim);
      Eigen::VectorXd g2 = other.gamma
                               ? other.gamma(s)
                               : Eigen::VectorXd::Zero(spec.state_dim);
      return (g1 - g2).eval();
    };
    r.fbm_constant = fbm_energy_constant(gdiff, bundle.hurst, grid, K);
  }
  r.rhs = init + drift_term / mu +
          (1.0 + spec.l_sx * spec.l_sx / mu) * diff_term + r.fbm_constant;
  r.margin = r.rhs - r.lhs;
  r.pass = r.lhs <= r.rhs + 1e-12;
  return r;
}

}  // namespace fbsde
