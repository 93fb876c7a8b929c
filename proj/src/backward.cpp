#include "fbsde/backward.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "fbsde/calculus.hpp"
#include "fbsde/rng.hpp"

namespace fbsde {

Eigen::MatrixXd BackwardSolution::z_at(int path, int k, int d) const {
  Eigen::MatrixXd out(y_dim, d);
  for (int i = 0; i < d; ++i)
    out.col(i) = z[path].block(i * y_dim, k, y_dim, 1);
  return out;
}

Eigen::MatrixXd BackwardSolution::f_at(int path, int k, int n_pairs) const {
  Eigen::MatrixXd out(y_dim, n_pairs);
  for (int i = 0; i < n_pairs; ++i)
    out.col(i) = fm[path].block(i * y_dim, k, y_dim, 1);
  return out;
}

void validate_linearity(const BackwardSpec& spec, int d, int n_pairs,
                        std::uint64_t seed) {
  if (!spec.linear || !spec.affine) return;
  auto eng = rng::make_engine(seed, 0, rng::DriverTag::probe);
  std::normal_distribution<double> z(0.0, 1.0);
  const int ny = spec.y_dim;
  for (int trial = 0; trial < 32; ++trial) {
    double t = std::abs(z(eng));
    int i0 = trial % 2;
    Eigen::VectorXd y(ny), r(ny);
    Eigen::MatrixXd zz(ny, d), ff(ny, std::max(1, n_pairs));
    for (int i = 0; i < ny; ++i) {
      y[i] = z(eng);
      r[i] = z(eng);
    }
    for (int i = 0; i < ny; ++i)
      for (int j = 0; j < d; ++j) zz(i, j) = z(eng);
    ff.setZero();
    for (int i = 0; i < ny; ++i)
      for (int j = 0; j < n_pairs; ++j) ff(i, j) = z(eng);
    Eigen::VectorXd lhs = spec.g(t, y, zz, r, ff, i0);
    Eigen::VectorXd rhs = spec.affine->c0(t, i0) + spec.affine->Ay(t, i0) * y +
                          spec.affine->Ar(t, i0) * r;
    for (int i = 0; i < d; ++i) rhs += spec.affine->Az(t, i0, i) * zz.col(i);
    for (int p = 0; p < n_pairs; ++p)
      rhs += spec.affine->Af(t, i0, p) * ff.col(p);
    if ((lhs - rhs).cwiseAbs().maxCoeff() > 1e-10)
      throw std::invalid_argument(
          "backward spec: driver does not match its affine decomposition");
  }
}

BackwardDriver truncate_driver(const BackwardDriver& g, double n) {
  if (!(n > 0.0))
    throw std::invalid_argument("truncate_driver: n must be > 0");
  return [g, n](double t, const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                const Eigen::VectorXd& r, const Eigen::MatrixXd& f, int i0)
             -> Eigen::VectorXd {
    if (t > n) return Eigen::VectorXd::Zero(y.size());
    return g(t, y, z, r, f, i0);
  };
}

namespace {

// regime indicators x polynomial features up to the requested degree
struct DesignBuilder {
  int m = 1;
  int n_features = 0;
  int degree = 0;
  int poly_terms = 1;

  DesignBuilder(int m_, const RegressionBasis& basis)
      : m(m_),
        n_features(basis.features ? basis.n_features : 0),
        degree(basis.degree) {
    poly_terms = 1;
    if (n_features > 0 && degree >= 1) poly_terms += n_features;
    if (n_features > 0 && degree >= 2)
      poly_terms += n_features * (n_features + 1) / 2;
  }

  int n_columns() const { return m * poly_terms; }

  void fill_row(
      Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row, int regime,
      const Eigen::VectorXd& feat) const {
    row.setZero();
    const int base = regime * poly_terms;
    row[base] = 1.0;
    if (n_features > 0 && degree >= 1)
      for (int i = 0; i < n_features; ++i) row[base + 1 + i] = feat[i];
    if (n_features > 0 && degree >= 2) {
      int idx = base + 1 + n_features;
      for (int i = 0; i < n_features; ++i)
        for (int j = i; j < n_features; ++j) row[idx++] = feat[i] * feat[j];
    }
  }
};

// least squares with silent removal of structurally empty columns
Eigen::MatrixXd solve_ls(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                         bool strict, int step) {
  std::vector<int> keep;
  for (int c = 0; c < X.cols(); ++c)
    if (X.col(c).cwiseAbs().maxCoeff() > 0.0) keep.push_back(c);
  Eigen::MatrixXd Xk(X.rows(), static_cast<int>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i)
    Xk.col(static_cast<int>(i)) = X.col(keep[i]);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xk);
  if (strict && qr.rank() < Xk.cols())
    throw std::runtime_error(
        "regression conditioning: design matrix rank-deficient at step " +
        std::to_string(step));
  Eigen::MatrixXd beta_k = qr.solve(Y);
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(X.cols(), Y.cols());
  for (std::size_t i = 0; i < keep.size(); ++i)
    beta.row(keep[i]) = beta_k.row(static_cast<int>(i));
  return beta;
}

}  // namespace

BackwardSolution solve_truncated(const BackwardSpec& spec,
                                 const DriverBundle& bundle, double n,
                                 const RegressionBasis& basis, Exec exec) {
  return solve_truncated(spec, bundle, n, basis, PathDrift{}, exec);
}

BackwardSolution solve_truncated(const BackwardSpec& spec,
                                 const DriverBundle& bundle, double n,
                                 const RegressionBasis& basis,
                                 const PathDrift& extra_drift, Exec exec) {
  const TimeGrid& grid = bundle.grid;
  if (n > grid.t_end + 1e-9)
    throw std::invalid_argument(
        "solve_truncated: truncation level exceeds the bundle horizon");
  const int kn = std::min(
      grid.n_steps, static_cast<int>(std::lround((n - grid.t0) / grid.dt)));
  const int n_paths = bundle.n_paths();
  const int ny = spec.y_dim;
  const int d = bundle.d;
  const int m = bundle.n_regimes();
  const int np = pair_count(m);
  const int n_drivers = d + 1 + np;

  BackwardSolution sol;
  sol.grid = grid;
  sol.y_dim = ny;
  sol.truncation_level = grid.node(kn);
  sol.y.assign(n_paths, Eigen::MatrixXd::Zero(ny, grid.n_nodes()));
  sol.z.assign(n_paths, Eigen::MatrixXd::Zero(ny * d, grid.n_nodes()));
  sol.r.assign(n_paths, Eigen::MatrixXd::Zero(ny, grid.n_nodes()));
  sol.fm.assign(n_paths,
                Eigen::MatrixXd::Zero(ny * std::max(1, np), grid.n_nodes()));

  DesignBuilder design(m, basis);
  const int B = design.n_columns();
  if (n_paths < B)
    throw std::runtime_error(
        "regression conditioning: fewer paths than basis columns");

  Eigen::MatrixXd phi(n_paths, B);
  Eigen::MatrixXd target(n_paths, ny);
  Eigen::MatrixXd ghat(n_paths, n_drivers);
  Eigen::MatrixXd x2(n_paths, B * n_drivers);
  Eigen::VectorXd empty_feat;

  for (int k = kn - 1; k >= 0; --k) {
    const double t = grid.node(k);
    parallel_for(n_paths, exec, [&](std::int64_t p) {
      Eigen::VectorXd feat = basis.features
                                 ? basis.features(static_cast<int>(p), k)
                                 : empty_feat;
      design.fill_row(phi.row(p), bundle.regime_nodes[p][k], feat);
      target.row(p) = sol.y[p].col(k + 1).transpose();
      for (int i = 0; i < d; ++i) ghat(p, i) = bundle.w_increments[p](i, k);
      ghat(p, d) = bundle.bh_increment(static_cast<int>(p), k);
      for (int q = 0; q < np; ++q)
        ghat(p, d + 1 + q) = bundle.m_increments[p](q, k);
    });
    Eigen::MatrixXd beta = solve_ls(phi, target, basis.strict_rank, k);
    Eigen::MatrixXd yhat = phi * beta;

    Eigen::MatrixXd resid = target - yhat;
    parallel_for(n_paths, exec, [&](std::int64_t p) {
      for (int b = 0; b < B; ++b)
        for (int j = 0; j < n_drivers; ++j)
          x2(p, b * n_drivers + j) = phi(p, b) * ghat(p, j);
    });
    Eigen::MatrixXd coef = solve_ls(x2, resid, false, k);

    parallel_for(n_paths, exec, [&](std::int64_t p) {
      const int i0 = bundle.regime_nodes[p][k];
      Eigen::MatrixXd v = Eigen::MatrixXd::Zero(ny, n_drivers);
      for (int b = 0; b < B; ++b) {
        double w = phi(p, b);
        if (w == 0.0) continue;
        for (int j = 0; j < n_drivers; ++j)
          v.col(j) += w * coef.row(b * n_drivers + j).transpose();
      }
      Eigen::MatrixXd zk = v.leftCols(d);
      Eigen::VectorXd rk = v.col(d);
      Eigen::MatrixXd fk =
          np > 0 ? v.rightCols(np).eval() : Eigen::MatrixXd::Zero(ny, 1).eval();
      Eigen::VectorXd yh = yhat.row(p).transpose();
      Eigen::VectorXd force = extra_drift
                                  ? extra_drift(static_cast<int>(p), k).eval()
                                  : Eigen::VectorXd::Zero(ny).eval();
      // one inner fixed-point pass for the implicit y in g
      Eigen::VectorXd ya =
          yh - grid.dt * (spec.g(t, yh, zk, rk, fk, i0) + force);
      Eigen::VectorXd yk =
          yh - grid.dt * (spec.g(t, ya, zk, rk, fk, i0) + force);
      sol.y[p].col(k) = yk;
      for (int i = 0; i < d; ++i)
        sol.z[p].block(i * ny, k, ny, 1) = zk.col(i);
      sol.r[p].col(k) = rk;
      for (int q = 0; q < np; ++q)
        sol.fm[p].block(q * ny, k, ny, 1) = fk.col(q);
    });
  }
  for (const auto& path : sol.y)
    if (!path.allFinite())
      throw std::runtime_error("solve_truncated: solution contains NaN/Inf");
  return sol;
}

std::pair<BackwardSolution, CauchyReport> solve_infinite(
    const BackwardSpec& spec, const DriverBundle& bundle, double tol,
    const std::vector<double>& n_schedule, const RegressionBasis& basis,
    Exec exec) {
  if (!(spec.K > 0.0))
    throw std::invalid_argument(
        "solve_infinite: the truncation scheme requires K > 0");
  if (n_schedule.empty())
    throw std::invalid_argument("solve_infinite: empty truncation schedule");
  for (std::size_t i = 1; i < n_schedule.size(); ++i)
    if (n_schedule[i] <= n_schedule[i - 1])
      throw std::invalid_argument("solve_infinite: n_schedule must increase");

  CauchyReport report;
  BackwardSolution prev, cur;
  int non_decreasing = 0;
  for (double level : n_schedule) {
    cur = solve_truncated(spec, bundle, level, basis, exec);
    report.levels.push_back(level);
    if (report.levels.size() > 1) {
      Ensemble diff(cur.y.size());
      for (std::size_t p = 0; p < cur.y.size(); ++p)
        diff[p] = cur.y[p] - prev.y[p];
      double dist = weighted_l2k_norm(diff, spec.K, bundle.grid).value;
      if (!report.distances.empty() && dist >= report.distances.back()) {
        if (++non_decreasing >= 3)
          throw std::runtime_error(
              "solve_infinite: level distances stopped decreasing");
      } else {
        non_decreasing = 0;
      }
      report.distances.push_back(dist);
      if (dist < tol) {
        report.converged = true;
        return {std::move(cur), std::move(report)};
      }
    }
    prev = cur;
  }
  return {std::move(cur), std::move(report)};
}

namespace {

double weighted_sq_energy(const Ensemble& x, const TimeGrid& grid, double K) {
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

double bsde_fbm_constant(const BackwardSolution& sol,
                         const DriverBundle& bundle, double K) {
  // the extracted r plays the role of the fractional integrand; the energy
  // constant uses its ensemble-mean magnitude path
  const TimeGrid& grid = sol.grid;
  Eigen::VectorXd rbar = Eigen::VectorXd::Zero(grid.n_nodes());
  for (const auto& path : sol.r)
    for (int k = 0; k < grid.n_nodes(); ++k) rbar[k] += path.col(k).norm();
  rbar /= static_cast<double>(sol.r.size());
  if (rbar.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  GeneratorInputs gi;
  gi.hurst = bundle.hurst;
  gi.t_origin = grid.t0;
  gi.correction_steps = std::min(grid.n_steps, 256);
  gi.gamma = [&grid, rbar](double t) {
    double k = (t - grid.t0) / grid.dt;
    int ki = std::min(grid.n_steps, std::max(0, static_cast<int>(k)));
    Eigen::VectorXd v(1);
    v[0] = rbar[ki];
    return v;
  };
  double acc = 0.0, prev = 0.0;
  for (int k = 0; k < grid.n_nodes(); ++k) {
    double s = grid.node(k);
    double val =
        std::exp(2.0 * K * s) * std::abs(fbm_correction(gi, s).trace());
    if (k > 0) acc += 0.5 * grid.dt * (prev + val);
    prev = val;
  }
  return acc;
}

void check_lemma42_regime(const BackwardSpec& spec, double mu) {
  if (!(mu > 0.0))
    throw std::invalid_argument("bsde_estimate_check: mu must be > 0");
  double bound = std::min(0.5, spec.K - mu / 2.0);
  if (!(spec.L > 0.0) || !(spec.L < bound))
    throw std::invalid_argument(
        "bsde_estimate_check: need 0 < L < min(1/2, K - mu/2)");
}

}  // namespace

BsdeInequalityReport bsde_estimate_check(const BackwardSpec& spec,
                                         const BackwardSolution& sol,
                                         const DriverBundle& bundle,
                                         double mu) {
  check_lemma42_regime(spec, mu);
  const TimeGrid& grid = sol.grid;
  const double K = spec.K, L = spec.L;
  BsdeInequalityReport r;
  double init = 0.0;
  for (const auto& path : sol.y)
    init += path.col(0).squaredNorm() * std::exp(2.0 * K * grid.t0);
  init /= static_cast<double>(sol.y.size());
  r.lhs = init +
          (2.0 * K - 2.0 * L - mu) * weighted_sq_energy(sol.y, grid, K) +
          (1.0 - 2.0 * L) * weighted_sq_energy(sol.z, grid, K) +
          2.0 * L * weighted_sq_energy(sol.fm, grid, K) +
          2.0 * L * weighted_sq_energy(sol.r, grid, K);

  const int ny = spec.y_dim;
  const int d = bundle.d;
  const int np = pair_count(bundle.n_regimes());
  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(ny);
  Eigen::MatrixXd z0 = Eigen::MatrixXd::Zero(ny, d);
  Eigen::MatrixXd f0 = Eigen::MatrixXd::Zero(ny, std::max(1, np));
  double acc = 0.0;
  for (std::size_t p = 0; p < sol.y.size(); ++p) {
    double integral = 0.0, prev = 0.0;
    for (int k = 0; k < grid.n_nodes(); ++k) {
      double s = grid.node(k);
      int i0 = bundle.regime_nodes[p][k];
      double v =
          spec.g(s, y0, z0, y0, f0, i0).squaredNorm() * std::exp(2.0 * K * s);
      if (k > 0) integral += 0.5 * grid.dt * (prev + v);
      prev = v;
    }
    acc += integral;
  }
  acc /= static_cast<double>(sol.y.size());
  r.fbm_constant = bsde_fbm_constant(sol, bundle, K);
  r.rhs = acc / mu + r.fbm_constant;
  r.margin = r.rhs - r.lhs;
  r.pass = r.lhs <= r.rhs + 1e-12;
  return r;
}

BsdeInequalityReport bsde_estimate_check(const BackwardSpec& spec,
                                         const BackwardSpec& other,
                                         const BackwardSolution& sol,
                                         const BackwardSolution& other_sol,
                                         const DriverBundle& bundle,
                                         double mu) {
  check_lemma42_regime(spec, mu);
  const TimeGrid& grid = sol.grid;
  const double K = spec.K, L = spec.L;
  const int n_paths = static_cast<int>(sol.y.size());
  if (other_sol.y.size() != sol.y.size())
    throw std::invalid_argument("bsde_estimate_check: ensembles differ");
  BsdeInequalityReport r;
  auto diff_of = [&](const Ensemble& a, const Ensemble& b) {
    Ensemble diff(n_paths);
    for (int p = 0; p < n_paths; ++p) diff[p] = a[p] - b[p];
    return diff;
  };
  Ensemble dy = diff_of(sol.y, other_sol.y);
  double init = 0.0;
  for (const auto& path : dy)
    init += path.col(0).squaredNorm() * std::exp(2.0 * K * grid.t0);
  init /= n_paths;
  r.lhs = init +
          (2.0 * K - 2.0 * L - mu) * weighted_sq_energy(dy, grid, K) +
          (1.0 - 2.0 * L) *
              weighted_sq_energy(diff_of(sol.z, other_sol.z), grid, K) +
          2.0 * L * weighted_sq_energy(diff_of(sol.fm, other_sol.fm), grid, K) +
          2.0 * L * weighted_sq_energy(diff_of(sol.r, other_sol.r), grid, K);

  const int d = bundle.d;
  const int np = pair_count(bundle.n_regimes());
  double acc = 0.0;
  for (int p = 0; p < n_paths; ++p) {
    double integral = 0.0, prev = 0.0;
    for (int k = 0; k < grid.n_nodes(); ++k) {
      double s = grid.node(k);
      int i0 = bundle.regime_nodes[p][k];
      Eigen::VectorXd yb = other_sol.y[p].col(k);
      Eigen::MatrixXd zb = other_sol.z_at(p, k, d);
      Eigen::VectorXd rb = other_sol.r[p].col(k);
      Eigen::MatrixXd fb = np > 0
                               ? other_sol.f_at(p, k, np).eval()
                               : Eigen::MatrixXd::Zero(spec.y_dim, 1).eval();
      double v = (spec.g(s, yb, zb, rb, fb, i0) -
                  other.g(s, yb, zb, rb, fb, i0))
                     .squaredNorm() *
                 std::exp(2.0 * K * s);
      if (k > 0) integral += 0.5 * grid.dt * (prev + v);
      prev = v;
    }
    acc += integral;
  }
  acc /= n_paths;
  r.rhs = acc / mu;
  r.margin = r.rhs - r.lhs;
  r.pass = r.lhs <= r.rhs + 1e-12;
  return r;
}

}  // namespace fbsde
