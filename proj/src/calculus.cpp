#include "fbsde/calculus.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fbsde {

void check_test_function(
    const TestFunction& tf,
    const std::vector<std::tuple<double, Eigen::VectorXd, int>>& samples) {
  const double h = 1e-5;
  for (const auto& [t, x, i0] : samples) {
    Eigen::MatrixXd hess = tf.hess(t, x, i0);
    if ((hess - hess.transpose()).cwiseAbs().maxCoeff() > 1e-8)
      throw std::invalid_argument("test function: hessian not symmetric");
    Eigen::VectorXd g = tf.grad(t, x, i0);
    for (int i = 0; i < x.size(); ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      double fd = (tf.value(t, xp, i0) - tf.value(t, xm, i0)) / (2.0 * h);
      double scale = std::max(1.0, std::abs(g[i]));
      if (std::abs(fd - g[i]) > 1e-4 * scale)
        throw std::invalid_argument(
            "test function: gradient component " + std::to_string(i) +
            " disagrees with central differences");
    }
  }
}

TestFunction finite_difference_test_function(
    std::function<double(double, const Eigen::VectorXd&, int)> value,
    double step) {
  TestFunction tf;
  tf.value = value;
  tf.time_deriv = [value, step](double t, const Eigen::VectorXd& x, int i0) {
    return (value(t + step, x, i0) - value(t - step, x, i0)) / (2.0 * step);
  };
  tf.grad = [value, step](double t, const Eigen::VectorXd& x, int i0) {
    Eigen::VectorXd g(x.size());
    for (int i = 0; i < x.size(); ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += step;
      xm[i] -= step;
      g[i] = (value(t, xp, i0) - value(t, xm, i0)) / (2.0 * step);
    }
    return g;
  };
  tf.hess = [value, step](double t, const Eigen::VectorXd& x, int i0) {
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd hess(n, n);
    const double f0 = value(t, x, i0);
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        Eigen::VectorXd a = x, bb = x, c = x, dd = x;
        if (i == j) {
          a[i] += step;
          bb[i] -= step;
          hess(i, i) = (value(t, a, i0) - 2.0 * f0 + value(t, bb, i0)) /
                       (step * step);
        } else {
          a[i] += step; a[j] += step;
          bb[i] += step; bb[j] -= step;
          c[i] -= step; c[j] += step;
          dd[i] -= step; dd[j] -= step;
          double v = (value(t, a, i0) - value(t, bb, i0) - value(t, c, i0) +
                      value(t, dd, i0)) /
                     (4.0 * step * step);
          hess(i, j) = v;
          hess(j, i) = v;
        }
      }
    }
    return hess;
  };
  return tf;
}

Eigen::MatrixXd fbm_correction(const GeneratorInputs& gi, double t) {
  const int dummy_dim = 1;
  if (!gi.gamma) return Eigen::MatrixXd::Zero(dummy_dim, dummy_dim);
  Eigen::VectorXd gt = gi.gamma(t);
  const int n = static_cast<int>(gt.size());
  if (t <= gi.t_origin) return Eigen::MatrixXd::Zero(n, n);
  const int cells = std::max(1, gi.correction_steps);
  const double h = (t - gi.t_origin) / cells;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < cells; ++j) {
    double a = gi.t_origin + j * h;
    double b = (j == cells - 1) ? t : a + h;
    Eigen::VectorXd gbar = 0.5 * (gi.gamma(a) + gi.gamma(b));
    c += gbar * phi_h_line_mass(a, b, t, gi.hurst);
  }
  return gt * c.transpose() + c * gt.transpose();
}

double generator_apply(const TestFunction& tf, const GeneratorInputs& gi,
                       double t, const Eigen::VectorXd& x, int i0) {
  if (t < gi.t_origin)
    throw std::domain_error(
        "generator_apply: t precedes the history origin of the fBm "
        "correction");
  double out = tf.time_deriv(t, x, i0);
  Eigen::VectorXd g = tf.grad(t, x, i0);
  if (gi.b) out += gi.b(t, x, i0).dot(g);
  Eigen::MatrixXd hess = tf.hess(t, x, i0);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(x.size(), x.size());
  for (const auto& s : gi.sigma) {
    Eigen::VectorXd col = s(t, x, i0);
    a += col * col.transpose();
  }
  if (gi.gamma) a += fbm_correction(gi, t);
  out += 0.5 * (hess * a).trace();
  const int m = gi.q.m();
  if (m > 1) {
    double fi = tf.value(t, x, i0);
    for (int j = 0; j < m; ++j) {
      if (j == i0) continue;
      out += gi.q.q(i0, j) * (tf.value(t, x, j) - fi);
    }
  }
  return out;
}

namespace {

int node_index(const TimeGrid& grid, double t, const char* what) {
  double k = (t - grid.t0) / grid.dt;
  int ki = static_cast<int>(std::lround(k));
  if (ki < 0 || ki > grid.n_steps || std::abs(k - ki) > 1e-9 * (1 + std::abs(k)))
    throw std::invalid_argument(std::string("ito_residual: ") + what +
                                " does not align with a grid node");
  return ki;
}

}  // namespace

ItoResidualStats ito_residual(const TestFunction& tf,
                              const GeneratorInputs& gi,
                              const DriverBundle& bundle,
                              const Ensemble& x_paths, double t1, double t2,
                              FbmConvention conv, Exec exec) {
  const TimeGrid& grid = bundle.grid;
  const int n_paths = bundle.n_paths();
  if (static_cast<int>(x_paths.size()) != n_paths)
    throw std::invalid_argument(
        "ito_residual: solution ensemble does not match the bundle");
  if (!x_paths.empty() && x_paths[0].cols() != grid.n_nodes())
    throw std::invalid_argument(
        "ito_residual: solution grid does not match the bundle grid");
  const int k1 = node_index(grid, t1, "t1");
  const int k2 = node_index(grid, t2, "t2");
  if (k1 >= k2)
    throw std::invalid_argument("ito_residual: need t1 < t2");
  const int d = bundle.d;
  const int m = bundle.n_regimes();
  const int npairs = pair_count(m);
  const bool has_gamma = static_cast<bool>(gi.gamma);
  const bool wick = conv == FbmConvention::wick_mean && has_gamma;

  // Path-independent kernel masses for the fractional term. For step k,
  //   sub_mass[k]  = gamma-weighted mass of [t0, t_k) x [t_k, t_{k+1}]
  //   (the predictable trace of the forward sum), and
  //   corr_mass[k] = sub_mass[k] + half the diagonal cell, which makes the
  //   generator correction integrate the full square exactly.
  const int n_steps = grid.n_steps;
  int state_dim = x_paths.empty() ? 1 : static_cast<int>(x_paths[0].rows());
  std::vector<Eigen::VectorXd> sub_mass, corr_mass, gamma_nodes;
  if (has_gamma) {
    gamma_nodes.resize(n_steps + 1);
    for (int k = 0; k <= n_steps; ++k) gamma_nodes[k] = gi.gamma(grid.node(k));
    sub_mass.assign(n_steps, Eigen::VectorXd::Zero(state_dim));
    corr_mass.assign(n_steps, Eigen::VectorXd::Zero(state_dim));
    for (int k = 0; k < n_steps; ++k) {
      const double c = grid.node(k), dd = grid.node(k + 1);
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(state_dim);
      for (int j = 0; j < k; ++j) {
        Eigen::VectorXd gbar = 0.5 * (gamma_nodes[j] + gamma_nodes[j + 1]);
        acc += gbar * phi_h_cell_mass(grid.node(j), grid.node(j + 1), c, dd,
                                      bundle.hurst);
      }
      sub_mass[k] = acc;
      Eigen::VectorXd gbar_k = 0.5 * (gamma_nodes[k] + gamma_nodes[k + 1]);
      corr_mass[k] =
          acc + 0.5 * gbar_k * phi_h_cell_mass(c, dd, c, dd, bundle.hurst);
    }
  }

  Eigen::VectorXd residuals(n_paths);
  parallel_for(n_paths, exec, [&](std::int64_t p) {
    const auto& x = x_paths[p];
    const auto& reg = bundle.regime_nodes[p];
    double lhs = tf.value(grid.node(k2), x.col(k2), reg[k2]);
    double rhs = tf.value(grid.node(k1), x.col(k1), reg[k1]);

    // trapezoidal time integral of the classical generator terms
    double time_int = 0.0;
    double prev = 0.0;
    for (int k = k1; k <= k2; ++k) {
      double t = grid.node(k);
      Eigen::VectorXd xv = x.col(k);
      int i0 = reg[k];
      double val = tf.time_deriv(t, xv, i0);
      Eigen::VectorXd g = tf.grad(t, xv, i0);
      if (gi.b) val += gi.b(t, xv, i0).dot(g);
      if (!gi.sigma.empty()) {
        Eigen::MatrixXd hess = tf.hess(t, xv, i0);
        for (const auto& s : gi.sigma) {
          Eigen::VectorXd col = s(t, xv, i0);
          val += 0.5 * col.dot(hess * col);
        }
      }
      if (m > 1) {
        double fi = tf.value(t, xv, i0);
        for (int j = 0; j < m; ++j)
          if (j != i0) val += gi.q.q(i0, j) * (tf.value(t, xv, j) - fi);
      }
      if (k > k1) time_int += 0.5 * grid.dt * (prev + val);
      prev = val;
    }
    rhs += time_int;

    // stochastic terms, left-endpoint sums
    double stoch = 0.0;
    for (int k = k1; k < k2; ++k) {
      double t = grid.node(k);
      Eigen::VectorXd xv = x.col(k);
      int i0 = reg[k];
      Eigen::VectorXd g = tf.grad(t, xv, i0);
      for (int i = 0; i < d; ++i) {
        if (i < static_cast<int>(gi.sigma.size()))
          stoch += g.dot(gi.sigma[i](t, xv, i0)) * bundle.w_increments[p](i, k);
      }
      if (has_gamma) {
        stoch += g.dot(gamma_nodes[k]) * bundle.bh_increment(p, k);
        Eigen::MatrixXd hess = tf.hess(t, xv, i0);
        if (wick) {
          // divergence-type estimate: subtract the predictable trace and
          // carry the matching correction inside the generator integral
          stoch -= gamma_nodes[k].dot(hess * sub_mass[k]);
          rhs += gamma_nodes[k].dot(hess * corr_mass[k]);
        }
      }
      for (int idx = 0; idx < npairs; ++idx) {
        double dm = bundle.m_increments[p](idx, k);
        if (dm == 0.0) continue;
        auto [a0, b0] = pair_from_index(idx, m);
        stoch += (tf.value(t, xv, b0) - tf.value(t, xv, a0)) * dm;
      }
    }
    residuals[p] = lhs - rhs - stoch;
  });

  ItoResidualStats st;
  st.n_paths = n_paths;
  st.mean = residuals.mean();
  double ss = (residuals.array() - st.mean).square().sum();
  st.std_error =
      n_paths > 1 ? std::sqrt(ss / (n_paths - 1) / n_paths) : 0.0;
  st.rms = std::sqrt(residuals.squaredNorm() / n_paths);
  return st;
}

}  // namespace fbsde
