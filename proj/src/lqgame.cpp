#include "fbsde/lqgame.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>
#include <stdexcept>

#include "fbsde/forward.hpp"
#include "fbsde/rng.hpp"

namespace fbsde {

Eigen::MatrixXd LQProblem::B(double t, int i0) const {
  Eigen::MatrixXd out(n, mu());
  out.leftCols(m1) = B1(t, i0);
  out.rightCols(m2) = B2(t, i0);
  return out;
}

Eigen::MatrixXd LQProblem::Di(double t, int i0, int i) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, mu());
  if (i < static_cast<int>(D1.size())) out.leftCols(m1) = D1[i](t, i0);
  if (i < static_cast<int>(D2.size())) out.rightCols(m2) = D2[i](t, i0);
  return out;
}

Eigen::MatrixXd LQProblem::S(double t, int i0) const {
  Eigen::MatrixXd out(mu(), n);
  out.topRows(m1) = S1(t, i0);
  out.bottomRows(m2) = S2(t, i0);
  return out;
}

Eigen::MatrixXd LQProblem::R(double t, int i0) const {
  Eigen::MatrixXd out(mu(), mu());
  out.topLeftCorner(m1, m1) = R11(t, i0);
  out.topRightCorner(m1, m2) = R12(t, i0);
  out.bottomLeftCorner(m2, m1) = R21(t, i0);
  out.bottomRightCorner(m2, m2) = R22(t, i0);
  return out;
}

Eigen::MatrixXd LQProblem::Pi(double t, int i0) const {
  const int total = n + mu();
  Eigen::MatrixXd out(total, total);
  out.topLeftCorner(n, n) = Q(t, i0);
  out.block(0, n, n, mu()) = S(t, i0).transpose();
  out.block(n, 0, mu(), n) = S(t, i0);
  out.bottomRightCorner(mu(), mu()) = R(t, i0);
  return out;
}

std::vector<std::pair<double, int>> default_probes(const LQProblem& prob,
                                                   double t_end,
                                                   int n_times) {
  std::vector<std::pair<double, int>> probes;
  for (int i = 0; i < n_times; ++i) {
    double t = prob.t0 + (t_end - prob.t0) * i / std::max(1, n_times - 1);
    for (int r = 0; r < prob.gen.m(); ++r) probes.push_back({t, r});
  }
  return probes;
}

double compute_kappa_x(const LQProblem& prob,
                       const std::vector<std::pair<double, int>>& probes) {
  if (probes.empty())
    throw std::invalid_argument("compute_kappa_x: empty probe set");
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& [t, i0] : probes) {
    Eigen::MatrixXd sym = prob.A(t, i0);
    sym = (sym + sym.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("compute_kappa_x: eigensolve failed");
    worst = std::max(worst, es.eigenvalues().maxCoeff());
  }
  return -0.5 * worst;
}

double admissible_k_bound(const LQProblem& prob, double kappa_x,
                          const std::vector<std::pair<double, int>>& probes) {
  double cmax = 0.0;
  for (const auto& [t, i0] : probes) {
    Eigen::MatrixXd stacked(prob.n * prob.d, prob.n);
    for (int i = 0; i < prob.d; ++i)
      stacked.middleRows(i * prob.n, prob.n) =
          i < static_cast<int>(prob.C.size())
              ? prob.C[i](t, i0)
              : Eigen::MatrixXd::Zero(prob.n, prob.n);
    cmax = std::max(cmax, stacked.jacobiSvd().singularValues()(0));
  }
  double k_max = kappa_x - 0.5 * cmax * cmax;
  if (!(prob.K < k_max))
    throw std::invalid_argument(
        "inadmissible K: need K < kappa_x - ||C||^2/2 = " +
        std::to_string(k_max));
  return k_max;
}

namespace {

double min_eig(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * (m + m.transpose()));
  return es.eigenvalues().minCoeff();
}

double max_eig(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * (m + m.transpose()));
  return es.eigenvalues().maxCoeff();
}

}  // namespace

AssumptionDReport check_assumption_d(
    const LQProblem& prob, const std::vector<std::pair<double, int>>& probes) {
  if (probes.empty())
    throw std::invalid_argument("check_assumption_d: empty probe set");
  AssumptionDReport rep;
  rep.min_r11_eig = std::numeric_limits<double>::infinity();
  rep.max_r22_eig = -std::numeric_limits<double>::infinity();
  rep.min_block1_eig = std::numeric_limits<double>::infinity();
  rep.max_block2_eig = -std::numeric_limits<double>::infinity();
  bool invertible = true;
  double literal_min = std::numeric_limits<double>::infinity();
  for (const auto& [t, i0] : probes) {
    rep.min_r11_eig = std::min(rep.min_r11_eig, min_eig(prob.R11(t, i0)));
    rep.max_r22_eig = std::max(rep.max_r22_eig, max_eig(prob.R22(t, i0)));
    Eigen::MatrixXd r = prob.R(t, i0);
    literal_min = std::min(literal_min, min_eig(r));
    if (std::abs(r.determinant()) < 1e-12) invertible = false;
    Eigen::MatrixXd b1(prob.n + prob.m1, prob.n + prob.m1);
    b1.topLeftCorner(prob.n, prob.n) = prob.Q(t, i0);
    b1.topRightCorner(prob.n, prob.m1) = prob.S1(t, i0).transpose();
    b1.bottomLeftCorner(prob.m1, prob.n) = prob.S1(t, i0);
    b1.bottomRightCorner(prob.m1, prob.m1) = prob.R11(t, i0);
    rep.min_block1_eig = std::min(rep.min_block1_eig, min_eig(b1));
    Eigen::MatrixXd b2(prob.n + prob.m2, prob.n + prob.m2);
    b2.topLeftCorner(prob.n, prob.n) = prob.Q(t, i0);
    b2.topRightCorner(prob.n, prob.m2) = prob.S2(t, i0).transpose();
    b2.bottomLeftCorner(prob.m2, prob.n) = prob.S2(t, i0);
    b2.bottomRightCorner(prob.m2, prob.m2) = prob.R22(t, i0);
    rep.max_block2_eig = std::max(rep.max_block2_eig, max_eig(b2));
  }
  const double tol = 1e-10;
  rep.zero_sum_pattern = rep.min_r11_eig > tol && rep.max_r22_eig < -tol &&
                         invertible && rep.min_block1_eig > -tol &&
                         rep.max_block2_eig < tol;
  rep.literal_r_pos = literal_min > tol;
  return rep;
}

ControlFn deterministic_control(std::function<Eigen::VectorXd(double)> u,
                                const TimeGrid& grid) {
  return [u, grid](int, int k) { return u(grid.node(k)); };
}

ControlFn zero_control(int dim) {
  return [dim](int, int) { return Eigen::VectorXd::Zero(dim).eval(); };
}

ControlFn ensemble_control(const Ensemble& u) {
  return [&u](int path, int k) { return u[path].col(k).eval(); };
}

CostEstimate evaluate_cost(const LQProblem& prob, const ControlFn& u1,
                           const ControlFn& u2, const DriverBundle& bundle,
                           Exec exec) {
  const TimeGrid& grid = bundle.grid;
  ForwardSpec fwd;
  fwd.state_dim = prob.n;
  fwd.b = [&prob](double t, const Eigen::VectorXd& x, int i0) {
    return (prob.A(t, i0) * x).eval();
  };
  for (int i = 0; i < prob.d; ++i) {
    if (i < static_cast<int>(prob.C.size()))
      fwd.sigma.push_back([&prob, i](double t, const Eigen::VectorXd& x,
                                     int i0) {
        return (prob.C[i](t, i0) * x).eval();
      });
    else
      fwd.sigma.push_back([n = prob.n](double, const Eigen::VectorXd&, int) {
        return Eigen::VectorXd::Zero(n).eval();
      });
  }
  if (prob.Gamma_fbm) fwd.gamma = prob.Gamma_fbm;
  fwd.x0 = fixed_x0(prob.x0);
  PathTerms terms;
  terms.drift = [&](int p, int k) {
    double t = grid.node(k);
    int i0 = bundle.regime_nodes[p][k];
    return (prob.B1(t, i0) * u1(p, k) + prob.B2(t, i0) * u2(p, k)).eval();
  };
  terms.diffusion = [&](int p, int k, int i) {
    double t = grid.node(k);
    int i0 = bundle.regime_nodes[p][k];
    Eigen::VectorXd v = Eigen::VectorXd::Zero(prob.n);
    if (i < static_cast<int>(prob.D1.size())) v += prob.D1[i](t, i0) * u1(p, k);
    if (i < static_cast<int>(prob.D2.size())) v += prob.D2[i](t, i0) * u2(p, k);
    return v;
  };
  PathSolution sol = euler_solve(fwd, bundle, terms, exec);

  const int n_paths = bundle.n_paths();
  Eigen::VectorXd per_path(n_paths);
  parallel_for(n_paths, exec, [&](std::int64_t p) {
    double integral = 0.0, prev = 0.0;
    for (int k = 0; k < grid.n_nodes(); ++k) {
      double t = grid.node(k);
      int i0 = bundle.regime_nodes[p][k];
      Eigen::VectorXd v(prob.n + prob.mu());
      // controls are left-continuous step processes: hold the last value
      int kk = std::min(k, grid.n_steps - 1);
      v << sol.x[p].col(k), u1(static_cast<int>(p), kk),
          u2(static_cast<int>(p), kk);
      double val =
          std::exp(2.0 * prob.K * t) * v.dot(prob.Pi(t, i0) * v);
      if (k > 0) integral += 0.5 * grid.dt * (prev + val);
      prev = val;
    }
    per_path[p] = 0.5 * integral;
  });
  CostEstimate est;
  est.value = per_path.mean();
  if (n_paths > 1) {
    double ss = (per_path.array() - est.value).square().sum();
    est.std_error = std::sqrt(ss / (n_paths - 1) / n_paths);
  }
  return est;
}

FBSDESpec assemble_coupled_system(const LQProblem& prob) {
  FBSDESpec spec;
  spec.x_dim = prob.n;
  spec.y_dim = prob.n;
  spec.K = prob.K;
  const int d = prob.d;

  auto rinv = [prob](double t, int i0) -> Eigen::MatrixXd {
    Eigen::MatrixXd r = prob.R(t, i0);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(r);
    if (!lu.isInvertible())
      throw std::runtime_error("assemble_coupled_system: singular R block");
    return lu.inverse();
  };
  // D^T z = sum_i D_i^T z_i
  auto dtz = [prob, d](double t, int i0, const ThetaPoint& th) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(prob.mu());
    for (int i = 0; i < d; ++i)
      acc += prob.Di(t, i0, i).transpose() * th.z.col(i);
    return acc;
  };

  spec.psi = [x0 = prob.x0](const Eigen::VectorXd&, int) { return x0; };
  spec.b = [prob, rinv, dtz](double t, const ThetaPoint& th, int i0) {
    Eigen::MatrixXd ri = rinv(t, i0);
    Eigen::MatrixXd b = prob.B(t, i0);
    Eigen::VectorXd ctrl = b.transpose() * th.y + dtz(t, i0, th) +
                           prob.S(t, i0) * th.x;
    return ((prob.A(t, i0) * th.x) - b * (ri * ctrl)).eval();
  };
  for (int i = 0; i < d; ++i) {
    spec.sigma.push_back([prob, rinv, dtz, i](double t, const ThetaPoint& th,
                                              int i0) {
      Eigen::MatrixXd ri = rinv(t, i0);
      Eigen::MatrixXd di = prob.Di(t, i0, i);
      Eigen::VectorXd ctrl = prob.B(t, i0).transpose() * th.y +
                             dtz(t, i0, th) + prob.S(t, i0) * th.x;
      Eigen::VectorXd base = i < static_cast<int>(prob.C.size())
                                 ? (prob.C[i](t, i0) * th.x).eval()
                                 : Eigen::VectorXd::Zero(prob.n).eval();
      return (base - di * (ri * ctrl)).eval();
    });
  }
  spec.g = [prob, rinv, d](double t, const ThetaPoint& th, int i0) {
    Eigen::MatrixXd ri = rinv(t, i0);
    Eigen::MatrixXd s = prob.S(t, i0);
    Eigen::MatrixXd b = prob.B(t, i0);
    Eigen::MatrixXd a_tilde = prob.A(t, i0) - b * ri * s;
    Eigen::VectorXd acc =
        (2.0 * prob.K * Eigen::MatrixXd::Identity(prob.n, prob.n) + a_tilde)
            .transpose() *
        th.y;
    for (int i = 0; i < d; ++i) {
      Eigen::MatrixXd ci = i < static_cast<int>(prob.C.size())
                               ? prob.C[i](t, i0)
                               : Eigen::MatrixXd::Zero(prob.n, prob.n);
      Eigen::MatrixXd c_tilde = ci - prob.Di(t, i0, i) * ri * s;
      acc += c_tilde.transpose() * th.z.col(i);
    }
    Eigen::MatrixXd q_tilde = prob.Q(t, i0) - s.transpose() * ri * s;
    acc += q_tilde * th.x;
    return (-acc).eval();
  };
  if (prob.Gamma_fbm) spec.gamma = prob.Gamma_fbm;

  // monotonicity constants of the reduced drift pair
  LQProblem tilde = prob;
  tilde.A = [prob, rinv](double t, int i0) {
    return (prob.A(t, i0) - prob.B(t, i0) * rinv(t, i0) * prob.S(t, i0))
        .eval();
  };
  spec.kappa_x = compute_kappa_x(tilde, default_probes(prob, prob.t0 + 8.0));
  spec.kappa_y = 2.0 * prob.K - spec.kappa_x;
  return spec;
}

GameSolution solve_game(const LQProblem& prob, const DriverBundle& bundle,
                        double tol, const GameSolveOptions& opts, Exec exec) {
  auto probes = default_probes(prob, bundle.grid.t_end);
  double kx = compute_kappa_x(prob, probes);
  admissible_k_bound(prob, kx, probes);
  GameSolution sol;
  sol.assumption_d = check_assumption_d(prob, probes);
  if (opts.enforce_pattern && !sol.assumption_d.zero_sum_pattern)
    throw std::invalid_argument(
        "solve_game: zero-sum pattern of the weight matrices fails "
        "(R11 > 0, R22 < 0 with the PSD/NSD blocks)");

  FBSDESpec system = assemble_coupled_system(prob);
  auto [theta, trace] = solve_fbsde(system, bundle, tol, opts.basis, exec);
  sol.theta = std::move(theta);
  sol.trace = std::move(trace);

  const TimeGrid& grid = bundle.grid;
  const int n_paths = bundle.n_paths();
  const int np = pair_count(bundle.n_regimes());
  sol.u1.assign(n_paths, Eigen::MatrixXd::Zero(prob.m1, grid.n_nodes()));
  sol.u2.assign(n_paths, Eigen::MatrixXd::Zero(prob.m2, grid.n_nodes()));
  parallel_for(n_paths, exec, [&](std::int64_t p) {
    for (int k = 0; k < grid.n_nodes(); ++k) {
      double t = grid.node(k);
      int i0 = bundle.regime_nodes[p][k];
      ThetaPoint th = sol.theta.at(static_cast<int>(p), k, prob.d, np);
      Eigen::MatrixXd r = prob.R(t, i0);
      Eigen::VectorXd rhs = prob.B(t, i0).transpose() * th.y +
                            prob.S(t, i0) * th.x;
      for (int i = 0; i < prob.d; ++i)
        rhs += prob.Di(t, i0, i).transpose() * th.z.col(i);
      Eigen::VectorXd u = -r.fullPivLu().solve(rhs);
      sol.u1[p].col(k) = u.head(prob.m1);
      sol.u2[p].col(k) = u.tail(prob.m2);
    }
  });

  // cost along the solved state
  Eigen::VectorXd per_path(n_paths);
  parallel_for(n_paths, exec, [&](std::int64_t p) {
    double integral = 0.0, prev = 0.0;
    for (int k = 0; k < grid.n_nodes(); ++k) {
      double t = grid.node(k);
      int i0 = bundle.regime_nodes[p][k];
      Eigen::VectorXd v(prob.n + prob.mu());
      v << sol.theta.x[p].col(k), sol.u1[p].col(k), sol.u2[p].col(k);
      double val = std::exp(2.0 * prob.K * t) * v.dot(prob.Pi(t, i0) * v);
      if (k > 0) integral += 0.5 * grid.dt * (prev + val);
      prev = val;
    }
    per_path[p] = 0.5 * integral;
  });
  sol.value = per_path.mean();
  if (n_paths > 1) {
    double ss = (per_path.array() - sol.value).square().sum();
    sol.value_std_error = std::sqrt(ss / (n_paths - 1) / n_paths);
  }

  Ensemble u(n_paths);
  for (int p = 0; p < n_paths; ++p) {
    Eigen::MatrixXd up(prob.mu(), grid.n_nodes());
    up.topRows(prob.m1) = sol.u1[p];
    up.bottomRows(prob.m2) = sol.u2[p];
    u[p] = std::move(up);
  }
  sol.stationarity = stationarity_residual(prob, u, sol.theta.x, sol.theta.y,
                                           sol.theta.z, bundle);
  return sol;
}

double stationarity_residual(const LQProblem& prob, const Ensemble& u,
                             const Ensemble& x, const Ensemble& y,
                             const Ensemble& z, const DriverBundle& bundle) {
  const TimeGrid& grid = bundle.grid;
  const int n_paths = static_cast<int>(u.size());
  Ensemble res(n_paths);
  for (int p = 0; p < n_paths; ++p) {
    Eigen::MatrixXd rp(prob.mu(), grid.n_nodes());
    for (int k = 0; k < grid.n_nodes(); ++k) {
      double t = grid.node(k);
      int i0 = bundle.regime_nodes[p][k];
      Eigen::VectorXd acc = prob.B(t, i0).transpose() * y[p].col(k) +
                            prob.S(t, i0) * x[p].col(k) +
                            prob.R(t, i0) * u[p].col(k);
      for (int i = 0; i < prob.d; ++i)
        acc += prob.Di(t, i0, i).transpose() *
               z[p].block(i * prob.n, k, prob.n, 1);
      rp.col(k) = acc;
    }
    res[p] = std::move(rp);
  }
  return weighted_l2k_norm(res, prob.K, grid).value;
}

SaddleCheckReport saddle_check(const LQProblem& prob, const GameSolution& sol,
                               int n_perturbations,
                               const std::vector<double>& eps_list,
                               const DriverBundle& bundle, std::uint64_t seed,
                               Exec exec) {
  const TimeGrid& grid = bundle.grid;
  SaddleCheckReport rep;
  rep.perturbations = n_perturbations;
  auto eng = rng::make_engine(seed, 0, rng::DriverTag::perturbation);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.3, 1.5);

  ControlFn u1_star = ensemble_control(sol.u1);
  ControlFn u2_star = ensemble_control(sol.u2);
  CostEstimate base = evaluate_cost(prob, u1_star, u2_star, bundle, exec);

  for (int trial = 0; trial < n_perturbations; ++trial) {
    const int player = trial % 2;
    const int dim = player == 0 ? prob.m1 : prob.m2;
    Eigen::VectorXd amp(dim);
    for (int i = 0; i < dim; ++i) amp[i] = gauss(eng);
    double lambda = unif(eng);
    auto v = [amp, lambda, &grid](int, int k) {
      return (amp * std::exp(-lambda * grid.node(k))).eval();
    };
    // Gateaux first-order term: <B^T y + D^T z + S x + (R u*)_player, v>
    double first_order = 0.0;
    {
      const int np = pair_count(bundle.n_regimes());
      double acc = 0.0;
      for (int p = 0; p < bundle.n_paths(); ++p) {
        double integral = 0.0, prev = 0.0;
        for (int k = 0; k < grid.n_nodes(); ++k) {
          double t = grid.node(k);
          int i0 = bundle.regime_nodes[p][k];
          ThetaPoint th = sol.theta.at(p, k, prob.d, np);
          Eigen::VectorXd u_full(prob.mu());
          u_full << sol.u1[p].col(k), sol.u2[p].col(k);
          Eigen::VectorXd grad = prob.B(t, i0).transpose() * th.y +
                                 prob.S(t, i0) * th.x +
                                 prob.R(t, i0) * u_full;
          for (int i = 0; i < prob.d; ++i)
            grad += prob.Di(t, i0, i).transpose() * th.z.col(i);
          Eigen::VectorXd gpart = player == 0 ? grad.head(prob.m1).eval()
                                              : grad.tail(prob.m2).eval();
          double val = std::exp(2.0 * prob.K * t) *
                       gpart.dot(v(p, std::min(k, grid.n_steps - 1)));
          if (k > 0) integral += 0.5 * grid.dt * (prev + val);
          prev = val;
        }
        acc += integral;
      }
      first_order = acc / bundle.n_paths();
    }
    rep.max_first_order = std::max(rep.max_first_order,
                                   std::abs(first_order));

    for (double eps : eps_list) {
      ControlFn u1p = u1_star, u2p = u2_star;
      if (player == 0)
        u1p = [&, eps](int p, int k) {
          return (sol.u1[p].col(k) + eps * v(p, k)).eval();
        };
      else
        u2p = [&, eps](int p, int k) {
          return (sol.u2[p].col(k) + eps * v(p, k)).eval();
        };
      CostEstimate pert = evaluate_cost(prob, u1p, u2p, bundle, exec);
      double dj = pert.value - base.value;
      double band = 3.0 * (pert.std_error + base.std_error);
      if (player == 0 && dj < -band) ++rep.violations;
      if (player == 1 && dj > band) ++rep.violations;
      // second-order coefficient carries the sign of the R block
      double so = (dj - eps * first_order) / (eps * eps);
      double so_band = band / (eps * eps);
      if (player == 0 && so < -so_band) rep.second_order_signs_ok = false;
      if (player == 1 && so > so_band) rep.second_order_signs_ok = false;
    }
  }
  return rep;
}

CrossTermReduction cross_term_reduce(const LQProblem& prob) {
  CrossTermReduction red;
  auto rinv = [prob](double t, int i0) -> Eigen::MatrixXd {
    Eigen::MatrixXd r = prob.R(t, i0);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(r);
    if (!lu.isInvertible())
      throw std::runtime_error("cross_term_reduce: singular R block");
    return lu.inverse();
  };
  red.gain = [prob, rinv](double t, int i0) {
    return (rinv(t, i0) * prob.S(t, i0)).eval();
  };
  red.transformed = prob;
  red.transformed.A = [prob, rinv](double t, int i0) {
    return (prob.A(t, i0) - prob.B(t, i0) * rinv(t, i0) * prob.S(t, i0))
        .eval();
  };
  red.transformed.C.clear();
  for (int i = 0; i < prob.d; ++i) {
    red.transformed.C.push_back([prob, rinv, i](double t, int i0) {
      Eigen::MatrixXd base = i < static_cast<int>(prob.C.size())
                                 ? prob.C[i](t, i0)
                                 : Eigen::MatrixXd::Zero(prob.n, prob.n);
      return (base - prob.Di(t, i0, i) * rinv(t, i0) * prob.S(t, i0)).eval();
    });
  }
  red.transformed.Q = [prob, rinv](double t, int i0) {
    Eigen::MatrixXd s = prob.S(t, i0);
    return (prob.Q(t, i0) - s.transpose() * rinv(t, i0) * s).eval();
  };
  red.transformed.S1 = [prob](double, int) {
    return Eigen::MatrixXd::Zero(prob.m1, prob.n).eval();
  };
  red.transformed.S2 = [prob](double, int) {
    return Eigen::MatrixXd::Zero(prob.m2, prob.n).eval();
  };
  return red;
}

}  // namespace fbsde
