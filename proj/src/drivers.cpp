#include "fbsde/drivers.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "fbsde/rng.hpp"

namespace fbsde {

GeneratorMatrix validate_generator(const Eigen::MatrixXd& q) {
  if (q.rows() != q.cols() || q.rows() < 1)
    throw std::invalid_argument("invalid generator: matrix must be square");
  const double tol = 1e-12;
  for (int i = 0; i < q.rows(); ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < q.cols(); ++j) {
      if (i != j && q(i, j) < 0.0)
        throw std::invalid_argument(
            "invalid generator: negative off-diagonal at (" +
            std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
      row_sum += q(i, j);
    }
    if (std::abs(row_sum) > tol)
      throw std::invalid_argument("invalid generator: row " +
                                  std::to_string(i + 1) + " sums to " +
                                  std::to_string(row_sum));
  }
  return GeneratorMatrix{q};
}

int pair_count(int m) { return m * (m - 1); }

int pair_index(int i0, int j0, int m) {
  if (i0 == j0)
    throw std::invalid_argument(
        "invalid pair: M_{i0 j0} requires i0 != j0");
  if (i0 < 0 || j0 < 0 || i0 >= m || j0 >= m)
    throw std::invalid_argument("invalid pair: regime out of range");
  return i0 * (m - 1) + (j0 > i0 ? j0 - 1 : j0);
}

std::pair<int, int> pair_from_index(int idx, int m) {
  int i0 = idx / (m - 1);
  int r = idx % (m - 1);
  int j0 = (r >= i0) ? r + 1 : r;
  return {i0, j0};
}

int RegimeJumpPath::state_at(double t) const {
  int s = start_state;
  for (std::size_t j = 0; j < jump_times.size(); ++j) {
    if (jump_times[j] <= t)
      s = post_jump_states[j];
    else
      break;
  }
  return s;
}

double RegimeJumpPath::occupation(int state, double a, double b) const {
  double total = 0.0;
  double seg_start = -std::numeric_limits<double>::infinity();
  int seg_state = start_state;
  for (std::size_t j = 0; j <= jump_times.size(); ++j) {
    double seg_end = (j < jump_times.size())
                         ? jump_times[j]
                         : std::numeric_limits<double>::infinity();
    if (seg_state == state)
      total += std::max(0.0, std::min(b, seg_end) - std::max(a, seg_start));
    if (j < jump_times.size()) {
      seg_start = seg_end;
      seg_state = post_jump_states[j];
    }
  }
  return total;
}

std::vector<Eigen::MatrixXd> simulate_brownian(const TimeGrid& grid, int d,
                                               int n_paths,
                                               std::uint64_t seed,
                                               Exec exec) {
  if (n_paths < 1)
    throw std::invalid_argument("simulate_brownian: n_paths must be >= 1");
  if (d < 1) throw std::invalid_argument("simulate_brownian: d must be >= 1");
  const double sd = std::sqrt(grid.dt);
  std::vector<Eigen::MatrixXd> out(n_paths);
  parallel_for(n_paths, exec, [&](std::int64_t p) {
    auto eng = rng::make_engine(seed, p, rng::DriverTag::brownian);
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd inc(d, grid.n_steps);
    for (int k = 0; k < grid.n_steps; ++k)
      for (int i = 0; i < d; ++i) inc(i, k) = sd * z(eng);
    out[p] = std::move(inc);
  });
  return out;
}

std::vector<Eigen::VectorXd> simulate_fbm(const TimeGrid& grid, double H,
                                          int n_paths, std::uint64_t seed,
                                          Exec exec) {
  validate_hurst(H);
  if (n_paths < 1)
    throw std::invalid_argument("simulate_fbm: n_paths must be >= 1");
  const int n = grid.n_steps;
  // Covariance of the node values measured from the grid origin, where the
  // path is pinned to zero.
  Eigen::MatrixXd cov(n, n);
  auto p2h = [&](double x) { return std::pow(x, 2.0 * H); };
  for (int i = 0; i < n; ++i) {
    double ti = grid.node(i + 1) - grid.t0;
    for (int j = 0; j <= i; ++j) {
      double tj = grid.node(j + 1) - grid.t0;
      double c = 0.5 * (p2h(ti) + p2h(tj) - p2h(std::abs(ti - tj)));
      cov(i, j) = c;
      cov(j, i) = c;
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error(
        "numerical conditioning: fBm covariance factorization failed; "
        "try fewer steps or add diagonal jitter of ~1e-12");
  const Eigen::MatrixXd L = llt.matrixL();
  std::vector<Eigen::VectorXd> out(n_paths);
  parallel_for(n_paths, exec, [&](std::int64_t p) {
    auto eng = rng::make_engine(seed, p, rng::DriverTag::fbm);
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::VectorXd xi(n);
    for (int k = 0; k < n; ++k) xi[k] = z(eng);
    Eigen::VectorXd path(n + 1);
    path[0] = 0.0;
    path.tail(n) = L.triangularView<Eigen::Lower>() * xi;
    out[p] = std::move(path);
  });
  return out;
}

std::vector<RegimeJumpPath> simulate_regime_path(const TimeGrid& grid,
                                                 const GeneratorMatrix& q,
                                                 int i_start, int n_paths,
                                                 std::uint64_t seed,
                                                 Exec exec) {
  const int m = q.m();
  if (i_start < 0 || i_start >= m)
    throw std::invalid_argument("simulate_regime_path: start regime out of range");
  if (n_paths < 1)
    throw std::invalid_argument("simulate_regime_path: n_paths must be >= 1");
  std::vector<RegimeJumpPath> out(n_paths);
  parallel_for(n_paths, exec, [&](std::int64_t p) {
    auto eng = rng::make_engine(seed, p, rng::DriverTag::chain);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    RegimeJumpPath path;
    path.start_state = i_start;
    double t = grid.t0;
    int state = i_start;
    while (true) {
      double rate = -q.q(state, state);
      if (rate <= 0.0) break;  // absorbing
      // exponential holding time with rate -q_ii
      double hold = -std::log1p(-unif(eng)) / rate;
      t += hold;
      if (t > grid.t_end) break;
      // jump distribution q_ij / rate over j != state
      double u = unif(eng) * rate;
      int next = -1;
      double acc = 0.0;
      for (int j = 0; j < m; ++j) {
        if (j == state) continue;
        acc += q.q(state, j);
        if (u <= acc) {
          next = j;
          break;
        }
      }
      if (next < 0) {  // numerical slack at acc boundary
        for (int j = m - 1; j >= 0; --j)
          if (j != state && q.q(state, j) > 0.0) {
            next = j;
            break;
          }
        if (next < 0) break;
      }
      path.jump_times.push_back(t);
      path.post_jump_states.push_back(next);
      state = next;
    }
    out[p] = std::move(path);
  });
  return out;
}

Eigen::VectorXi sample_regime_nodes(const RegimeJumpPath& path,
                                    const TimeGrid& grid) {
  Eigen::VectorXi nodes(grid.n_nodes());
  int state = path.start_state;
  std::size_t j = 0;
  for (int k = 0; k < grid.n_nodes(); ++k) {
    double t = grid.node(k);
    while (j < path.jump_times.size() && path.jump_times[j] <= t) {
      state = path.post_jump_states[j];
      ++j;
    }
    nodes[k] = state;
  }
  return nodes;
}

Eigen::MatrixXd compensated_martingales(const RegimeJumpPath& path,
                                        const GeneratorMatrix& q,
                                        const TimeGrid& grid) {
  const int m = q.m();
  const int np = pair_count(m);
  Eigen::MatrixXd inc = Eigen::MatrixXd::Zero(np, grid.n_steps);
  if (np == 0) return inc;
  // jump counts: a jump at time tau lands in the step with tau in (t_k, t_{k+1}]
  int prev_state = path.start_state;
  for (std::size_t j = 0; j < path.jump_times.size(); ++j) {
    double tau = path.jump_times[j];
    int to = path.post_jump_states[j];
    if (tau > grid.t0 && tau <= grid.t_end) {
      int k = static_cast<int>(std::ceil((tau - grid.t0) / grid.dt)) - 1;
      k = std::min(std::max(k, 0), grid.n_steps - 1);
      inc(pair_index(prev_state, to, m), k) += 1.0;
    }
    prev_state = to;
  }
  // compensator: q_{i0 j0} * occupation of i0, per step
  for (int k = 0; k < grid.n_steps; ++k) {
    double a = grid.node(k), b = grid.node(k + 1);
    for (int i0 = 0; i0 < m; ++i0) {
      double occ = path.occupation(i0, a, b);
      if (occ == 0.0) continue;
      for (int j0 = 0; j0 < m; ++j0) {
        if (j0 == i0) continue;
        inc(pair_index(i0, j0, m), k) -= q.q(i0, j0) * occ;
      }
    }
  }
  return inc;
}

DriverBundle make_bundle(const TimeGrid& grid, int d, double H,
                         const GeneratorMatrix& q, int i_start, int n_paths,
                         std::uint64_t seed, Exec exec) {
  DriverBundle b;
  b.grid = grid;
  b.d = d;
  b.hurst = H;
  b.seed = seed;
  b.gen = q;
  b.start_regime = i_start;
  b.w_increments = simulate_brownian(grid, d, n_paths, seed, exec);
  b.bh_path = simulate_fbm(grid, H, n_paths, seed, exec);
  b.regime = simulate_regime_path(grid, q, i_start, n_paths, seed, exec);
  b.regime_nodes.resize(n_paths);
  b.m_increments.resize(n_paths);
  parallel_for(n_paths, exec, [&](std::int64_t p) {
    b.regime_nodes[p] = sample_regime_nodes(b.regime[p], grid);
    b.m_increments[p] = compensated_martingales(b.regime[p], q, grid);
  });
  return b;
}

DriverBundle coarsen(const DriverBundle& fine) {
  if (fine.grid.n_steps % 2 != 0)
    throw std::invalid_argument("coarsen: needs an even number of steps");
  DriverBundle c;
  c.grid = make_grid(fine.grid.t0, fine.grid.t_end, fine.grid.n_steps / 2);
  c.d = fine.d;
  c.hurst = fine.hurst;
  c.seed = fine.seed;
  c.gen = fine.gen;
  c.start_regime = fine.start_regime;
  const int n_paths = fine.n_paths();
  const int nc = c.grid.n_steps;
  c.w_increments.resize(n_paths);
  c.bh_path.resize(n_paths);
  c.regime = fine.regime;  // exact jump data is grid-free
  c.regime_nodes.resize(n_paths);
  c.m_increments.resize(n_paths);
  for (int p = 0; p < n_paths; ++p) {
    Eigen::MatrixXd w(fine.d, nc);
    Eigen::VectorXd bh(nc + 1);
    bh[0] = 0.0;
    for (int k = 0; k < nc; ++k) {
      w.col(k) = fine.w_increments[p].col(2 * k) +
                 fine.w_increments[p].col(2 * k + 1);
      bh[k + 1] = fine.bh_path[p][2 * k + 2];
    }
    c.w_increments[p] = std::move(w);
    c.bh_path[p] = std::move(bh);
    c.regime_nodes[p] = sample_regime_nodes(c.regime[p], c.grid);
    c.m_increments[p] = compensated_martingales(c.regime[p], c.gen, c.grid);
  }
  return c;
}

}  // namespace fbsde
