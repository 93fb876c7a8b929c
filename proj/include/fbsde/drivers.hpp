#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "fbsde/exec.hpp"
#include "fbsde/time_grid.hpp"

namespace fbsde {

// Transition-rate matrix of the regime chain: off-diagonals >= 0, rows sum
// to zero. State space is {1, ..., m}; matrix indices are 0-based.
struct GeneratorMatrix {
  Eigen::MatrixXd q;
  int m() const { return static_cast<int>(q.rows()); }
};

GeneratorMatrix validate_generator(const Eigen::MatrixXd& q);

// Ordered regime pairs (i0, j0), i0 != j0, flattened lexicographically.
int pair_count(int m);
int pair_index(int i0, int j0, int m);
std::pair<int, int> pair_from_index(int idx, int m);

// One chain trajectory with its exact jump times. states[0] holds at t0;
// jump_times[j] is when the chain enters states[j+1]. Right-continuous.
struct RegimeJumpPath {
  int start_state = 0;  // 0-based
  std::vector<double> jump_times;
  std::vector<int> post_jump_states;  // 0-based

  int state_at(double t) const;
  // time spent in `state` over the window (a, b]
  double occupation(int state, double a, double b) const;
};

// Sampled paths of the three independent drivers plus the compensated
// regime martingales, all on one grid.
struct DriverBundle {
  TimeGrid grid;
  int d = 1;          // Brownian dimension
  double hurst = 0.75;
  std::uint64_t seed = 0;
  GeneratorMatrix gen;
  int start_regime = 0;  // 0-based

  std::vector<Eigen::MatrixXd> w_increments;  // path -> d x n_steps
  std::vector<Eigen::VectorXd> bh_path;       // path -> n_nodes, [0] = 0
  std::vector<RegimeJumpPath> regime;
  std::vector<Eigen::VectorXi> regime_nodes;  // path -> n_nodes, 0-based
  std::vector<Eigen::MatrixXd> m_increments;  // path -> pair_count x n_steps

  int n_paths() const { return static_cast<int>(w_increments.size()); }
  int n_regimes() const { return gen.m(); }
  double bh_increment(int path, int k) const {
    return bh_path[path][k + 1] - bh_path[path][k];
  }
};

std::vector<Eigen::MatrixXd> simulate_brownian(const TimeGrid& grid, int d,
                                               int n_paths,
                                               std::uint64_t seed,
                                               Exec exec = default_exec());

// Exact-law fBm via dense Cholesky of the node covariance
// R(t, u) = (t^2H + u^2H - |t-u|^2H)/2 measured from the grid origin.
std::vector<Eigen::VectorXd> simulate_fbm(const TimeGrid& grid, double H,
                                          int n_paths, std::uint64_t seed,
                                          Exec exec = default_exec());

std::vector<RegimeJumpPath> simulate_regime_path(const TimeGrid& grid,
                                                 const GeneratorMatrix& q,
                                                 int i_start, int n_paths,
                                                 std::uint64_t seed,
                                                 Exec exec = default_exec());

Eigen::VectorXi sample_regime_nodes(const RegimeJumpPath& path,
                                    const TimeGrid& grid);

// Per step, per ordered pair: (# of i0->j0 jumps in the step) minus
// q_{i0 j0} times the time spent in i0 during the step.
Eigen::MatrixXd compensated_martingales(const RegimeJumpPath& path,
                                        const GeneratorMatrix& q,
                                        const TimeGrid& grid);

// Generates all drivers from disjoint substreams of one root seed.
DriverBundle make_bundle(const TimeGrid& grid, int d, double H,
                         const GeneratorMatrix& q, int i_start, int n_paths,
                         std::uint64_t seed, Exec exec = default_exec());

// Pairwise-merge the increments of a bundle built on a grid with an even
// number of steps; used by the dt-refinement tests that need common noise.
DriverBundle coarsen(const DriverBundle& fine);

}  // namespace fbsde
