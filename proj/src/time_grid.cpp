#include "fbsde/time_grid.hpp"

#include <string>

namespace fbsde {

TimeGrid make_grid(double t0, double t_end, int n_steps) {
  if (!(t0 >= 0.0))
    throw std::invalid_argument("invalid grid: t0 must be >= 0");
  if (!(t_end > t0))
    throw std::invalid_argument("invalid grid: t_end must exceed t0");
  if (n_steps < 1)
    throw std::invalid_argument("invalid grid: n_steps must be >= 1");
  TimeGrid g;
  g.t0 = t0;
  g.t_end = t_end;
  g.n_steps = n_steps;
  g.dt = (t_end - t0) / n_steps;
  return g;
}

void validate_hurst(double H) {
  if (!(H > 0.5) || !(H < 1.0))
    throw std::invalid_argument("Hurst index must lie in (1/2, 1), got " +
                                std::to_string(H));
}

double phi_h(double u, double s, double H) {
  validate_hurst(H);
  if (u == s)
    throw std::domain_error(
        "phi_h is singular on the diagonal u == s; use the integrated form");
  return H * (2.0 * H - 1.0) * std::pow(std::abs(u - s), 2.0 * H - 2.0);
}

namespace {
inline double g2h(double u, double s, double H) {
  return std::pow(std::abs(u - s), 2.0 * H);
}
}  // namespace

double phi_h_cell_mass(double a, double b, double c, double d, double H) {
  return -0.5 * (g2h(b, d, H) - g2h(b, c, H) - g2h(a, d, H) + g2h(a, c, H));
}

double phi_h_line_mass(double a, double b, double t, double H) {
  // antiderivative of H(2H-1)|u-t|^(2H-2) in u is -H sgn(t-u)|u-t|^(2H-1)
  auto prim = [&](double u) {
    double w = u - t;
    return H * (w >= 0 ? 1.0 : -1.0) * std::pow(std::abs(w), 2.0 * H - 1.0);
  };
  return prim(b) - prim(a);
}

Ensemble single_path(const Eigen::VectorXd& values) {
  Eigen::MatrixXd m(1, values.size());
  m.row(0) = values.transpose();
  return Ensemble{m};
}

WeightedNorm weighted_l2k_norm(const Ensemble& f, double K,
                               const TimeGrid& grid) {
  if (f.empty())
    throw std::invalid_argument("degenerate input: empty path ensemble");
  const int n = grid.n_nodes();
  double acc = 0.0;
  double tail_sq = 0.0;
  for (const auto& path : f) {
    if (path.cols() != n)
      throw std::invalid_argument(
          "degenerate input: path length does not match grid");
    double integral = 0.0;
    double prev = 0.0;
    for (int k = 0; k < n; ++k) {
      double w = std::exp(K * grid.node(k));
      double val = (path.col(k) * w).squaredNorm();
      if (k > 0) integral += 0.5 * grid.dt * (prev + val);
      if (k == n - 1) tail_sq += val;
      prev = val;
    }
    acc += integral;
  }
  WeightedNorm out;
  out.value = std::sqrt(acc / f.size());
  out.horizon = grid.t_end;
  if (K < 0.0) out.tail_bound = (tail_sq / f.size()) / (2.0 * std::abs(K));
  return out;
}

double l2h_norm(const Eigen::VectorXd& f, double H, const TimeGrid& grid) {
  validate_hurst(H);
  if (f.size() != grid.n_nodes())
    throw std::invalid_argument("l2h_norm: path length does not match grid");
  const int n = grid.n_steps;
  // Product integration: the kernel is integrated exactly per cell (this
  // absorbs the diagonal singularity), f enters through its trapezoidal
  // cell averages. On a uniform grid the cell mass depends only on the
  // offset |i - j|, so the O(n^2) sum needs just O(n) pow evaluations.
  Eigen::VectorXd fbar(n);
  for (int i = 0; i < n; ++i) fbar[i] = 0.5 * (f[i] + f[i + 1]);
  const double h2h = std::pow(grid.dt, 2.0 * H);
  auto p = [&](double x) { return std::pow(x, 2.0 * H); };
  Eigen::VectorXd mass(n);
  mass[0] = h2h;
  for (int delta = 1; delta < n; ++delta)
    mass[delta] =
        0.5 * (p(delta + 1.0) + p(delta - 1.0) - 2.0 * p(delta)) * h2h;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    total += fbar[i] * fbar[i] * mass[0];
    for (int j = i + 1; j < n; ++j)
      total += 2.0 * fbar[i] * fbar[j] * mass[j - i];
  }
  return total;
}

}  // namespace fbsde
