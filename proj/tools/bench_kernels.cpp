// Compares the serial reference kernels against the OpenMP ones and checks
// that the two produce bit-identical ensembles (per-path RNG substreams make
// the results independent of scheduling).

#include <chrono>
#include <cstdio>
#include <string>

#include "fbsde/backward.hpp"
#include "fbsde/drivers.hpp"
#include "fbsde/forward.hpp"

using namespace fbsde;

namespace {

double seconds(std::chrono::steady_clock::time_point a,
               std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

template <typename F>
double timed(F&& f) {
  auto t0 = std::chrono::steady_clock::now();
  f();
  return seconds(t0, std::chrono::steady_clock::now());
}

double max_diff(const Ensemble& a, const Ensemble& b) {
  double m = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p)
    m = std::max(m, (a[p] - b[p]).cwiseAbs().maxCoeff());
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  int n_paths = argc > 1 ? std::atoi(argv[1]) : 20000;
  int n_steps = argc > 2 ? std::atoi(argv[2]) : 256;
  std::printf("paths=%d steps=%d threads=%d\n", n_paths, n_steps,
              max_threads());

  TimeGrid grid = make_grid(0.0, 2.0, n_steps);
  Eigen::MatrixXd q(2, 2);
  q << -1.0, 1.0, 1.0, -1.0;
  GeneratorMatrix gen = validate_generator(q);

  // driver generation
  DriverBundle serial_bundle, omp_bundle;
  double t_serial = timed([&] {
    serial_bundle = make_bundle(grid, 1, 0.75, gen, 0, n_paths, 7,
                                Exec::serial);
  });
  double t_omp = timed([&] {
    omp_bundle = make_bundle(grid, 1, 0.75, gen, 0, n_paths, 7, Exec::openmp);
  });
  double dw = 0.0;
  for (int p = 0; p < n_paths; ++p)
    dw = std::max(dw, (serial_bundle.bh_path[p] - omp_bundle.bh_path[p])
                          .cwiseAbs()
                          .maxCoeff());
  std::printf("drivers   serial %7.3fs  openmp %7.3fs  speedup %5.2fx  "
              "max|diff| %g\n",
              t_serial, t_omp, t_serial / t_omp, dw);

  // forward Euler
  ForwardSpec fwd;
  fwd.state_dim = 1;
  fwd.b = [](double, const Eigen::VectorXd& x, int) { return (-x).eval(); };
  fwd.sigma = {[](double, const Eigen::VectorXd& x, int) {
    return (0.4 * x + Eigen::VectorXd::Ones(1)).eval();
  }};
  fwd.gamma = [](double) { return (0.3 * Eigen::VectorXd::Ones(1)).eval(); };
  fwd.x0 = fixed_x0(1.0);
  PathSolution fs, fo;
  t_serial = timed([&] { fs = euler_solve(fwd, serial_bundle, Exec::serial); });
  t_omp = timed([&] { fo = euler_solve(fwd, omp_bundle, Exec::openmp); });
  std::printf("forward   serial %7.3fs  openmp %7.3fs  speedup %5.2fx  "
              "max|diff| %g\n",
              t_serial, t_omp, t_serial / t_omp, max_diff(fs.x, fo.x));

  // backward regression sweep
  BackwardSpec bwd;
  bwd.y_dim = 1;
  bwd.g = [](double t, const Eigen::VectorXd& y, const Eigen::MatrixXd&,
             const Eigen::VectorXd&, const Eigen::MatrixXd&,
             int) -> Eigen::VectorXd {
    Eigen::VectorXd out(1);
    out[0] = 0.5 * y[0] + std::exp(-t);
    return out;
  };
  RegressionBasis basis;
  basis.features = [&fs](int p, int k) { return fs.x[p].col(k).eval(); };
  basis.n_features = 1;
  BackwardSolution bs, bo;
  t_serial = timed([&] {
    bs = solve_truncated(bwd, serial_bundle, grid.t_end, basis, Exec::serial);
  });
  t_omp = timed([&] {
    bo = solve_truncated(bwd, omp_bundle, grid.t_end, basis, Exec::openmp);
  });
  std::printf("backward  serial %7.3fs  openmp %7.3fs  speedup %5.2fx  "
              "max|diff| %g\n",
              t_serial, t_omp, t_serial / t_omp, max_diff(bs.y, bo.y));
  return 0;
}
