#include "fbsde/scenario.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fbsde/backward.hpp"
#include "fbsde/calculus.hpp"
#include "fbsde/coupled.hpp"
#include "fbsde/expr.hpp"
#include "fbsde/forward.hpp"
#include "fbsde/lqgame.hpp"

namespace fbsde {

namespace {

[[noreturn]] void field_error(const std::string& path, const std::string& msg) {
  throw std::invalid_argument(path + ": " + msg);
}

double get_number(const Json& doc, const std::string& path,
                  const std::string& key, double fallback,
                  bool required = false) {
  if (!doc.contains(key)) {
    if (required) field_error(path + key, "missing required field");
    return fallback;
  }
  if (!doc[key].is_number())
    field_error(path + key, "expected a number");
  return doc[key].get<double>();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

class CsvBuilder {
 public:
  explicit CsvBuilder(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) os_ << ',';
      os_ << header[i];
    }
    os_ << '\n';
    columns_ = header;
  }
  void row(const std::vector<double>& vals) {
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (i) os_ << ',';
      os_ << fmt(vals[i]);
    }
    os_ << '\n';
  }
  std::string str() const { return os_.str(); }
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::ostringstream os_;
  std::vector<std::string> columns_;
};

expr::Expression parse_expr_field(const Json& value, const std::string& path) {
  std::string src;
  if (value.is_number())
    src = fmt(value.get<double>());
  else if (value.is_string())
    src = value.get<std::string>();
  else
    field_error(path, "expected an expression string or number");
  try {
    return expr::parse(src);
  } catch (const expr::ParseError& e) {
    field_error(path, e.what());
  }
}

// matrix of expressions: [[...], [...]]
std::vector<std::vector<expr::Expression>> parse_expr_matrix(
    const Json& value, const std::string& path) {
  if (!value.is_array() || value.empty())
    field_error(path, "expected a non-empty matrix of expressions");
  std::vector<std::vector<expr::Expression>> rows;
  std::size_t cols = 0;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const Json& r = value[i];
    if (!r.is_array() || r.empty())
      field_error(path + "[" + std::to_string(i) + "]",
                  "expected a non-empty row");
    if (i == 0) cols = r.size();
    if (r.size() != cols)
      field_error(path + "[" + std::to_string(i) + "]", "ragged matrix");
    std::vector<expr::Expression> row;
    for (std::size_t j = 0; j < r.size(); ++j)
      row.push_back(parse_expr_field(
          r[j], path + "[" + std::to_string(i) + "][" + std::to_string(j) +
                    "]"));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixCoefficient matrix_coefficient(
    std::vector<std::vector<expr::Expression>> entries) {
  return [entries = std::move(entries)](double t, int i0) {
    Eigen::MatrixXd out(entries.size(), entries[0].size());
    expr::Env env;
    env.t = t;
    env.regime = i0 + 1;
    for (std::size_t i = 0; i < entries.size(); ++i)
      for (std::size_t j = 0; j < entries[i].size(); ++j)
        out(i, j) = entries[i][j].eval(env);
    return out;
  };
}

}  // namespace

Scenario parse_scenario(const Json& doc) {
  Scenario s;
  if (!doc.is_object()) field_error("$", "scenario must be a JSON object");
  if (!doc.contains("name") || !doc["name"].is_string())
    field_error("name", "missing or non-string scenario name");
  s.name = doc["name"].get<std::string>();
  if (!doc.contains("target") || !doc["target"].is_string())
    field_error("target", "missing or non-string target module");
  s.target = doc["target"].get<std::string>();
  static const std::vector<std::string> targets = {
      "forward", "backward", "coupled", "lqgame", "calculus", "drivers"};
  if (std::find(targets.begin(), targets.end(), s.target) == targets.end())
    field_error("target", "unknown target '" + s.target + "'");

  if (doc.contains("grid")) {
    const Json& g = doc["grid"];
    s.grid.t0 = get_number(g, "grid.", "t0", 0.0);
    s.grid.t_end = get_number(g, "grid.", "t_end", 8.0);
    double steps = get_number(g, "grid.", "n_steps", 400.0);
    if (steps < 1 || steps != std::floor(steps))
      field_error("grid.n_steps", "must be a positive integer");
    s.grid.n_steps = static_cast<int>(steps);
    if (!(s.grid.t_end > s.grid.t0))
      field_error("grid.t_end", "must exceed grid.t0");
  }
  if (doc.contains("mc")) {
    const Json& m = doc["mc"];
    double paths = get_number(m, "mc.", "n_paths", 2000.0);
    if (paths < 1 || paths != std::floor(paths))
      field_error("mc.n_paths", "must be a positive integer");
    s.mc.n_paths = static_cast<int>(paths);
    double seed = get_number(m, "mc.", "seed", 1.0);
    s.mc.seed = static_cast<std::uint64_t>(seed);
  }
  double hurst = doc.contains("hurst")
                     ? get_number(doc, "", "hurst", 0.75)
                     : get_number(doc, "", "H", 0.75);
  if (!(hurst > 0.5) || !(hurst < 1.0))
    field_error("hurst", "Hurst index must lie in (1/2, 1), got " +
                             fmt(hurst));
  s.hurst = hurst;
  s.K = get_number(doc, "", "K", 0.0);

  s.generator = Eigen::MatrixXd::Zero(1, 1);
  if (doc.contains("regimes")) {
    const Json& r = doc["regimes"];
    double m = get_number(r, "regimes.", "m", 1.0);
    if (m < 1 || m != std::floor(m))
      field_error("regimes.m", "must be a positive integer");
    const int mi = static_cast<int>(m);
    if (!r.contains("generator"))
      field_error("regimes.generator", "missing generator matrix");
    const Json& q = r["generator"];
    if (!q.is_array() || static_cast<int>(q.size()) != mi)
      field_error("regimes.generator", "expected an m x m matrix");
    Eigen::MatrixXd qm(mi, mi);
    for (int i = 0; i < mi; ++i) {
      if (!q[i].is_array() || static_cast<int>(q[i].size()) != mi)
        field_error("regimes.generator[" + std::to_string(i) + "]",
                    "expected a row of length m");
      for (int j = 0; j < mi; ++j) {
        if (!q[i][j].is_number())
          field_error("regimes.generator", "entries must be numbers");
        qm(i, j) = q[i][j].get<double>();
      }
    }
    try {
      validate_generator(qm);
    } catch (const std::exception& e) {
      field_error("regimes.generator", e.what());
    }
    s.generator = qm;
    double start = get_number(r, "regimes.", "start", 1.0);
    if (start < 1 || start > mi)
      field_error("regimes.start", "must lie in {1,...,m}");
    s.start_regime = static_cast<int>(start) - 1;
  }
  if (doc.contains("coefficients")) {
    if (!doc["coefficients"].is_object())
      field_error("coefficients", "expected an object");
    s.coefficients = doc["coefficients"];
  }
  if (doc.contains("checks")) {
    if (!doc["checks"].is_array())
      field_error("checks", "expected an array of check names");
    for (const auto& c : doc["checks"]) {
      if (!c.is_string()) field_error("checks", "entries must be strings");
      s.checks.push_back(c.get<std::string>());
    }
  }
  if (doc.contains("emit") && doc["emit"].is_array())
    for (const auto& e : doc["emit"])
      if (e.is_string() && e.get<std::string>() == "paths")
        s.emit_paths = true;
  return s;
}

Scenario parse_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::invalid_argument("cannot open scenario file: " + path);
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("scenario file " + path + ": " + e.what());
  }
  return parse_scenario(doc);
}

// ---------------------------------------------------------------------------
// per-target runners
// ---------------------------------------------------------------------------

namespace {

struct Context {
  const Scenario& s;
  TimeGrid grid;
  GeneratorMatrix gen;
  DriverBundle bundle;
};

Context make_context(const Scenario& s) {
  TimeGrid grid = make_grid(s.grid.t0, s.grid.t_end, s.grid.n_steps);
  GeneratorMatrix gen = validate_generator(s.generator);
  DriverBundle bundle = make_bundle(grid, 1, s.hurst, gen, s.start_regime,
                                    s.mc.n_paths, s.mc.seed);
  return Context{s, grid, gen, std::move(bundle)};
}

double coeff_number(const Json& coeffs, const std::string& key,
                    double fallback) {
  if (!coeffs.contains(key)) return fallback;
  if (!coeffs[key].is_number())
    field_error("coefficients." + key, "expected a number");
  return coeffs[key].get<double>();
}

expr::Expression coeff_expr(const Json& coeffs, const std::string& key,
                            const std::string& fallback) {
  if (!coeffs.contains(key)) return expr::parse(fallback);
  return parse_expr_field(coeffs[key], "coefficients." + key);
}

Coefficient scalar_state_coeff(const expr::Expression& e) {
  return [e](double t, const Eigen::VectorXd& x, int i0) {
    expr::Env env;
    env.t = t;
    env.x = x[0];
    env.regime = i0 + 1;
    Eigen::VectorXd out(1);
    out[0] = e.eval(env);
    return out;
  };
}

std::function<Eigen::VectorXd(double)> scalar_time_coeff(
    const expr::Expression& e) {
  return [e](double t) {
    expr::Env env;
    env.t = t;
    Eigen::VectorXd out(1);
    out[0] = e.eval(env);
    return out;
  };
}

std::string ensemble_csv(const Ensemble& x, const TimeGrid& grid,
                         int max_paths, const std::string& value_name) {
  std::vector<std::string> header = {"time", "path_id"};
  const int dim = x.empty() ? 0 : static_cast<int>(x[0].rows());
  for (int i = 0; i < dim; ++i)
    header.push_back(dim == 1 ? value_name
                              : value_name + "_" + std::to_string(i + 1));
  CsvBuilder csv(header);
  const int np = std::min<int>(max_paths, static_cast<int>(x.size()));
  for (int p = 0; p < np; ++p)
    for (int k = 0; k < grid.n_nodes(); ++k) {
      std::vector<double> row = {grid.node(k), static_cast<double>(p)};
      for (int i = 0; i < dim; ++i) row.push_back(x[p](i, k));
      csv.row(row);
    }
  return csv.str();
}

// ---- checks ---------------------------------------------------------------

Json check_fbm_covariance(const Context& ctx) {
  const auto& bundle = ctx.bundle;
  const TimeGrid& grid = ctx.grid;
  auto p2h = [&](double v) { return std::pow(v, 2.0 * ctx.s.hurst); };
  std::vector<double> nodes;
  for (double frac : {0.25, 0.5, 1.0})
    nodes.push_back(grid.t0 + frac * grid.span());
  double worst = 0.0;
  for (double ti : nodes)
    for (double tj : nodes) {
      int a = static_cast<int>(std::lround((ti - grid.t0) / grid.dt));
      int b = static_cast<int>(std::lround((tj - grid.t0) / grid.dt));
      double cov = 0.0;
      for (int p = 0; p < bundle.n_paths(); ++p)
        cov += bundle.bh_path[p][a] * bundle.bh_path[p][b];
      cov /= bundle.n_paths();
      double ta = ti - grid.t0, tb = tj - grid.t0;
      double expect = 0.5 * (p2h(ta) + p2h(tb) - p2h(std::abs(ta - tb)));
      double se = std::sqrt((p2h(ta) * p2h(tb) + expect * expect) /
                            bundle.n_paths());
      worst = std::max(worst, std::abs(cov - expect) / se);
    }
  Json out;
  out["name"] = "fbm-covariance";
  out["max_deviation_se"] = worst;
  out["pass"] = worst < 5.0;
  return out;
}

Json check_picard(const Context& ctx, const ForwardSpec& spec) {
  const Json& c = ctx.s.coefficients;
  double T = coeff_number(c, "T", std::min(1.0, ctx.grid.span()));
  double a = coeff_number(c, "a", 16.0);
  auto [sol, report] = picard_solve(spec, ctx.bundle, T, a, 1e-10, 40);
  auto euler = euler_solve(spec, ctx.bundle);
  double max_ratio = 0.0;
  for (double r : report.ratios) max_ratio = std::max(max_ratio, r);
  // distance to the Euler fixed point in the equivalent norm
  double dist = 0.0;
  {
    const int kT = sol.grid.n_steps;
    Eigen::VectorXd mean_sq = Eigen::VectorXd::Zero(kT + 1);
    for (std::size_t p = 0; p < sol.x.size(); ++p)
      for (int k = 0; k <= kT; ++k)
        mean_sq[k] += (sol.x[p].col(k) - euler.x[p].col(k)).squaredNorm();
    mean_sq /= static_cast<double>(sol.x.size());
    double integral = 0.0;
    for (int k = 1; k <= kT; ++k) {
      integral += 0.5 * sol.grid.dt * (mean_sq[k - 1] + mean_sq[k]);
      dist = std::max(dist, std::exp(-a * (sol.grid.node(k) - sol.grid.t0)) *
                                integral);
    }
  }
  Json out;
  out["name"] = "picard-contraction";
  out["theoretical_factor"] = report.theoretical_factor;
  out["iterations"] = report.iterations;
  out["max_ratio"] = max_ratio;
  out["distance_to_euler"] = dist;
  out["pass"] = report.converged && max_ratio <= 0.30 && dist < 1e-3;
  return out;
}

Json check_decay(const Context& ctx, const PathSolution& sol) {
  auto diag = decay_diagnostic(sol, ctx.s.K);
  Json out;
  out["name"] = "decay";
  out["tail_slope"] = diag.tail_slope;
  out["decays"] = diag.decays;
  out["final_value"] = diag.weighted_second_moment.back();
  out["pass"] = diag.decays;
  return out;
}

Json check_apriori(const Context& ctx, const ForwardSpec& spec,
                   const PathSolution& sol) {
  double mu_max = spec.kappa_x - ctx.s.K - 0.5 * spec.l_sx * spec.l_sx;
  double mu = coeff_number(ctx.s.coefficients, "mu", 0.5 * mu_max);
  auto rep = apriori_check(spec, sol, ctx.bundle, ctx.s.K, mu);
  Json out;
  out["name"] = "apriori";
  out["lhs"] = rep.lhs;
  out["rhs"] = rep.rhs;
  out["margin"] = rep.margin;
  out["pass"] = rep.pass;
  return out;
}

Json check_assumption_a(const Context& ctx, const ForwardSpec& spec) {
  Eigen::VectorXd lo(1), hi(1);
  lo << -3.0;
  hi << 3.0;
  auto probe = probe_assumption_a(spec, 4000, lo, hi, ctx.grid.t0,
                                  ctx.grid.t_end, ctx.gen.m(), ctx.s.mc.seed);
  Json out;
  out["name"] = "assumption-a";
  out["kappa_x_hat"] = probe.kappa_x_hat;
  out["l_bx_hat"] = probe.l_bx_hat;
  out["l_sx_hat"] = probe.l_sx_hat;
  out["violations"] =
      probe.violations_lipschitz + probe.violations_monotonicity;
  out["pass"] =
      probe.violations_lipschitz + probe.violations_monotonicity == 0;
  return out;
}

Json check_bsde_truncation(const Context& ctx, const BackwardSpec& spec) {
  double T = ctx.grid.t_end;
  std::vector<double> schedule = {0.5 * T, 0.75 * T, T};
  auto [sol, report] = solve_infinite(spec, ctx.bundle, 1e-9, schedule);
  double y0 = 0.0;
  for (const auto& y : sol.y) y0 += y(0, 0);
  y0 /= static_cast<double>(sol.y.size());
  Json out;
  out["name"] = "bsde-truncation";
  out["y0"] = y0;
  Json dists = Json::array();
  for (double d : report.distances) dists.push_back(d);
  out["distances"] = dists;
  if (report.distances.size() >= 2 && report.distances[0] > 0)
    out["distance_ratio"] = report.distances[1] / report.distances[0];
  out["pass"] = true;
  return out;
}

Json check_continuation(const Context& ctx, const FBSDESpec& spec,
                        double tol) {
  auto [theta, trace] = solve_fbsde(spec, ctx.bundle, tol);
  Json out;
  out["name"] = "continuation";
  out["reached_tau_one"] = trace.reached_one;
  out["final_residual"] = trace.final_residual;
  out["delta0"] = trace.delta0;
  Json steps = Json::array();
  for (const auto& st : trace.steps) {
    Json js;
    js["tau"] = st.tau_from + st.delta;
    js["delta"] = st.delta;
    js["iterations"] = st.outer_iterations;
    js["distance_sq"] = st.final_distance_sq;
    js["c5_hat"] = st.c5_hat;
    steps.push_back(js);
  }
  out["steps"] = steps;
  double y0 = 0.0, x_end = 0.0;
  for (int p = 0; p < theta.n_paths(); ++p) {
    y0 += theta.y[p](0, 0);
    x_end += theta.x[p](0, ctx.grid.n_steps);
  }
  out["y0_mean"] = y0 / theta.n_paths();
  out["x_end_mean"] = x_end / theta.n_paths();
  out["pass"] = trace.reached_one && trace.final_residual < 10.0 * tol;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

namespace {

RunReport run_drivers(const Context& ctx) {
  RunReport rep;
  Json checks = Json::array();
  for (const auto& name : ctx.s.checks) {
    if (name == "fbm-covariance") {
      checks.push_back(check_fbm_covariance(ctx));
    } else {
      field_error("checks", "unknown drivers check '" + name + "'");
    }
  }
  rep.summary["checks"] = checks;
  if (ctx.s.emit_paths) {
    Ensemble bh(ctx.bundle.n_paths());
    for (int p = 0; p < ctx.bundle.n_paths(); ++p) {
      Eigen::MatrixXd m(1, ctx.grid.n_nodes());
      m.row(0) = ctx.bundle.bh_path[p].transpose();
      bh[p] = std::move(m);
    }
    rep.artifacts.push_back(
        {"fbm", "csv", ensemble_csv(bh, ctx.grid, 100, "value")});
    Ensemble reg(ctx.bundle.n_paths());
    for (int p = 0; p < ctx.bundle.n_paths(); ++p) {
      Eigen::MatrixXd m(1, ctx.grid.n_nodes());
      for (int k = 0; k < ctx.grid.n_nodes(); ++k)
        m(0, k) = ctx.bundle.regime_nodes[p][k] + 1;
      reg[p] = std::move(m);
    }
    rep.artifacts.push_back(
        {"regime", "csv", ensemble_csv(reg, ctx.grid, 100, "value")});
  }
  return rep;
}

ForwardSpec forward_spec_from(const Context& ctx) {
  const Json& c = ctx.s.coefficients;
  ForwardSpec spec;
  spec.state_dim = 1;
  auto be = coeff_expr(c, "b", "0");
  auto se = coeff_expr(c, "sigma", "0");
  auto ge = coeff_expr(c, "gamma", "0");
  spec.b = scalar_state_coeff(be);
  spec.sigma = {scalar_state_coeff(se)};
  spec.gamma = scalar_time_coeff(ge);
  spec.x0 = fixed_x0(coeff_number(c, "x0", 0.0));
  spec.kappa_x = coeff_number(c, "kappa_x", 0.0);
  spec.l_bx = coeff_number(c, "l_bx", 0.0);
  spec.l_sx = coeff_number(c, "l_sx", 0.0);
  spec.K = ctx.s.K;
  return spec;
}

RunReport run_forward(const Context& ctx) {
  RunReport rep;
  ForwardSpec spec = forward_spec_from(ctx);
  PathSolution sol = euler_solve(spec, ctx.bundle);
  double mean = 0.0, second = 0.0;
  for (const auto& x : sol.x) {
    mean += x(0, ctx.grid.n_steps);
    second += x(0, ctx.grid.n_steps) * x(0, ctx.grid.n_steps);
  }
  mean /= static_cast<double>(sol.x.size());
  second /= static_cast<double>(sol.x.size());
  auto norm = weighted_l2k_norm(sol.x, ctx.s.K, ctx.grid);
  rep.summary["terminal_mean"] = mean;
  rep.summary["terminal_second_moment"] = second;
  rep.summary["weighted_l2k_norm"] = norm.value;
  rep.summary["tail_bound"] = norm.tail_bound;
  Json checks = Json::array();
  for (const auto& name : ctx.s.checks) {
    if (name == "picard-contraction")
      checks.push_back(check_picard(ctx, spec));
    else if (name == "decay")
      checks.push_back(check_decay(ctx, sol));
    else if (name == "apriori")
      checks.push_back(check_apriori(ctx, spec, sol));
    else if (name == "assumption-a")
      checks.push_back(check_assumption_a(ctx, spec));
    else
      field_error("checks", "unknown forward check '" + name + "'");
  }
  rep.summary["checks"] = checks;
  if (ctx.s.emit_paths)
    rep.artifacts.push_back(
        {"paths", "csv", ensemble_csv(sol.x, ctx.grid, 100, "x")});
  return rep;
}

BackwardSpec backward_spec_from(const Context& ctx) {
  const Json& c = ctx.s.coefficients;
  BackwardSpec spec;
  spec.y_dim = 1;
  auto ge = coeff_expr(c, "g", "0");
  spec.g = [ge](double t, const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                const Eigen::VectorXd& r, const Eigen::MatrixXd& f,
                int i0) -> Eigen::VectorXd {
    expr::Env env;
    env.t = t;
    env.y = y[0];
    env.z = z(0, 0);
    env.r = r[0];
    env.f = f.rows() > 0 && f.cols() > 0 ? f(0, 0) : 0.0;
    env.regime = i0 + 1;
    Eigen::VectorXd out(1);
    out[0] = ge.eval(env);
    return out;
  };
  spec.K = ctx.s.K;
  spec.L = coeff_number(c, "L", 0.0);
  return spec;
}

RunReport run_backward(const Context& ctx) {
  RunReport rep;
  BackwardSpec spec = backward_spec_from(ctx);
  auto sol = solve_truncated(spec, ctx.bundle, ctx.grid.t_end);
  double y0 = 0.0;
  for (const auto& y : sol.y) y0 += y(0, 0);
  y0 /= static_cast<double>(sol.y.size());
  rep.summary["y0_mean"] = y0;
  Json checks = Json::array();
  for (const auto& name : ctx.s.checks) {
    if (name == "bsde-truncation")
      checks.push_back(check_bsde_truncation(ctx, spec));
    else if (name == "estimate") {
      double mu = coeff_number(ctx.s.coefficients, "mu", 0.5);
      auto er = bsde_estimate_check(spec, sol, ctx.bundle, mu);
      Json out;
      out["name"] = "estimate";
      out["lhs"] = er.lhs;
      out["rhs"] = er.rhs;
      out["pass"] = er.pass;
      checks.push_back(out);
    } else {
      field_error("checks", "unknown backward check '" + name + "'");
    }
  }
  rep.summary["checks"] = checks;
  if (ctx.s.emit_paths)
    rep.artifacts.push_back(
        {"solution", "csv", ensemble_csv(sol.y, ctx.grid, 100, "y")});
  return rep;
}

// canonical residual trio used by the ito-residual builtin
Json ito_canonical_cases(const Context& ctx) {
  Json cases = Json::array();
  TestFunction quad;
  quad.value = [](double, const Eigen::VectorXd& x, int) {
    return x.squaredNorm();
  };
  quad.time_deriv = [](double, const Eigen::VectorXd&, int) { return 0.0; };
  quad.grad = [](double, const Eigen::VectorXd& x, int) {
    return (2.0 * x).eval();
  };
  quad.hess = [](double, const Eigen::VectorXd& x, int) {
    return (2.0 * Eigen::MatrixXd::Identity(x.size(), x.size())).eval();
  };

  GeneratorMatrix one = validate_generator(Eigen::MatrixXd::Zero(1, 1));
  TimeGrid g1 = make_grid(0.0, 1.0, 128);
  bool all_pass = true;

  {  // pure Brownian
    auto bundle =
        make_bundle(g1, 1, ctx.s.hurst, one, 0, ctx.s.mc.n_paths, ctx.s.mc.seed);
    ForwardSpec fs;
    fs.sigma = {[](double, const Eigen::VectorXd& x, int) {
      return Eigen::VectorXd::Ones(x.size()).eval();
    }};
    fs.x0 = fixed_x0(0.0);
    auto sol = euler_solve(fs, bundle);
    GeneratorInputs gi;
    gi.sigma = fs.sigma;
    gi.q = one;
    auto st = ito_residual(quad, gi, bundle, sol.x, 0.0, 1.0);
    Json c;
    c["case"] = "brownian";
    c["mean"] = st.mean;
    c["std_error"] = st.std_error;
    bool pass = std::abs(st.mean) < 5.0 * st.std_error;
    c["pass"] = pass;
    all_pass = all_pass && pass;
    cases.push_back(c);
  }
  {  // pure fractional
    auto bundle =
        make_bundle(g1, 1, ctx.s.hurst, one, 0, ctx.s.mc.n_paths, ctx.s.mc.seed);
    ForwardSpec fs;
    fs.gamma = [](double) { return Eigen::VectorXd::Ones(1).eval(); };
    fs.x0 = fixed_x0(0.0);
    auto sol = euler_solve(fs, bundle);
    GeneratorInputs gi;
    gi.gamma = fs.gamma;
    gi.hurst = ctx.s.hurst;
    gi.q = one;
    auto st = ito_residual(quad, gi, bundle, sol.x, 0.0, 1.0,
                           FbmConvention::wick_mean);
    Json c;
    c["case"] = "fractional";
    c["mean"] = st.mean;
    c["std_error"] = st.std_error;
    bool pass = std::abs(st.mean) < 5.0 * st.std_error;
    c["pass"] = pass;
    all_pass = all_pass && pass;
    cases.push_back(c);
  }
  {  // pure chain
    Eigen::MatrixXd q(2, 2);
    q << -1.0, 1.0, 1.0, -1.0;
    auto two = validate_generator(q);
    auto bundle =
        make_bundle(g1, 1, ctx.s.hurst, two, 0, ctx.s.mc.n_paths, ctx.s.mc.seed);
    TestFunction reg;
    reg.value = [](double, const Eigen::VectorXd&, int i0) {
      return static_cast<double>(i0 + 1);
    };
    reg.time_deriv = [](double, const Eigen::VectorXd&, int) { return 0.0; };
    reg.grad = [](double, const Eigen::VectorXd& x, int) {
      return Eigen::VectorXd::Zero(x.size()).eval();
    };
    reg.hess = [](double, const Eigen::VectorXd& x, int) {
      return Eigen::MatrixXd::Zero(x.size(), x.size()).eval();
    };
    Ensemble zero(bundle.n_paths(), Eigen::MatrixXd::Zero(1, g1.n_nodes()));
    GeneratorInputs gi;
    gi.q = two;
    auto st = ito_residual(reg, gi, bundle, zero, 0.0, 1.0);
    Json c;
    c["case"] = "chain";
    c["mean"] = st.mean;
    c["std_error"] = st.std_error;
    bool pass = std::abs(st.mean) < 5.0 * st.std_error + 1e-12;
    c["pass"] = pass;
    all_pass = all_pass && pass;
    cases.push_back(c);
  }
  Json out;
  out["name"] = "ito-residual-cases";
  out["cases"] = cases;
  out["pass"] = all_pass;
  return out;
}

RunReport run_calculus(const Context& ctx) {
  RunReport rep;
  Json checks = Json::array();
  for (const auto& name : ctx.s.checks) {
    if (name == "ito-residual-cases") {
      checks.push_back(ito_canonical_cases(ctx));
    } else if (name == "residual") {
      const Json& c = ctx.s.coefficients;
      auto fe = coeff_expr(c, "f", "x^2");
      auto tf = finite_difference_test_function(
          [fe](double t, const Eigen::VectorXd& x, int i0) {
            expr::Env env;
            env.t = t;
            env.x = x[0];
            env.regime = i0 + 1;
            return fe.eval(env);
          });
      ForwardSpec fs = forward_spec_from(ctx);
      auto sol = euler_solve(fs, ctx.bundle);
      GeneratorInputs gi;
      gi.b = fs.b;
      gi.sigma = fs.sigma;
      gi.gamma = fs.gamma;
      gi.hurst = ctx.s.hurst;
      gi.t_origin = ctx.grid.t0;
      gi.q = ctx.gen;
      auto st = ito_residual(tf, gi, ctx.bundle, sol.x, ctx.grid.t0,
                             ctx.grid.t_end);
      Json out;
      out["name"] = "residual";
      out["mean"] = st.mean;
      out["std_error"] = st.std_error;
      out["rms"] = st.rms;
      out["pass"] = std::abs(st.mean) < 5.0 * st.std_error + 1e-12;
      checks.push_back(out);
    } else {
      field_error("checks", "unknown calculus check '" + name + "'");
    }
  }
  rep.summary["checks"] = checks;
  return rep;
}

FBSDESpec coupled_spec_from(const Context& ctx) {
  const Json& c = ctx.s.coefficients;
  FBSDESpec spec;
  spec.x_dim = 1;
  spec.y_dim = 1;
  auto wrap_theta = [](const expr::Expression& e) {
    return [e](double t, const ThetaPoint& th, int i0) {
      expr::Env env;
      env.t = t;
      env.x = th.x[0];
      env.y = th.y[0];
      env.z = th.z(0, 0);
      env.r = th.r[0];
      env.f = th.f(0, 0);
      env.regime = i0 + 1;
      Eigen::VectorXd out(1);
      out[0] = e.eval(env);
      return out;
    };
  };
  auto pe = coeff_expr(c, "Psi", "0");
  spec.psi = [pe](const Eigen::VectorXd& y, int i0) {
    expr::Env env;
    env.y = y[0];
    env.regime = i0 + 1;
    Eigen::VectorXd out(1);
    out[0] = pe.eval(env);
    return out;
  };
  spec.b = wrap_theta(coeff_expr(c, "b", "0"));
  spec.sigma = {wrap_theta(coeff_expr(c, "sigma", "0"))};
  spec.g = wrap_theta(coeff_expr(c, "g", "0"));
  spec.gamma = scalar_time_coeff(coeff_expr(c, "gamma", "0"));
  spec.kappa_x = coeff_number(c, "kappa_x", 0.0);
  spec.kappa_y = coeff_number(c, "kappa_y", 0.0);
  spec.K = ctx.s.K;
  return spec;
}

RunReport run_coupled(const Context& ctx) {
  RunReport rep;
  FBSDESpec spec = coupled_spec_from(ctx);
  double tol = coeff_number(ctx.s.coefficients, "tol", 1e-3);
  Json checks = Json::array();
  for (const auto& name : ctx.s.checks) {
    if (name == "continuation") {
      checks.push_back(check_continuation(ctx, spec, tol));
    } else if (name == "decoupled-linear") {
      // the tau-march must agree with solving forward then backward once
      auto [theta, trace] = solve_fbsde(spec, ctx.bundle, tol);
      ForwardSpec fs;
      fs.state_dim = 1;
      const int np = pair_count(ctx.gen.m());
      fs.b = [&spec, np](double t, const Eigen::VectorXd& x, int i0) {
        ThetaPoint th;
        th.x = x;
        th.y = Eigen::VectorXd::Zero(1);
        th.z = Eigen::MatrixXd::Zero(1, 1);
        th.r = Eigen::VectorXd::Zero(1);
        th.f = Eigen::MatrixXd::Zero(1, std::max(1, np));
        return spec.b(t, th, i0);
      };
      fs.gamma = spec.gamma;
      fs.x0 = fixed_x0(spec.psi(Eigen::VectorXd::Zero(1), 0)[0]);
      auto xsol = euler_solve(fs, ctx.bundle);
      BackwardSpec bs;
      bs.y_dim = 1;
      bs.g = [&spec, &xsol, np](double t, const Eigen::VectorXd& y,
                                const Eigen::MatrixXd& z,
                                const Eigen::VectorXd& r,
                                const Eigen::MatrixXd& f,
                                int i0) -> Eigen::VectorXd {
        ThetaPoint th;
        th.x = Eigen::VectorXd::Zero(1);  // decoupled: g must not use x
        th.y = y;
        th.z = z;
        th.r = r;
        th.f = f.cols() > 0 ? f : Eigen::MatrixXd::Zero(1, std::max(1, np));
        return spec.g(t, th, i0);
      };
      bs.K = ctx.s.K;
      RegressionBasis basis;
      basis.features = [&xsol](int p, int k) {
        return xsol.x[p].col(k).eval();
      };
      basis.n_features = 1;
      auto ysol = solve_truncated(bs, ctx.bundle, ctx.grid.t_end, basis);
      double dx = 0.0, dy = 0.0;
      Ensemble diffx(theta.n_paths()), diffy(theta.n_paths());
      for (int p = 0; p < theta.n_paths(); ++p) {
        diffx[p] = theta.x[p] - xsol.x[p];
        diffy[p] = theta.y[p] - ysol.y[p];
      }
      dx = weighted_l2k_norm(diffx, ctx.s.K, ctx.grid).value;
      dy = weighted_l2k_norm(diffy, ctx.s.K, ctx.grid).value;
      Json out;
      out["name"] = "decoupled-linear";
      out["x_distance"] = dx;
      out["y_distance"] = dy;
      out["pass"] = dx < 1e-3 && dy < 1e-3;
      checks.push_back(out);
    } else {
      field_error("checks", "unknown coupled check '" + name + "'");
    }
  }
  rep.summary["checks"] = checks;
  return rep;
}

LQProblem lq_problem_from(const Context& ctx) {
  const Json& c = ctx.s.coefficients;
  LQProblem prob;
  auto mat = [&](const std::string& key,
                 const std::string& fallback) -> MatrixCoefficient {
    if (!c.contains(key)) {
      auto e = expr::parse(fallback);
      return matrix_coefficient({{e}});
    }
    return matrix_coefficient(
        parse_expr_matrix(c[key], "coefficients." + key));
  };
  prob.A = mat("A", "0");
  prob.B1 = mat("B1", "0");
  prob.B2 = mat("B2", "0");
  prob.C = {mat("C", "0")};
  prob.D1 = {mat("D1", "0")};
  prob.D2 = {mat("D2", "0")};
  prob.Q = mat("Q", "0");
  prob.S1 = mat("S1", "0");
  prob.S2 = mat("S2", "0");
  prob.R11 = mat("R11", "1");
  prob.R12 = mat("R12", "0");
  prob.R21 = mat("R21", "0");
  prob.R22 = mat("R22", "-1");
  // dims from a probe evaluation
  prob.n = static_cast<int>(prob.A(0.0, 0).rows());
  prob.m1 = static_cast<int>(prob.B1(0.0, 0).cols());
  prob.m2 = static_cast<int>(prob.B2(0.0, 0).cols());
  prob.d = 1;
  if (c.contains("Gamma_fbm")) {
    auto rows = parse_expr_matrix(Json::array({c["Gamma_fbm"]}),
                                  "coefficients.Gamma_fbm");
    auto mc = matrix_coefficient(rows);
    prob.Gamma_fbm = [mc](double t) {
      return mc(t, 0).row(0).transpose().eval();
    };
  }
  prob.K = ctx.s.K;
  prob.hurst = ctx.s.hurst;
  prob.t0 = ctx.grid.t0;
  prob.x0 = Eigen::VectorXd::Zero(prob.n);
  if (c.contains("x0")) {
    const Json& x0 = c["x0"];
    if (!x0.is_array() || static_cast<int>(x0.size()) != prob.n)
      field_error("coefficients.x0", "expected an array of length n");
    for (int i = 0; i < prob.n; ++i) prob.x0[i] = x0[i].get<double>();
  }
  prob.gen = validate_generator(ctx.s.generator);
  prob.start_regime = ctx.s.start_regime;
  return prob;
}

RunReport run_lqgame(const Context& ctx) {
  RunReport rep;
  LQProblem prob = lq_problem_from(ctx);
  double tol = coeff_number(ctx.s.coefficients, "tol", 1e-4);
  bool enforce =
      coeff_number(ctx.s.coefficients, "enforce_pattern", 1.0) != 0.0;
  GameSolveOptions opts;
  opts.enforce_pattern = enforce;
  GameSolution sol = solve_game(prob, ctx.bundle, tol, opts);
  rep.summary["value"] = sol.value;
  rep.summary["value_std_error"] = sol.value_std_error;
  rep.summary["stationarity_residual"] = sol.stationarity;
  auto unorm = [&](const Ensemble& u) {
    return weighted_l2k_norm(u, prob.K, ctx.grid).value;
  };
  rep.summary["u1_norm"] = unorm(sol.u1);
  rep.summary["u2_norm"] = unorm(sol.u2);
  rep.summary["assumption_d_pattern"] = sol.assumption_d.zero_sum_pattern;
  rep.summary["literal_r_positive"] = sol.assumption_d.literal_r_pos;

  Json checks = Json::array();
  for (const auto& name : ctx.s.checks) {
    if (name == "stationarity") {
      Json out;
      out["name"] = "stationarity";
      out["residual"] = sol.stationarity;
      out["pass"] = sol.stationarity < 1e-6;
      checks.push_back(out);
    } else if (name == "saddle") {
      auto sr = saddle_check(prob, sol, 20, {0.05, 0.1, 0.2}, ctx.bundle,
                             ctx.s.mc.seed + 1);
      Json out;
      out["name"] = "saddle";
      out["perturbations"] = sr.perturbations;
      out["violations"] = sr.violations;
      out["max_first_order"] = sr.max_first_order;
      out["second_order_signs_ok"] = sr.second_order_signs_ok;
      out["pass"] = sr.violations == 0 && sr.second_order_signs_ok;
      checks.push_back(out);
    } else if (name == "cross-term-roundtrip") {
      auto red = cross_term_reduce(prob);
      GameSolveOptions o2;
      o2.enforce_pattern = false;
      GameSolution tsol = solve_game(red.transformed, ctx.bundle, tol, o2);
      // map the transformed control back: u = u_tilde - R^{-1} S x
      Ensemble mapped_u1(tsol.theta.n_paths()), mapped_u2(tsol.theta.n_paths());
      for (int p = 0; p < tsol.theta.n_paths(); ++p) {
        Eigen::MatrixXd m1(prob.m1, ctx.grid.n_nodes());
        Eigen::MatrixXd m2(prob.m2, ctx.grid.n_nodes());
        for (int k = 0; k < ctx.grid.n_nodes(); ++k) {
          double t = ctx.grid.node(k);
          int i0 = ctx.bundle.regime_nodes[p][k];
          Eigen::VectorXd shift = red.gain(t, i0) * tsol.theta.x[p].col(k);
          m1.col(k) = tsol.u1[p].col(k) - shift.head(prob.m1);
          m2.col(k) = tsol.u2[p].col(k) - shift.tail(prob.m2);
        }
        mapped_u1[p] = std::move(m1);
        mapped_u2[p] = std::move(m2);
      }
      Ensemble du1(tsol.theta.n_paths()), du2(tsol.theta.n_paths());
      for (int p = 0; p < tsol.theta.n_paths(); ++p) {
        du1[p] = mapped_u1[p] - sol.u1[p];
        du2[p] = mapped_u2[p] - sol.u2[p];
      }
      double dist = weighted_l2k_norm(du1, prob.K, ctx.grid).value +
                    weighted_l2k_norm(du2, prob.K, ctx.grid).value;
      // matched costs: J(u) on the original problem vs the transformed value
      CostEstimate back = evaluate_cost(prob, ensemble_control(mapped_u1),
                                        ensemble_control(mapped_u2),
                                        ctx.bundle);
      double cost_gap = std::abs(back.value - tsol.value);
      double band = 3.0 * (back.std_error + tsol.value_std_error) + 1e-9;
      Json out;
      out["name"] = "cross-term-roundtrip";
      out["control_distance"] = dist;
      out["cost_gap"] = cost_gap;
      out["cost_band"] = band;
      out["pass"] = dist < 1e-3 && cost_gap < band;
      checks.push_back(out);
    } else {
      field_error("checks", "unknown lqgame check '" + name + "'");
    }
  }
  rep.summary["checks"] = checks;

  // solution artifacts: scalar JSON plus path CSVs
  Json sol_json;
  sol_json["value"] = sol.value;
  sol_json["value_std_error"] = sol.value_std_error;
  sol_json["stationarity_residual"] = sol.stationarity;
  sol_json["delta0"] = sol.trace.delta0;
  sol_json["continuation_residual"] = sol.trace.final_residual;
  rep.artifacts.push_back({"solution", "json", sol_json.dump(2) + "\n"});
  if (ctx.s.emit_paths) {
    rep.artifacts.push_back(
        {"state", "csv", ensemble_csv(sol.theta.x, ctx.grid, 100, "x")});
    rep.artifacts.push_back(
        {"control1", "csv", ensemble_csv(sol.u1, ctx.grid, 100, "u1")});
    rep.artifacts.push_back(
        {"control2", "csv", ensemble_csv(sol.u2, ctx.grid, 100, "u2")});
  }
  return rep;
}

}  // namespace

RunReport run_scenario(const Scenario& s) {
  auto t_start = std::chrono::steady_clock::now();
  Context ctx = make_context(s);
  RunReport rep;
  if (s.target == "drivers")
    rep = run_drivers(ctx);
  else if (s.target == "forward")
    rep = run_forward(ctx);
  else if (s.target == "backward")
    rep = run_backward(ctx);
  else if (s.target == "calculus")
    rep = run_calculus(ctx);
  else if (s.target == "coupled")
    rep = run_coupled(ctx);
  else if (s.target == "lqgame")
    rep = run_lqgame(ctx);
  else
    field_error("target", "unknown target '" + s.target + "'");

  Json summary;
  summary["name"] = s.name;
  summary["target"] = s.target;
  summary["seed"] = s.mc.seed;
  summary["n_paths"] = s.mc.n_paths;
  summary["grid"] = {{"t0", s.grid.t0},
                     {"t_end", s.grid.t_end},
                     {"n_steps", s.grid.n_steps}};
  for (auto& [k, v] : rep.summary.items()) summary[k] = v;
  bool pass = true;
  if (summary.contains("checks"))
    for (const auto& c : summary["checks"])
      if (c.contains("pass") && !c["pass"].get<bool>()) pass = false;
  summary["pass"] = pass;
  rep.summary = std::move(summary);
  rep.all_checks_passed = pass;
  rep.scenario = s.name;
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return rep;
}

std::vector<std::string> emit_results(const RunReport& report,
                                      const std::string& format,
                                      const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> manifest;
  auto write = [&](const std::string& name, const std::string& ext,
                   const std::string& data) {
    fs::path path = fs::path(out_dir) / (report.scenario + "." + name + "." + ext);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << data;
    manifest.push_back(path.string());
  };
  write("summary", "json", report.summary.dump(2) + "\n");
  for (const auto& a : report.artifacts) {
    if (a.ext == "csv" && format == "json") {
      // re-encode tabular data as a JSON array of rows
      Json rows = Json::array();
      std::istringstream is(a.data);
      std::string line;
      std::getline(is, line);
      Json cols = Json::array();
      std::stringstream hs(line);
      std::string cell;
      while (std::getline(hs, cell, ',')) cols.push_back(cell);
      while (std::getline(is, line)) {
        Json row = Json::array();
        std::stringstream ls(line);
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(row);
      }
      Json doc;
      doc["columns"] = cols;
      doc["rows"] = rows;
      write(a.name, "json", doc.dump(2) + "\n");
    } else {
      write(a.name, a.ext, a.data);
    }
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// builtins
// ---------------------------------------------------------------------------

namespace {

const std::map<std::string, const char*>& builtin_table() {
  static const std::map<std::string, const char*> table = {
      {"fbm-covariance", R"json({
        "name": "fbm-covariance",
        "target": "drivers",
        "grid": {"t0": 0, "t_end": 2, "n_steps": 200},
        "mc": {"n_paths": 10000, "seed": 20240801},
        "hurst": 0.75,
        "checks": ["fbm-covariance"]
      })json"},
      {"ito-residual", R"json({
        "name": "ito-residual",
        "target": "calculus",
        "grid": {"t0": 0, "t_end": 1, "n_steps": 128},
        "mc": {"n_paths": 10000, "seed": 20240802},
        "hurst": 0.75,
        "checks": ["ito-residual-cases"]
      })json"},
      {"picard-contraction", R"json({
        "name": "picard-contraction",
        "target": "forward",
        "grid": {"t0": 0, "t_end": 1, "n_steps": 200},
        "mc": {"n_paths": 400, "seed": 20240803},
        "hurst": 0.75,
        "K": -0.5,
        "coefficients": {"b": "-x", "sigma": "0", "gamma": "0", "x0": 1,
                          "kappa_x": 1, "l_bx": 1, "l_sx": 0,
                          "a": 16, "T": 1},
        "checks": ["picard-contraction", "assumption-a"]
      })json"},
      {"bsde-truncation", R"json({
        "name": "bsde-truncation",
        "target": "backward",
        "grid": {"t0": 0, "t_end": 8, "n_steps": 400},
        "mc": {"n_paths": 64, "seed": 20240804},
        "hurst": 0.75,
        "K": 0.05,
        "coefficients": {"g": "exp(-t)", "L": 0.25},
        "checks": ["bsde-truncation"]
      })json"},
      {"example-sec5", R"json({
        "name": "example-sec5",
        "target": "coupled",
        "grid": {"t0": 0, "t_end": 6, "n_steps": 120},
        "mc": {"n_paths": 1500, "seed": 20240805},
        "hurst": 0.75,
        "K": -0.5,
        "regimes": {"m": 2, "generator": [[-1, 1], [1, -1]]},
        "coefficients": {
          "Psi":   "(2 - regime)*(-2*y + sin(y)) + (regime - 1)*(3*y - sin(y))",
          "b":     "(2 - regime)*(-2*y + sin(y)) + (regime - 1)*(3*y - sin(y))",
          "sigma": "(2 - regime)*(-2*z + sin(z)) + (regime - 1)*(z + sin(z))",
          "g":     "(2 - regime)*(-2*x + sin(x) + y) + (regime - 1)*(0.5*x - sin(x) + y)",
          "gamma": "0.1*exp(-t)",
          "kappa_x": 0, "kappa_y": -1, "tol": 0.001
        },
        "checks": ["continuation"]
      })json"},
      {"continuation-linear", R"json({
        "name": "continuation-linear",
        "target": "coupled",
        "grid": {"t0": 0, "t_end": 6, "n_steps": 150},
        "mc": {"n_paths": 1000, "seed": 20240806},
        "hurst": 0.75,
        "K": 0.25,
        "coefficients": {
          "Psi": "0",
          "b": "-x",
          "sigma": "0",
          "g": "0.5*y + exp(-t)",
          "gamma": "0.2",
          "kappa_x": 1, "kappa_y": -0.5, "tol": 0.0005
        },
        "checks": ["continuation", "decoupled-linear"]
      })json"},
      {"example-sec6", R"json({
        "name": "example-sec6",
        "target": "lqgame",
        "grid": {"t0": 0, "t_end": 5, "n_steps": 125},
        "mc": {"n_paths": 10000, "seed": 20240807},
        "hurst": 0.75,
        "K": -0.1,
        "regimes": {"m": 2, "generator": [[-1, 1], [1, -1]]},
        "coefficients": {
          "A": [["0"]], "B1": [["1"]], "B2": [["1"]],
          "C": [["0"]], "D1": [["1"]], "D2": [["1"]],
          "Gamma_fbm": ["1"],
          "Q": [["0"]], "S1": [["0"]], "S2": [["0"]],
          "R11": [["1"]], "R12": [["0"]], "R21": [["0"]], "R22": [["-1"]],
          "x0": [0.5], "tol": 0.0001
        },
        "checks": ["stationarity", "saddle"]
      })json"},
      {"cross-term-roundtrip", R"json({
        "name": "cross-term-roundtrip",
        "target": "lqgame",
        "grid": {"t0": 0, "t_end": 6, "n_steps": 150},
        "mc": {"n_paths": 4000, "seed": 20240808},
        "hurst": 0.75,
        "K": -1.0,
        "coefficients": {
          "A": [["-2"]], "B1": [["1"]], "B2": [["0.5"]],
          "C": [["0.3"]], "D1": [["0"]], "D2": [["0"]],
          "Gamma_fbm": ["0.5"],
          "Q": [["1"]], "S1": [["0.4"]], "S2": [["-0.3"]],
          "R11": [["2"]], "R12": [["0"]], "R21": [["0"]], "R22": [["-3"]],
          "x0": [1], "tol": 0.0001, "enforce_pattern": 0
        },
        "checks": ["stationarity", "cross-term-roundtrip"]
      })json"}};
  return table;
}

}  // namespace

std::vector<std::string> builtin_names() {
  std::vector<std::string> names;
  for (const auto& [k, v] : builtin_table()) names.push_back(k);
  return names;
}

Scenario builtin_scenario(const std::string& name) {
  auto it = builtin_table().find(name);
  if (it == builtin_table().end())
    throw std::invalid_argument("unknown builtin scenario '" + name +
                                "'; see `fbsde-lab list`");
  return parse_scenario(Json::parse(it->second));
}

}  // namespace fbsde
