// qdc: solve, oracle, audit and validate for composite quasi-dc problems.
//
// Exit codes: 0 success, 2 bad configuration or input, 3 solver or audit failure.

#include <CLI11.hpp>

#include <iostream>
#include <random>
#include <sstream>

#include "qdc/qdc.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kSolverExit = 3;

bool is_config_error(qdc::ErrorCode c) {
  using qdc::ErrorCode;
  switch (c) {
    case ErrorCode::ConfigError:
    case ErrorCode::ParseError:
    case ErrorCode::InvalidParameter:
    case ErrorCode::EmptySet:
    case ErrorCode::DenominatorSignViolation:
    case ErrorCode::UnsupportedOuter:
    case ErrorCode::CurvatureMismatch:
    case ErrorCode::RhoTooSmall:
    case ErrorCode::GridTooLarge:
      return true;
    default:
      return false;
  }
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw qdc::Error(qdc::ErrorCode::ConfigError, "bad number '" + tok + "' in list '" + s + "'");
    }
  }
  return out;
}

struct SolveArgs {
  std::string problem;
  std::string algorithm = "alg1";
  std::string variant = "cvx_over_cve";
  std::string tuple_rule = "first";
  std::string x0;
  std::string out = "run";
  qdc::SolverConfig cfg;
  std::uint64_t seed = 0;
  double lip_B = -1, lip_grad = -1, lip_P = -1;
};

int run_solve(const SolveArgs& a) {
  const qdc::LoadedProblem lp = qdc::load_problem(a.problem);
  const qdc::Problem& prob = lp.problem;
  const qdc::Vec x0 = a.x0.empty() ? prob.feasible_set().center() : parse_list(a.x0);
  if (x0.size() != prob.dimension())
    throw qdc::Error(qdc::ErrorCode::ConfigError, "--x0 needs " + std::to_string(prob.dimension()) + " coordinates");

  qdc::RunResult res;
  if (a.algorithm == "alg1") {
    const qdc::TupleRule rule = a.tuple_rule == "random" ? qdc::TupleRule::random(a.seed) : qdc::TupleRule::first();
    res = qdc::run_algorithm1(prob, x0, a.cfg, rule);
  } else if (a.algorithm == "alg2") {
    res = qdc::run_algorithm2(prob, x0, a.cfg);
  } else if (a.algorithm == "unitstep") {
    qdc::LipschitzData lip;
    if (a.lip_B >= 0 && a.lip_grad >= 0 && a.lip_P >= 0) {
      lip = {a.lip_B, a.lip_grad, a.lip_P};
    } else {
      lip = qdc::estimate_lipschitz(prob, 2000, a.seed + 7);
    }
    res = qdc::run_unit_step(prob, x0, a.cfg, lip);
  } else {
    qdc::QuotientVariant v = qdc::QuotientVariant::CvxOverCve;
    if (a.variant == "cvx_over_diffcvx") v = qdc::QuotientVariant::CvxOverDiffCvx;
    if (a.variant == "diffcve_over_cve") v = qdc::QuotientVariant::DiffCveOverCve;
    res = qdc::run_direct_descent(prob, x0, v, a.cfg);
  }

  qdc::json summary = qdc::run_summary(res, a.cfg);
  summary["problem"] = prob.name();
  summary["seed"] = a.seed;
  summary["x0"] = x0;
  if (a.algorithm == "alg1") summary["tuple_rule"] = a.tuple_rule;
  summary["weak_residual"] = qdc::stationarity_residual(prob, res.x_final, a.cfg.rho, qdc::StationarityMode::Weak, 0.0,
                                                        a.cfg.sub, a.cfg.family_cap);
  qdc::write_run(a.out, res, summary);
  std::cout << to_string(res.status) << " theta=" << qdc::format_double(res.theta_final)
            << " iterations=" << summary["iterations"] << " -> " << a.out << "\n";
  if (!res.message.empty()) std::cerr << res.message << "\n";
  return qdc::converged(res.status) ? 0 : kSolverExit;
}

int run_oracle(const std::string& path, const std::string& resolution, int workers, const std::string& out) {
  const qdc::LoadedProblem lp = qdc::load_problem(path);
  const std::vector<double> r = parse_list(resolution);
  std::vector<std::size_t> res;
  for (double v : r) {
    if (!(v >= 1) || v != std::floor(v)) throw qdc::Error(qdc::ErrorCode::ConfigError, "resolution must be a positive integer");
    res.push_back(static_cast<std::size_t>(v));
  }
  if (res.size() == 1) res.assign(lp.problem.dimension(), res[0]);
  const qdc::GridResult g = qdc::grid_oracle(lp.problem, res, workers);
  qdc::json j = {{"problem", lp.problem.name()}, {"x_best", g.x_best}, {"value_best", g.value_best},
                 {"points", g.points}, {"resolution", res}};
  if (lp.known_optimum) j["known_value"] = lp.known_optimum->value;
  std::filesystem::create_directories(out);
  std::ofstream(std::filesystem::path(out) / "summary.json", std::ios::binary) << j.dump(2) << "\n";
  std::cout << "value=" << qdc::format_double(g.value_best) << " points=" << g.points << " -> " << out << "\n";
  return 0;
}

int run_audit(const std::string& dir) {
  const qdc::IterateTrace t = qdc::read_trace(dir);
  const qdc::DescentAudit a = qdc::audit_descent(t, t.sigma, t.rho);
  qdc::json j = {{"descent", qdc::to_json(a)}};
  try {
    j["rate"] = qdc::to_json(qdc::fit_rate(t));
  } catch (const qdc::Error& e) {
    j["rate"] = {{"error", e.what()}};
  }
  j["assumptions"] = "rate regimes are empirical fits; the KL property itself is not verified";
  std::cout << j.dump(2) << "\n";
  std::ofstream(std::filesystem::path(dir) / "audit.json", std::ios::binary) << j.dump(2) << "\n";
  return a.pass() ? 0 : kSolverExit;
}

int run_validate(const std::string& path, std::size_t points, std::uint64_t seed) {
  const qdc::LoadedProblem lp = qdc::load_problem(path);
  const qdc::Problem& prob = lp.problem;
  qdc::validate_domain(prob, 1000, seed);
  std::mt19937_64 rng(seed);
  const std::vector<qdc::Vec> xs = qdc::interior_points(prob.feasible_set(), points, rng);
  const qdc::SurrogateSweep s = qdc::sweep_surrogates(prob, xs, rng);
  const qdc::FdReport fd = qdc::fd_directional_check(prob, xs, qdc::unit_directions(prob.dimension(), 20, rng));
  const qdc::json j = {{"problem", prob.name()}, {"surrogates", qdc::to_json(s)}, {"fd_check", qdc::to_json(fd)}};
  std::cout << j.dump(2) << "\n";
  return s.pass() && fd.pass ? 0 : kSolverExit;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Solver for composite quasi-dc minimization"};
  app.require_subcommand(1);

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "run a descent method and write trace.csv, iterates.csv, summary.json");
  solve->add_option("--problem", sa.problem, "problem definition file")->required();
  solve->add_option("--algorithm", sa.algorithm)->check(CLI::IsMember({"alg1", "alg2", "unitstep", "dinkelbach_direct"}));
  solve->add_option("--variant", sa.variant, "quotient pattern for dinkelbach_direct")
      ->check(CLI::IsMember({"cvx_over_cve", "cvx_over_diffcvx", "diffcve_over_cve"}));
  solve->add_option("--tuple-rule", sa.tuple_rule)->check(CLI::IsMember({"first", "random"}));
  solve->add_option("--x0", sa.x0, "comma-separated start point (default: center of X)");
  solve->add_option("--rho", sa.cfg.rho);
  solve->add_option("--sigma", sa.cfg.sigma);
  solve->add_option("--beta", sa.cfg.beta);
  solve->add_option("--eps0", sa.cfg.eps.eps0);
  solve->add_option("--eps-inf", sa.cfg.eps.eps_inf);
  solve->add_option("--eps-ratio", sa.cfg.eps.ratio);
  solve->add_option("--delta", sa.cfg.delta);
  solve->add_option("--tol-step", sa.cfg.tol_step, "<= 0 means 1e-6 * diameter(X)");
  solve->add_option("--max-outer", sa.cfg.max_outer);
  solve->add_option("--max-backtracks", sa.cfg.max_backtracks);
  solve->add_option("--sub-tol", sa.cfg.sub.tol);
  solve->add_option("--sub-max-iters", sa.cfg.sub.max_iters);
  solve->add_option("--family-cap", sa.cfg.family_cap);
  solve->add_option("--seed", sa.seed);
  solve->add_option("--workers", sa.cfg.workers);
  solve->add_option("--out", sa.out, "output directory");
  solve->add_flag("--timing", sa.cfg.record_timing, "record wall_ms (breaks byte-identical traces)");
  solve->add_option("--lip-B", sa.lip_B, "bound on |grad phi| (unitstep)");
  solve->add_option("--lip-grad", sa.lip_grad, "Lipschitz constant of grad phi (unitstep)");
  solve->add_option("--lip-P", sa.lip_P, "Lipschitz constant of P (unitstep)");

  std::string oracle_problem, resolution = "2001", oracle_out = "oracle";
  int oracle_workers = 1;
  auto* oracle = app.add_subcommand("oracle", "brute-force grid minimum");
  oracle->add_option("--problem", oracle_problem)->required();
  oracle->add_option("--resolution", resolution, "points per axis, one value or a comma list");
  oracle->add_option("--workers", oracle_workers);
  oracle->add_option("--out", oracle_out);

  std::string trace_dir;
  auto* audit = app.add_subcommand("audit", "descent and rate diagnostics on a run directory");
  audit->add_option("--trace", trace_dir, "directory written by solve")->required();

  std::string validate_problem;
  std::size_t validate_points = 20;
  std::uint64_t validate_seed = 1;
  auto* validate = app.add_subcommand("validate", "surrogate property sweep and derivative checks");
  validate->add_option("--problem", validate_problem)->required();
  validate->add_option("--points", validate_points);
  validate->add_option("--seed", validate_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (*solve) return run_solve(sa);
    if (*oracle) return run_oracle(oracle_problem, resolution, oracle_workers, oracle_out);
    if (*audit) return run_audit(trace_dir);
    if (*validate) return run_validate(validate_problem, validate_points, validate_seed);
  } catch (const qdc::Error& e) {
    std::cerr << "error [" << qdc::to_string(e.code()) << "]: " << e.what() << "\n";
    return is_config_error(e.code()) ? kConfigExit : kSolverExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSolverExit;
  }
  return 0;
}
