#pragma once

// Problem files (JSON) and run artifacts: trace.csv, iterates.csv, summary.json.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "qdc/diagnostics.hpp"
#include "qdc/problems.hpp"

namespace qdc {

using json = nlohmann::json;

// Shortest decimal string that reads back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace detail {

[[noreturn]] inline void config_error(const std::string& m) { throw Error(ErrorCode::ConfigError, m); }

inline const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) config_error(where + ": missing field '" + key + "'");
  return j.at(key);
}

inline Vec to_vec(const json& j, const std::string& where) {
  if (!j.is_array()) config_error(where + ": expected an array of numbers");
  Vec v;
  for (const auto& e : j) {
    if (!e.is_number()) config_error(where + ": expected an array of numbers");
    v.push_back(e.get<double>());
  }
  return v;
}

inline std::vector<std::string> to_strings(const json& j, const std::string& where) {
  if (j.is_string()) return {j.get<std::string>()};
  if (!j.is_array() || j.empty()) config_error(where + ": expected a nonempty list of expressions");
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) config_error(where + ": expressions must be strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

inline TypeIIUnivariate parse_univariate(const json& j, const std::string& where) {
  TypeIIUnivariate s;
  if (j.contains("psi_up")) s.psi_up = ConvexMaxFn::parse(to_strings(j.at("psi_up"), where + ".psi_up"));
  if (j.contains("psi_down")) s.psi_down = ConvexMaxFn::parse(to_strings(j.at("psi_down"), where + ".psi_down"));
  if (!s.psi_up && !s.psi_down) config_error(where + ": needs psi_up or psi_down");
  return s;
}

inline OuterFunction parse_outer(const json& j, const std::string& where) {
  const std::string type = field(j, "type", where).get<std::string>();
  if (type == "I") return TypeI{Expr::parse(field(j, "phi", where).get<std::string>())};
  if (type == "II_univariate") return parse_univariate(j, where);
  if (type == "II_separable") {
    TypeIISeparable s;
    const json& terms = field(j, "terms", where);
    if (!terms.is_array() || terms.empty()) config_error(where + ".terms: expected a nonempty list");
    for (std::size_t k = 0; k < terms.size(); ++k)
      s.terms.push_back(parse_univariate(terms[k], where + ".terms[" + std::to_string(k) + "]"));
    return s;
  }
  if (type == "II_monotone") {
    const std::string tone = j.value("tone", std::string("isotone"));
    if (tone != "isotone" && tone != "antitone") config_error(where + ": tone must be isotone or antitone");
    return TypeIIMonotone{ConvexMaxFn::parse(to_strings(field(j, "phi", where), where + ".phi")),
                          tone == "isotone" ? Tone::Isotone : Tone::Antitone};
  }
  if (type == "III") {
    TypeIII t;
    const json& gens = field(j, "generators", where);
    if (!gens.is_array() || gens.empty()) config_error(where + ".generators: expected a nonempty list");
    for (const auto& g : gens) t.generators.push_back(to_vec(g, where + ".generators"));
    t.offsets = j.contains("offsets") ? to_vec(j.at("offsets"), where + ".offsets") : Vec(t.generators.size(), 0.0);
    return t;
  }
  if (type == "IV") return TypeIV{ConvexMaxFn::parse(to_strings(field(j, "neg_phi", where), where + ".neg_phi"))};
  config_error(where + ": unknown outer type '" + type + "'");
}

inline InnerFunction parse_inner(const json& j, const std::string& where) {
  if (!j.is_object()) config_error(where + ": expected an object");
  InnerFunction p;
  if (j.contains("cvx")) p.cvx = ConvexMaxFn::parse(to_strings(j.at("cvx"), where + ".cvx"));
  if (j.contains("cve")) p.cve = ConcaveMinFn::parse(to_strings(j.at("cve"), where + ".cve"));
  if (j.contains("diffmax")) p.diff = DiffMaxFn::parse(to_strings(j.at("diffmax"), where + ".diffmax"));
  if (p.empty()) config_error(where + ": needs at least one of cvx, cve, diffmax");
  return p;
}

inline FeasibleSet parse_set(const json& j) {
  const std::string type = field(j, "type", "feasible_set").get<std::string>();
  const Vec lo = to_vec(field(j, "lower", "feasible_set"), "feasible_set.lower");
  const Vec hi = to_vec(field(j, "upper", "feasible_set"), "feasible_set.upper");
  if (type == "box") return FeasibleSet::box(lo, hi);
  if (type == "ball_box")
    return FeasibleSet::ball_box(to_vec(field(j, "center", "feasible_set"), "feasible_set.center"),
                                 field(j, "radius", "feasible_set").get<double>(), lo, hi);
  config_error("feasible_set: unknown type '" + type + "'");
}

template <class Tag>
json pieces_json(const PieceFn<Tag>& f) {
  json a = json::array();
  for (const auto& e : f.pieces()) a.push_back(e.source());
  return a;
}

inline json univariate_json(const TypeIIUnivariate& s) {
  json j = json::object();
  if (s.psi_up) j["psi_up"] = pieces_json(*s.psi_up);
  if (s.psi_down) j["psi_down"] = pieces_json(*s.psi_down);
  return j;
}

}  // namespace detail

struct LoadedProblem {
  Problem problem;
  std::optional<KnownOptimum> known_optimum;
};

inline LoadedProblem problem_from_json(const json& j) {
  using namespace detail;
  try {
    const std::size_t n = field(j, "dimension", "problem").get<std::size_t>();
    FeasibleSet X = parse_set(field(j, "feasible_set", "problem"));
    const json& comps = field(j, "composites", "problem");
    if (!comps.is_array() || comps.empty()) config_error("composites: expected a nonempty list");
    std::vector<Composite> cs;
    for (std::size_t c = 0; c < comps.size(); ++c) {
      const std::string where = "composites[" + std::to_string(c) + "]";
      Composite comp;
      comp.label = comps[c].value("label", "theta" + std::to_string(c));
      comp.outer = parse_outer(field(comps[c], "outer", where), where + ".outer");
      const json& inner = field(comps[c], "inner", where);
      if (!inner.is_array() || inner.empty()) config_error(where + ".inner: expected a nonempty list");
      for (std::size_t k = 0; k < inner.size(); ++k)
        comp.inner.push_back(parse_inner(inner[k], where + ".inner[" + std::to_string(k) + "]"));
      cs.push_back(std::move(comp));
    }
    LoadedProblem out{Problem(n, std::move(X), std::move(cs), j.value("name", std::string("problem"))), std::nullopt};
    if (j.contains("known_optimum")) {
      const json& k = j.at("known_optimum");
      out.known_optimum = KnownOptimum{to_vec(field(k, "x", "known_optimum"), "known_optimum.x"),
                                       field(k, "value", "known_optimum").get<double>(),
                                       k.value("provenance", std::string())};
    }
    return out;
  } catch (const json::exception& e) {
    config_error(std::string("malformed problem file: ") + e.what());
  }
}

inline LoadedProblem load_problem(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open problem file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  try {
    return problem_from_json(j);
  } catch (const Error& e) {
    // Expression and structure errors surface with the file name attached.
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
}

inline json problem_to_json(const Problem& prob, const std::optional<KnownOptimum>& known = std::nullopt) {
  using namespace detail;
  json j;
  j["name"] = prob.name();
  j["dimension"] = prob.dimension();
  const FeasibleSet& X = prob.feasible_set();
  if (X.is_box()) {
    j["feasible_set"] = {{"type", "box"}, {"lower", X.as_box()->lower}, {"upper", X.as_box()->upper}};
  } else {
    const BallBox& bb = *X.as_ball_box();
    j["feasible_set"] = {{"type", "ball_box"}, {"center", bb.center}, {"radius", bb.radius},
                         {"lower", bb.box.lower}, {"upper", bb.box.upper}};
  }
  json comps = json::array();
  for (const auto& c : prob.composites()) {
    json o;
    o["type"] = outer_type_name(c.outer);
    std::visit(
        [&](const auto& f) {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, TypeI>) {
            o["phi"] = f.phi.source();
          } else if constexpr (std::is_same_v<T, TypeIIUnivariate>) {
            o.update(univariate_json(f));
          } else if constexpr (std::is_same_v<T, TypeIISeparable>) {
            o["terms"] = json::array();
            for (const auto& t : f.terms) o["terms"].push_back(univariate_json(t));
          } else if constexpr (std::is_same_v<T, TypeIIMonotone>) {
            o["phi"] = pieces_json(f.phi);
            o["tone"] = f.tone == Tone::Isotone ? "isotone" : "antitone";
          } else if constexpr (std::is_same_v<T, TypeIII>) {
            o["generators"] = f.generators;
            o["offsets"] = f.offsets;
          } else {
            o["neg_phi"] = pieces_json(f.neg_phi);
          }
        },
        c.outer);
    json inner = json::array();
    for (const auto& p : c.inner) {
      json pj = json::object();
      if (p.cvx) pj["cvx"] = pieces_json(*p.cvx);
      if (p.cve) pj["cve"] = pieces_json(*p.cve);
      if (p.diff) pj["diffmax"] = pieces_json(*p.diff);
      inner.push_back(std::move(pj));
    }
    comps.push_back({{"label", c.label}, {"outer", o}, {"inner", inner}});
  }
  j["composites"] = comps;
  if (known) j["known_optimum"] = {{"x", known->x}, {"value", known->value}, {"provenance", known->provenance}};
  return j;
}

// ---------------------------------------------------------------------------
// Run artifacts

inline constexpr const char* kTraceHeader = "iter,theta_max,step,backtracks,dx_half_norm,sub_residual,eps,tuple_id,wall_ms";

inline std::string trace_csv(const IterateTrace& trace) {
  std::string out = kTraceHeader;
  out += '\n';
  for (const auto& r : trace.records) {
    out += std::to_string(r.iter) + ',' + format_double(r.theta_max) + ',' + format_double(r.step) + ',' +
           std::to_string(r.backtracks) + ',' + format_double(r.dx_half_norm) + ',' + format_double(r.sub_residual) +
           ',' + format_double(r.eps) + ',' + std::to_string(r.tuple_id) + ',' + format_double(r.wall_ms) + '\n';
  }
  return out;
}

namespace detail {

inline std::string join_indices(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<int> split_indices(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ';'))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + p.string());
  out << text;
}

}  // namespace detail

// One row per iterate: coordinates and the index sets (';'-separated).
inline std::string iterates_csv(const IterateTrace& trace) {
  const std::size_t n = trace.records.empty() ? 0 : trace.records.front().x.size();
  std::string out = "iter";
  for (std::size_t i = 0; i < n; ++i) out += ",x" + std::to_string(i);
  out += ",mtheta,mtheta_eps,boundary\n";
  for (const auto& r : trace.records) {
    out += std::to_string(r.iter);
    for (double c : r.x) out += ',' + format_double(c);
    out += ',' + detail::join_indices(r.mtheta) + ',' + detail::join_indices(r.mtheta_eps) + ',' +
           detail::join_indices(r.boundary) + '\n';
  }
  return out;
}

inline json config_json(const SolverConfig& cfg) {
  return {{"rho", cfg.rho},
          {"sigma", cfg.sigma},
          {"beta", cfg.beta},
          {"eps0", cfg.eps.eps0},
          {"eps_inf", cfg.eps.eps_inf},
          {"eps_ratio", cfg.eps.ratio},
          {"delta", cfg.delta},
          {"tol_step", cfg.tol_step},
          {"max_outer", cfg.max_outer},
          {"max_backtracks", cfg.max_backtracks},
          {"sub_tol", cfg.sub.tol},
          {"sub_max_iters", cfg.sub.max_iters},
          {"workers", cfg.workers}};
}

inline json run_summary(const RunResult& res, const SolverConfig& cfg) {
  json j;
  j["algorithm"] = res.trace.algorithm;
  j["status"] = std::string(to_string(res.status));
  j["x_final"] = res.x_final;
  j["theta_final"] = res.theta_final;
  j["iterations"] = res.trace.records.empty() ? 0 : res.trace.records.back().iter;
  j["steps_vanishing"] = res.steps_vanishing;
  j["message"] = res.message;
  j["config"] = config_json(cfg);
  if (std::isfinite(res.trace.descent_constant)) j["descent_constant"] = res.trace.descent_constant;
  return j;
}

inline void write_run(const std::filesystem::path& dir, const RunResult& res, const json& summary) {
  std::filesystem::create_directories(dir);
  detail::write_file(dir / "trace.csv", trace_csv(res.trace));
  detail::write_file(dir / "iterates.csv", iterates_csv(res.trace));
  detail::write_file(dir / "summary.json", summary.dump(2) + "\n");
}

// Reassembles a trace from a run directory (trace.csv, iterates.csv and the
// header fields of summary.json).
inline IterateTrace read_trace(const std::filesystem::path& dir) {
  auto open = [&](const char* name) {
    std::ifstream in(dir / name);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot open " + (dir / name).string());
    return in;
  };
  IterateTrace t;
  {
    std::ifstream in = open("summary.json");
    json s;
    try {
      s = json::parse(in);
      t.algorithm = s.at("algorithm").get<std::string>();
      t.rho = s.at("config").at("rho").get<double>();
      t.sigma = s.at("config").at("sigma").get<double>();
      t.beta = s.at("config").at("beta").get<double>();
      if (s.contains("descent_constant")) t.descent_constant = s.at("descent_constant").get<double>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, "bad summary.json: " + std::string(e.what()));
    }
  }
  auto num = [](const std::string& s) {
    double v = 0.0;
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc()) throw Error(ErrorCode::ConfigError, "bad number '" + s + "' in trace");
    return v;
  };
  std::string line;
  {
    std::ifstream in = open("trace.csv");
    std::getline(in, line);
    if (line != kTraceHeader) throw Error(ErrorCode::ConfigError, "unexpected trace.csv header");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = detail::split_csv(line);
      if (f.size() != 9) throw Error(ErrorCode::ConfigError, "trace.csv row with " + std::to_string(f.size()) + " fields");
      IterRecord r;
      r.iter = std::stoi(f[0]);
      r.theta_max = num(f[1]);
      r.step = num(f[2]);
      r.backtracks = std::stoi(f[3]);
      r.dx_half_norm = num(f[4]);
      r.sub_residual = num(f[5]);
      r.eps = num(f[6]);
      r.tuple_id = std::stoull(f[7]);
      r.wall_ms = num(f[8]);
      t.records.push_back(std::move(r));
    }
  }
  {
    std::ifstream in = open("iterates.csv");
    std::getline(in, line);
    const std::size_t n = detail::split_csv(line).size() - 4;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = detail::split_csv(line);
      if (row >= t.records.size() || f.size() != n + 4)
        throw Error(ErrorCode::ConfigError, "iterates.csv does not match trace.csv");
      IterRecord& r = t.records[row++];
      for (std::size_t i = 0; i < n; ++i) r.x.push_back(num(f[1 + i]));
      r.mtheta = detail::split_indices(f[n + 1]);
      r.mtheta_eps = detail::split_indices(f[n + 2]);
      r.boundary = detail::split_indices(f[n + 3]);
    }
    if (row != t.records.size()) throw Error(ErrorCode::ConfigError, "iterates.csv does not match trace.csv");
  }
  return t;
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const DescentAudit& a) {
  return {{"kind", a.kind},
          {"checked", a.checked},
          {"violations", a.violations},
          {"worst_slack", a.checked ? a.worst_slack : 0.0},
          {"worst_iter", a.worst_iter},
          {"coefficient", a.coefficient},
          {"monotone", a.monotone},
          {"first_increase", a.first_increase},
          {"max_backtracks", a.max_backtracks},
          {"pass", a.pass()}};
}

inline json to_json(const RateFit& f) {
  return {{"regime", std::string(to_string(f.regime))},
          {"q", f.q},
          {"exponent", f.exponent},
          {"r2_linear", f.r2_linear},
          {"r2_sublinear", f.r2_sublinear},
          {"tail_start", f.tail_start},
          {"tail_points", f.tail_points},
          {"confident", f.confident}};
}

inline json to_json(const FdReport& r) {
  return {{"checks", r.checks}, {"max_error", r.max_error}, {"pass", r.pass}};
}

inline json to_json(const SurrogateSweep& s) {
  return {{"models", s.models},
          {"max_touching", s.max_touching},
          {"dominance_checks", s.dominance_checks},
          {"dominance_violations", s.dominance_violations},
          {"closure_failures", s.closure_failures},
          {"worst_convexity", s.worst_convexity},
          {"majorization_violations", s.majorization_violations},
          {"pass", s.pass()}};
}

}  // namespace qdc
