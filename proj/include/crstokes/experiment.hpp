#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crstokes/assembly.hpp"
#include "crstokes/exact.hpp"
#include "crstokes/linsolve.hpp"
#include "crstokes/mesh.hpp"
#include "crstokes/postprocess.hpp"
#include "crstokes/spaces.hpp"

namespace crstokes {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DiscSpec {
  Point center{0.5, 0.5};
  double radius = 0.0;
  MarkRule rule = MarkRule::barycenter;
};

enum class ReportFormat { csv, json };

struct ExperimentConfig {
  std::vector<std::size_t> mesh_sizes{8, 16, 32, 64, 128};
  StabParams params;
  DiscSpec omega{{0.5, 0.5}, 0.125, MarkRule::barycenter};
  DiscSpec local_ball{{0.5, 0.5}, 0.375, MarkRule::barycenter};
  double noise_level = 0.0;
  std::uint64_t seed = 1;
  Formulation method = Formulation::four_field;
  std::string exact_solution = "paper_example";
  std::array<double, 5> custom_coefficients{1.0, 0.0, 0.0, 0.0, 0.0};
  /// Constant of the local-error model; fitted over the sweep when unset.
  std::optional<double> model_c1;
  std::string output_path;
  ReportFormat format = ReportFormat::csv;

  void validate() const {
    if (mesh_sizes.empty()) throw ConfigError("mesh_sizes must not be empty");
    for (std::size_t i = 0; i < mesh_sizes.size(); ++i) {
      if (mesh_sizes[i] == 0) throw ConfigError("mesh sizes must be positive");
      if (i > 0 && mesh_sizes[i] <= mesh_sizes[i - 1]) throw ConfigError("mesh_sizes must be strictly increasing");
    }
    if (!(noise_level >= 0.0)) throw ConfigError("noise_level must be non-negative");
    if (!(omega.radius >= 0.0) || !(local_ball.radius >= 0.0)) throw ConfigError("radii must be non-negative");
    try {
      params.validate();
      exact_solution_by_name(exact_solution, custom_coefficients);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (method == Formulation::eliminated && (!(params.gamma_p > 0.0) || !(params.gamma_x > 0.0))) {
      throw ConfigError("method 'eliminated' requires gamma_p > 0 and gamma_x > 0");
    }
  }
};

inline std::string to_string(MarkRule rule) { return rule == MarkRule::barycenter ? "barycenter" : "all_vertices"; }
inline std::string to_string(Formulation f) { return f == Formulation::four_field ? "full" : "eliminated"; }
inline std::string to_string(ReportFormat f) { return f == ReportFormat::csv ? "csv" : "json"; }

inline MarkRule parse_rule(const std::string& s) {
  if (s == "barycenter") return MarkRule::barycenter;
  if (s == "all_vertices" || s == "all-vertices") return MarkRule::all_vertices;
  throw ConfigError("unknown marking rule: " + s);
}

inline Formulation parse_method(const std::string& s) {
  if (s == "full") return Formulation::four_field;
  if (s == "eliminated") return Formulation::eliminated;
  throw ConfigError("unknown method: " + s);
}

inline ReportFormat parse_format(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw ConfigError("unknown format: " + s);
}

inline nlohmann::json to_json(const DiscSpec& d) {
  return {{"center", {d.center.x, d.center.y}}, {"radius", d.radius}, {"rule", to_string(d.rule)}};
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["mesh_sizes"] = c.mesh_sizes;
  j["params"] = {{"gamma_u", c.params.gamma_u},
                 {"gamma_p", c.params.gamma_p},
                 {"gamma_x", c.params.gamma_x},
                 {"gamma_M", c.params.gamma_M}};
  j["omega"] = to_json(c.omega);
  j["local_ball"] = to_json(c.local_ball);
  j["noise_level"] = c.noise_level;
  j["seed"] = c.seed;
  j["method"] = to_string(c.method);
  j["exact_solution"] = c.exact_solution;
  j["custom_coefficients"] = c.custom_coefficients;
  j["model_c1"] = c.model_c1 ? nlohmann::json(*c.model_c1) : nlohmann::json(nullptr);
  j["output_path"] = c.output_path;
  j["format"] = to_string(c.format);
  return j;
}

namespace detail {

inline void read_disc(const nlohmann::json& j, DiscSpec& d) {
  if (j.contains("center")) {
    const auto& c = j.at("center");
    if (!c.is_array() || c.size() != 2) throw ConfigError("center must be a 2-element array");
    d.center = {c[0].get<double>(), c[1].get<double>()};
  }
  if (j.contains("radius")) d.radius = j.at("radius").get<double>();
  if (j.contains("rule")) d.rule = parse_rule(j.at("rule").get<std::string>());
}

}  // namespace detail

/// Reads a configuration; absent keys keep their defaults.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("mesh_sizes")) c.mesh_sizes = j.at("mesh_sizes").get<std::vector<std::size_t>>();
    if (j.contains("params")) {
      const auto& p = j.at("params");
      if (p.contains("gamma_u")) c.params.gamma_u = p.at("gamma_u").get<double>();
      if (p.contains("gamma_p")) c.params.gamma_p = p.at("gamma_p").get<double>();
      if (p.contains("gamma_x")) c.params.gamma_x = p.at("gamma_x").get<double>();
      if (p.contains("gamma_M")) c.params.gamma_M = p.at("gamma_M").get<double>();
    }
    if (j.contains("omega")) detail::read_disc(j.at("omega"), c.omega);
    if (j.contains("local_ball")) detail::read_disc(j.at("local_ball"), c.local_ball);
    if (j.contains("noise_level")) c.noise_level = j.at("noise_level").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    if (j.contains("exact_solution")) c.exact_solution = j.at("exact_solution").get<std::string>();
    if (j.contains("custom_coefficients")) {
      c.custom_coefficients = j.at("custom_coefficients").get<std::array<double, 5>>();
    }
    if (j.contains("model_c1") && !j.at("model_c1").is_null()) c.model_c1 = j.at("model_c1").get<double>();
    if (j.contains("output_path")) c.output_path = j.at("output_path").get<std::string>();
    if (j.contains("format")) c.format = parse_format(j.at("format").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

/// Everything computed on one mesh.
struct MeshRun {
  ErrorReport report;
  SolveReport solve;
  SolutionFields fields;
  double matrix_asymmetry = 0.0;  // max |A - A^T|
  double max_dual_div = 0.0;
  std::vector<std::string> warnings;
};

inline double max_asymmetry(const SparseMatrix& m) {
  const SparseMatrix d = m - SparseMatrix(m.transpose());
  double out = 0.0;
  for (int k = 0; k < d.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(d, k); it; ++it) out = std::max(out, std::abs(it.value()));
  }
  return out;
}

/// Builds the mesh, marks omega, assembles, solves and post-processes.
/// fitted_model_value is evaluated with C1 = 1 unless the config fixes C1;
/// run_convergence rescales it after fitting.
inline MeshRun run_mesh(const TriMesh& mesh, const ExperimentConfig& config) {
  const ExactSolution exact = exact_solution_by_name(config.exact_solution, config.custom_coefficients);
  const DofLayout layout(mesh);
  ObservationData obs{mark_subdomain(mesh, config.omega.center, config.omega.radius, config.omega.rule), exact.velocity,
                      config.noise_level, config.seed};
  const AssembledSystem system = config.method == Formulation::four_field
                                     ? assemble_global(mesh, layout, config.params, obs)
                                     : assemble_eliminated(mesh, layout, config.params, obs);
  MeshRun run{ErrorReport{}, solve(system), SolutionFields{}, max_asymmetry(system.matrix), 0.0, system.warnings};
  run.fields = split_solution(mesh, system, run.solve.solution);

  const SubdomainMark local =
      mark_subdomain(mesh, config.local_ball.center, config.local_ball.radius, config.local_ball.rule);
  const ErrorNorms norms = error_norms(mesh, run.fields.u, run.fields.p, exact.velocity, exact.velocity_gradient,
                                       exact.pressure, local);
  const Residuals res = residuals(mesh, run.fields.u, exact.velocity, obs.mark);

  ErrorReport& r = run.report;
  r.h = mesh.h_max();
  r.l2_u_global = norms.l2_u_global;
  r.l2_u_local = norms.l2_u_local;
  r.l2_p_global = norms.l2_p_global;
  r.broken_h1_u = norms.broken_h1_u;
  r.r1 = res.r1;
  r.r2 = res.r2;
  r.max_elem_div = divergence_check(mesh, run.fields.u);
  run.max_dual_div = divergence_check(mesh, run.fields.z);
  r.fitted_model_value = fitted_model(r.l2_u_global, r.r1, r.r2, r.h, config.model_c1.value_or(1.0));
  auto rel = [](double e, double ref) { return ref > 0.0 ? e / ref : e; };
  r.rel_l2_u_global = rel(norms.l2_u_global, norms.exact_u_global);
  r.rel_l2_u_local = rel(norms.l2_u_local, norms.exact_u_local);
  r.rel_l2_p_global = rel(norms.l2_p_global, norms.exact_p_global);
  double omega_norm = 0.0;
  for (std::size_t t : obs.mark.element_ids) omega_norm += detail::vector_norm_squared(mesh, t, exact.velocity);
  r.rel_r1 = rel(res.r1, std::sqrt(omega_norm));
  r.solver_residual = run.solve.relative_residual;
  return run;
}

struct MeshFailure {
  std::size_t n = 0;
  std::string message;
};

struct SweepResult {
  std::vector<ErrorReport> reports;  // ordered by n
  std::vector<MeshFailure> failures;
  double model_c1 = 1.0;
  std::vector<std::string> warnings;
};

inline SweepResult run_convergence(const ExperimentConfig& config) {
  config.validate();
  SweepResult out;
  for (std::size_t n : config.mesh_sizes) {
    try {
      const TriMesh mesh = build_structured(n);
      MeshRun run = run_mesh(mesh, config);
      run.report.n = n;
      for (auto& w : run.warnings) out.warnings.push_back("n=" + std::to_string(n) + ": " + w);
      out.reports.push_back(run.report);
    } catch (const std::exception& e) {
      out.failures.push_back({n, e.what()});
    }
  }
  for (std::size_t i = 1; i < out.reports.size(); ++i) {
    out.reports[i].observed_orders = orders_between(out.reports[i - 1], out.reports[i]);
  }
  out.model_c1 = config.model_c1 ? *config.model_c1 : fit_model_constant(out.reports);
  for (auto& r : out.reports) r.fitted_model_value = fitted_model(r.l2_u_global, r.r1, r.r2, r.h, out.model_c1);
  return out;
}

// Reporting --------------------------------------------------------------

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "n",  "h",  "l2_u_global", "l2_u_local", "l2_p_global", "r1", "r2", "broken_h1_u", "max_elem_div",
      "fitted_model_value", "order_l2_u_global", "order_l2_u_local", "order_l2_p_global", "order_r1",
      "order_r2", "order_broken_h1_u"};
  return cols;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string emit_csv(const std::vector<ErrorReport>& reports) {
  std::ostringstream os;
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : reports) {
    os << r.n;
    for (double v : {r.h, r.l2_u_global, r.l2_u_local, r.l2_p_global, r.r1, r.r2, r.broken_h1_u, r.max_elem_div,
                     r.fitted_model_value}) {
      os << ',' << format_double(v);
    }
    if (r.observed_orders) {
      const auto& o = *r.observed_orders;
      for (double v : {o.l2_u_global, o.l2_u_local, o.l2_p_global, o.r1, o.r2, o.broken_h1_u}) {
        os << ',' << format_double(v);
      }
    } else {
      for (int k = 0; k < 6; ++k) os << ',';
    }
    os << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const ErrorReport& r) {
  nlohmann::json j = {{"n", r.n},
                      {"h", r.h},
                      {"l2_u_global", r.l2_u_global},
                      {"l2_u_local", r.l2_u_local},
                      {"l2_p_global", r.l2_p_global},
                      {"r1", r.r1},
                      {"r2", r.r2},
                      {"broken_h1_u", r.broken_h1_u},
                      {"max_elem_div", r.max_elem_div},
                      {"fitted_model_value", r.fitted_model_value},
                      {"rel_l2_u_global", r.rel_l2_u_global},
                      {"rel_l2_u_local", r.rel_l2_u_local},
                      {"rel_l2_p_global", r.rel_l2_p_global},
                      {"rel_r1", r.rel_r1},
                      {"solver_residual", r.solver_residual}};
  if (r.observed_orders) {
    const auto& o = *r.observed_orders;
    j["observed_orders"] = {{"l2_u_global", o.l2_u_global}, {"l2_u_local", o.l2_u_local},
                            {"l2_p_global", o.l2_p_global}, {"r1", o.r1},
                            {"r2", o.r2},                   {"broken_h1_u", o.broken_h1_u}};
  } else {
    j["observed_orders"] = nullptr;
  }
  return j;
}

inline nlohmann::json emit_json(const SweepResult& result, const ExperimentConfig& config) {
  nlohmann::json j;
  j["config"] = to_json(config);
  j["model_c1"] = result.model_c1;
  j["reports"] = nlohmann::json::array();
  for (const auto& r : result.reports) j["reports"].push_back(to_json(r));
  j["failures"] = nlohmann::json::array();
  for (const auto& f : result.failures) j["failures"].push_back({{"n", f.n}, {"message", f.message}});
  j["warnings"] = result.warnings;
  return j;
}

/// Writes the report in the configured format. Throws std::runtime_error when
/// the path cannot be written.
inline void emit_report(const SweepResult& result, const ExperimentConfig& config, const std::string& path,
                        ReportFormat format) {
  if (result.reports.empty() && result.failures.empty()) throw std::invalid_argument("emit_report: nothing to write");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  if (format == ReportFormat::csv) {
    out << emit_csv(result.reports);
  } else {
    out << emit_json(result, config).dump(2) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing output file: " + path);
}

/// Parses CSV written by emit_csv.
inline std::vector<ErrorReport> read_csv(std::istream& in) {
  std::vector<ErrorReport> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    while (cells.size() < csv_columns().size()) cells.emplace_back();
    ErrorReport r;
    r.n = std::stoul(cells[0]);
    double* fields[] = {&r.h, &r.l2_u_global, &r.l2_u_local, &r.l2_p_global, &r.r1, &r.r2, &r.broken_h1_u,
                        &r.max_elem_div, &r.fitted_model_value};
    for (std::size_t k = 0; k < 9; ++k) *fields[k] = std::stod(cells[k + 1]);
    if (!cells[10].empty()) {
      ObservedOrders o;
      double* ofields[] = {&o.l2_u_global, &o.l2_u_local, &o.l2_p_global, &o.r1, &o.r2, &o.broken_h1_u};
      for (std::size_t k = 0; k < 6; ++k) *ofields[k] = std::stod(cells[k + 10]);
      r.observed_orders = o;
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace crstokes
