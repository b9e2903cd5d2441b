// Convergence sweep driver. Exit status: 0 success, 1 a mesh failed, 2 bad configuration.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "crstokes/experiment.hpp"

namespace {

crstokes::ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw crstokes::ConfigError("cannot read config file: " + path);
  try {
    return crstokes::config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw crstokes::ConfigError(std::string("malformed config file: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stabilized Crouzeix-Raviart data assimilation for Stokes flow: convergence sweep"};
  std::string config_path, method, rule, format, out, exact;
  std::vector<std::size_t> n_list;
  std::optional<double> gamma_u, gamma_p, gamma_x, gamma_m, noise;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--n-list", n_list, "Mesh sizes, strictly increasing")->delimiter(',');
  app.add_option("--gamma-u", gamma_u, "Velocity jump penalty");
  app.add_option("--gamma-p", gamma_p, "Primal pressure penalty");
  app.add_option("--gamma-x", gamma_x, "Dual pressure penalty");
  app.add_option("--gamma-m", gamma_m, "Data fidelity weight");
  app.add_option("--noise", noise, "Relative noise level");
  app.add_option("--seed", seed, "Noise seed");
  app.add_option("--method", method, "full or eliminated");
  app.add_option("--rule", rule, "Marking rule for omega: barycenter or all_vertices");
  app.add_option("--exact", exact, "paper_example, patch_affine or custom");
  app.add_option("--out", out, "Output file (stdout when omitted)");
  app.add_option("--format", format, "csv or json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  crstokes::ExperimentConfig config;
  try {
    if (!config_path.empty()) config = load_config(config_path);
    if (!n_list.empty()) config.mesh_sizes = n_list;
    if (gamma_u) config.params.gamma_u = *gamma_u;
    if (gamma_p) config.params.gamma_p = *gamma_p;
    if (gamma_x) config.params.gamma_x = *gamma_x;
    if (gamma_m) config.params.gamma_M = *gamma_m;
    if (noise) config.noise_level = *noise;
    if (seed) config.seed = *seed;
    if (!method.empty()) config.method = crstokes::parse_method(method);
    if (!rule.empty()) config.omega.rule = crstokes::parse_rule(rule);
    if (!exact.empty()) config.exact_solution = exact;
    if (!out.empty()) config.output_path = out;
    if (!format.empty()) config.format = crstokes::parse_format(format);
    config.validate();
  } catch (const crstokes::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  const crstokes::SweepResult result = crstokes::run_convergence(config);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& f : result.failures) std::cerr << "n=" << f.n << " failed: " << f.message << '\n';

  if (config.output_path.empty()) {
    if (config.format == crstokes::ReportFormat::csv) {
      std::cout << crstokes::emit_csv(result.reports);
    } else {
      std::cout << crstokes::emit_json(result, config).dump(2) << '\n';
    }
  } else {
    try {
      crstokes::emit_report(result, config, config.output_path, config.format);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return result.failures.empty() ? 0 : 1;
}
