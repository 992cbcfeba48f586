#include <z2wz/cli.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
  using namespace z2wz;
  CLI::App app{"Z2 invariants, Wess-Zumino and Chern-Simons amplitudes of time-reversal-invariant insulators"};
  app.require_subcommand(1);

  cli::RunConfig cfg;
  std::string out;
  std::vector<CLI::App*> subs;
  const std::vector<std::pair<std::string, std::string>> verbs{
      {"validate", "check time-reversal symmetry and the gap"},
      {"invariant", "Pfaffian Z2 invariant with the Wilson-loop cross-check"},
      {"wz", "WZ amplitude of the sewing field as a gerbe holonomy"},
      {"cs", "Chern-Simons amplitude of the Berry connection (3d)"},
      {"theorem", "(-1)^KM against the WZ amplitude and the Pfaffian product (2d)"},
      {"prop2", "strong invariant against both Chern-Simons evaluations (3d)"},
      {"sweep", "parameter sweep of the 2d invariant and WZ phase"}};
  for (const auto& [name, help] : verbs) {
    auto* s = app.add_subcommand(name, help);
    s->add_option("--model", cfg.model, "built-in model name or model JSON file")->capture_default_str();
    s->add_option("--params", cfg.params, "model parameters (built-in order)")->delimiter(',');
    s->add_option("--grid", cfg.grid, "grid sizes per refinement level")->delimiter(',');
    s->add_option("--tol", cfg.tol, "phase tolerance for the residual gates")->capture_default_str();
    s->add_option("--out", out, "directory for report.json, CSV data and plot scripts");
    s->add_option("--seed", cfg.seed, "seed for randomized checks")->capture_default_str();
    if (name == "sweep") {
      s->add_option("--param-index", cfg.sweep.parameter, "index of the swept parameter")->required();
      s->add_option("--from", cfg.sweep.from, "start value")->required();
      s->add_option("--to", cfg.sweep.to, "end value")->required();
      s->add_option("--steps", cfg.sweep.steps, "number of points")->required();
    }
    subs.push_back(s);
  }
  app.add_flag_callback("--list-models", [] {
    for (const auto& b : cli::builtins()) {
      std::cout << b.name << ':';
      for (std::size_t i = 0; i < b.parameters.size(); ++i)
        std::cout << ' ' << b.parameters[i] << '=' << b.defaults[i];
      std::cout << '\n';
    }
    std::exit(0);
  }, "print the built-in models and their default parameters");
  CLI11_PARSE(app, argc, argv);

  for (auto* s : subs)
    if (s->parsed()) cfg.task = cli::parse_task(s->get_name());

  try {
    const auto t0 = std::chrono::steady_clock::now();
    const cli::Report report = cli::run(cfg);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string text = report.data.dump(2);
    if (out.empty()) {
      std::cout << text << '\n';
    } else {
      std::filesystem::create_directories(out);
      std::ofstream(std::filesystem::path(out) / "report.json") << text << '\n';
      for (const auto& p : cli::emit_plots(report, out)) std::cerr << "wrote " << p << '\n';
    }
    std::cerr << "wall-clock " << seconds << " s\n";
    for (const auto& f : report.failures) std::cerr << "gate failed: " << f << '\n';
    return report.passed ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
