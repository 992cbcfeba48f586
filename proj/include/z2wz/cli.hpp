#pragma once

// Task runner behind the command-line tool: builds the model, executes the
// requested task, collects a JSON report with residual gates, and writes CSV
// data plus gnuplot scripts.

#include <z2wz/wzcs.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace z2wz {
namespace cli {

inline constexpr const char* kVersion = "1.0.0";

enum class Task { Validate, Invariant, Wz, Cs, WzCheck, CsCheck, Sweep };

inline Task parse_task(const std::string& s) {
  if (s == "validate") return Task::Validate;
  if (s == "invariant") return Task::Invariant;
  if (s == "wz") return Task::Wz;
  if (s == "cs") return Task::Cs;
  if (s == "theorem") return Task::WzCheck;
  if (s == "prop2") return Task::CsCheck;
  if (s == "sweep") return Task::Sweep;
  throw ModelError("unknown task '" + s + "'");
}

inline std::string task_name(Task t) {
  switch (t) {
    case Task::Validate: return "validate";
    case Task::Invariant: return "invariant";
    case Task::Wz: return "wz";
    case Task::Cs: return "cs";
    case Task::WzCheck: return "theorem";
    case Task::CsCheck: return "prop2";
    case Task::Sweep: return "sweep";
  }
  return "";
}

struct SweepAxis {
  int parameter = 0;  // index into the model parameter list
  double from = 0.0, to = 0.0;
  int steps = 0;
};

struct RunConfig {
  Task task = Task::Validate;
  std::string model = "kane_mele";  // built-in name or path to a model JSON file
  std::vector<double> params;       // empty: built-in defaults
  std::vector<int> grid;            // refinement levels; empty: task default
  double tol = 1e-2;
  std::uint64_t seed = 1;
  SweepAxis sweep;

  nlohmann::json to_json() const {
    return {{"task", task_name(task)},
            {"model", model},
            {"params", params},
            {"grid", grid},
            {"tol", tol},
            {"seed", seed},
            {"sweep",
             {{"parameter", sweep.parameter}, {"from", sweep.from}, {"to", sweep.to}, {"steps", sweep.steps}}}};
  }
};

struct Report {
  nlohmann::json data;
  bool passed = true;
  std::vector<std::string> failures;

  void gate(const std::string& name, bool ok, const std::string& detail = "") {
    data["gates"][name] = ok;
    if (!ok) {
      passed = false;
      failures.push_back(name + (detail.empty() ? "" : ": " + detail));
    }
  }
};

// --- models -----------------------------------------------------------------------

struct BuiltIn {
  std::string name;
  std::vector<std::string> parameters;
  std::vector<double> defaults;
};

inline const std::vector<BuiltIn>& builtins() {
  static const std::vector<BuiltIn> list{
      {"kane_mele", {"t", "lambda_so", "lambda_r", "lambda_v"}, {1.0, 0.06, 0.05, 0.1}},
      {"bhz", {"a", "b", "c", "d", "m"}, {1.0, 1.0, 0.0, 0.0, -1.0}},
      {"wilson_dirac_3d", {"a", "b", "m"}, {1.0, 1.0, -1.0}},
      {"layered_kane_mele", {"t", "lambda_so", "lambda_r", "lambda_v", "t_perp"}, {1.0, 0.3, 0.1, 0.2, 0.1}},
  };
  return list;
}

inline std::vector<double> resolved_params(const RunConfig& c) {
  for (const auto& b : builtins())
    if (b.name == c.model) {
      if (c.params.empty()) return b.defaults;
      if (c.params.size() != b.defaults.size())
        throw ModelError(c.model + " takes " + std::to_string(b.defaults.size()) + " parameters");
      return c.params;
    }
  return c.params;
}

inline models::BlochModel make_model(const std::string& name, const std::vector<double>& p) {
  if (name == "kane_mele") return models::kane_mele(p[0], p[1], p[2], p[3]);
  if (name == "bhz") return models::bhz(p[0], p[1], p[2], p[3], p[4]);
  if (name == "wilson_dirac_3d") return models::wilson_dirac_3d(p[0], p[1], p[2]);
  if (name == "layered_kane_mele") return models::layered_3d(models::kane_mele(p[0], p[1], p[2], p[3]), p[4]);
  if (std::filesystem::exists(name)) return models::load_model(name);
  throw ModelError("unknown model '" + name + "' (not a built-in and no such file)");
}

inline std::vector<int> levels_or(const RunConfig& c, std::vector<int> fallback) {
  const auto& g = c.grid.empty() ? fallback : c.grid;
  for (int n : g)
    if (n <= 0 || n % 2) throw ModelError("grid sizes must be even and positive");
  return g;
}

inline nlohmann::json complex_json(cplx z) { return {z.real(), z.imag()}; }

// --- tasks ------------------------------------------------------------------------

inline void run_validate(const RunConfig& c, const models::BlochModel& m, Report& r) {
  const auto trs = models::check_trs(m, models::random_kpoints(m.dim(), 200, c.seed));
  const int n = levels_or(c, {m.dim() == 2 ? 48 : 16}).back();
  const auto grid = bundle::BZGrid::uniform(m.dim(), n);
  double gap = 1e300;
  nlohmann::json map = nlohmann::json::array();
  for (int i = 0; i < grid.count(); ++i) {
    const auto k = grid.point(i);
    const auto s = numlin::eigh(m.evaluate(k));
    int rank = 0;
    while (rank < s.eigenvalues.size() && s.eigenvalues(rank) < m.fermi()) ++rank;
    const double g = (rank == 0 || rank == m.size()) ? 0.0 : s.eigenvalues(rank) - s.eigenvalues(rank - 1);
    gap = std::min(gap, g);
    if (m.dim() == 2) map.push_back({k[0], k[1], g});
  }
  r.data["result"] = {{"trs_residual", trs.max_violation},
                      {"worst_k", trs.worst_k},
                      {"gap", gap},
                      {"fermi", m.fermi()},
                      {"bands", m.size()},
                      {"dim", m.dim()},
                      {"grid", n},
                      {"warnings", m.warnings()}};
  if (m.dim() == 2) r.data["gap_map"] = map;
  r.gate("trs_residual<=1e-12", trs.max_violation <= 1e-12, std::to_string(trs.max_violation));
  r.gate("gap>0", gap > 0.0, std::to_string(gap));
}

inline nlohmann::json trim_table(const sewing::Certificate& cert) {
  nlohmann::json t = nlohmann::json::array();
  for (const auto& f : cert.factors)
    t.push_back({{"k", f.k}, {"pf", complex_json(f.pf)}, {"sqrt_det", complex_json(f.sqrt_det)},
                 {"factor", complex_json(f.factor)}});
  return t;
}

inline void run_invariant(const RunConfig& c, const models::BlochModel& m, Report& r) {
  const int n = levels_or(c, {m.dim() == 2 ? 48 : 16}).back();
  const auto d = wzcs::band_data(m, n);
  const auto cert = sewing::fkm(d.sf, d.branch);
  nlohmann::json res{{"grid", n}, {"invariant", cert.invariant}, {"certificate", cert.to_json()}};
  int oracle = 0;
  if (m.dim() == 2) {
    oracle = bundle::wilson_loop_z2(d.pf);
  } else {
    const int s0 = bundle::wilson_loop_z2(d.pf, bundle::Slice{2, 0});
    const int s1 = bundle::wilson_loop_z2(d.pf, bundle::Slice{2, n / 2});
    oracle = (s0 + s1) % 2;
    res["slices"] = {s0, s1};
  }
  res["wilson_invariant"] = oracle;
  r.data["result"] = res;
  r.data["trim_table"] = trim_table(cert);
  r.gate("pfaffian==wilson", cert.invariant == oracle);
}

inline void run_wz(const RunConfig& c, const models::BlochModel& m, Report& r) {
  if (m.dim() != 2) throw ModelError("wz: two-dimensional model required");
  std::vector<sewing::ReducedField> levels;
  for (int n : levels_or(c, {48, 96})) levels.push_back(wzcs::band_data(m, n).rf);
  const auto h = wzcs::refined_wz(levels);
  nlohmann::json trace = nlohmann::json::array();
  for (auto z : h.trace) trace.push_back(complex_json(z));
  const double to_pm1 = std::min(wzcs::phase_distance(h.extrapolated_phase, 0.0),
                                 wzcs::phase_distance(h.extrapolated_phase, kPi));
  r.data["result"] = {{"amplitude", complex_json(h.amplitude)},
                      {"phase", h.extrapolated_phase},
                      {"error_estimate", h.error_estimate},
                      {"trace", trace},
                      {"levels", h.levels},
                      {"distance_to_pm1", to_pm1}};
  r.gate("wz_amplitude_is_pm1", to_pm1 <= c.tol, std::to_string(to_pm1));
}

inline void run_wz_check(const RunConfig& c, const models::BlochModel& m, Report& r) {
  const auto t = wzcs::wz_invariant_check(m, levels_or(c, {48, 96}));
  r.data["result"] = t.to_json();
  r.data["trim_table"] = trim_table(t.certificate);
  r.gate("pfaffian==wilson", t.invariant == t.wilson_invariant);
  r.gate("wz==(-1)^KM", t.wz_vs_invariant <= c.tol, std::to_string(t.wz_vs_invariant));
  r.gate("wz==prod_pf", t.wz_vs_pf_product <= c.tol, std::to_string(t.wz_vs_pf_product));
}

inline void run_cs_check(const RunConfig& c, const models::BlochModel& m, Report& r, bool full) {
  const auto p = wzcs::cs_invariant_check(m, levels_or(c, {24, 48}));
  r.data["result"] = p.to_json();
  r.gate("cs==(-1)^KM", p.cs_vs_invariant <= 0.05 * kPi, std::to_string(p.cs_vs_invariant));
  if (full) {
    r.gate("half_torus==(-1)^KM", p.half_vs_invariant <= 0.05 * kPi, std::to_string(p.half_vs_invariant));
    r.gate("cs==half_torus", p.discrepancy <= c.tol, std::to_string(p.discrepancy));
    double f2 = 0.0;
    for (double x : p.factor_two_residuals) f2 = std::max(f2, x);
    r.gate("factor_two", f2 <= 1e-3, std::to_string(f2));
  }
}

inline void run_sweep(const RunConfig& c, Report& r) {
  auto base = resolved_params(c);
  const SweepAxis& s = c.sweep;
  if (s.steps < 2) throw ModelError("sweep: at least two steps required");
  if (s.parameter < 0 || s.parameter >= static_cast<int>(base.size()))
    throw ModelError("sweep: parameter index out of range");
  const int n = levels_or(c, {24}).back();
  nlohmann::json rows = nlohmann::json::array();
  int gate_failures = 0;
  for (int i = 0; i < s.steps; ++i) {
    base[s.parameter] = s.from + (s.to - s.from) * i / (s.steps - 1);
    nlohmann::json row{{"param", base[s.parameter]}};
    try {
      const auto m = make_model(c.model, base);
      if (m.dim() != 2) throw ModelError("sweep: two-dimensional model required");
      const auto d = wzcs::band_data(m, n);
      const int km = sewing::fkm_2d(d.sf, d.branch).invariant;
      const auto h = wzcs::wz_amplitude(d.rf);
      row["KM"] = km;
      row["wz_phase"] = h.phase;
      row["residual"] = wzcs::phase_distance(h.phase, km ? kPi : 0.0);
      row["wilson"] = bundle::wilson_loop_z2(d.pf);
      if (row["residual"].get<double>() > c.tol || row["wilson"].get<int>() != km) ++gate_failures;
    } catch (const GapClosingError& e) {
      row["KM"] = nullptr;
      row["error"] = e.what();
    }
    rows.push_back(row);
  }
  r.data["sweep"] = rows;
  r.data["result"] = {{"grid", n}, {"points", s.steps}};
  r.gate("sweep_points_consistent", gate_failures == 0, std::to_string(gate_failures) + " failing points");
}

/// Runs one task. Module errors propagate to the caller with task context.
inline Report run(const RunConfig& c) {
  Report r;
  r.data["config"] = c.to_json();
  r.data["version"] = kVersion;
  r.data["gates"] = nlohmann::json::object();
  try {
    if (c.task == Task::Sweep) {
      run_sweep(c, r);
      return r;
    }
    const auto params = resolved_params(c);
    const auto m = make_model(c.model, params);
    r.data["model"] = {{"dim", m.dim()}, {"bands", m.size()}, {"params", params}};
    switch (c.task) {
      case Task::Validate: run_validate(c, m, r); break;
      case Task::Invariant: run_invariant(c, m, r); break;
      case Task::Wz: run_wz(c, m, r); break;
      case Task::WzCheck: run_wz_check(c, m, r); break;
      case Task::Cs: run_cs_check(c, m, r, false); break;
      case Task::CsCheck: run_cs_check(c, m, r, true); break;
      case Task::Sweep: break;
    }
  } catch (const std::exception& e) {
    throw std::runtime_error(task_name(c.task) + ": " + e.what());
  }
  return r;
}

// --- plots ------------------------------------------------------------------------

inline std::string format_complex(const nlohmann::json& z) {
  std::ostringstream os;
  os << std::setprecision(10) << z[0].get<double>() << (z[1].get<double>() < 0 ? "-" : "+")
     << std::abs(z[1].get<double>()) << "i";
  return os.str();
}

/// Writes CSV data and gnuplot scripts for the report's data blocks into
/// `dir`; returns the written paths. No data: no files and a warning on `log`.
inline std::vector<std::string> emit_plots(const Report& r, const std::string& dir, std::ostream& log = std::cerr) {
  namespace fs = std::filesystem;
  std::vector<std::string> out;
  const auto& d = r.data;
  auto open = [&](const std::string& name) {
    fs::create_directories(dir);
    const std::string path = (fs::path(dir) / name).string();
    out.push_back(path);
    return std::ofstream(path);
  };
  if (d.contains("sweep")) {
    {
      auto f = open("sweep.csv");
      f << std::setprecision(12) << "param,KM,wz_phase,residual\n";
      for (const auto& row : d["sweep"]) {
        f << row["param"].get<double>() << ',';
        if (row["KM"].is_null()) {
          f << "nan,nan,nan\n";
        } else {
          f << row["KM"].get<int>() << ',' << row["wz_phase"].get<double>() << ','
            << row["residual"].get<double>() << '\n';
        }
      }
    }
    auto g = open("sweep.gp");
    g << "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'parameter'\n"
         "set ylabel 'Z2 / WZ phase (pi)'\nset terminal pngcairo size 800,500\nset output 'sweep.png'\n"
         "plot 'sweep.csv' using 1:2 with steps title 'KM', '' using 1:($3/pi) with points title 'WZ phase'\n";
  }
  if (d.contains("trim_table")) {
    auto f = open("trim.csv");
    const bool three = !d["trim_table"].empty() && d["trim_table"][0]["k"].size() == 3;
    f << std::setprecision(12) << (three ? "k1,k2,k3," : "k1,k2,") << "pf,sqrt_det,factor\n";
    for (const auto& row : d["trim_table"]) {
      for (const auto& k : row["k"]) f << k.get<double>() << ',';
      f << format_complex(row["pf"]) << ',' << format_complex(row["sqrt_det"]) << ','
        << format_complex(row["factor"]) << '\n';
    }
  }
  if (d.contains("gap_map")) {
    {
      auto f = open("gap_map.csv");
      f << std::setprecision(12) << "k1,k2,gap\n";
      for (const auto& row : d["gap_map"])
        f << row[0].get<double>() << ',' << row[1].get<double>() << ',' << row[2].get<double>() << '\n';
    }
    auto g = open("gap_map.gp");
    g << "set datafile separator ','\nset view map\nset xlabel 'k1'\nset ylabel 'k2'\n"
         "set terminal pngcairo size 700,600\nset output 'gap_map.png'\n"
         "splot 'gap_map.csv' every ::1 using 1:2:3 with points palette pointtype 5 title 'gap'\n";
  }
  if (out.empty()) log << "emit_plots: report has no plottable data; no files written\n";
  return out;
}

}  // namespace cli
}  // namespace z2wz
