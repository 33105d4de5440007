#pragma once

#include <json.hpp>

#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "dcx/io.hpp"

namespace dcx {

/**
 * One CLI invocation, fully resolved: command, grid, experiment parameters,
 * output locations. Produced by parse_config; flags override file values.
 */
struct RunConfig {
  std::string command;
  std::optional<GridSpec> grid;
  std::optional<CellBox> hole;
  std::vector<Index> frequencies{2, 4, 8, 16};
  std::filesystem::path out_dir = ".";
  std::optional<double> tol;            // absolute rank threshold; absent =
                                        // the library's relative default
  std::string complex_kind = "derham";  // derham | gradgrad1 | gradgrad2
  std::filesystem::path import_dir;     // check imported operators instead
  std::vector<std::string> u_macro, u_micro, v_macro, v_micro;
};

namespace detail {

inline const std::set<std::string>& known_commands() {
  static const std::set<std::string> cmds{
      "check-complex", "hodge",      "betti",      "poincare", "divcurl",
      "counterexample", "projection", "friedrichs", "gradgrad", "export"};
  return cmds;
}

inline std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

inline Index parse_index(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return static_cast<Index>(v);
  } catch (const std::exception&) {
    throw ParseError(what + ": '" + text + "' is not an integer");
  }
}

inline double parse_real(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ParseError(what + ": '" + text + "' is not a number");
  }
}

inline std::vector<Index> parse_frequency_list(const std::string& text) {
  std::vector<Index> out;
  for (const std::string& p : split_csv(text))
    out.push_back(parse_index(p, "frequencies"));
  return out;
}

inline CellBox parse_hole(const std::string& text) {
  const std::vector<std::string> parts = split_csv(text);
  if (parts.size() != 4 && parts.size() != 6)
    throw ParseError("hole: expected x0,y0,x1,y1 or x0,y0,z0,x1,y1,z1, got '" +
                     text + "'");
  std::vector<Index> v;
  for (const std::string& p : parts) v.push_back(parse_index(p, "hole"));
  CellBox box;
  const std::size_t half = parts.size() / 2;
  for (std::size_t a = 0; a < half; ++a) {
    box.lo[a] = v[a];
    box.hi[a] = v[half + a];
  }
  return box;
}

/** Loads config-file values into cfg; unknown keys are rejected by name. */
inline void load_config_json(const std::filesystem::path& path,
                             RunConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open config '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
  if (!doc.is_object())
    throw ParseError("config '" + path.string() + "' is not a JSON object");

  static const std::set<std::string> top_keys{
      "command", "experiment", "grid",    "frequencies", "hole",
      "out",     "tol",        "complex", "import",      "family"};
  static const std::set<std::string> grid_keys{"d", "N", "L", "bc", "mask"};
  static const std::set<std::string> family_keys{"u_macro", "u_micro",
                                                 "v_macro", "v_micro"};
  std::vector<std::string> unknown;
  for (const auto& [key, value] : doc.items())
    if (!top_keys.count(key)) unknown.push_back(key);
  if (doc.contains("grid") && doc["grid"].is_object())
    for (const auto& [key, value] : doc["grid"].items())
      if (!grid_keys.count(key)) unknown.push_back("grid." + key);
  if (doc.contains("family") && doc["family"].is_object())
    for (const auto& [key, value] : doc["family"].items())
      if (!family_keys.count(key)) unknown.push_back("family." + key);
  if (!unknown.empty()) {
    std::string msg = "config '" + path.string() + "' has unknown keys:";
    for (const std::string& k : unknown) msg += " " + k;
    throw ParseError(msg);
  }

  try {
    if (doc.contains("command")) cfg.command = doc["command"].get<std::string>();
    if (doc.contains("experiment")) {
      // Experiment-file spelling: "positive" is the divcurl pairing run.
      const std::string exp = doc["experiment"].get<std::string>();
      cfg.command = (exp == "positive") ? "divcurl" : exp;
    }
    if (doc.contains("grid")) {
      const auto& g = doc["grid"];
      GridSpec spec;
      if (g.contains("d")) spec.d = g["d"].get<int>();
      if (g.contains("N")) spec.n = g["N"].get<Index>();
      if (g.contains("L")) spec.length = g["L"].get<double>();
      if (g.contains("bc")) {
        const std::string bc = g["bc"].get<std::string>();
        if (bc == "periodic")
          spec.bc = BoundaryCondition::periodic;
        else if (bc == "dirichlet")
          spec.bc = BoundaryCondition::dirichlet;
        else
          throw ParseError("config grid.bc: unknown value '" + bc + "'");
      }
      if (g.contains("mask"))
        for (const auto& c : g["mask"]) spec.mask.insert(c.get<Index>());
      cfg.grid = spec;
    }
    if (doc.contains("frequencies")) {
      cfg.frequencies.clear();
      for (const auto& k : doc["frequencies"])
        cfg.frequencies.push_back(k.get<Index>());
    }
    if (doc.contains("hole")) {
      std::string joined;
      for (const auto& c : doc["hole"]) {
        if (!joined.empty()) joined += ",";
        joined += std::to_string(c.get<Index>());
      }
      cfg.hole = parse_hole(joined);
    }
    if (doc.contains("out"))
      cfg.out_dir = doc["out"].get<std::string>();
    if (doc.contains("tol")) cfg.tol = doc["tol"].get<double>();
    if (doc.contains("complex"))
      cfg.complex_kind = doc["complex"].get<std::string>();
    if (doc.contains("import"))
      cfg.import_dir = doc["import"].get<std::string>();
    if (doc.contains("family")) {
      const auto& f = doc["family"];
      const auto read_list = [&](const char* key,
                                 std::vector<std::string>& dst) {
        if (!f.contains(key)) return;
        dst.clear();
        for (const auto& e : f[key]) dst.push_back(e.get<std::string>());
      };
      read_list("u_macro", cfg.u_macro);
      read_list("u_micro", cfg.u_micro);
      read_list("v_macro", cfg.v_macro);
      read_list("v_micro", cfg.v_micro);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
}

}  // namespace detail

/**
 * Resolves flags (and an optional --config file; flags win) into a validated
 * RunConfig. Parse failures name the offending flag or key; validation
 * failures list every violated invariant in one error.
 */
inline RunConfig parse_config(const std::vector<std::string>& args) {
  // Flag scan first, so --config is known before the overrides apply.
  std::map<std::string, std::string> flags;
  static const std::set<std::string> known_flags{
      "--config", "--command", "--d",   "--N",   "--L",  "--bc",
      "--hole",   "--frequencies", "--out", "--tol", "--complex", "--import"};
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (!known_flags.count(a))
      throw ParseError("unknown flag '" + a + "'");
    if (i + 1 >= args.size())
      throw ParseError("flag '" + a + "' is missing its value");
    flags[a] = args[++i];
  }

  RunConfig cfg;
  if (flags.count("--config")) detail::load_config_json(flags["--config"], cfg);

  const bool grid_flags = flags.count("--d") || flags.count("--N") ||
                          flags.count("--L") || flags.count("--bc");
  if (grid_flags && !cfg.grid) cfg.grid = GridSpec{};
  if (flags.count("--command")) cfg.command = flags["--command"];
  if (flags.count("--d"))
    cfg.grid->d = static_cast<int>(detail::parse_index(flags["--d"], "d"));
  if (flags.count("--N")) cfg.grid->n = detail::parse_index(flags["--N"], "N");
  if (flags.count("--L")) cfg.grid->length = detail::parse_real(flags["--L"], "L");
  if (flags.count("--bc")) {
    const std::string& bc = flags["--bc"];
    if (bc == "periodic")
      cfg.grid->bc = BoundaryCondition::periodic;
    else if (bc == "dirichlet")
      cfg.grid->bc = BoundaryCondition::dirichlet;
    else
      throw ParseError("bc: unknown value '" + bc + "'");
  }
  if (flags.count("--hole")) cfg.hole = detail::parse_hole(flags["--hole"]);
  if (flags.count("--frequencies"))
    cfg.frequencies = detail::parse_frequency_list(flags["--frequencies"]);
  if (flags.count("--out")) cfg.out_dir = flags["--out"];
  if (flags.count("--tol")) cfg.tol = detail::parse_real(flags["--tol"], "tol");
  if (flags.count("--complex")) cfg.complex_kind = flags["--complex"];
  if (flags.count("--import")) cfg.import_dir = flags["--import"];

  // Validation pass: every violation is collected, then reported at once.
  std::vector<std::string> violations;
  if (cfg.command.empty())
    violations.push_back("command: required");
  else if (!detail::known_commands().count(cfg.command))
    violations.push_back("command: unknown '" + cfg.command + "'");
  const bool needs_grid =
      !(cfg.command == "check-complex" && !cfg.import_dir.empty());
  if (!cfg.grid && needs_grid) violations.push_back("grid: required");
  if (cfg.grid) {
    try {
      cfg.grid->validate();
    } catch (const Error& e) {
      violations.push_back(std::string("grid: ") + e.what());
    }
  }
  if (cfg.tol && !(*cfg.tol > 0.0))
    violations.push_back("tol: must be positive");
  if (cfg.frequencies.empty())
    violations.push_back("frequencies: must be nonempty");
  for (std::size_t i = 0; i < cfg.frequencies.size(); ++i) {
    if (cfg.frequencies[i] < 1) {
      violations.push_back("frequencies: must be positive");
      break;
    }
    if (i + 1 < cfg.frequencies.size() &&
        cfg.frequencies[i + 1] <= cfg.frequencies[i]) {
      violations.push_back("frequencies: must be strictly increasing");
      break;
    }
  }
  if (cfg.complex_kind != "derham" && cfg.complex_kind != "gradgrad1" &&
      cfg.complex_kind != "gradgrad2")
    violations.push_back("complex: unknown kind '" + cfg.complex_kind + "'");
  if (!violations.empty()) {
    std::string msg = "invalid configuration:";
    for (const std::string& v : violations) msg += " [" + v + "]";
    throw ValidationError(msg);
  }
  return cfg;
}

namespace detail {

/** The sequence a command operates on: imported, de Rham, or grad-grad. */
inline ShortSequence build_for(const RunConfig& cfg) {
  if (!cfg.import_dir.empty()) return import_sequence(cfg.import_dir);
  GridSpec g = *cfg.grid;
  if (cfg.hole) g = puncture(g, *cfg.hole);
  if (cfg.complex_kind == "derham") return build_derham(g);
  auto pair = build_gradgrad(g);
  return cfg.complex_kind == "gradgrad1" ? std::move(pair.first)
                                         : std::move(pair.second);
}

inline OscillatoryFamily family_or(const std::vector<std::string>& macro,
                                   const std::vector<std::string>& micro,
                                   const std::vector<std::string>& def_macro,
                                   const std::vector<std::string>& def_micro,
                                   const std::vector<Index>& freqs) {
  if (macro.empty() && micro.empty())
    return make_family(def_macro, def_micro, freqs);
  return make_family(macro, micro, freqs);
}

inline void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec)
    throw IOError("cannot create output directory '" + cfg.out_dir.string() +
                  "': " + ec.message());
}

}  // namespace detail

/**
 * Runs a validated config: writes artifacts under out_dir and prints a
 * one-line summary. Returns 0; failures surface as exceptions (the CLI
 * wrapper maps them to exit codes and JSON payloads).
 */
inline int execute(const RunConfig& cfg, std::ostream& out) {
  if (cfg.command == "check-complex") {
    const ShortSequence s = detail::build_for(cfg);
    out << "residual=" << format_real(s.residual) << "\n";
    return 0;
  }
  if (cfg.command == "betti") {
    const ShortSequence s = detail::build_for(cfg);
    out << "harmonic_dim=" << harmonic_dimension(s) << "\n";
    return 0;
  }
  if (cfg.command == "hodge") {
    const ShortSequence s = detail::build_for(cfg);
    if (s.h1()->dim() > kDenseLimit)
      throw InvalidSpec("hodge materializes dense projectors; middle dimension " +
                        std::to_string(s.h1()->dim()) + " exceeds " +
                        std::to_string(kDenseLimit));
    const HodgeDecomposition h = hodge_decompose(s, cfg.tol.value_or(0.0));
    detail::ensure_out_dir(cfg);
    write_matrix_market(cfg.out_dir / "p_exact.mtx",
                        Sparse(h.p_exact.matrix.sparseView()));
    write_matrix_market(cfg.out_dir / "p_harmonic.mtx",
                        Sparse(h.p_harmonic.matrix.sparseView()));
    write_matrix_market(cfg.out_dir / "p_coexact.mtx",
                        Sparse(h.p_coexact.matrix.sparseView()));
    out << "harmonic_dim=" << h.harmonic_dim << "\n";
    return 0;
  }
  if (cfg.command == "poincare") {
    const ShortSequence s = detail::build_for(cfg);
    out << "poincare=" << format_real(poincare_constant(s.a0, cfg.tol.value_or(0.0)))
        << "\n";
    return 0;
  }
  if (cfg.command == "divcurl") {
    const OscillatoryFamily u =
        detail::family_or(cfg.u_macro, cfg.u_micro, {"1", "0"},
                          {"sin(y)", "0"}, cfg.frequencies);
    const OscillatoryFamily v =
        detail::family_or(cfg.v_macro, cfg.v_micro, {"1", "0"},
                          {"cos(x)", "0"}, cfg.frequencies);
    const ConvergenceTable t = run_positive(u, v, {*cfg.grid});
    detail::ensure_out_dir(cfg);
    write_convergence_csv(cfg.out_dir / "divcurl.csv", t);
    double worst = 0.0;
    for (const auto& r : t.rows) worst = std::max(worst, r.error);
    out << "max_error=" << format_real(worst) << "\n";
    return 0;
  }
  if (cfg.command == "counterexample") {
    const CounterexampleReport rep =
        run_counterexample({*cfg.grid}, cfg.frequencies);
    detail::ensure_out_dir(cfg);
    write_convergence_csv(cfg.out_dir / "counterexample.csv", rep.table);
    write_pairings_csv(cfg.out_dir / "counterexample_pairings.csv",
                       cfg.frequencies, rep.test_pairings);
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& r : rep.table.rows) gap = std::min(gap, r.error);
    out << "gap_min=" << format_real(gap) << "\n";
    return 0;
  }
  if (cfg.command == "projection") {
    const OscillatoryFamily family = detail::family_or(
        cfg.u_macro, cfg.u_micro, {"cos(x)*sin(y)", "sin(x)*cos(y)"},
        {"sin(y)", "0"}, cfg.frequencies);
    const ShortSequence s = detail::build_for(cfg);
    const ConvergenceTable t = projection_convergence(s, *cfg.grid, family);
    detail::ensure_out_dir(cfg);
    write_convergence_csv(cfg.out_dir / "projection.csv", t);
    double worst = 0.0;
    for (const auto& r : t.rows) worst = std::max(worst, r.error);
    out << "max_error=" << format_real(worst) << "\n";
    return 0;
  }
  if (cfg.command == "friedrichs") {
    const FriedrichsReport rep = friedrichs_check(*cfg.grid);
    detail::ensure_out_dir(cfg);
    std::ofstream csv(cfg.out_dir / "friedrichs.csv", std::ios::binary);
    if (!csv) throw IOError("cannot open friedrichs.csv for writing");
    csv << "d,N,samples,max_relative_residual\n"
        << cfg.grid->d << ',' << cfg.grid->n << ',' << rep.samples << ','
        << format_real(rep.max_relative_residual) << '\n';
    out << "max_relative_residual=" << format_real(rep.max_relative_residual)
        << "\n";
    return 0;
  }
  if (cfg.command == "gradgrad") {
    GridSpec g = *cfg.grid;
    auto [s1, s2] = build_gradgrad(g);
    out << "residual1=" << format_real(s1.residual)
        << " residual2=" << format_real(s2.residual)
        << " harmonic1=" << harmonic_dimension(s1)
        << " harmonic2=" << harmonic_dimension(s2) << "\n";
    return 0;
  }
  if (cfg.command == "export") {
    const ShortSequence s = detail::build_for(cfg);
    export_sequence(cfg.out_dir, s);
    out << "exported=" << cfg.out_dir.string() << "\n";
    return 0;
  }
  throw ValidationError("command: unknown '" + cfg.command + "'");
}

/**
 * Full CLI entry: parse, validate, execute. Exit codes: 0 success, 1
 * configuration/validation/IO failure, 2 numerical assertion failure.
 * Every failure writes one machine-readable JSON object to `err`.
 */
inline int run_cli(const std::vector<std::string>& args, std::ostream& out,
                   std::ostream& err) {
  const auto emit = [&err](const char* tag, const std::string& message) {
    nlohmann::json j;
    j["error"] = tag;
    j["message"] = message;
    err << j.dump() << "\n";
  };
  try {
    const RunConfig cfg = parse_config(args);
    return execute(cfg, out);
  } catch (const NotASequence& e) {
    emit(e.tag(), e.what());
    return 2;
  } catch (const NumericalFailure& e) {
    emit(e.tag(), e.what());
    return 2;
  } catch (const Error& e) {
    emit(e.tag(), e.what());
    return 1;
  } catch (const std::exception& e) {
    emit("Error", e.what());
    return 1;
  }
}

}  // namespace dcx
