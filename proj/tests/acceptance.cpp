// Acceptance gate: ten numbered criteria, one PASS/FAIL line each, exit code
// equal to the number of failures. Tolerances are pinned constants; nothing
// here adapts to the measured values.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dcx/cli.hpp"

namespace {

using namespace dcx;

double now() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt(const char* pattern, ...) {
  va_list args;
  va_start(args, pattern);
  char buf[512];
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

struct Check {
  bool ok = false;
  std::string detail;
};

GridSpec torus(int d, Index n) {
  GridSpec g;
  g.d = d;
  g.n = n;
  return g;
}

GridSpec box2(Index n) {
  GridSpec g;
  g.d = 2;
  g.n = n;
  g.bc = BoundaryCondition::dirichlet;
  return g;
}

CellBox hole_for(Index n) {
  // At n = 4 only a single interior cell keeps live vertices on every side.
  if (n == 4) return CellBox{{1, 1, 0}, {2, 2, 0}};
  if (n == 8) return CellBox{{3, 3, 0}, {5, 5, 0}};
  return CellBox{{n / 4 + n / 8, n / 4 + n / 8, 0},
                 {n - n / 4 - n / 8, n - n / 4 - n / 8, 0}};
}

GridSpec holed2(Index n) { return puncture(box2(n), hole_for(n)); }

/** Every shipped builder, as a resolution -> sequences factory. */
struct BuilderCase {
  std::string name;
  std::function<std::vector<ShortSequence>(Index)> build;
  Index dense_n;  // largest shipped resolution whose middle space is dense-tier
};

const std::vector<BuilderCase>& builder_cases() {
  static const std::vector<BuilderCase> cases = {
      {"derham periodic d=1",
       [](Index n) { return std::vector<ShortSequence>{build_derham(torus(1, n))}; },
       16},
      {"derham periodic d=2",
       [](Index n) { return std::vector<ShortSequence>{build_derham(torus(2, n))}; },
       16},
      {"derham periodic d=3",
       [](Index n) { return std::vector<ShortSequence>{build_derham(torus(3, n))}; },
       8},
      {"derham dirichlet d=2",
       [](Index n) { return std::vector<ShortSequence>{build_derham(box2(n))}; },
       16},
      {"derham dirichlet d=2 holed",
       [](Index n) { return std::vector<ShortSequence>{build_derham(holed2(n))}; },
       16},
      {"gradgrad periodic d=3",
       [](Index n) {
         auto [first, second] = build_gradgrad(torus(3, n));
         return std::vector<ShortSequence>{std::move(first), std::move(second)};
       },
       4},
  };
  return cases;
}

/** Dense-tier sequences with their Hodge decompositions, shared by the
    projector-algebra and pairing-identity criteria. */
struct DenseCase {
  std::string name;
  ShortSequence seq;
  HodgeDecomposition hodge;
};

const std::vector<DenseCase>& dense_cases() {
  static const std::vector<DenseCase> cases = [] {
    std::vector<DenseCase> out;
    for (const BuilderCase& b : builder_cases()) {
      int part = 0;
      for (ShortSequence& s : b.build(b.dense_n)) {
        HodgeDecomposition h = hodge_decompose(s);
        out.push_back({b.name + " part " + std::to_string(part++),
                       std::move(s), std::move(h)});
      }
    }
    return out;
  }();
  return cases;
}

Vector random_unit_field(const SpacePtr& sp, std::mt19937& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Vector v(sp->dim());
  for (Index i = 0; i < v.size(); ++i) v[i] = unif(rng);
  return v / sp->norm(v);
}

double fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// --- criterion 1: every builder composes to zero ---------------------------

Check criterion_exact_sequences() {
  constexpr double kTol = 1e-14;
  constexpr double kBudget = 10.0;
  const double t0 = now();
  double worst = 0.0;
  int count = 0;
  for (const BuilderCase& b : builder_cases())
    for (Index n : {4, 8, 16})
      for (const ShortSequence& s : b.build(n)) {
        const double r = validate_sequence(s.a0, s.a1).residual;
        worst = std::max(worst, r);
        ++count;
      }
  const double elapsed = now() - t0;
  return {worst <= kTol && elapsed < kBudget,
          fmt("max residual %.1e over %d sequences (tol %.0e), %.1f s (budget %.0f s)",
              worst, count, kTol, elapsed, kBudget)};
}

// --- criterion 2: projector algebra and Pythagoras -------------------------

Check criterion_hodge_algebra() {
  constexpr double kAlgebraTol = 1e-10;
  constexpr double kPythagorasTol = 1e-9;
  constexpr int kFields = 100;
  double worst_algebra = 0.0;
  double worst_pyth = 0.0;
  std::mt19937 rng(0x2b0de);
  for (const DenseCase& c : dense_cases()) {
    const HodgeDecomposition& h = c.hodge;
    for (const Projector* p : {&h.p_exact, &h.p_harmonic, &h.p_coexact}) {
      const auto [idem, selfadj] = p->defects();
      worst_algebra = std::max({worst_algebra, idem, selfadj});
    }
    const Matrix& pe = h.p_exact.matrix;
    const Matrix& ph = h.p_harmonic.matrix;
    const Matrix& pc = h.p_coexact.matrix;
    worst_algebra = std::max(worst_algebra, (pe * ph).cwiseAbs().maxCoeff());
    worst_algebra = std::max(worst_algebra, (pe * pc).cwiseAbs().maxCoeff());
    worst_algebra = std::max(worst_algebra, (ph * pc).cwiseAbs().maxCoeff());
    const Matrix eye = Matrix::Identity(pe.rows(), pe.cols());
    worst_algebra =
        std::max(worst_algebra, (pe + ph + pc - eye).cwiseAbs().maxCoeff());

    const SpacePtr& sp = c.seq.h1();
    for (int f = 0; f < kFields; ++f) {
      const Vector u = random_unit_field(sp, rng);
      const double pieces = sp->inner(h.p_exact.apply(u), h.p_exact.apply(u)) +
                            sp->inner(h.p_harmonic.apply(u), h.p_harmonic.apply(u)) +
                            sp->inner(h.p_coexact.apply(u), h.p_coexact.apply(u));
      worst_pyth = std::max(worst_pyth, std::abs(1.0 - pieces));
    }
  }
  return {worst_algebra <= kAlgebraTol && worst_pyth <= kPythagorasTol,
          fmt("max algebra defect %.1e (tol %.0e), max pythagoras defect %.1e "
              "(tol %.0e) on %zu sequences x %d fields",
              worst_algebra, kAlgebraTol, worst_pyth, kPythagorasTol,
              dense_cases().size(), kFields)};
}

// --- criterion 3: harmonic dimensions across refinement, two oracles -------

Index betti_by_projector_product(const ShortSequence& s) {
  const Projector pe = projector_onto(range_basis(s.a0));
  const Projector pc = projector_onto(range_basis(adjoint(s.a1)));
  const Index n = s.h1()->dim();
  const Matrix prod =
      (Matrix::Identity(n, n) - pe.matrix) * (Matrix::Identity(n, n) - pc.matrix);
  return std::llround(prod.trace());
}

Check criterion_betti() {
  struct Config {
    std::string name;
    std::function<ShortSequence(Index)> build;
    bool pin_constants;
    Index expected;
  };
  const std::vector<Config> configs = {
      {"torus d=2", [](Index n) { return build_derham(torus(2, n)); }, true, 2},
      {"torus d=3", [](Index n) { return build_derham(torus(3, n)); }, true, 3},
      {"box d=2", [](Index n) { return build_derham(box2(n)); }, false, 0},
      {"holed box d=2", [](Index n) { return build_derham(holed2(n)); }, false, 1},
  };
  std::string report;
  bool ok = true;
  for (const Config& cfg : configs) {
    for (Index n : {8, 16}) {
      const ShortSequence s = cfg.build(n);
      const Index primary = harmonic_dimension(s);
      Index cross;
      if (s.h1()->dim() <= kDenseLimit) {
        cross = betti_by_projector_product(s);
      } else {
        const HodgeActions actions(s.a0, s.a1, cfg.pin_constants);
        cross = harmonic_dimension_probe(actions, s.h1(), 10);
      }
      if (primary != cfg.expected || cross != cfg.expected) {
        ok = false;
        report += fmt(" [%s N=%d: got %d/%d, want %d]", cfg.name.c_str(),
                      static_cast<int>(n), static_cast<int>(primary),
                      static_cast<int>(cross), static_cast<int>(cfg.expected));
      }
    }
    report += fmt(" %s=%d", cfg.name.c_str(), static_cast<int>(cfg.expected));
  }
  return {ok, (ok ? "both oracles agree at N=8,16:" + report
              : "mismatch:" + report)};
}

// --- criterion 4: Poincare constant of the circle gradient -----------------

Check criterion_poincare() {
  constexpr double kTol = 1e-10;
  constexpr double kSharpTol = 1e-8;
  double worst = 0.0;
  double worst_sharp = 0.0;
  std::vector<double> cs;
  for (Index n : {8, 16, 32}) {
    const ShortSequence s = build_derham(torus(1, n));
    const double c = poincare_constant(s.a0);
    const double closed =
        (std::numbers::pi / static_cast<double>(n)) /
        std::sin(std::numbers::pi / static_cast<double>(n));
    worst = std::max(worst, std::abs(c - closed));
    cs.push_back(c);

    Vector mode(n);
    for (Index j = 0; j < n; ++j)
      mode[j] = std::sin(2.0 * std::numbers::pi * static_cast<double>(j) /
                         static_cast<double>(n));
    const double lhs = s.h0()->norm(mode);
    const double rhs = c * s.h1()->norm(s.a0.apply(mode));
    worst_sharp = std::max(worst_sharp, std::abs(lhs - rhs) / lhs);
  }
  const bool monotone = cs[0] > cs[1] && cs[1] > cs[2] && cs[2] > 1.0;
  return {worst <= kTol && monotone && worst_sharp <= kSharpTol,
          fmt("max |c - closed form| %.1e (tol %.0e), monotone %s, "
              "first-mode sharpness defect %.1e (tol %.0e)",
              worst, kTol, monotone ? "yes" : "NO", worst_sharp, kSharpTol)};
}

// --- criterion 5: oscillatory pairings converge when constraints hold ------

Check criterion_positive_experiment() {
  constexpr double kTol = 1e-12;
  constexpr double kBudget = 5.0;
  const double t0 = now();
  const GridSpec g = torus(2, 64);
  const ShortSequence s = build_derham(g);
  const std::vector<Index> ks{2, 4, 8, 16};

  struct Pair {
    OscillatoryFamily u, v;
  };
  const std::vector<Pair> pairs = {
      {make_family(std::vector<std::string>{"1", "0"},
                   std::vector<std::string>{"sin(y)", "0"}, ks),
       make_family(std::vector<std::string>{"1", "0"},
                   std::vector<std::string>{"cos(x)", "0"}, ks)},
      {make_family(std::vector<std::string>{"1 + sin(y)", "cos(x)"},
                   std::vector<std::string>{"sin(y)", "0"}, ks),
       make_family(std::vector<std::string>{"1 + sin(x)", "cos(y)"},
                   std::vector<std::string>{"cos(x)", "0"}, ks)},
  };
  double worst_err = 0.0;
  double worst_res = 0.0;
  for (const Pair& p : pairs) {
    const ConvergenceTable t = run_positive(p.u, p.v, s, g);
    for (const auto& row : t.rows) {
      worst_err = std::max(worst_err, row.error);
      worst_res = std::max({worst_res, row.res_div, row.res_curl});
    }
  }
  const double elapsed = now() - t0;
  return {worst_err <= kTol && worst_res <= kTol && elapsed < kBudget,
          fmt("max |I_k - I_inf| %.1e, max residual %.1e (tol %.0e), "
              "%.1f s (budget %.0f s)",
              worst_err, worst_res, kTol, elapsed, kBudget)};
}

// --- criterion 6: persistent gap without the constraints --------------------

Check criterion_counterexample() {
  constexpr double kValueTol = 1e-10;
  constexpr double kPairingCeiling = 1e-3;
  constexpr double kSlopeTol = 1e-6;
  const std::vector<Index> ks{2, 4, 8, 16};
  const CounterexampleReport rep = run_counterexample({torus(2, 64)}, ks);

  const double self = 2.0 * std::numbers::pi * std::numbers::pi;
  double worst_value = 0.0;
  std::vector<double> logk, logdiv;
  for (const auto& row : rep.table.rows) {
    worst_value = std::max(worst_value, std::abs(row.value - self));
    logk.push_back(std::log(static_cast<double>(row.k)));
    logdiv.push_back(std::log(row.res_div));
  }
  const double final_pairing =
      rep.test_pairings.row(rep.test_pairings.rows() - 1).cwiseAbs().maxCoeff();
  const double slope_err = std::abs(fit_slope(logk, logdiv) - 1.0);
  return {worst_value <= kValueTol && final_pairing < kPairingCeiling &&
              slope_err <= kSlopeTol,
          fmt("max |I_k - 2pi^2| %.1e (tol %.0e), k=16 test pairing %.1e "
              "(< %.0e), div growth slope error %.1e (tol %.0e)",
              worst_value, kValueTol, final_pairing, kPairingCeiling,
              slope_err, kSlopeTol)};
}

// --- criterion 7: the periodic grad/curl/div energy identity ----------------

Check criterion_friedrichs() {
  constexpr double kTol = 1e-12;
  double worst = 0.0;
  for (int d : {2, 3})
    for (Index n : {4, 8}) {
      const FriedrichsReport rep = friedrichs_check(torus(d, n));
      worst = std::max(worst, rep.max_relative_residual);
    }
  return {worst <= kTol,
          fmt("max relative residual %.1e over d={2,3} x N={4,8} x 100 fields "
              "(tol %.0e)",
              worst, kTol)};
}

// --- criterion 8: Helmholtz projection of oscillatory families --------------

Check criterion_projection() {
  constexpr double kTol = 1e-10;
  const GridSpec g = torus(2, 64);
  const ShortSequence s = build_derham(g);
  const std::vector<Index> ks{2, 4, 8, 16};

  const OscillatoryFamily gradient_family = make_family(
      std::vector<std::string>{"cos(x)*sin(y)", "sin(x)*cos(y)"},
      std::vector<std::string>{"sin(y)", "0"}, ks);
  const ConvergenceTable good = projection_convergence(s, g, gradient_family);
  double worst = 0.0;
  for (const auto& row : good.rows) worst = std::max(worst, row.value);

  const OscillatoryFamily stuck =
      make_family({}, std::vector<std::string>{"sin(x)", "0"}, ks);
  const ConvergenceTable bad = projection_convergence(s, g, stuck);
  double floor = std::numeric_limits<double>::infinity();
  for (const auto& row : bad.rows) floor = std::min(floor, row.value);

  return {worst <= kTol && floor >= 1.0,
          fmt("max gradient-family error %.1e (tol %.0e), "
              "counterexample floor %.2f (>= 1)",
              worst, kTol, floor)};
}

// --- criterion 9: the three-term pairing identity ----------------------------

Check criterion_pairing_identity() {
  constexpr double kTol = 1e-9;
  constexpr int kPairs = 100;
  double worst = 0.0;
  std::mt19937 rng(0x3e9a1);
  for (const DenseCase& c : dense_cases()) {
    const SpacePtr& sp = c.seq.h1();
    const HodgeDecomposition& h = c.hodge;
    for (int i = 0; i < kPairs; ++i) {
      const Vector u = random_unit_field(sp, rng);
      const Vector v = random_unit_field(sp, rng);
      const double lhs = sp->inner(u, v);
      const double rhs = sp->inner(u, h.p_coexact.apply(v)) +
                         sp->inner(h.p_exact.apply(u), v) +
                         sp->inner(h.p_harmonic.apply(u), h.p_harmonic.apply(v));
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return {worst <= kTol,
          fmt("max identity defect %.1e over %d pairs x %zu sequences (tol %.0e)",
              worst, kPairs, dense_cases().size(), kTol)};
}

// --- criterion 10: round trips and byte-stable outputs -----------------------

Check criterion_cli_roundtrip() {
  const std::filesystem::path root =
      std::filesystem::temp_directory_path() /
      ("dcx_acceptance_" + std::to_string(static_cast<long>(getpid())));
  std::filesystem::create_directories(root);
  struct Cleanup {
    std::filesystem::path p;
    ~Cleanup() {
      std::error_code ec;
      std::filesystem::remove_all(p, ec);
    }
  } cleanup{root};

  const ShortSequence s = build_derham(torus(2, 8));
  export_sequence(root / "seq", s);
  const ShortSequence back = import_sequence(root / "seq");
  const bool round_ok = back.residual == 0.0 &&
                        Sparse(back.a0.sparse() - s.a0.sparse()).norm() == 0.0;

  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  auto run_once = [&](const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ostringstream out, err;
    const int code = run_cli({"--command", "divcurl", "--d", "2", "--N", "32",
                              "--frequencies", "2,4,8", "--out",
                              out_dir.string()},
                             out, err);
    return std::pair<int, std::string>(code, out.str());
  };
  const auto [code1, text1] = run_once(root / "run1");
  const auto [code2, text2] = run_once(root / "run2");
  const bool csv_ok = code1 == 0 && code2 == 0 && text1 == text2 &&
                      slurp(root / "run1" / "divcurl.csv") ==
                          slurp(root / "run2" / "divcurl.csv");

  return {round_ok && csv_ok,
          fmt("import residual %s, operators bit-identical %s, "
              "repeated run CSVs byte-identical %s",
              back.residual == 0.0 ? "0" : "nonzero", round_ok ? "yes" : "NO",
              csv_ok ? "yes" : "NO")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Check()> run;
  };
  const std::vector<Criterion> criteria = {
      {"exact sequences", criterion_exact_sequences},
      {"hodge projector algebra", criterion_hodge_algebra},
      {"harmonic dimensions", criterion_betti},
      {"poincare closed form", criterion_poincare},
      {"positive div-curl", criterion_positive_experiment},
      {"counterexample gap", criterion_counterexample},
      {"friedrichs identity", criterion_friedrichs},
      {"projection convergence", criterion_projection},
      {"three-term pairing", criterion_pairing_identity},
      {"round trip + determinism", criterion_cli_roundtrip},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const double t0 = now();
    Check c;
    try {
      c = criteria[i].run();
    } catch (const std::exception& e) {
      c = {false, std::string("exception: ") + e.what()};
    }
    if (!c.ok) ++failures;
    std::printf("[%s] %2zu %-26s %s (%.2f s)\n", c.ok ? "PASS" : "FAIL", i + 1,
                criteria[i].name, c.detail.c_str(), now() - t0);
    std::fflush(stdout);
  }
  std::printf("ACCEPTANCE: %zu/%zu criteria passed\n",
              criteria.size() - failures, criteria.size());
  return failures;
}