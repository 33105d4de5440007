#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "dcx/expr.hpp"
#include "dcx/grids.hpp"
#include "dcx/iterative.hpp"

namespace dcx {

/**
 * Family of oscillatory vector fields u_k(x) = macro(x) + micro(k x) on the
 * periodic grid, with profiles given in angular coordinates theta = 2 pi x/L.
 * micro must have zero mean per component; micro_degree records its highest
 * angular mode (measured at construction) and bounds the admissible
 * frequencies through the Nyquist condition k * micro_degree < N/2.
 *
 * Either profile list may be empty (the zero field); nonempty lists must
 * agree in length, one expression per grid component.
 */
struct OscillatoryFamily {
  std::vector<Expression> macro;
  std::vector<Expression> micro;
  std::vector<Index> frequencies;
  Index micro_degree = 0;
};

/**
 * One convergence experiment: per frequency the measured pairing, its
 * reference value, the gap, and the two constraint residuals. `slope` is the
 * least-squares slope of log(error) against log(k) over the rows with
 * positive error (NaN when fewer than two such rows exist).
 */
struct ConvergenceTable {
  struct Row {
    Index k = 0;
    double value = 0.0;
    double reference = 0.0;
    double error = 0.0;
    double res_div = 0.0;
    double res_curl = 0.0;
  };
  std::vector<Row> rows;  // sorted by k
  double slope = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

/**
 * Discrete Fourier magnitudes of f restricted to an axis slice, probed on
 * m sample points; returns the highest mode with |c| > 1e-11 * (1 + max|f|).
 */
inline Index slice_max_mode(const Expression& f, int axis, Index m,
                            const std::array<double, 3>& frozen) {
  const double tau = 2.0 * std::numbers::pi;
  std::vector<double> fv(static_cast<std::size_t>(m));
  double scale = 1.0;
  for (Index j = 0; j < m; ++j) {
    std::array<double, 3> th = frozen;
    th[static_cast<std::size_t>(axis)] = tau * static_cast<double>(j) / m;
    fv[static_cast<std::size_t>(j)] = f.eval(th);
    scale = std::max(scale, 1.0 + std::abs(fv[static_cast<std::size_t>(j)]));
  }
  Index top = 0;
  for (Index mode = 1; mode <= m / 2; ++mode) {
    CompensatedSum re, im;
    for (Index j = 0; j < m; ++j) {
      const double ang = tau * static_cast<double>(mode * j % m) / m;
      re.add(fv[static_cast<std::size_t>(j)] * std::cos(ang));
      im.add(fv[static_cast<std::size_t>(j)] * std::sin(ang));
    }
    const double mag = std::hypot(re.value(), im.value()) / static_cast<double>(m);
    if (mag > 1e-11 * scale) top = mode;
  }
  return top;
}

/**
 * Highest angular mode of f along any axis. Probes 1-d slices at two
 * resolutions; disagreement (content folding differently) or content at the
 * probe Nyquist rejects the profile as out of bandwidth.
 */
inline Index expression_max_mode(const Expression& f) {
  const int top_axis = f.max_axis();
  if (top_axis < 0) return 0;
  static constexpr double kOffsets[2] = {0.73, 2.41};
  Index degree = 0;
  for (int axis = 0; axis <= top_axis; ++axis) {
    // Every combination of frozen offsets on the other active axes, so a
    // product profile cannot hide behind a nodal line of one slice.
    std::vector<std::array<double, 3>> bases{{0.0, 0.0, 0.0}};
    for (int other = 0; other <= top_axis; ++other) {
      if (other == axis) continue;
      std::vector<std::array<double, 3>> grown;
      grown.reserve(2 * bases.size());
      for (const auto& b : bases)
        for (double off : kOffsets) {
          auto nb = b;
          nb[static_cast<std::size_t>(other)] = off;
          grown.push_back(nb);
        }
      bases = std::move(grown);
    }
    for (const auto& b : bases) {
      const Index coarse = slice_max_mode(f, axis, 64, b);
      const Index fine = slice_max_mode(f, axis, 96, b);
      if (coarse != fine || coarse >= 32)
        throw InvalidFamily(
            "micro profile carries angular modes beyond the probe bandwidth "
            "(31)");
      degree = std::max(degree, coarse);
    }
  }
  return degree;
}

/** Mean of f over the angular torus, midpoint rule with 64 points per
    active axis; exact for in-bandwidth trigonometric polynomials. */
inline double expression_mean(const Expression& f) {
  const int top_axis = f.max_axis();
  const Index m = 64;
  const double tau = 2.0 * std::numbers::pi;
  Index total = 1;
  for (int a = 0; a <= top_axis; ++a) total *= m;
  CompensatedSum sum;
  for (Index flat = 0; flat < total; ++flat) {
    std::array<double, 3> th{0.0, 0.0, 0.0};
    Index rest = flat;
    for (int a = 0; a <= top_axis; ++a) {
      th[static_cast<std::size_t>(a)] = tau * static_cast<double>(rest % m) / m;
      rest /= m;
    }
    sum.add(f.eval(th));
  }
  return sum.value() / static_cast<double>(total);
}

inline double fit_log_slope(const std::vector<ConvergenceTable::Row>& rows) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rows)
    if (r.error > 0.0)
      pts.emplace_back(std::log(static_cast<double>(r.k)), std::log(r.error));
  if (pts.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / sxx;
}

}  // namespace detail

/**
 * Validates and measures a family: component counts consistent, frequencies
 * strictly increasing and positive, micro mean-zero within 1e-12 per
 * component (exact midpoint quadrature), micro_degree measured from the
 * expression tree's spectrum.
 */
inline OscillatoryFamily make_family(std::vector<Expression> macro,
                                     std::vector<Expression> micro,
                                     std::vector<Index> frequencies) {
  if (macro.empty() && micro.empty())
    throw InvalidFamily("family needs a macro or a micro profile");
  if (!macro.empty() && !micro.empty() && macro.size() != micro.size())
    throw InvalidFamily("macro and micro component counts differ");
  for (Index k : frequencies)
    if (k < 1) throw InvalidFamily("frequencies must be positive integers");
  for (std::size_t i = 0; i + 1 < frequencies.size(); ++i)
    if (frequencies[i + 1] <= frequencies[i])
      throw InvalidFamily("frequencies must be strictly increasing");
  OscillatoryFamily f{std::move(macro), std::move(micro), std::move(frequencies),
                      0};
  for (const Expression& e : f.micro) {
    const double mean = detail::expression_mean(e);
    if (std::abs(mean) > 1e-12)
      throw InvalidFamily("micro profile has nonzero mean " +
                          std::to_string(mean));
    f.micro_degree = std::max(f.micro_degree, detail::expression_max_mode(e));
  }
  return f;
}

/** String-profile convenience: every component is parsed. */
inline OscillatoryFamily make_family(const std::vector<std::string>& macro,
                                     const std::vector<std::string>& micro,
                                     std::vector<Index> frequencies) {
  std::vector<Expression> m, u;
  m.reserve(macro.size());
  u.reserve(micro.size());
  for (const auto& s : macro) m.push_back(parse_expression(s));
  for (const auto& s : micro) u.push_back(parse_expression(s));
  return make_family(std::move(m), std::move(u), std::move(frequencies));
}

/**
 * Band-limited sawtooth sum_{m=1}^{modes} sigma_m sin(m (theta_axis + phase))/m
 * with Lanczos factors sigma_m = sinc(m / (modes + 1)). Mean-zero with
 * slowly decaying coefficients: the roughest profile available in closed form.
 */
inline Expression smoothed_sawtooth(int axis, int modes, double phase = 0.0) {
  if (modes < 1) throw InvalidSpec("smoothed_sawtooth needs at least one mode");
  const Expression theta = Expression::variable(axis);
  Expression sum = Expression::constant(0.0);
  for (int m = 1; m <= modes; ++m) {
    const double arg = std::numbers::pi * m / (modes + 1);
    const double sigma = std::sin(arg) / arg;
    sum = std::move(sum) +
          Expression::constant(sigma / m) *
              sin(Expression::constant(static_cast<double>(m)) *
                  (theta + Expression::constant(phase)));
  }
  return sum;
}

/**
 * Evaluates u_k = macro + micro(k theta) at the grid points, component-major
 * (component c occupies [c np, (c+1) np), axis 0 fastest). The micro argument
 * is reduced on the integer lattice, (k i) mod N, before scaling to angle, so
 * trigonometric exactness survives large k.
 */
inline Vector sample(const OscillatoryFamily& f, Index k, const GridSpec& grid) {
  grid.validate();
  if (grid.bc != BoundaryCondition::periodic)
    throw UnsupportedBC("oscillatory families sample periodic grids only");
  if (k < 1) throw InvalidFamily("frequency must be a positive integer");
  if (2 * k * f.micro_degree >= grid.n)
    throw InvalidFamily("aliasing: frequency " + std::to_string(k) +
                        " times micro degree " +
                        std::to_string(f.micro_degree) +
                        " reaches the Nyquist mode of N = " +
                        std::to_string(grid.n));
  const Index comps =
      static_cast<Index>(std::max(f.macro.size(), f.micro.size()));
  if (comps != grid.d)
    throw InvalidFamily("family has " + std::to_string(comps) +
                        " components on a " + std::to_string(grid.d) +
                        "-dimensional grid");
  for (const Expression& e : f.macro)
    if (e.max_axis() >= grid.d)
      throw InvalidFamily("profile references an axis beyond the grid");
  for (const Expression& e : f.micro)
    if (e.max_axis() >= grid.d)
      throw InvalidFamily("profile references an axis beyond the grid");

  const detail::PointIndexer ix{grid.d, grid.n};
  const Index np = ix.points();
  const Index n = grid.n;
  const double tau = 2.0 * std::numbers::pi;
  Vector out = Vector::Zero(comps * np);
  for (Index p = 0; p < np; ++p) {
    std::array<double, 3> th{0.0, 0.0, 0.0};
    std::array<double, 3> thk{0.0, 0.0, 0.0};
    Index rest = p;
    for (int a = 0; a < grid.d; ++a) {
      const Index i = rest % n;
      rest /= n;
      th[static_cast<std::size_t>(a)] = tau * static_cast<double>(i) / n;
      thk[static_cast<std::size_t>(a)] =
          tau * static_cast<double>((k * i) % n) / n;
    }
    for (Index c = 0; c < comps; ++c) {
      double val = 0.0;
      if (!f.macro.empty()) val += f.macro[static_cast<std::size_t>(c)].eval(th);
      if (!f.micro.empty())
        val += f.micro[static_cast<std::size_t>(c)].eval(thk);
      out[c * np + p] = val;
    }
  }
  return out;
}

namespace detail {

/** The macro part alone (zero when the family has no macro). */
inline Vector macro_sample(const OscillatoryFamily& f, const GridSpec& grid) {
  const Index comps =
      static_cast<Index>(std::max(f.macro.size(), f.micro.size()));
  if (f.macro.empty()) {
    const PointIndexer ix{grid.d, grid.n};
    return Vector::Zero(comps * ix.points());
  }
  OscillatoryFamily m;
  m.macro = f.macro;
  return sample(m, 1, grid);
}

inline void require_on_grid(const ShortSequence& s, const GridSpec& grid) {
  const PointIndexer ix{grid.d, grid.n};
  if (s.h1()->dim() != grid.d * ix.points())
    throw SpaceMismatch("sequence middle space does not match the grid");
}

}  // namespace detail

/**
 * Pairing experiment: I_k = <u_k, v_k> against the macro pairing
 * I_inf = <macro_u, macro_v>, with the constraint residuals ||A0* u_k||
 * and ||A1 v_k|| per row. Both families must share one frequency list.
 */
inline ConvergenceTable run_positive(const OscillatoryFamily& u,
                                     const OscillatoryFamily& v,
                                     const ShortSequence& s,
                                     const GridSpec& grid) {
  if (u.frequencies.empty())
    throw InvalidFamily("run_positive needs at least one frequency");
  if (u.frequencies != v.frequencies)
    throw InvalidFamily("u and v frequency lists differ");
  detail::require_on_grid(s, grid);
  const LinearMap a0t = adjoint(s.a0);
  const Vector umac = detail::macro_sample(u, grid);
  const Vector vmac = detail::macro_sample(v, grid);
  const double iref = s.h1()->inner(umac, vmac);
  ConvergenceTable t;
  t.rows.reserve(u.frequencies.size());
  for (Index k : u.frequencies) {
    const Vector uk = sample(u, k, grid);
    const Vector vk = sample(v, k, grid);
    ConvergenceTable::Row r;
    r.k = k;
    r.value = s.h1()->inner(uk, vk);
    r.reference = iref;
    r.error = std::abs(r.value - iref);
    r.res_div = s.h0()->norm(a0t.apply(uk));
    r.res_curl = s.h2()->norm(s.a1.apply(vk));
    t.rows.push_back(r);
  }
  t.slope = detail::fit_log_slope(t.rows);
  return t;
}

/**
 * Grid-list convenience: every spec is validated, the finest grid carries
 * the de Rham sequence and the reported table.
 */
inline ConvergenceTable run_positive(const OscillatoryFamily& u,
                                     const OscillatoryFamily& v,
                                     const std::vector<GridSpec>& grids) {
  if (grids.empty()) throw InvalidSpec("run_positive needs at least one grid");
  const GridSpec* finest = &grids.front();
  for (const GridSpec& g : grids) {
    g.validate();
    if (g.n > finest->n) finest = &g;
  }
  const ShortSequence s = build_derham(*finest);
  return run_positive(u, v, s, *finest);
}

/**
 * The negative experiment: u_k = v_k = sin(k theta_1) e_1 on the d = 2 torus.
 * The self-pairing I_k stays at 2 pi^2 while the pairing against any fixed
 * smooth field dies out -- oscillation without strong convergence. The table's
 * res_div column carries the closed-form norm of div u_k = k cos(k x_1),
 * which is k sqrt(2) pi on the torus: the compactness hypothesis fails at
 * rate exactly k.
 */
struct CounterexampleReport {
  ConvergenceTable table;
  Matrix test_pairings;  // row per frequency, column per fixed test field
  double pairing_slope = std::numeric_limits<double>::quiet_NaN();
};

inline CounterexampleReport run_counterexample(
    const std::vector<GridSpec>& grids, const std::vector<Index>& frequencies) {
  if (grids.empty())
    throw InvalidSpec("run_counterexample needs at least one grid");
  const GridSpec* finest = &grids.front();
  for (const GridSpec& g : grids) {
    g.validate();
    if (g.d != 2)
      throw UnsupportedDim("the counterexample lives on the d = 2 torus");
    if (g.bc != BoundaryCondition::periodic)
      throw UnsupportedBC("the counterexample lives on the d = 2 torus");
    if (g.n > finest->n) finest = &g;
  }
  const OscillatoryFamily osc =
      make_family({}, std::vector<std::string>{"sin(x)", "0"}, frequencies);
  const ShortSequence s = build_derham(*finest);

  // Fixed smooth test fields w_m = (exp(cos(theta_1 - phi_m)), 0): full
  // angular spectrum, so every frequency is probed, with coefficients
  // falling like a modified Bessel tail.
  static constexpr double kPhases[5] = {0.1, 0.3, 0.5, 0.7, 0.9};
  const Index dim = s.h1()->dim();
  Matrix w(dim, 5);
  for (int m = 0; m < 5; ++m) {
    OscillatoryFamily tf;
    tf.macro.push_back(exp(cos(Expression::variable(0) -
                               Expression::constant(kPhases[m]))));
    tf.macro.push_back(Expression::constant(0.0));
    w.col(m) = detail::macro_sample(tf, *finest);
  }

  CounterexampleReport rep;
  rep.test_pairings = Matrix(static_cast<Index>(frequencies.size()), 5);
  const double pi = std::numbers::pi;
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    const Index k = frequencies[i];
    const Vector uk = sample(osc, k, *finest);
    ConvergenceTable::Row r;
    r.k = k;
    r.value = s.h1()->inner(uk, uk);
    r.reference = 0.0;  // the weak limit of sin(k .) pairs to zero
    r.error = std::abs(r.value);
    r.res_div = static_cast<double>(k) * std::sqrt(2.0) * pi;
    r.res_curl = s.h2()->norm(s.a1.apply(uk));
    rep.table.rows.push_back(r);
    for (int m = 0; m < 5; ++m)
      rep.test_pairings(static_cast<Index>(i), m) =
          s.h1()->inner(uk, w.col(m));
  }
  rep.table.slope = detail::fit_log_slope(rep.table.rows);

  std::vector<ConvergenceTable::Row> decay;
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    ConvergenceTable::Row r;
    r.k = frequencies[i];
    r.error = rep.test_pairings.row(static_cast<Index>(i)).cwiseAbs().maxCoeff();
    decay.push_back(r);
  }
  rep.pairing_slope = detail::fit_log_slope(decay);
  return rep;
}

/**
 * Convergence of the exact-part projection: reports
 * ||pi_rge(A0) u_k - pi_rge(A0) macro|| per frequency. When the micro part
 * is discretely divergence-free it is gram-orthogonal to rge(A0), so the
 * projections coincide up to projector rounding. Dense projector below
 * kDenseLimit, conjugate-gradient action above.
 */
inline ConvergenceTable projection_convergence(const ShortSequence& s,
                                               const GridSpec& grid,
                                               const OscillatoryFamily& family) {
  if (family.frequencies.empty())
    throw InvalidFamily("projection_convergence needs at least one frequency");
  detail::require_on_grid(s, grid);
  const LinearMap a0t = adjoint(s.a0);

  std::optional<Projector> dense;
  std::optional<RangeProjectorAction> action;
  if (s.h1()->dim() <= kDenseLimit)
    dense.emplace(projector_onto(range_basis(s.a0)));
  else
    action.emplace(s.a0);
  const auto project = [&](const Vector& x) {
    return dense ? dense->apply(x) : action->onto_range(x);
  };

  const Vector pmac = project(detail::macro_sample(family, grid));
  ConvergenceTable t;
  for (Index k : family.frequencies) {
    const Vector uk = sample(family, k, grid);
    ConvergenceTable::Row r;
    r.k = k;
    r.value = s.h1()->norm(project(uk) - pmac);
    r.reference = 0.0;
    r.error = r.value;
    r.res_div = s.h0()->norm(a0t.apply(uk));
    r.res_curl = s.h2()->norm(s.a1.apply(uk));
    t.rows.push_back(r);
  }
  t.slope = detail::fit_log_slope(t.rows);
  return t;
}

/**
 * Residual report for the periodic gradient identity
 * ||Grad u||^2 = 1/2 ||Curl u||^2 + ||div u||^2, with Grad and Curl the
 * forward-difference operators and div their summation-by-parts partner
 * -A0*. The identity is exact in that calculus; the report carries the
 * worst relative residual over `samples` random fields.
 */
struct FriedrichsReport {
  Index samples = 0;
  double max_relative_residual = 0.0;
};

inline FriedrichsReport friedrichs_check(const GridSpec& spec,
                                         Index samples = 100) {
  spec.validate();
  if (spec.bc != BoundaryCondition::periodic)
    throw UnsupportedBC(
        "the gradient identity is discretized for periodic grids only");
  const ShortSequence s = build_derham(spec);
  const LinearMap a0t = adjoint(s.a0);
  const Index np = s.h0()->dim();
  const int d = spec.d;

  std::mt19937_64 rng(0x66726473);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  FriedrichsReport rep;
  rep.samples = samples;
  for (Index trial = 0; trial < samples; ++trial) {
    Vector u(d * np);
    for (Index i = 0; i < u.size(); ++i) u[i] = unif(rng);

    CompensatedSum grad2;
    for (int j = 0; j < d; ++j) {
      const Vector gj = s.a0.apply(u.segment(j * np, np));
      grad2.add(s.h1()->inner(gj, gj));
    }
    const Vector cu = s.a1.apply(u);
    const Vector du = a0t.apply(u);
    const double curl2 = s.h2()->inner(cu, cu);
    const double div2 = s.h0()->inner(du, du);
    const double g2 = grad2.value();
    const double r = g2 - 0.5 * curl2 - div2;
    if (g2 > 0.0)
      rep.max_relative_residual =
          std::max(rep.max_relative_residual, std::abs(r) / g2);
  }
  return rep;
}

}  // namespace dcx
