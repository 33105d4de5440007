#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dcx/iterative.hpp"
#include "dcx/linops.hpp"

namespace dcx {

/** Middle-space dimension up to which dense decompositions are used. */
inline constexpr Index kDenseLimit = 1600;

/**
 * A validated pair (A0, A1) with rge(A0) contained in ker(A1); residual is
 * the gram-weighted operator norm of A1 A0. In finite dimensions the
 * containment is equivalent to A1 A0 = 0, and the grid builders achieve it
 * bit-exactly.
 */
struct ShortSequence {
  LinearMap a0;
  LinearMap a1;
  double residual = 0.0;

  const SpacePtr& h0() const { return a0.domain(); }
  const SpacePtr& h1() const { return a0.codomain(); }
  const SpacePtr& h2() const { return a1.codomain(); }
};

/**
 * Checks rge(A0) in ker(A1) and returns the validated sequence.
 * Throws SpaceMismatch for incompatible middle spaces and NotASequence when
 * the composition residual exceeds 1e-12 * (1 + |A0| |A1|).
 */
inline ShortSequence validate_sequence(LinearMap a0, LinearMap a1) {
  require_same_space(a1.domain(), a0.codomain(),
                     "validate_sequence: A0 codomain differs from A1 domain");
  LinearMap comp = compose(a1, a0);
  double residual = 0.0;
  if (comp.sparse().nonZeros() > 0) residual = comp.operator_norm();
  const double bound =
      1e-12 * (1.0 + a0.operator_norm() * a1.operator_norm());
  if (residual > bound) throw NotASequence(residual);
  return ShortSequence{std::move(a0), std::move(a1), residual};
}

/** The adjoint pair (A1*, A0*), validated; an involution up to rounding. */
inline ShortSequence dual_sequence(const ShortSequence& s) {
  return validate_sequence(adjoint(s.a1), adjoint(s.a0));
}

/**
 * Orthogonal splitting of the middle space into exact fields rge(A0),
 * harmonic fields ker(A0*) cap ker(A1), and coexact fields rge(A1*).
 */
struct HodgeDecomposition {
  Projector p_exact;
  Projector p_harmonic;
  Projector p_coexact;
  Index harmonic_dim = 0;
};

namespace detail {

/** Product space H0 x H2 with the block-diagonal gram. */
inline SpacePtr product_space(const SpacePtr& a, const SpacePtr& b) {
  std::vector<Triplet> trips;
  trips.reserve(a->gram().nonZeros() + b->gram().nonZeros());
  for (int k = 0; k < a->gram().outerSize(); ++k)
    for (Sparse::InnerIterator it(a->gram(), k); it; ++it)
      trips.emplace_back(it.row(), it.col(), it.value());
  const Index off = a->dim();
  for (int k = 0; k < b->gram().outerSize(); ++k)
    for (Sparse::InnerIterator it(b->gram(), k); it; ++it)
      trips.emplace_back(off + it.row(), off + it.col(), it.value());
  Sparse g(a->dim() + b->dim(), a->dim() + b->dim());
  g.setFromTriplets(trips.begin(), trips.end());
  return make_space(InnerProductSpace(std::move(g)));
}

/** Rows of A0* stacked over rows of A1; its kernel is the harmonic space. */
inline LinearMap stacked_kernel_map(const ShortSequence& s) {
  LinearMap a0star = adjoint(s.a0);
  const Sparse& top = a0star.sparse();
  const Sparse& bottom = s.a1.sparse();
  std::vector<Triplet> trips;
  trips.reserve(top.nonZeros() + bottom.nonZeros());
  for (int k = 0; k < top.outerSize(); ++k)
    for (Sparse::InnerIterator it(top, k); it; ++it)
      trips.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < bottom.outerSize(); ++k)
    for (Sparse::InnerIterator it(bottom, k); it; ++it)
      trips.emplace_back(top.rows() + it.row(), it.col(), it.value());
  Sparse stacked(top.rows() + bottom.rows(), s.h1()->dim());
  stacked.setFromTriplets(trips.begin(), trips.end());
  return LinearMap(s.h1(), product_space(s.h0(), s.h2()), std::move(stacked));
}

}  // namespace detail

/**
 * Dense Hodge decomposition; intended for middle spaces up to a few
 * thousand dimensions (three dense projector matrices are materialized).
 * The harmonic projector comes from the kernel of the stacked map
 * (A0*; A1), computed in one rank-revealing factorization.
 */
inline HodgeDecomposition hodge_decompose(const ShortSequence& s,
                                          double rank_tol = 0.0) {
  Projector p_exact = projector_onto(range_basis(s.a0, rank_tol));
  Projector p_coexact = projector_onto(range_basis(adjoint(s.a1), rank_tol));
  OrthonormalBasis harm = kernel_basis(detail::stacked_kernel_map(s), rank_tol);
  Projector p_harm = projector_onto(harm);
  return HodgeDecomposition{std::move(p_exact), std::move(p_harm),
                            std::move(p_coexact), harm.rank};
}

/**
 * dim(ker(A0*) cap ker(A1)); a Betti number for the grid complexes.
 * Dense stacked-kernel rank below kDenseLimit, sparse LDLT inertia above.
 */
inline Index harmonic_dimension(const ShortSequence& s) {
  if (s.h1()->dim() <= kDenseLimit)
    return kernel_basis(detail::stacked_kernel_map(s)).rank;
  return harmonic_dimension_inertia(s.a0, s.a1);
}

/** The three Hodge components of a middle-space field. */
struct FieldSplit {
  Vector exact;
  Vector harmonic;
  Vector coexact;
};

/** Splits v into exact + harmonic + coexact parts (dense path). */
inline FieldSplit split_field(const ShortSequence& s, const Vector& v) {
  if (v.size() != s.h1()->dim())
    throw DimensionMismatch("split_field: v does not match the middle space");
  HodgeDecomposition h = hodge_decompose(s);
  return FieldSplit{h.p_exact.apply(v), h.p_harmonic.apply(v),
                    h.p_coexact.apply(v)};
}

/**
 * Per-resolution compactness proxy: the continuum compact-embedding
 * hypothesis degenerates, under discretization, to Poincare constants that
 * stay bounded and a harmonic dimension that stays put across refinement.
 */
struct RefinementReport {
  struct Level {
    Index resolution;
    double poincare_a0;
    double poincare_a1star;  // NaN when A1* has trivial range (e.g. d = 1)
    Index harmonic_dim;
  };
  std::vector<Level> levels;  // sorted by resolution, ascending
};

inline RefinementReport refinement_diagnostics(
    const std::function<ShortSequence(Index)>& builder,
    std::vector<Index> resolutions) {
  if (resolutions.size() < 2)
    throw InvalidSpec("refinement diagnostics need at least two resolutions");
  std::sort(resolutions.begin(), resolutions.end());
  RefinementReport report;
  for (Index n : resolutions) {
    ShortSequence s = builder(n);
    double p0 = poincare_constant(s.a0);
    double p1;
    try {
      p1 = poincare_constant(adjoint(s.a1));
    } catch (const TrivialRange&) {
      p1 = std::numeric_limits<double>::quiet_NaN();
    }
    report.levels.push_back({n, p0, p1, harmonic_dimension(s)});
  }
  return report;
}

}  // namespace dcx
