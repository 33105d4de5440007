#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "dcx/core.hpp"

namespace dcx {

/** Columns are gram-orthonormal and span a subspace of `space`. */
struct OrthonormalBasis {
  SpacePtr space;
  Matrix columns;  // space->dim() x rank
  Index rank = 0;

  OrthonormalBasis(SpacePtr sp, Matrix cols)
      : space(std::move(sp)), columns(std::move(cols)), rank(columns.cols()) {
    if (columns.rows() != space->dim())
      throw DimensionMismatch("basis columns do not match space dim");
    verify_orthonormal();
  }

 private:
  // columns^T G columns = I_rank within 1e-10; cheap (rank^2 * dim).
  void verify_orthonormal() const {
    if (rank == 0) return;
    Matrix g = columns.transpose() * space->apply_gram(columns);
    g -= Matrix::Identity(rank, rank);
    if (g.cwiseAbs().maxCoeff() > 1e-10)
      throw NumericalFailure("basis columns are not gram-orthonormal");
  }
};

/** Idempotent, gram-self-adjoint matrix on `space`. */
struct Projector {
  SpacePtr space;
  Matrix matrix;  // space->dim() square

  Vector apply(const Vector& v) const { return matrix * v; }

  /** Max-norm defects of the two projector invariants (idempotence,
      gram self-adjointness); asserted by tests rather than the ctor so
      decompositions are not paid for twice. */
  std::pair<double, double> defects() const {
    const Index n = matrix.rows();
    if (n == 0) return {0.0, 0.0};
    double idem = (matrix * matrix - matrix).cwiseAbs().maxCoeff();
    Matrix gp = space->apply_gram(matrix);
    double selfadj = (gp - gp.transpose()).cwiseAbs().maxCoeff();
    return {idem, selfadj};
  }
};

/**
 * Restriction of A to rge(A*) -> rge(A) in gram-orthonormal bases. Always
 * square and invertible; sigma_min is 1/(Poincare constant of A). A rank-0
 * map yields a 0x0 matrix and sigma_min = +infinity by convention.
 */
struct ReducedOperator {
  OrthonormalBasis source_basis;  // spans rge(A*)
  OrthonormalBasis target_basis;  // spans rge(A)
  Matrix matrix;
  double sigma_min = std::numeric_limits<double>::infinity();
};

/** Thin wrapper so call sites read like the math: adjoint(A). */
inline LinearMap adjoint(const LinearMap& a) { return a.adjoint(); }

namespace detail {

/** SVD of the gram-weighted matrix F1 A F0^{-1} with a rank decision. */
struct WeightedSVD {
  Matrix u;        // as requested: thin or full
  Matrix v;        // as requested: thin or full
  Vector sigma;
  Index rank = 0;
};

inline Index decide_rank(const Vector& sigma, double rank_tol) {
  // rank_tol <= 0 selects the default relative threshold 1e-10 * sigma_max.
  const double smax = sigma.size() ? sigma[0] : 0.0;
  const double tol = rank_tol > 0.0 ? rank_tol : 1e-10 * smax;
  Index r = 0;
  while (r < sigma.size() && sigma[r] > tol) ++r;
  return r;
}

/** Eigendecomposition of a symmetric PSD matrix, eigenvalues descending,
    negatives clamped to zero and square-rooted into singular values. */
inline std::pair<Vector, Matrix> psd_spectrum(const Matrix& k) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
  if (eig.info() != Eigen::Success)
    throw NumericalFailure("symmetric eigendecomposition did not converge");
  const Index n = k.rows();
  Vector sigma(n);
  Matrix vecs(n, n);
  for (Index i = 0; i < n; ++i) {
    sigma[i] = std::sqrt(std::max(eig.eigenvalues()[n - 1 - i], 0.0));
    vecs.col(i) = eig.eigenvectors().col(n - 1 - i);
  }
  return {std::move(sigma), std::move(vecs)};
}

/**
 * Replaces the squared-spectrum singular values by ||W q_i|| (first-order
 * exact Rayleigh values) and restores descending order. The gram route
 * alone would leave ~sqrt(eps)*sigma_max noise on the zero singular
 * values, drowning the default 1e-10 rank threshold; the unsquared norms
 * bring the noise floor back to ~eps*sigma_max.
 */
inline void refine(const Matrix& w, Matrix& q, Vector& sigma) {
  Matrix wq = w * q;
  for (Index i = 0; i < sigma.size(); ++i) sigma[i] = wq.col(i).norm();
  std::vector<Index> order(sigma.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return sigma[a] > sigma[b]; });
  Vector sigma_sorted(sigma.size());
  Matrix q_sorted(q.rows(), q.cols());
  for (Index i = 0; i < sigma.size(); ++i) {
    sigma_sorted[i] = sigma[order[i]];
    q_sorted.col(i) = q.col(order[i]);
  }
  sigma = std::move(sigma_sorted);
  q = std::move(q_sorted);
}

inline WeightedSVD weighted_svd(const LinearMap& a, double rank_tol,
                                unsigned flags) {
  WeightedSVD out;
  if (a.rows() == 0 || a.cols() == 0) {
    // Degenerate shapes never reach Eigen; rank is 0 and the requested
    // full factors are identities of the right size.
    if (flags & Eigen::ComputeFullU) out.u = Matrix::Identity(a.rows(), a.rows());
    if (flags & Eigen::ComputeFullV) out.v = Matrix::Identity(a.cols(), a.cols());
    out.sigma = Vector(0);
    return out;
  }

  // The factors come from a symmetric eigendecomposition of W^T W or W W^T
  // rather than a bidiagonalization SVD: Eigen 3.4's BDCSVD returns an
  // inconsistent U/sigma/V triple on the highly degenerate spectra the
  // grid operators produce (torus symmetry repeats singular values dozens
  // of times), which a reconstruction-residual check exposes. The grams
  // square the condition number, but every rank decision here has a gap of
  // many orders of magnitude.
  const Matrix w = a.weighted_dense();
  const bool want_u = flags & (Eigen::ComputeFullU | Eigen::ComputeThinU);
  const bool want_v = flags & (Eigen::ComputeFullV | Eigen::ComputeThinV);

  bool right;  // eig of W^T W (the V side) or of W W^T (the U side)?
  if (flags & Eigen::ComputeFullV)
    right = true;  // the null space lives in full V
  else if (want_u != want_v)
    right = want_v;
  else
    right = a.cols() <= a.rows();  // both or neither: smaller gram

  if (right) {
    auto [sigma0, v] = psd_spectrum(w.transpose() * w);
    refine(w, v, sigma0);
    out.rank = decide_rank(sigma0, rank_tol);
    if (want_u)
      out.u = (w * v.leftCols(out.rank)) *
              sigma0.head(out.rank).cwiseInverse().asDiagonal();
    if (want_v) out.v = std::move(v);
    out.sigma = std::move(sigma0);
  } else {
    Matrix wt = w.transpose();
    auto [sigma0, u] = psd_spectrum(w * wt);
    refine(wt, u, sigma0);
    out.rank = decide_rank(sigma0, rank_tol);
    if (want_v)
      out.v = (wt * u.leftCols(out.rank)) *
              sigma0.head(out.rank).cwiseInverse().asDiagonal();
    if (want_u) out.u = std::move(u);
    out.sigma = std::move(sigma0);
  }
  return out;
}

}  // namespace detail

/**
 * Gram-orthonormal basis of ker(A). rank_tol is an absolute singular-value
 * threshold; pass 0 for the default 1e-10 * sigma_max.
 */
inline OrthonormalBasis kernel_basis(const LinearMap& a, double rank_tol = 0.0) {
  if (a.rows() == 0)  // everything is kernel; F^{-1} columns are orthonormal
    return OrthonormalBasis(
        a.domain(),
        a.domain()->from_weighted(Matrix(Matrix::Identity(a.cols(), a.cols()))));
  auto svd = detail::weighted_svd(a, rank_tol, Eigen::ComputeFullV);
  const Index n = a.cols();
  Matrix cols = a.domain()->from_weighted(
      Matrix(svd.v.rightCols(n - svd.rank)));
  return OrthonormalBasis(a.domain(), std::move(cols));
}

/** Gram-orthonormal basis of rge(A) in the codomain. */
inline OrthonormalBasis range_basis(const LinearMap& a, double rank_tol = 0.0) {
  if (a.rows() == 0 || a.cols() == 0)
    return OrthonormalBasis(a.codomain(), Matrix(a.rows(), 0));
  auto svd = detail::weighted_svd(a, rank_tol, Eigen::ComputeThinU);
  Matrix cols = a.codomain()->from_weighted(Matrix(svd.u.leftCols(svd.rank)));
  return OrthonormalBasis(a.codomain(), std::move(cols));
}

/** Gram-orthogonal projector onto the span of a basis: P = C C^T G. */
inline Projector projector_onto(const OrthonormalBasis& b) {
  const Index n = b.space->dim();
  if (b.rank == 0) return Projector{b.space, Matrix::Zero(n, n)};
  Matrix p = b.columns * b.space->apply_gram(b.columns).transpose();
  return Projector{b.space, std::move(p)};
}

/**
 * The invertible core of A: B = iota*_rge(A) A iota_rge(A*), expressed in
 * gram-orthonormal bases of rge(A*) and rge(A).
 */
inline ReducedOperator reduced_operator(const LinearMap& a,
                                        double rank_tol = 0.0) {
  if (a.rows() == 0 || a.cols() == 0) {
    return ReducedOperator{
        OrthonormalBasis(a.domain(), Matrix(a.cols(), 0)),
        OrthonormalBasis(a.codomain(), Matrix(a.rows(), 0)), Matrix(0, 0),
        std::numeric_limits<double>::infinity()};
  }
  auto svd = detail::weighted_svd(a, rank_tol,
                                  Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Index r = svd.rank;
  OrthonormalBasis source(a.domain(),
                          a.domain()->from_weighted(Matrix(svd.v.leftCols(r))));
  OrthonormalBasis target(
      a.codomain(), a.codomain()->from_weighted(Matrix(svd.u.leftCols(r))));
  Matrix b = target.columns.transpose() *
             a.codomain()->apply_gram(Matrix(a.sparse() * source.columns));
  double smin = r > 0 ? svd.sigma[r - 1]
                      : std::numeric_limits<double>::infinity();
  return ReducedOperator{std::move(source), std::move(target), std::move(b),
                         smin};
}

/**
 * Solve A x = pi_rge(A) y for the unique x in rge(A*): the least-squares
 * solution with the kernel component removed.
 */
inline Vector reduced_solve(const ReducedOperator& b, const Vector& y) {
  if (y.size() != b.target_basis.space->dim())
    throw DimensionMismatch("reduced_solve: y does not match codomain");
  if (b.matrix.rows() == 0)
    return Vector::Zero(b.source_basis.space->dim());
  // Coordinates of pi_rge(A) y in the target basis, then one small solve.
  Vector rhs = b.target_basis.columns.transpose() *
               b.target_basis.space->apply_gram(y);
  Vector coeff = b.matrix.colPivHouseholderQr().solve(rhs);
  return b.source_basis.columns * coeff;
}

/**
 * Smallest constant c with ||phi|| <= c ||A phi|| for phi orthogonal to
 * ker(A); equals 1/sigma_min of the reduced operator.
 */
inline double poincare_constant(const LinearMap& a, double rank_tol = 0.0) {
  auto b = reduced_operator(a, rank_tol);
  if (b.matrix.rows() == 0)
    throw TrivialRange("trivial range: no Poincaré constant");
  return 1.0 / b.sigma_min;
}

}  // namespace dcx
