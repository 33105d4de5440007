#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

namespace dcx {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Sparse = Eigen::SparseMatrix<double>;
using SparseInt = Eigen::SparseMatrix<std::int64_t>;
using Triplet = Eigen::Triplet<double>;
using TripletInt = Eigen::Triplet<std::int64_t>;

/** Base class of every error thrown by this library. */
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
  /** Short machine-readable tag, used by the CLI's JSON error payloads. */
  virtual const char* tag() const { return "Error"; }
};

#define DCX_ERROR(NAME)                                    \
  struct NAME : Error {                                    \
    using Error::Error;                                    \
    const char* tag() const override { return #NAME; }     \
  }

DCX_ERROR(SpaceMismatch);
DCX_ERROR(DimensionMismatch);
DCX_ERROR(UnsupportedBC);
DCX_ERROR(UnsupportedDim);
DCX_ERROR(InvalidSpec);
DCX_ERROR(TrivialRange);
DCX_ERROR(InvalidFamily);
DCX_ERROR(ParseError);
DCX_ERROR(ValidationError);
DCX_ERROR(IOError);
DCX_ERROR(NumericalFailure);

#undef DCX_ERROR

/** Composition A1*A0 failed the sequence bound; carries the measured residual. */
struct NotASequence : Error {
  double residual;
  explicit NotASequence(double res)
      : Error("composition residual " + std::to_string(res) +
              " exceeds the sequence bound"),
        residual(res) {}
  const char* tag() const override { return "NotASequence"; }
};

/** Neumaier-compensated accumulator; keeps long sums accurate to ~1 ulp. */
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/** Compensated dot product of two equally sized vectors. */
inline double compensated_dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionMismatch("dot: size mismatch");
  CompensatedSum s;
  for (Index i = 0; i < a.size(); ++i) s.add(a[i] * b[i]);
  return s.value();
}

/**
 * Finite-dimensional real Hilbert space: a dimension and a symmetric
 * positive-definite gram matrix. The continuum distinctions (dense domains,
 * closed ranges) collapse here: every subspace is closed and every map on the
 * space is everywhere defined and bounded.
 */
class InnerProductSpace {
 public:
  explicit InnerProductSpace(Sparse gram) : gram_(std::move(gram)) {
    validate();
    prepare();
  }
  explicit InnerProductSpace(const Matrix& gram)
      : InnerProductSpace(Sparse(gram.sparseView())) {
    // sparseView drops exact zeros only; values are taken verbatim.
  }

  /** Euclidean space: gram = identity. */
  static InnerProductSpace identity(Index dim) {
    Sparse g(dim, dim);
    g.setIdentity();
    return InnerProductSpace(std::move(g));
  }

  /** Diagonal gram with the given positive weights. */
  static InnerProductSpace diagonal(const Vector& weights) {
    Sparse g(weights.size(), weights.size());
    g.reserve(Eigen::VectorXi::Constant(static_cast<int>(weights.size()), 1));
    for (Index i = 0; i < weights.size(); ++i) g.insert(i, i) = weights[i];
    g.makeCompressed();
    return InnerProductSpace(std::move(g));
  }

  Index dim() const { return gram_.rows(); }
  const Sparse& gram() const { return gram_; }
  bool is_diagonal() const { return diagonal_.has_value(); }

  /** Gram-weighted inner product, compensated summation. */
  double inner(const Vector& x, const Vector& y) const {
    return compensated_dot(x, apply_gram(y));
  }
  double norm(const Vector& x) const { return std::sqrt(inner(x, x)); }

  Vector apply_gram(const Vector& x) const {
    check_dim(x.size());
    if (diagonal_) return diagonal_->cwiseProduct(x);
    return gram_ * x;
  }
  Matrix apply_gram(const Matrix& m) const {
    check_dim(m.rows());
    if (diagonal_) return diagonal_->asDiagonal() * m;
    return gram_ * m;
  }

  Vector solve_gram(const Vector& x) const {
    check_dim(x.size());
    if (diagonal_) return x.cwiseQuotient(*diagonal_);
    return llt_->solve(x);
  }
  Matrix solve_gram(const Matrix& m) const {
    check_dim(m.rows());
    if (diagonal_) return diagonal_->cwiseInverse().asDiagonal() * m;
    return llt_->solve(m);
  }
  /** Sparse gram solve, used to keep adjoints of sparse maps sparse. */
  Sparse solve_gram_sparse(const Sparse& m) const {
    check_dim(m.rows());
    if (diagonal_) return diagonal_->cwiseInverse().asDiagonal() * m;
    Sparse r = llt_->solve(m);
    return r;
  }

  // Weighted coordinates: with gram = F^T F, the map v -> F v carries the
  // gram inner product to the Euclidean one. F = L^T P for the sparse
  // Cholesky factorization P G P^T = L L^T (F = sqrt(gram) when diagonal).
  Vector to_weighted(const Vector& v) const {
    check_dim(v.size());
    if (diagonal_) return diag_sqrt_->cwiseProduct(v);
    return factor_upper() * (llt_->permutationP() * v);
  }
  Vector from_weighted(const Vector& w) const {
    check_dim(w.size());
    if (diagonal_) return w.cwiseQuotient(*diag_sqrt_);
    Vector z = factor_upper().triangularView<Eigen::Upper>().solve(w);
    return llt_->permutationP().transpose() * z;
  }
  Matrix to_weighted(const Matrix& m) const {
    check_dim(m.rows());
    if (diagonal_) return diag_sqrt_->asDiagonal() * m;
    return factor_upper() * (llt_->permutationP() * m);
  }
  Matrix from_weighted(const Matrix& m) const {
    check_dim(m.rows());
    if (diagonal_) return diag_sqrt_->cwiseInverse().asDiagonal() * m;
    Matrix z = factor_upper().triangularView<Eigen::Upper>().solve(m);
    return llt_->permutationP().transpose() * z;
  }

  /** F applied to sparse columns (to_weighted, column by column). */
  Sparse to_weighted_sparse(const Sparse& m) const {
    check_dim(m.rows());
    if (diagonal_) return diag_sqrt_->asDiagonal() * m;
    Sparse pm = llt_->permutationP() * m;
    return factor_upper() * pm;
  }
  /** F^{-T} applied from the right: returns M F^{-1}; keeps sparsity. */
  Sparse right_factor_solve(const Sparse& m) const {
    check_dim(m.cols());
    if (diagonal_) return m * diag_sqrt_->cwiseInverse().asDiagonal();
    // M F^{-1} = M P^T L^{-T}: solve L X^T = (M P^T)^T for X^T columnwise.
    Sparse mp = m * llt_->permutationP().transpose();
    Sparse xt = Sparse(mp.transpose());
    factor_lower().triangularView<Eigen::Lower>().solveInPlace(xt);
    return Sparse(xt.transpose());
  }

  /** Structural equality: same dimension and identical gram entries. */
  bool compatible(const InnerProductSpace& other) const {
    if (dim() != other.dim()) return false;
    Sparse diff = gram_ - other.gram_;
    for (int k = 0; k < diff.outerSize(); ++k)
      for (Sparse::InnerIterator it(diff, k); it; ++it)
        if (it.value() != 0.0) return false;
    return true;
  }

 private:
  void check_dim(Index n) const {
    if (n != dim()) throw DimensionMismatch("vector does not match space dim");
  }

  void validate() const {
    const Sparse& g = gram_;
    if (g.rows() != g.cols()) throw InvalidSpec("gram must be square");
    double scale = 0.0;
    for (int k = 0; k < g.outerSize(); ++k)
      for (Sparse::InnerIterator it(g, k); it; ++it)
        scale = std::max(scale, std::abs(it.value()));
    Sparse asym = Sparse(g.transpose()) - g;
    for (int k = 0; k < asym.outerSize(); ++k)
      for (Sparse::InnerIterator it(asym, k); it; ++it)
        if (std::abs(it.value()) > 1e-12 * std::max(1.0, scale))
          throw InvalidSpec("gram is not symmetric");
  }

  void prepare() {
    // Detect an exactly diagonal gram; grid spaces live on this fast path.
    bool diag = true;
    for (int k = 0; k < gram_.outerSize() && diag; ++k)
      for (Sparse::InnerIterator it(gram_, k); it; ++it)
        if (it.row() != it.col() && it.value() != 0.0) {
          diag = false;
          break;
        }
    if (diag) {
      Vector d = gram_.diagonal();
      for (Index i = 0; i < d.size(); ++i)
        if (!(d[i] > 0.0)) throw InvalidSpec("singular gram");
      diagonal_ = d;
      diag_sqrt_ = d.cwiseSqrt();
      return;
    }
    llt_ = std::make_shared<Eigen::SimplicialLLT<Sparse>>(gram_);
    if (llt_->info() != Eigen::Success) throw InvalidSpec("singular gram");
  }

  const Sparse& factor_lower() const {
    if (!lower_) lower_ = std::make_shared<Sparse>(llt_->matrixL());
    return *lower_;
  }
  const Sparse& factor_upper() const {
    if (!upper_) upper_ = std::make_shared<Sparse>(llt_->matrixU());
    return *upper_;
  }

  Sparse gram_;
  std::optional<Vector> diagonal_;
  std::optional<Vector> diag_sqrt_;
  std::shared_ptr<Eigen::SimplicialLLT<Sparse>> llt_;
  mutable std::shared_ptr<Sparse> lower_, upper_;
};

using SpacePtr = std::shared_ptr<const InnerProductSpace>;

inline SpacePtr make_space(InnerProductSpace s) {
  return std::make_shared<const InnerProductSpace>(std::move(s));
}

inline void require_same_space(const SpacePtr& a, const SpacePtr& b,
                               const char* what) {
  if (a == b) return;
  if (!a->compatible(*b)) throw SpaceMismatch(what);
}

/**
 * Linear map between two inner-product spaces, stored sparse. Maps assembled
 * from grid incidence carry an exact integer representation
 * entries = integer_part * scale, which compose() uses to keep compositions
 * like Curl*grad bit-exactly zero.
 */
class LinearMap {
 public:
  LinearMap(SpacePtr domain, SpacePtr codomain, Sparse entries)
      : dom_(std::move(domain)), cod_(std::move(codomain)),
        entries_(std::move(entries)) {
    check_shape();
  }
  LinearMap(SpacePtr domain, SpacePtr codomain, const Matrix& entries)
      : LinearMap(std::move(domain), std::move(codomain),
                  Sparse(entries.sparseView())) {}
  LinearMap(SpacePtr domain, SpacePtr codomain, SparseInt integer_part,
            double scale)
      : dom_(std::move(domain)), cod_(std::move(codomain)),
        integer_(std::move(integer_part)), scale_(scale) {
    entries_ = integer_->cast<double>() * scale;
    entries_.makeCompressed();
    check_shape();
  }

  static LinearMap zero(SpacePtr domain, SpacePtr codomain) {
    SparseInt z(codomain->dim(), domain->dim());
    return LinearMap(std::move(domain), std::move(codomain), std::move(z), 1.0);
  }

  const SpacePtr& domain() const { return dom_; }
  const SpacePtr& codomain() const { return cod_; }
  Index rows() const { return entries_.rows(); }
  Index cols() const { return entries_.cols(); }
  const Sparse& sparse() const { return entries_; }
  Matrix dense() const { return Matrix(entries_); }
  bool has_integer_form() const { return integer_.has_value(); }
  const SparseInt& integer_part() const { return *integer_; }
  double integer_scale() const { return scale_; }

  Vector apply(const Vector& x) const {
    if (x.size() != cols()) throw DimensionMismatch("apply: size mismatch");
    return entries_ * x;
  }
  Vector operator()(const Vector& x) const { return apply(x); }

  /** Gram-weighted coordinates of the map: F1 A F0^{-1}. */
  Matrix weighted_dense() const { return Matrix(weighted_sparse()); }
  Sparse weighted_sparse() const {
    Sparse w = cod_->to_weighted_sparse(entries_);
    return dom_->right_factor_solve(w);
  }

  /**
   * Adjoint with respect to both grams: entries(A*) = G0^{-1} A^T G1,
   * realized by a gram solve so sparse maps stay sparse. Satisfies
   * <A x, y>_cod = <x, A* y>_dom.
   */
  LinearMap adjoint() const {
    Sparse at = Sparse(entries_.transpose()) * cod_->gram();
    Sparse result = dom_->solve_gram_sparse(at);
    result.makeCompressed();
    return LinearMap(cod_, dom_, std::move(result));
  }

  /**
   * Gram-weighted operator norm (largest singular value). Dense SVD up to
   * moderate sizes, seeded power iteration on A^T A above.
   */
  double operator_norm() const {
    if (rows() == 0 || cols() == 0) return 0.0;
    Sparse w = weighted_sparse();
    if (std::max(rows(), cols()) <= 1024) {
      // Largest eigenvalue of the smaller-side gram; the symmetric solver
      // is reliable where Eigen 3.4's BDCSVD is not (degenerate spectra).
      Matrix wd(w);
      Matrix k = cols() <= rows() ? Matrix(wd.transpose() * wd)
                                  : Matrix(wd * wd.transpose());
      Eigen::SelfAdjointEigenSolver<Matrix> eig(k, Eigen::EigenvaluesOnly);
      const Index n = k.rows();
      return n ? std::sqrt(std::max(eig.eigenvalues()[n - 1], 0.0)) : 0.0;
    }
    std::mt19937 rng(0x5eed);
    std::normal_distribution<double> gauss;
    Vector v(cols());
    for (Index i = 0; i < v.size(); ++i) v[i] = gauss(rng);
    double nv = v.norm();
    if (nv == 0.0) return 0.0;
    v /= nv;
    double sigma2 = 0.0;
    for (int it = 0; it < 80; ++it) {
      Vector u = Sparse(w.transpose()) * (w * v);
      double nu = u.norm();
      if (nu == 0.0) return 0.0;
      sigma2 = nu;
      v = u / nu;
    }
    return std::sqrt(sigma2);
  }

 private:
  void check_shape() const {
    if (entries_.rows() != cod_->dim() || entries_.cols() != dom_->dim())
      throw DimensionMismatch("entry matrix shape does not match spaces");
  }

  SpacePtr dom_, cod_;
  Sparse entries_;
  std::optional<SparseInt> integer_;
  double scale_ = 1.0;
};

/**
 * Composition B after A. When both maps carry integer forms the integer
 * matrices are multiplied in exact int64 arithmetic, so discrete identities
 * like Curl grad = 0 produce a bit-exact zero map.
 */
inline LinearMap compose(const LinearMap& b, const LinearMap& a) {
  require_same_space(b.domain(), a.codomain(), "compose: middle space differs");
  if (b.has_integer_form() && a.has_integer_form()) {
    SparseInt prod = b.integer_part() * a.integer_part();
    prod.prune([](Index, Index, std::int64_t v) { return v != 0; });
    return LinearMap(a.domain(), b.codomain(), std::move(prod),
                     b.integer_scale() * a.integer_scale());
  }
  Sparse prod = b.sparse() * a.sparse();
  prod.makeCompressed();
  return LinearMap(a.domain(), b.codomain(), std::move(prod));
}

}  // namespace dcx
