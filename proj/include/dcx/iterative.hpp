#pragma once

#include <functional>

#include "dcx/linops.hpp"

namespace dcx {

/**
 * Matrix-free companions to the dense decompositions: projector actions via
 * conjugate gradients on the gram-weighted normal equations, and harmonic
 * dimensions via sparse LDLT inertia. These carry the Hodge diagnostics to
 * grids whose middle spaces are too large for dense projector matrices.
 */

struct CGReport {
  Vector x;
  int iterations = 0;
  double relative_residual = 0.0;
};

/**
 * Preconditioned CG for an SPD (possibly singular, consistent) system.
 * Singular systems are fine: iterates never leave b's Krylov space, so the
 * kernel component of x stays zero and callers that only use A x are exact.
 */
inline CGReport pcg(const std::function<Vector(const Vector&)>& apply,
                    const Vector& b, const Vector& jacobi,
                    double tol = 1e-13, int max_iterations = 20000) {
  CGReport rep;
  const double bnorm = b.norm();
  rep.x = Vector::Zero(b.size());
  if (bnorm == 0.0) return rep;
  Vector r = b;
  Vector z = r.cwiseQuotient(jacobi);
  Vector p = z;
  double rz = r.dot(z);
  double best = r.norm() / bnorm;
  int since_best = 0;
  for (int it = 0; it < max_iterations; ++it) {
    Vector ap = apply(p);
    const double pap = p.dot(ap);
    if (pap <= 0.0) break;  // numerically exhausted the consistent part
    const double alpha = rz / pap;
    rep.x += alpha * p;
    r -= alpha * ap;
    rep.iterations = it + 1;
    const double rel = r.norm() / bnorm;
    if (rel < best) {
      best = rel;
      since_best = 0;
    } else if (++since_best > 50) {
      break;  // stagnated at the attainable accuracy
    }
    if (rel <= tol) break;
    z = r.cwiseQuotient(jacobi);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  rep.relative_residual = r.norm() / bnorm;
  return rep;
}

/**
 * Applies pi_rge(A) and pi_rge(A*) without forming projector matrices.
 * Works in weighted coordinates, where the adjoint is the plain transpose.
 */
class RangeProjectorAction {
 public:
  explicit RangeProjectorAction(const LinearMap& a)
      : dom_(a.domain()), cod_(a.codomain()), w_(a.weighted_sparse()),
        wt_(w_.transpose()) {
    col_sq_ = Vector::Zero(w_.cols());
    row_sq_ = Vector::Zero(w_.rows());
    for (int k = 0; k < w_.outerSize(); ++k)
      for (Sparse::InnerIterator it(w_, k); it; ++it) {
        col_sq_[it.col()] += it.value() * it.value();
        row_sq_[it.row()] += it.value() * it.value();
      }
    // Zero rows/columns would make the Jacobi preconditioner singular.
    const double floor = std::max(1e-300, 1e-14 * col_sq_.maxCoeff());
    col_sq_ = col_sq_.cwiseMax(floor);
    row_sq_ = row_sq_.cwiseMax(floor);
  }

  /** pi_rge(A) v in the codomain. */
  Vector onto_range(const Vector& v, double tol = 1e-13) const {
    Vector vhat = cod_->to_weighted(v);
    auto normal = [this](const Vector& x) { return wt_ * (w_ * x); };
    CGReport rep = pcg(normal, wt_ * vhat, col_sq_, tol);
    return cod_->from_weighted(Vector(w_ * rep.x));
  }

  /** pi_rge(A*) v in the domain. */
  Vector onto_adjoint_range(const Vector& v, double tol = 1e-13) const {
    Vector vhat = dom_->to_weighted(v);
    auto normal = [this](const Vector& x) { return w_ * (wt_ * x); };
    CGReport rep = pcg(normal, w_ * vhat, row_sq_, tol);
    return dom_->from_weighted(Vector(wt_ * rep.x));
  }

 private:
  SpacePtr dom_, cod_;
  Sparse w_, wt_;
  Vector col_sq_, row_sq_;
};

/**
 * pi_rge(A) for maps whose kernel is exactly the constants (periodic scalar
 * potentials): the singular normal matrix is pinned at one degree of freedom
 * and factored once, so each projection costs two triangular solves.
 */
class ConstantKernelRangeProjector {
 public:
  explicit ConstantKernelRangeProjector(const LinearMap& a)
      : dom_(a.domain()), cod_(a.codomain()), w_(a.weighted_sparse()) {
    const Index n = w_.cols();
    if (n < 2) throw InvalidSpec("pinned projector needs dim >= 2");
    Vector ones = dom_->to_weighted(Vector(Vector::Ones(n)));
    if ((w_ * ones).norm() > 1e-10 * ones.norm() * w_.norm())
      throw InvalidSpec("kernel is not the constants");
    Sparse normal = Sparse(w_.transpose()) * w_;
    // Drop row/column 0; the restriction is SPD because the kernel line is
    // transversal to the remaining coordinates.
    reduced_ = normal.bottomRightCorner(n - 1, n - 1);
    ldlt_.compute(reduced_);
    if (ldlt_.info() != Eigen::Success)
      throw NumericalFailure("pinned normal matrix factorization failed");
  }

  Vector onto_range(const Vector& v) const {
    Vector vhat = cod_->to_weighted(v);
    Vector b = Sparse(w_.transpose()) * vhat;
    Vector x = Vector::Zero(w_.cols());
    x.tail(w_.cols() - 1) = ldlt_.solve(Vector(b.tail(b.size() - 1)));
    // The pinned solution differs from the least-squares one by a kernel
    // vector only, which A annihilates, so A x is exact.
    return cod_->from_weighted(Vector(w_ * x));
  }

 private:
  SpacePtr dom_, cod_;
  Sparse w_;
  Sparse reduced_;
  Eigen::SimplicialLDLT<Sparse> ldlt_;
};

/** Largest eigenvalue of a sparse symmetric PSD matrix by power iteration. */
inline double lambda_max_sym(const Sparse& k, int iterations = 100) {
  if (k.rows() == 0) return 0.0;
  std::mt19937 rng(0xabcd);
  std::normal_distribution<double> gauss;
  Vector v(k.rows());
  for (Index i = 0; i < v.size(); ++i) v[i] = gauss(rng);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vector u = k * v;
    lambda = u.norm();
    if (lambda == 0.0) return 0.0;
    v = u / lambda;
  }
  return lambda;
}

/** Eigenvalue count of K below tau, by Sylvester inertia of K - tau I. */
inline Index eigs_below(const Sparse& k, double tau) {
  Sparse eye(k.rows(), k.cols());
  eye.setIdentity();
  Sparse shifted = k - tau * eye;
  Eigen::SimplicialLDLT<Sparse> ldlt(shifted);
  if (ldlt.info() != Eigen::Success)
    throw NumericalFailure("LDLT inertia factorization failed");
  Index negatives = 0;
  const Vector& d = ldlt.vectorD();
  for (Index i = 0; i < d.size(); ++i)
    if (d[i] < 0.0) ++negatives;
  return negatives;
}

/**
 * dim(ker(A0*) cap ker(A1)) at scale: the harmonic space is the kernel of
 * the stacked normal matrix K = W0 W0^T + W1^T W1 in weighted coordinates.
 * Counts eigenvalues below tau = tau_rel * lambda_max and insists the count
 * is stable across two decades around tau.
 */
inline Index harmonic_dimension_inertia(const LinearMap& a0,
                                        const LinearMap& a1,
                                        double tau_rel = 1e-8) {
  require_same_space(a0.codomain(), a1.domain(),
                     "harmonic dimension: middle space differs");
  Sparse w0 = a0.weighted_sparse();
  Sparse w1 = a1.weighted_sparse();
  Sparse k = Sparse(w0 * Sparse(w0.transpose())) +
             Sparse(Sparse(w1.transpose()) * w1);
  const double lmax = lambda_max_sym(k);
  if (lmax == 0.0) return k.rows();  // both maps vanish: everything harmonic
  const double tau = tau_rel * lmax;
  const Index at_tau = eigs_below(k, tau);
  if (eigs_below(k, tau / 100.0) != at_tau ||
      eigs_below(k, tau * 100.0) != at_tau)
    throw NumericalFailure(
        "harmonic dimension: inertia counts disagree near the threshold");
  return at_tau;
}

/** Matrix-free Hodge component actions on the middle space of (A0, A1). */
class HodgeActions {
 public:
  HodgeActions(const LinearMap& a0, const LinearMap& a1,
               bool pin_constant_kernel = false)
      : exact_cg_(a0), coexact_cg_(a1) {
    require_same_space(a0.codomain(), a1.domain(),
                       "hodge actions: middle space differs");
    if (pin_constant_kernel)
      pinned_.emplace(a0);
  }

  Vector exact(const Vector& v) const {
    if (pinned_) return pinned_->onto_range(v);
    return exact_cg_.onto_range(v);
  }
  Vector coexact(const Vector& v) const {
    return coexact_cg_.onto_adjoint_range(v);
  }
  Vector harmonic(const Vector& v) const {
    return v - exact(v) - coexact(v);
  }

 private:
  RangeProjectorAction exact_cg_;
  RangeProjectorAction coexact_cg_;
  std::optional<ConstantKernelRangeProjector> pinned_;
};

/**
 * Randomized cross-check of the harmonic dimension: project fixed-seed
 * Gaussian probes onto the harmonic space and count the numerically
 * independent directions via the spectrum of their Gram matrix. With
 * `probes` comfortably above the true dimension this recovers it with
 * overwhelming probability.
 */
inline Index harmonic_dimension_probe(const HodgeActions& actions,
                                      const SpacePtr& middle, int probes,
                                      unsigned seed = 0xd1ce) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss;
  Matrix h(middle->dim(), probes);
  for (int j = 0; j < probes; ++j) {
    Vector v(middle->dim());
    for (Index i = 0; i < v.size(); ++i) v[i] = gauss(rng);
    h.col(j) = actions.harmonic(v / v.norm());
  }
  Matrix gram = h.transpose() * middle->apply_gram(h);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const double lmax = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (lmax <= 1e-20) return 0;
  Index rank = 0;
  for (Index i = 0; i < eig.eigenvalues().size(); ++i)
    if (eig.eigenvalues()[i] > 1e-8 * lmax) ++rank;
  return rank;
}

}  // namespace dcx
