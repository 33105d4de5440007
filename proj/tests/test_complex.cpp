#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "dcx/grids.hpp"
#include "oracles.hpp"

using namespace dcx;
using oracles::random_vector;

namespace {

GridSpec periodic(int d, Index n) {
  GridSpec s;
  s.d = d;
  s.n = n;
  return s;
}

GridSpec dirichlet(int d, Index n) {
  GridSpec s = periodic(d, n);
  s.bc = BoundaryCondition::dirichlet;
  return s;
}

GridSpec annulus8() {
  return puncture(dirichlet(2, 8), CellBox{{3, 3, 0}, {5, 5, 0}});
}

}  // namespace

TEST_CASE("periodic de Rham pair composes to zero exactly") {
  ShortSequence s = build_derham(periodic(2, 8));
  CHECK(s.residual == 0.0);
}

TEST_CASE("zero A0 forms a sequence with any A1") {
  auto h0 = make_space(InnerProductSpace::identity(3));
  auto h1 = make_space(InnerProductSpace::identity(4));
  auto h2 = make_space(InnerProductSpace::identity(2));
  std::mt19937 rng(7);
  Matrix m(2, 4);
  for (Index i = 0; i < m.size(); ++i) m(i / 4, i % 4) = random_vector(1, rng)[0];
  ShortSequence s =
      validate_sequence(LinearMap::zero(h0, h1), LinearMap(h1, h2, m));
  CHECK(s.residual == 0.0);
}

TEST_CASE("identity composed with identity is rejected") {
  auto h = make_space(InnerProductSpace::identity(2));
  LinearMap eye(h, h, Matrix(Matrix::Identity(2, 2)));
  CHECK_THROWS_AS(validate_sequence(eye, eye), NotASequence);
  try {
    validate_sequence(eye, eye);
  } catch (const NotASequence& e) {
    CHECK(e.residual == Catch::Approx(1.0));
    CHECK(std::string(e.tag()) == "NotASequence");
  }
}

TEST_CASE("mismatched middle spaces are rejected before any numerics") {
  auto h0 = make_space(InnerProductSpace::identity(2));
  auto h1a = make_space(InnerProductSpace::identity(3));
  auto h1b = make_space(InnerProductSpace::diagonal(Vector::Constant(3, 2.0)));
  auto h2 = make_space(InnerProductSpace::identity(2));
  CHECK_THROWS_AS(
      validate_sequence(LinearMap::zero(h0, h1a), LinearMap::zero(h1b, h2)),
      SpaceMismatch);
}

TEST_CASE("dual sequence validates and dualizing twice returns the original") {
  ShortSequence s = build_derham(periodic(2, 8));
  ShortSequence dual = dual_sequence(s);
  CHECK(dual.residual <= 1e-12 * (1.0 + adjoint(s.a1).operator_norm() *
                                            adjoint(s.a0).operator_norm()));

  ShortSequence ddual = dual_sequence(dual);
  const double scale = s.a0.dense().cwiseAbs().maxCoeff();
  CHECK((ddual.a0.dense() - s.a0.dense()).cwiseAbs().maxCoeff() <=
        1e-12 * scale);
  CHECK((ddual.a1.dense() - s.a1.dense()).cwiseAbs().maxCoeff() <=
        1e-12 * scale);

  auto h0 = make_space(InnerProductSpace::identity(2));
  auto h1 = make_space(InnerProductSpace::identity(3));
  auto h2 = make_space(InnerProductSpace::identity(1));
  ShortSequence zeros =
      validate_sequence(LinearMap::zero(h0, h1), LinearMap::zero(h1, h2));
  ShortSequence dz = dual_sequence(zeros);
  CHECK(dz.a0.sparse().nonZeros() == 0);
  CHECK(dz.a1.sparse().nonZeros() == 0);
}

TEST_CASE("everything is harmonic when both maps vanish") {
  auto h0 = make_space(InnerProductSpace::identity(1));
  auto h1 = make_space(InnerProductSpace::identity(4));
  auto h2 = make_space(InnerProductSpace::identity(1));
  ShortSequence s =
      validate_sequence(LinearMap::zero(h0, h1), LinearMap::zero(h1, h2));
  HodgeDecomposition h = hodge_decompose(s);
  CHECK(h.harmonic_dim == 4);
  CHECK((h.p_harmonic.matrix - Matrix::Identity(4, 4)).norm() <= 1e-12);
  CHECK(h.p_exact.matrix.norm() <= 1e-12);
  CHECK(h.p_coexact.matrix.norm() <= 1e-12);
}

TEST_CASE("harmonic dimension counts torus and annulus Betti numbers") {
  CHECK(harmonic_dimension(build_derham(periodic(2, 8))) == 2);
  CHECK(harmonic_dimension(build_derham(periodic(3, 4))) == 3);
  CHECK(harmonic_dimension(build_derham(dirichlet(2, 4))) == 0);
  CHECK(harmonic_dimension(build_derham(annulus8())) == 1);
}

TEST_CASE("identity A0 leaves no harmonic fields") {
  auto h = make_space(InnerProductSpace::identity(3));
  auto h2 = make_space(InnerProductSpace::identity(2));
  LinearMap eye(h, h, Matrix(Matrix::Identity(3, 3)));
  ShortSequence s = validate_sequence(eye, LinearMap::zero(h, h2));
  CHECK(harmonic_dimension(s) == 0);
}

TEST_CASE("hodge projectors satisfy the decomposition algebra") {
  for (const GridSpec& spec : {periodic(2, 8), annulus8()}) {
    ShortSequence s = build_derham(spec);
    HodgeDecomposition h = hodge_decompose(s);
    const Index n = s.h1()->dim();

    for (const Projector* p : {&h.p_exact, &h.p_harmonic, &h.p_coexact}) {
      auto [idem, selfadj] = p->defects();
      CHECK(idem <= 1e-10);
      CHECK(selfadj <= 1e-10);
    }

    Matrix we = oracles::weighted_projector(h.p_exact);
    Matrix wh = oracles::weighted_projector(h.p_harmonic);
    Matrix wc = oracles::weighted_projector(h.p_coexact);
    CHECK((we * wh).norm() <= 1e-10);
    CHECK((we * wc).norm() <= 1e-10);
    CHECK((wh * wc).norm() <= 1e-10);
    CHECK((we + wh + wc - Matrix::Identity(n, n)).norm() <= 1e-10);

    // rank(p_harmonic) via the weighted trace (eigenvalues are 0/1).
    CHECK(std::llround(wh.trace()) == h.harmonic_dim);
  }
}

TEST_CASE("projector-product oracle agrees with the stacked-kernel rank") {
  for (const GridSpec& spec : {periodic(2, 8), periodic(3, 4), annulus8()}) {
    ShortSequence s = build_derham(spec);
    CHECK(oracles::harmonic_dim_product_oracle(s) == harmonic_dimension(s));
  }
}

TEST_CASE("inertia-based harmonic count matches the dense rank") {
  CHECK(harmonic_dimension_inertia(build_derham(periodic(2, 8)).a0,
                                   build_derham(periodic(2, 8)).a1) == 2);
  ShortSequence d3 = build_derham(periodic(3, 4));
  CHECK(harmonic_dimension_inertia(d3.a0, d3.a1) == 3);
  ShortSequence ann = build_derham(annulus8());
  CHECK(harmonic_dimension_inertia(ann.a0, ann.a1) == 1);
}

TEST_CASE("split_field reproduces pure fields") {
  ShortSequence s = build_derham(periodic(2, 8));
  std::mt19937 rng(11);

  Vector x = random_vector(s.h0()->dim(), rng);
  Vector v = s.a0.apply(x);
  const double nv = s.h1()->norm(v);
  FieldSplit split = split_field(s, v);
  CHECK(s.h1()->norm(split.exact - v) <= 1e-10 * nv);
  CHECK(s.h1()->norm(split.harmonic) <= 1e-10 * nv);
  CHECK(s.h1()->norm(split.coexact) <= 1e-10 * nv);

  HodgeDecomposition h = hodge_decompose(s);
  Vector w = h.p_harmonic.apply(random_vector(s.h1()->dim(), rng));
  REQUIRE(s.h1()->norm(w) > 1e-3);
  FieldSplit hs = split_field(s, w);
  CHECK(s.h1()->norm(hs.harmonic - w) <= 1e-10 * s.h1()->norm(w));
  CHECK(s.h1()->norm(hs.exact) <= 1e-10 * s.h1()->norm(w));
  CHECK(s.h1()->norm(hs.coexact) <= 1e-10 * s.h1()->norm(w));

  CHECK_THROWS_AS(split_field(s, Vector::Zero(3)), DimensionMismatch);
}

TEST_CASE("random splits are orthogonal, consistent and Pythagorean") {
  ShortSequence s = build_derham(periodic(2, 8));
  LinearMap a0s = adjoint(s.a0);
  const double op_scale = 1.0 + s.a1.operator_norm() + a0s.operator_norm();
  std::mt19937 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    Vector v = random_vector(s.h1()->dim(), rng);
    const double nv = s.h1()->norm(v);
    FieldSplit f = split_field(s, v);
    CHECK(s.h1()->norm(f.exact + f.harmonic + f.coexact - v) <= 1e-10 * nv);

    CHECK(std::abs(s.h1()->inner(f.exact, f.harmonic)) <= 1e-10 * nv * nv);
    CHECK(std::abs(s.h1()->inner(f.exact, f.coexact)) <= 1e-10 * nv * nv);
    CHECK(std::abs(s.h1()->inner(f.harmonic, f.coexact)) <= 1e-10 * nv * nv);

    const double pyth = nv * nv - s.h1()->inner(f.exact, f.exact) -
                        s.h1()->inner(f.harmonic, f.harmonic) -
                        s.h1()->inner(f.coexact, f.coexact);
    CHECK(std::abs(pyth) <= 1e-9 * nv * nv);

    // Membership: exact fields lie in ker(A1), coexact in ker(A0*),
    // harmonic in both.
    CHECK(s.h2()->norm(s.a1.apply(f.exact)) <= 1e-9 * op_scale * nv);
    CHECK(s.h0()->norm(a0s.apply(f.coexact)) <= 1e-9 * op_scale * nv);
    CHECK(s.h2()->norm(s.a1.apply(f.harmonic)) <= 1e-9 * op_scale * nv);
    CHECK(s.h0()->norm(a0s.apply(f.harmonic)) <= 1e-9 * op_scale * nv);
  }
}

TEST_CASE("three-term pairing identity holds on random pairs") {
  std::mt19937 rng(17);
  std::vector<ShortSequence> seqs;
  seqs.push_back(build_derham(periodic(2, 8)));
  seqs.push_back(build_derham(dirichlet(2, 4)));
  seqs.push_back(build_derham(periodic(3, 4)));
  for (const ShortSequence& s : seqs) {
    HodgeDecomposition h = hodge_decompose(s);
    for (int trial = 0; trial < 100; ++trial) {
      Vector u = random_vector(s.h1()->dim(), rng);
      Vector v = random_vector(s.h1()->dim(), rng);
      const double lhs = s.h1()->inner(u, v);
      const double rhs = s.h1()->inner(u, h.p_coexact.apply(v)) +
                         s.h1()->inner(h.p_exact.apply(u), v) +
                         s.h1()->inner(h.p_harmonic.apply(u),
                                       h.p_harmonic.apply(v));
      const double scale = 1.0 + s.h1()->norm(u) * s.h1()->norm(v);
      CHECK(std::abs(lhs - rhs) <= 1e-9 * scale);
    }
  }
}

TEST_CASE("duality preserves the harmonic dimension") {
  ShortSequence s = build_derham(periodic(2, 8));
  CHECK(harmonic_dimension(dual_sequence(s)) == harmonic_dimension(s));
}

TEST_CASE("refinement diagnostics track Poincare constants and stability") {
  const double pi = std::numbers::pi;
  auto closed_form = [&](Index n) {
    return (pi / static_cast<double>(n)) / std::sin(pi / static_cast<double>(n));
  };

  RefinementReport r1 = refinement_diagnostics(
      [](Index n) { return build_derham(GridSpec{1, n}); }, {16, 4, 8});
  REQUIRE(r1.levels.size() == 3);
  CHECK(r1.levels[0].resolution == 4);
  CHECK(r1.levels[1].resolution == 8);
  CHECK(r1.levels[2].resolution == 16);
  for (const auto& level : r1.levels) {
    CHECK(std::abs(level.poincare_a0 - closed_form(level.resolution)) <=
          1e-10);
    CHECK(level.harmonic_dim == 1);
    CHECK(std::isnan(level.poincare_a1star));  // d=1: A1 has no range
  }
  CHECK(r1.levels[0].poincare_a0 > r1.levels[1].poincare_a0);
  CHECK(r1.levels[1].poincare_a0 > r1.levels[2].poincare_a0);
  CHECK(r1.levels[2].poincare_a0 > 1.0);

  RefinementReport r2 = refinement_diagnostics(
      [](Index n) { return build_derham(GridSpec{2, n}); }, {4, 8, 16});
  for (const auto& level : r2.levels) {
    CHECK(level.harmonic_dim == 2);
    CHECK(std::abs(level.poincare_a0 - closed_form(level.resolution)) <=
          1e-10);
    CHECK(std::isfinite(level.poincare_a1star));
  }

  CHECK_THROWS_AS(refinement_diagnostics(
                      [](Index n) { return build_derham(GridSpec{1, n}); },
                      {8}),
                  InvalidSpec);
}
