#pragma once

#include <array>
#include <numbers>
#include <set>
#include <utility>
#include <vector>

#include "dcx/sequence.hpp"

namespace dcx {

enum class BoundaryCondition { periodic, dirichlet };

/**
 * Axis-aligned box of cells, half-open in cell coordinates: [lo, hi) per
 * axis. Used to deactivate cells (punctured domains).
 */
struct CellBox {
  std::array<Index, 3> lo{0, 0, 0};
  std::array<Index, 3> hi{0, 0, 0};
};

/**
 * Uniform grid on [0, L]^d with N cells per axis. The mask lists
 * deactivated cells (flat indices); only meaningful with Dirichlet
 * boundary conditions.
 */
struct GridSpec {
  int d = 2;
  Index n = 8;
  double length = 2.0 * std::numbers::pi;
  BoundaryCondition bc = BoundaryCondition::periodic;
  std::set<Index> mask;

  double h() const { return length / static_cast<double>(n); }
  Index cells() const {
    Index c = 1;
    for (int a = 0; a < d; ++a) c *= n;
    return c;
  }

  void validate() const {
    if (d < 1 || d > 3) throw InvalidSpec("grid dimension must be 1, 2 or 3");
    if (n < 2) throw InvalidSpec("grid needs at least 2 cells per axis");
    if (!(length > 0.0)) throw InvalidSpec("grid length must be positive");
    if (bc == BoundaryCondition::dirichlet && n < 3)
      throw InvalidSpec("dirichlet grids need at least 3 cells per axis");
    if (!mask.empty()) {
      if (bc != BoundaryCondition::periodic &&
          static_cast<Index>(mask.size()) >= cells())
        throw InvalidSpec("masked region must leave the active domain nonempty");
      if (bc == BoundaryCondition::periodic)
        throw InvalidSpec("cell masks require dirichlet boundary conditions");
      for (Index c : mask)
        if (c < 0 || c >= cells()) throw InvalidSpec("mask cell out of range");
    }
  }
};

/** Pointwise field kinds carried on grid points. */
enum class FieldKind { scalar, vector, antisym2, sym_matrix, dev_matrix };

/**
 * Storage layout of a field kind in dimension d. Matrix-valued kinds store
 * independent components only; dev_matrix keeps 8 of the 9 entries of a
 * trace-free 3x3 matrix (the (3,3) entry is minus the sum of the other two
 * diagonal entries).
 */
struct FieldLayout {
  FieldKind kind;
  int d;

  Index components() const {
    switch (kind) {
      case FieldKind::scalar:
        return 1;
      case FieldKind::vector:
        return d;
      case FieldKind::antisym2:
        return static_cast<Index>(d) * (d - 1) / 2;
      case FieldKind::sym_matrix:
        return static_cast<Index>(d) * (d + 1) / 2;
      case FieldKind::dev_matrix:
        if (d != 3) throw UnsupportedDim("dev fields require d = 3");
        return 8;
    }
    throw InvalidSpec("unknown field kind");
  }
};

namespace detail {

/** Flat indexing of periodic grid points, axis 0 fastest. */
struct PointIndexer {
  int d;
  Index n;

  Index points() const {
    Index p = 1;
    for (int a = 0; a < d; ++a) p *= n;
    return p;
  }
  Index shift(Index flat, int axis, Index by) const {
    Index stride = 1;
    for (int a = 0; a < axis; ++a) stride *= n;
    const Index coord = (flat / stride) % n;
    const Index wrapped = ((coord + by) % n + n) % n;
    return flat + (wrapped - coord) * stride;
  }
};

inline Index sym_component(int j, int k) {
  // Order (11, 22, 33, 12, 13, 23); valid for d = 3.
  if (j == k) return j;
  const int a = std::min(j, k), b = std::max(j, k);
  if (a == 0 && b == 1) return 3;
  if (a == 0 && b == 2) return 4;
  return 5;
}

inline Index dev_component(int j, int k) {
  // Order (11, 22, 12, 13, 21, 23, 31, 32); (3,3) is implicit.
  static constexpr int table[3][3] = {{0, 2, 3}, {4, 1, 5}, {6, 7, -1}};
  const int c = table[j][k];
  if (c < 0) throw InvalidSpec("dev component (3,3) is implicit");
  return c;
}

}  // namespace detail

/** Inner-product space of a periodic grid field: cell-volume gram h^d,
    with the component couplings that make stored norms equal full-matrix
    Frobenius norms (factor 2 on antisym2 and mixed sym components; a 2x2
    block on the stored diagonal dev components). */
inline SpacePtr field_space(const GridSpec& spec, FieldKind kind) {
  spec.validate();
  if (spec.bc != BoundaryCondition::periodic)
    throw UnsupportedBC("field_space covers periodic grids only");
  const FieldLayout layout{kind, spec.d};
  const detail::PointIndexer ix{spec.d, spec.n};
  const Index np = ix.points();
  const Index comps = layout.components();
  const double vol = std::pow(spec.h(), spec.d);

  if (kind == FieldKind::dev_matrix) {
    std::vector<Triplet> trips;
    trips.reserve(4 * np + 6 * np);
    for (Index p = 0; p < np; ++p) {
      trips.emplace_back(p, p, 2.0 * vol);
      trips.emplace_back(p, np + p, vol);
      trips.emplace_back(np + p, p, vol);
      trips.emplace_back(np + p, np + p, 2.0 * vol);
      for (Index c = 2; c < comps; ++c)
        trips.emplace_back(c * np + p, c * np + p, vol);
    }
    Sparse g(comps * np, comps * np);
    g.setFromTriplets(trips.begin(), trips.end());
    return make_space(InnerProductSpace(std::move(g)));
  }

  Vector weights(comps * np);
  for (Index c = 0; c < comps; ++c) {
    double w = vol;
    if (kind == FieldKind::antisym2) w = 2.0 * vol;
    if (kind == FieldKind::sym_matrix && c >= spec.d) w = 2.0 * vol;
    weights.segment(c * np, np).setConstant(w);
  }
  return make_space(InnerProductSpace::diagonal(weights));
}

namespace detail {

inline ShortSequence build_derham_periodic(const GridSpec& spec) {
  const PointIndexer ix{spec.d, spec.n};
  const Index np = ix.points();
  const double h = spec.h();
  auto scalars = field_space(spec, FieldKind::scalar);
  auto vectors = field_space(spec, FieldKind::vector);
  auto antisym = field_space(spec, FieldKind::antisym2);

  // A0 = forward-difference gradient, one block of rows per component.
  std::vector<TripletInt> g;
  g.reserve(2 * spec.d * np);
  for (int a = 0; a < spec.d; ++a)
    for (Index p = 0; p < np; ++p) {
      g.emplace_back(a * np + p, ix.shift(p, a, 1), 1);
      g.emplace_back(a * np + p, p, -1);
    }
  SparseInt grad_ints(spec.d * np, np);
  grad_ints.setFromTriplets(g.begin(), g.end());
  LinearMap a0(scalars, vectors, std::move(grad_ints), 1.0 / h);

  // A1 = curl rows c_{jk} = D_k u_j - D_j u_k for the pairs j < k.
  std::vector<TripletInt> c;
  std::vector<std::pair<int, int>> pairs;
  for (int j = 0; j < spec.d; ++j)
    for (int k = j + 1; k < spec.d; ++k) pairs.emplace_back(j, k);
  c.reserve(4 * pairs.size() * np);
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    const auto [j, k] = pairs[pi];
    const Index row0 = static_cast<Index>(pi) * np;
    for (Index p = 0; p < np; ++p) {
      c.emplace_back(row0 + p, j * np + ix.shift(p, k, 1), 1);
      c.emplace_back(row0 + p, j * np + p, -1);
      c.emplace_back(row0 + p, k * np + ix.shift(p, j, 1), -1);
      c.emplace_back(row0 + p, k * np + p, 1);
    }
  }
  SparseInt curl_ints(static_cast<Index>(pairs.size()) * np, spec.d * np);
  curl_ints.setFromTriplets(c.begin(), c.end());
  LinearMap a1(vectors, antisym, std::move(curl_ints), 1.0 / h);

  return validate_sequence(std::move(a0), std::move(a1));
}

/** Incidence enumeration of a Dirichlet (optionally punctured) grid. */
struct DirichletMesh {
  int d;
  Index n;                      // cells per axis; vertices run 0..n
  std::vector<Index> vert_id;   // interior vertices, -1 otherwise
  std::vector<std::vector<Index>> edge_id;  // per axis, -1 if dropped
  Index n_vert = 0, n_edge = 0, n_face = 0;
  std::vector<std::pair<int, int>> face_pairs;
  std::vector<std::vector<Index>> face_id;  // per pair, -1 if dropped

  Index vstride(int axis) const {
    Index s = 1;
    for (int a = 0; a < axis; ++a) s *= (n + 1);
    return s;
  }
  Index vpoints() const {
    Index p = 1;
    for (int a = 0; a < d; ++a) p *= (n + 1);
    return p;
  }
  std::array<Index, 3> vcoords(Index flat) const {
    std::array<Index, 3> c{0, 0, 0};
    for (int a = 0; a < d; ++a) {
      c[a] = flat % (n + 1);
      flat /= (n + 1);
    }
    return c;
  }
  Index vflat(const std::array<Index, 3>& c) const {
    Index f = 0;
    for (int a = d - 1; a >= 0; --a) f = f * (n + 1) + c[a];
    return f;
  }
};

inline DirichletMesh enumerate_dirichlet(const GridSpec& spec) {
  DirichletMesh m;
  m.d = spec.d;
  m.n = spec.n;

  auto cell_active = [&](const std::array<Index, 3>& c) {
    Index flat = 0;
    for (int a = spec.d - 1; a >= 0; --a) {
      if (c[a] < 0 || c[a] >= spec.n) return false;
      flat = flat * spec.n + c[a];
    }
    return spec.mask.count(flat) == 0;
  };

  // A vertex is interior iff every one of its 2^d adjacent cells is active;
  // outer-boundary vertices fail automatically (missing cells).
  const Index nv = m.vpoints();
  m.vert_id.assign(nv, -1);
  for (Index v = 0; v < nv; ++v) {
    const auto c = m.vcoords(v);
    bool interior = true;
    for (int corner = 0; corner < (1 << spec.d) && interior; ++corner) {
      std::array<Index, 3> cell{0, 0, 0};
      for (int a = 0; a < spec.d; ++a) cell[a] = c[a] - ((corner >> a) & 1);
      if (!cell_active(cell)) interior = false;
    }
    if (interior) m.vert_id[v] = m.n_vert++;
  }

  // Edges keep a degree of freedom iff at least one endpoint is interior.
  m.edge_id.assign(spec.d, std::vector<Index>(nv, -1));
  for (int a = 0; a < spec.d; ++a)
    for (Index v = 0; v < nv; ++v) {
      const auto c = m.vcoords(v);
      if (c[a] >= spec.n) continue;
      auto head = c;
      head[a] += 1;
      if (m.vert_id[v] >= 0 || m.vert_id[m.vflat(head)] >= 0)
        m.edge_id[a][v] = m.n_edge++;
    }

  // Faces keep a degree of freedom iff adjacent to an active cell.
  for (int a = 0; a < spec.d; ++a)
    for (int b = a + 1; b < spec.d; ++b) m.face_pairs.emplace_back(a, b);
  m.face_id.assign(m.face_pairs.size(), std::vector<Index>(nv, -1));
  for (std::size_t pi = 0; pi < m.face_pairs.size(); ++pi) {
    const auto [a, b] = m.face_pairs[pi];
    for (Index v = 0; v < nv; ++v) {
      const auto c = m.vcoords(v);
      if (c[a] >= spec.n || c[b] >= spec.n) continue;
      bool adjacent_active = false;
      if (spec.d == 2) {
        adjacent_active = cell_active(c);
      } else {
        const int other = 3 - a - b;
        for (Index off = -1; off <= 0 && !adjacent_active; ++off) {
          auto cell = c;
          cell[other] += off;
          adjacent_active = cell_active(cell);
        }
      }
      if (adjacent_active) m.face_id[pi][v] = m.n_face++;
    }
  }
  return m;
}

inline ShortSequence build_derham_dirichlet(const GridSpec& spec) {
  const DirichletMesh m = enumerate_dirichlet(spec);
  if (m.n_vert == 0)
    throw InvalidSpec("no interior vertices: domain is all boundary");
  const double h = spec.h();
  const double vol = std::pow(h, spec.d);

  auto h0 = make_space(InnerProductSpace::diagonal(
      Vector::Constant(m.n_vert, vol)));
  auto h1 = make_space(InnerProductSpace::diagonal(
      Vector::Constant(m.n_edge, vol)));
  auto h2 = make_space(InnerProductSpace::diagonal(
      Vector::Constant(m.n_face, 2.0 * vol)));

  // A0: vertex differences along kept edges; boundary values are zero.
  std::vector<TripletInt> g;
  g.reserve(2 * m.n_edge);
  for (int a = 0; a < spec.d; ++a)
    for (Index v = 0; v < m.vpoints(); ++v) {
      const Index e = m.edge_id[a][v];
      if (e < 0) continue;
      auto head = m.vcoords(v);
      head[a] += 1;
      const Index hv = m.vert_id[m.vflat(head)];
      const Index tv = m.vert_id[v];
      if (hv >= 0) g.emplace_back(e, hv, 1);
      if (tv >= 0) g.emplace_back(e, tv, -1);
    }
  SparseInt grad_ints(m.n_edge, m.n_vert);
  grad_ints.setFromTriplets(g.begin(), g.end());
  LinearMap a0(h0, h1, std::move(grad_ints), 1.0 / h);

  // A1: face circulations c_{ab} = D_b u_a - D_a u_b; dropped edges read 0.
  std::vector<TripletInt> c;
  c.reserve(4 * m.n_face);
  for (std::size_t pi = 0; pi < m.face_pairs.size(); ++pi) {
    const auto [a, b] = m.face_pairs[pi];
    for (Index v = 0; v < m.vpoints(); ++v) {
      const Index f = m.face_id[pi][v];
      if (f < 0) continue;
      const auto base = m.vcoords(v);
      auto va = base;
      va[a] += 1;
      auto vb = base;
      vb[b] += 1;
      const Index ea_lo = m.edge_id[a][v];
      const Index ea_hi = m.edge_id[a][m.vflat(vb)];
      const Index eb_lo = m.edge_id[b][v];
      const Index eb_hi = m.edge_id[b][m.vflat(va)];
      if (ea_hi >= 0) c.emplace_back(f, ea_hi, 1);
      if (ea_lo >= 0) c.emplace_back(f, ea_lo, -1);
      if (eb_hi >= 0) c.emplace_back(f, eb_hi, -1);
      if (eb_lo >= 0) c.emplace_back(f, eb_lo, 1);
    }
  }
  SparseInt curl_ints(m.n_face, m.n_edge);
  curl_ints.setFromTriplets(c.begin(), c.end());
  LinearMap a1(h1, h2, std::move(curl_ints), 1.0 / h);

  return validate_sequence(std::move(a0), std::move(a1));
}

}  // namespace detail

/**
 * The discrete de Rham pair (grad, Curl). Periodic grids use colocated
 * forward differences (commuting shifts make Curl grad = 0 exact);
 * Dirichlet grids use the incidence construction with boundary degrees of
 * freedom removed. In both cases the composition is bit-exactly zero.
 */
inline ShortSequence build_derham(const GridSpec& spec) {
  spec.validate();
  if (spec.bc == BoundaryCondition::periodic)
    return detail::build_derham_periodic(spec);
  return detail::build_derham_dirichlet(spec);
}

/**
 * The two periodic grad-grad sequences on a 3D grid:
 *   (second gradient: scalar -> sym,  row curl restricted to sym -> dev)
 *   (row curl on sym -> dev,          row divergence on dev -> vector)
 * Only periodic boundary conditions are supported; the commuting forward
 * differences make both compositions and the trace identity exact.
 */
inline std::pair<ShortSequence, ShortSequence> build_gradgrad(
    const GridSpec& spec) {
  spec.validate();
  if (spec.d != 3) throw UnsupportedDim("grad-grad complex requires d = 3");
  if (spec.bc != BoundaryCondition::periodic)
    throw UnsupportedBC("grad-grad complex supports periodic grids only");

  const detail::PointIndexer ix{3, spec.n};
  const Index np = ix.points();
  const double h = spec.h();
  auto scalars = field_space(spec, FieldKind::scalar);
  auto sym = field_space(spec, FieldKind::sym_matrix);
  auto dev = field_space(spec, FieldKind::dev_matrix);
  auto vectors = field_space(spec, FieldKind::vector);

  // Second gradient: component (j,k) is D_j D_k phi (forward differences).
  std::vector<TripletInt> gg;
  gg.reserve(4 * 6 * np);
  const std::array<std::pair<int, int>, 6> sym_pairs{
      {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}}};
  for (Index ci = 0; ci < 6; ++ci) {
    const auto [a, b] = sym_pairs[ci];
    for (Index p = 0; p < np; ++p) {
      const Index row = ci * np + p;
      if (a == b) {
        gg.emplace_back(row, ix.shift(p, a, 2), 1);
        gg.emplace_back(row, ix.shift(p, a, 1), -2);
        gg.emplace_back(row, p, 1);
      } else {
        gg.emplace_back(row, ix.shift(ix.shift(p, a, 1), b, 1), 1);
        gg.emplace_back(row, ix.shift(p, a, 1), -1);
        gg.emplace_back(row, ix.shift(p, b, 1), -1);
        gg.emplace_back(row, p, 1);
      }
    }
  }
  SparseInt gg_ints(6 * np, np);
  gg_ints.setFromTriplets(gg.begin(), gg.end());
  LinearMap gradgrad(scalars, sym, std::move(gg_ints), 1.0 / (h * h));

  // Row-wise curl of a symmetric field; lands in the trace-free matrices.
  // Stored dev component (j,i) is (curl of row j)_i =
  // D_{i+1} M_{j,i+2} - D_{i+2} M_{j,i+1} (cyclic axis arithmetic).
  std::vector<TripletInt> cs;
  cs.reserve(4 * 8 * np);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) {
      if (j == 2 && i == 2) continue;  // implicit component
      const Index row0 = detail::dev_component(j, i) * np;
      const int i1 = (i + 1) % 3, i2 = (i + 2) % 3;
      const Index col_hi = detail::sym_component(j, i2) * np;
      const Index col_lo = detail::sym_component(j, i1) * np;
      for (Index p = 0; p < np; ++p) {
        cs.emplace_back(row0 + p, col_hi + ix.shift(p, i1, 1), 1);
        cs.emplace_back(row0 + p, col_hi + p, -1);
        cs.emplace_back(row0 + p, col_lo + ix.shift(p, i2, 1), -1);
        cs.emplace_back(row0 + p, col_lo + p, 1);
      }
    }
  SparseInt cs_ints(8 * np, 6 * np);
  cs_ints.setFromTriplets(cs.begin(), cs.end());
  LinearMap curl_sym(sym, dev, std::move(cs_ints), 1.0 / h);

  // Row-wise divergence of a trace-free field; the implicit (3,3) entry
  // contributes -D_3(M_11 + M_22) to the third row.
  std::vector<TripletInt> dv;
  dv.reserve(8 * 3 * np);
  for (int j = 0; j < 3; ++j)
    for (Index p = 0; p < np; ++p) {
      const Index row = j * np + p;
      for (int k = 0; k < 3; ++k) {
        if (j == 2 && k == 2) {
          for (Index cdiag = 0; cdiag < 2; ++cdiag) {
            dv.emplace_back(row, cdiag * np + ix.shift(p, 2, 1), -1);
            dv.emplace_back(row, cdiag * np + p, 1);
          }
        } else {
          const Index col = detail::dev_component(j, k) * np;
          dv.emplace_back(row, col + ix.shift(p, k, 1), 1);
          dv.emplace_back(row, col + p, -1);
        }
      }
    }
  SparseInt dv_ints(3 * np, 8 * np);
  dv_ints.setFromTriplets(dv.begin(), dv.end());
  LinearMap div_dev(dev, vectors, std::move(dv_ints), 1.0 / h);

  ShortSequence first = validate_sequence(std::move(gradgrad), curl_sym);
  ShortSequence second = validate_sequence(std::move(curl_sym), std::move(div_dev));
  return {std::move(first), std::move(second)};
}

/** sym/skew/dev/trace parts of a small d x d matrix (d = 2 or 3; the
    deviatoric part uses the 3x3 normalization and is absent for d = 2). */
struct PointwiseParts {
  Matrix sym;
  Matrix skew;
  double trace = 0.0;
  std::optional<Matrix> dev;
};

inline PointwiseParts pointwise_algebra(const Matrix& m) {
  const Index d = m.rows();
  if (d != m.cols() || (d != 2 && d != 3))
    throw UnsupportedDim("pointwise algebra expects a 2x2 or 3x3 matrix");
  PointwiseParts parts;
  parts.sym = 0.5 * (m + m.transpose());
  parts.skew = 0.5 * (m - m.transpose());
  parts.trace = m.trace();
  if (d == 3)
    parts.dev = m - (parts.trace / 3.0) * Matrix::Identity(3, 3);
  return parts;
}

/**
 * Deactivates the cells of an axis-aligned box, creating a domain with a
 * hole. The hole must stay strictly inside the grid so its boundary is
 * genuine Dirichlet boundary.
 */
inline GridSpec puncture(const GridSpec& spec, const CellBox& hole) {
  spec.validate();
  if (spec.bc != BoundaryCondition::dirichlet)
    throw UnsupportedBC("puncture requires dirichlet boundary conditions");
  GridSpec out = spec;
  Index hole_cells = 1;
  for (int a = 0; a < spec.d; ++a) {
    if (hole.lo[a] >= hole.hi[a])
      throw InvalidSpec("hole box is empty along an axis");
    if (hole.lo[a] < 1 || hole.hi[a] > spec.n - 1)
      throw InvalidSpec("hole touches the outer boundary");
    hole_cells *= hole.hi[a] - hole.lo[a];
  }
  std::array<Index, 3> c = hole.lo;
  for (Index count = 0; count < hole_cells; ++count) {
    Index flat = 0;
    for (int a = spec.d - 1; a >= 0; --a) flat = flat * spec.n + c[a];
    out.mask.insert(flat);
    for (int a = 0; a < spec.d; ++a) {
      if (++c[a] < hole.hi[a]) break;
      c[a] = hole.lo[a];
    }
  }
  if (static_cast<Index>(out.mask.size()) >= out.cells())
    throw InvalidSpec("masked region must leave the active domain nonempty");
  return out;
}

/**
 * Twice the row-wise backward divergence of the skew extension of an
 * antisym2 field: the operator whose adjoint defines the curl. Assembled
 * independently of the curl so the adjoint identity is a real check.
 */
inline LinearMap build_skew_div(const GridSpec& spec) {
  spec.validate();
  if (spec.bc != BoundaryCondition::periodic)
    throw UnsupportedBC("skew divergence is assembled on periodic grids only");
  const detail::PointIndexer ix{spec.d, spec.n};
  const Index np = ix.points();
  std::vector<std::pair<int, int>> pairs;
  for (int j = 0; j < spec.d; ++j)
    for (int k = j + 1; k < spec.d; ++k) pairs.emplace_back(j, k);

  // Full-matrix entries M_{jk} = c_{jk}, M_{kj} = -c_{jk} for j < k;
  // (2 Div M)_j = 2 sum_k D^b_k M_{jk} with D^b the backward difference.
  std::vector<TripletInt> t;
  t.reserve(8 * pairs.size() * np);
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    const auto [j, k] = pairs[pi];
    const Index comp = static_cast<Index>(pi) * np;
    for (Index p = 0; p < np; ++p) {
      // Row j picks M_{jk} = +c, differentiated backward along axis k.
      t.emplace_back(j * np + p, comp + p, 2);
      t.emplace_back(j * np + p, comp + ix.shift(p, k, -1), -2);
      // Row k picks M_{kj} = -c, differentiated backward along axis j.
      t.emplace_back(k * np + p, comp + p, -2);
      t.emplace_back(k * np + p, comp + ix.shift(p, j, -1), 2);
    }
  }
  SparseInt ints(spec.d * np, static_cast<Index>(pairs.size()) * np);
  ints.setFromTriplets(t.begin(), t.end());
  return LinearMap(field_space(spec, FieldKind::antisym2),
                   field_space(spec, FieldKind::vector), std::move(ints),
                   1.0 / spec.h());
}

}  // namespace dcx
