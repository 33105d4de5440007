#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dcx/oscillatory.hpp"

namespace dcx {

/** 17-significant-digit rendering; round-trips IEEE doubles exactly. */
inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

/**
 * Coordinate-format Matrix Market writer ("real general", 1-based indices,
 * 17 significant digits). Zero-row and zero-entry matrices are valid files.
 * Streams are opened binary so the byte layout is platform-independent.
 */
inline void write_matrix_market(const std::filesystem::path& path,
                                const Sparse& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IOError("cannot open '" + path.string() + "' for writing");
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
  for (int k = 0; k < m.outerSize(); ++k)
    for (Sparse::InnerIterator it(m, k); it; ++it)
      out << (it.row() + 1) << ' ' << (it.col() + 1) << ' '
          << format_real(it.value()) << '\n';
  out.flush();
  if (!out) throw IOError("write failed on '" + path.string() + "'");
}

namespace detail {

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace detail

/**
 * Reads the subset of Matrix Market written above: coordinate, real,
 * general. Comment lines (%) and blank lines are skipped; indices are
 * bounds-checked; duplicate entries sum, per the format's convention.
 */
inline Sparse read_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open '" + path.string() + "' for reading");
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("'" + path.string() + "' is empty");
  line = detail::strip_cr(line);
  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket" || object != "matrix" ||
      format != "coordinate" || field != "real" || symmetry != "general")
    throw ParseError("unsupported Matrix Market header in '" + path.string() +
                     "': " + line);

  Index rows = -1, cols = -1, nnz = -1;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(line);
    if (line.empty() || line[0] == '%') continue;
    std::istringstream sizes(line);
    if (!(sizes >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0)
      throw ParseError("bad size line " + std::to_string(lineno) + " in '" +
                       path.string() + "': " + line);
    break;
  }
  if (rows < 0)
    throw ParseError("'" + path.string() + "' has no size line");

  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(nnz));
  while (static_cast<Index>(trips.size()) < nnz && std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(line);
    if (line.empty() || line[0] == '%') continue;
    std::istringstream entry(line);
    Index i = 0, j = 0;
    double v = 0.0;
    if (!(entry >> i >> j >> v))
      throw ParseError("bad entry line " + std::to_string(lineno) + " in '" +
                       path.string() + "': " + line);
    if (i < 1 || i > rows || j < 1 || j > cols)
      throw ParseError("entry out of bounds on line " +
                       std::to_string(lineno) + " in '" + path.string() +
                       "': " + line);
    trips.emplace_back(i - 1, j - 1, v);
  }
  if (static_cast<Index>(trips.size()) < nnz)
    throw ParseError("'" + path.string() + "' ends after " +
                     std::to_string(trips.size()) + " of " +
                     std::to_string(nnz) + " entries");
  Sparse m(rows, cols);
  m.setFromTriplets(trips.begin(), trips.end());
  m.makeCompressed();
  return m;
}

/** Table CSV: fixed header, 17-digit values, LF-only line endings, so
    identical tables produce byte-identical files. */
inline void write_convergence_csv(const std::filesystem::path& path,
                                  const ConvergenceTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IOError("cannot open '" + path.string() + "' for writing");
  out << "k,I_k,I_inf,error,res_div,res_curl\n";
  for (const auto& r : t.rows)
    out << r.k << ',' << format_real(r.value) << ',' << format_real(r.reference)
        << ',' << format_real(r.error) << ',' << format_real(r.res_div) << ','
        << format_real(r.res_curl) << '\n';
  out.flush();
  if (!out) throw IOError("write failed on '" + path.string() + "'");
}

/** Companion CSV for test-field pairings: one row per frequency. */
inline void write_pairings_csv(const std::filesystem::path& path,
                               const std::vector<Index>& frequencies,
                               const Matrix& pairings) {
  if (pairings.rows() != static_cast<Index>(frequencies.size()))
    throw DimensionMismatch("pairing rows do not match the frequency list");
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IOError("cannot open '" + path.string() + "' for writing");
  out << 'k';
  for (Index m = 0; m < pairings.cols(); ++m) out << ",field" << (m + 1);
  out << '\n';
  for (Index i = 0; i < pairings.rows(); ++i) {
    out << frequencies[static_cast<std::size_t>(i)];
    for (Index m = 0; m < pairings.cols(); ++m)
      out << ',' << format_real(pairings(i, m));
    out << '\n';
  }
  out.flush();
  if (!out) throw IOError("write failed on '" + path.string() + "'");
}

/**
 * Writes the five operator files A0.mtx, A1.mtx, gram0.mtx, gram1.mtx,
 * gram2.mtx for a sequence into `dir` (created if absent).
 */
inline void export_sequence(const std::filesystem::path& dir,
                            const ShortSequence& s) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw IOError("cannot create directory '" + dir.string() +
                  "': " + ec.message());
  write_matrix_market(dir / "A0.mtx", s.a0.sparse());
  write_matrix_market(dir / "A1.mtx", s.a1.sparse());
  write_matrix_market(dir / "gram0.mtx", s.h0()->gram());
  write_matrix_market(dir / "gram1.mtx", s.h1()->gram());
  write_matrix_market(dir / "gram2.mtx", s.h2()->gram());
}

/**
 * Reads the five operator files back and revalidates the sequence;
 * NotASequence propagates when the imported pair fails the bound.
 */
inline ShortSequence import_sequence(const std::filesystem::path& dir) {
  const Sparse g0 = read_matrix_market(dir / "gram0.mtx");
  const Sparse g1 = read_matrix_market(dir / "gram1.mtx");
  const Sparse g2 = read_matrix_market(dir / "gram2.mtx");
  const Sparse a0 = read_matrix_market(dir / "A0.mtx");
  const Sparse a1 = read_matrix_market(dir / "A1.mtx");
  SpacePtr h0 = make_space(InnerProductSpace(g0));
  SpacePtr h1 = make_space(InnerProductSpace(g1));
  SpacePtr h2 = make_space(InnerProductSpace(g2));
  return validate_sequence(LinearMap(h0, h1, a0), LinearMap(h1, h2, a1));
}

}  // namespace dcx
