#pragma once

#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ifem/benchmark.hpp"
#include "ifem/mesh.hpp"
#include "ifem/sparse.hpp"

namespace ifem {

namespace detail {
inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}
inline std::string opt_fmt(const char* f, const std::optional<double>& v) { return v ? fmt(f, *v) : ""; }
}  // namespace detail

/// `vertices V triangles T`, then `v id x y` and `t id v0 v1 v2` lines.
inline void write_mesh(std::ostream& os, const Mesh& m) {
  os << "vertices " << m.num_vertices() << " triangles " << m.num_triangles() << '\n';
  for (const auto& v : m.vertices())
    os << "v " << v.id << ' ' << detail::fmt("%.17g", v.p.x) << ' ' << detail::fmt("%.17g", v.p.y) << '\n';
  for (const auto& t : m.triangles()) os << "t " << t.id << ' ' << t.v[0] << ' ' << t.v[1] << ' ' << t.v[2] << '\n';
}

/// `matrix rows cols nnz`, then one `i j value` line per stored entry.
inline void write_matrix(std::ostream& os, const SparseMatrix& a) {
  os << "matrix " << a.rows() << ' ' << a.cols() << ' ' << a.nnz() << '\n';
  a.for_each([&](int i, int j, double v) { os << i << ' ' << j << ' ' << detail::fmt("%.17g", v) << '\n'; });
}

/// `vertex id x y u_h` per mesh vertex.
inline void write_solution(std::ostream& os, const Mesh& m, const std::vector<double>& u_vertex) {
  for (const auto& v : m.vertices())
    os << "vertex " << v.id << ' ' << detail::fmt("%.17g", v.p.x) << ' ' << detail::fmt("%.17g", v.p.y) << ' '
       << detail::fmt("%.17g", u_vertex[v.id]) << '\n';
}

inline constexpr const char* kCsvHeader = "method,p,N,e0h,rate0h,e0inf,rateinf,e1h,rate1h";

/// One row per N; failed rows keep N and leave the remaining fields empty.
inline void write_csv(std::ostream& os, const std::vector<ConvergenceTable>& tables, bool header = true) {
  if (header) os << kCsvHeader << '\n';
  for (const auto& t : tables) {
    for (const auto& r : t.rows) {
      os << to_string(t.method) << ',' << detail::fmt("%.6g", t.p) << ',' << r.n << ',';
      if (r.errors) {
        os << detail::fmt("%.6e", r.errors->e0h) << ',' << detail::opt_fmt("%.4f", r.rate0h) << ','
           << detail::fmt("%.6e", r.errors->e0inf) << ',' << detail::opt_fmt("%.4f", r.rate0inf) << ','
           << detail::fmt("%.6e", r.errors->e1h) << ',' << detail::opt_fmt("%.4f", r.rate1h);
      } else {
        os << ",,,,,";
      }
      os << '\n';
    }
  }
}

inline void write_markdown(std::ostream& os, const ConvergenceTable& t) {
  os << "### " << to_string(t.method) << ", p = " << detail::fmt("%g", t.p) << "\n\n";
  os << "| 1/h | e0h | Rate | e0inf | Rate | e1h | Rate |\n";
  os << "|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& r : t.rows) {
    os << "| " << r.n << " | ";
    if (r.errors) {
      os << detail::fmt("%.2e", r.errors->e0h) << " | " << detail::opt_fmt("%.1f", r.rate0h) << " | "
         << detail::fmt("%.2e", r.errors->e0inf) << " | " << detail::opt_fmt("%.1f", r.rate0inf) << " | "
         << detail::fmt("%.2e", r.errors->e1h) << " | " << detail::opt_fmt("%.1f", r.rate1h) << " |";
    } else {
      os << "failed: " << r.failure << " | | | | | |";
    }
    os << '\n';
  }
  os << '\n';
}

}  // namespace ifem
