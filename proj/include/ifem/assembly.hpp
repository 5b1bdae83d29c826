#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ifem/errors.hpp"
#include "ifem/geometry.hpp"
#include "ifem/interface_geometry.hpp"
#include "ifem/mesh.hpp"
#include "ifem/sparse.hpp"

namespace ifem {

using ScalarField = std::function<double(Point)>;

/// Smooth extensions of the coefficient from each side to the whole domain.
class CoefficientField {
public:
  static CoefficientField piecewise_constant(double inside, double outside) {
    if (!(inside > 0.0) || !(outside > 0.0))
      throw ConfigError("coefficient values must be positive (alpha=" + std::to_string(inside) +
                        ", beta=" + std::to_string(outside) + ")");
    CoefficientField c;
    c.plus_ = [inside](Point) { return inside; };
    c.minus_ = [outside](Point) { return outside; };
    c.constants_ = {inside, outside};
    return c;
  }

  static CoefficientField extensions(ScalarField plus, ScalarField minus) {
    if (!plus || !minus) throw ConfigError("coefficient extension is empty");
    CoefficientField c;
    c.plus_ = std::move(plus);
    c.minus_ = std::move(minus);
    return c;
  }

  double operator()(Side s, Point p) const { return s == Side::Plus ? plus_(p) : minus_(p); }
  /// (inside, outside) for piecewise-constant fields.
  const std::optional<std::array<double, 2>>& constants() const { return constants_; }

private:
  CoefficientField() = default;
  ScalarField plus_, minus_;
  std::optional<std::array<double, 2>> constants_;
};

enum class Method { Standard, Fitted, Hybrid };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Standard: return "standard";
    case Method::Fitted: return "fitted";
    default: return "hybrid";
  }
}

inline Method parse_method(const std::string& s) {
  if (s == "standard") return Method::Standard;
  if (s == "fitted") return Method::Fitted;
  if (s == "hybrid") return Method::Hybrid;
  throw ConfigError("method: unknown value '" + s + "' (expected standard|fitted|hybrid)");
}

// ---------------------------------------------------------------------------------------------
// Element-level kernels

using Mat3 = std::array<std::array<double, 3>, 3>;

/// P1 stiffness of one triangle with a linear coefficient given by its nodal values. Exact: the
/// integrand is linear, so the coefficient enters through its vertex mean.
inline Mat3 local_stiffness(const Tri& t, const std::array<double, 3>& nodal_coeff) {
  const double area = signed_area(t);
  if (!(area > 0.0)) throw GeometryError("local_stiffness: non-positive element area");
  const double mean = (nodal_coeff[0] + nodal_coeff[1] + nodal_coeff[2]) / 3.0;
  const auto g = barycentric_gradients(t);
  Mat3 k{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) k[i][j] = mean * area * dot(g[i], g[j]);
  return k;
}

/// Load vector of the three P1 hats, edge-midpoint rule.
inline std::array<double, 3> local_load(const Tri& t, const ScalarField& f) {
  const double w = signed_area(t) / 3.0;
  const auto q = midpoint_quadrature_points(t);
  std::array<double, 3> r{};
  for (const auto& x : q) {
    const double fx = f(x) * w;
    const auto l = barycentric(t, x);
    for (int i = 0; i < 3; ++i) r[i] += fx * l[i];
  }
  return r;
}

/// Nodal values of the side's coefficient extension on every fitted element (same order as
/// FittedMesh::all_elements()). The discrete coefficient is their linear interpolant.
inline std::vector<std::array<double, 3>> build_discrete_coefficient(const FittedMesh& fitted,
                                                                     const CoefficientField& coeff) {
  std::vector<std::array<double, 3>> out;
  out.reserve(fitted.all_elements().size());
  for (const auto& k : fitted.all_elements())
    out.push_back({coeff(k.side, k.pts[0]), coeff(k.side, k.pts[1]), coeff(k.side, k.pts[2])});
  return out;
}

// ---------------------------------------------------------------------------------------------
// Degrees of freedom

/// Unknown layout [vertices | enriched | multipliers]. Vertex dofs cover every mesh vertex;
/// boundary vertices are eliminated by identity rows.
struct DofMap {
  Method method = Method::Standard;
  int num_vertex = 0;
  int num_enriched = 0;
  int num_multipliers = 0;
  std::vector<char> dirichlet;                 // per vertex
  std::vector<std::array<int, 3>> edge_dof;    // per triangle, enriched dof on local edge k or -1
  std::vector<int> enriched_edge;              // cut edge carrying each enriched dof
  std::vector<int> enriched_triangle;          // owning triangle (hybrid), -1 otherwise
  std::vector<int> multiplier_edge;            // cut edge of each multiplier

  int num_free_vertices() const {
    int n = 0;
    for (char d : dirichlet) n += d ? 0 : 1;
    return n;
  }
  int total() const { return num_vertex + num_enriched + num_multipliers; }
};

inline DofMap make_standard_dof_map(const Mesh& mesh) {
  DofMap d;
  d.method = Method::Standard;
  d.num_vertex = mesh.num_vertices();
  d.dirichlet.resize(d.num_vertex);
  for (const auto& v : mesh.vertices()) d.dirichlet[v.id] = v.on_boundary ? 1 : 0;
  d.edge_dof.assign(mesh.num_triangles(), {-1, -1, -1});
  return d;
}

/// Fitted: one conforming dof per cut point. Hybrid: one dof per (cut triangle, cut point),
/// numbered contiguously per triangle, plus one multiplier per cut edge.
inline DofMap make_dof_map(const FittedMesh& fitted, Method method) {
  const Mesh& m = fitted.base();
  DofMap d = make_standard_dof_map(m);
  d.method = method;
  if (method == Method::Standard) return d;
  if (method == Method::Fitted) {
    for (int e : fitted.cut_edges()) {
      d.enriched_edge.push_back(e);
      d.enriched_triangle.push_back(-1);
    }
    d.num_enriched = static_cast<int>(fitted.cut_edges().size());
    for (int tri : fitted.band()) {
      const auto& t = m.triangle(tri);
      for (int k = 0; k < 3; ++k) d.edge_dof[tri][k] = fitted.cut_index(t.e[k]);
    }
    return d;
  }
  for (int tri : fitted.band()) {
    const auto& t = m.triangle(tri);
    for (int k = 0; k < 3; ++k) {
      if (fitted.cut_index(t.e[k]) < 0) continue;
      d.edge_dof[tri][k] = d.num_enriched++;
      d.enriched_edge.push_back(t.e[k]);
      d.enriched_triangle.push_back(tri);
    }
  }
  d.multiplier_edge = fitted.cut_edges();
  d.num_multipliers = static_cast<int>(d.multiplier_edge.size());
  return d;
}

// ---------------------------------------------------------------------------------------------
// Basis restricted to one fitted element

/// Vertex functions are the P1 hats of the parent triangle (affine on all of it); enriched
/// functions are the hats of the cut points on the fitted mesh, which vanish at every mesh vertex.
struct BasisFunction {
  bool enriched = false;
  int dof = -1;
  Vec2 grad;
  std::array<double, 3> at_quad{};  // values at the element's edge midpoints
};

struct ElementBasis {
  Tri pts;
  double area = 0.0;
  std::array<Point, 3> quad{};
  std::vector<BasisFunction> fns;
};

inline ElementBasis element_basis(const FittedMesh& fitted, const DofMap& dofs, const SubTriangle& k) {
  const Mesh& m = fitted.base();
  const auto& parent = m.triangle(k.parent);
  const Tri pc = m.corners(k.parent);
  ElementBasis eb;
  eb.pts = k.pts;
  eb.area = k.area();
  eb.quad = midpoint_quadrature_points(k.pts);
  const auto pg = barycentric_gradients(pc);
  for (int i = 0; i < 3; ++i) {
    BasisFunction f;
    f.dof = parent.v[i];
    f.grad = pg[i];
    for (int q = 0; q < 3; ++q) f.at_quad[q] = barycentric(pc, eb.quad[q])[i];
    eb.fns.push_back(f);
  }
  if (k.label == SubLabel::Whole) return eb;
  const auto kg = barycentric_gradients(k.pts);
  for (int i = 0; i < 3; ++i) {
    if (!k.nodes[i].is_cut) continue;
    const int dof = dofs.edge_dof[k.parent][k.nodes[i].local];
    if (dof < 0) throw GeometryError("cut node without an enriched dof", k.parent);
    BasisFunction f;
    f.enriched = true;
    f.dof = dof;
    f.grad = kg[i];
    // midpoints (01, 12, 20): the node's barycentric coordinate is 1/2 on its two edges
    for (int q = 0; q < 3; ++q) f.at_quad[q] = (q == i || (q + 1) % 3 == i) ? 0.5 : 0.0;
    eb.fns.push_back(f);
  }
  return eb;
}

/// Element stiffness and load in terms of ElementBasis::fns.
struct ElementSystem {
  ElementBasis basis;
  std::vector<std::vector<double>> K;
  std::vector<double> F;
};

inline ElementSystem element_system(const FittedMesh& fitted, const DofMap& dofs, const SubTriangle& k,
                                    const std::array<double, 3>& nodal_coeff, const ScalarField& f) {
  ElementSystem s;
  s.basis = element_basis(fitted, dofs, k);
  const auto& fns = s.basis.fns;
  const std::size_t n = fns.size();
  const double mean = (nodal_coeff[0] + nodal_coeff[1] + nodal_coeff[2]) / 3.0;
  s.K.assign(n, std::vector<double>(n, 0.0));
  s.F.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s.K[i][j] = mean * s.basis.area * dot(fns[i].grad, fns[j].grad);
  const double w = s.basis.area / 3.0;
  for (int q = 0; q < 3; ++q) {
    const double fq = f(s.basis.quad[q]) * w;
    for (std::size_t i = 0; i < n; ++i) s.F[i] += fq * fns[i].at_quad[q];
  }
  return s;
}

// ---------------------------------------------------------------------------------------------
// Global systems

struct AssemblyOptions {
  bool eliminate_dirichlet = true;
};

/// Square SPD system (after elimination) for the standard or fitted method.
struct LinearSystem {
  DofMap dofs;
  SparseMatrix K;
  std::vector<double> rhs;
};

/// Symmetric elimination: fixed columns move to the rhs, fixed rows become identity rows.
inline void apply_dirichlet(SparseMatrix& K, std::vector<double>& rhs, std::span<const char> fixed,
                            std::span<const double> values) {
  for (int i = 0; i < K.rows(); ++i) {
    const auto cols = K.row_cols(i);
    auto vals = K.row_values(i);
    const bool row_fixed = i < static_cast<int>(fixed.size()) && fixed[i];
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const int j = cols[k];
      const bool col_fixed = j < static_cast<int>(fixed.size()) && fixed[j];
      if (row_fixed) {
        vals[k] = j == i ? 1.0 : 0.0;
      } else if (col_fixed) {
        rhs[i] -= vals[k] * values[j];
        vals[k] = 0.0;
      }
    }
    if (row_fixed) {
      if (!K.has_entry(i, i)) throw Error("Dirichlet row without a diagonal entry");
      rhs[i] = values[i];
    }
  }
}

inline std::vector<double> boundary_values(const Mesh& mesh, const ScalarField& g) {
  std::vector<double> v(mesh.num_vertices(), 0.0);
  for (const auto& x : mesh.vertices())
    if (x.on_boundary) v[x.id] = g(x.p);
  return v;
}

/// P1 on the unfitted mesh; each triangle takes the coefficient at its barycenter, on the side
/// given by the sign of phi there.
inline LinearSystem assemble_standard(const Mesh& mesh, const CoefficientField& coeff,
                                      const LevelSetInterface& iface, const ScalarField& f,
                                      const ScalarField& g, const AssemblyOptions& opt = {}) {
  LinearSystem sys;
  sys.dofs = make_standard_dof_map(mesh);
  const int n = mesh.num_vertices();
  TripletList t(n, n);
  t.reserve(9 * static_cast<std::size_t>(mesh.num_triangles()));
  sys.rhs.assign(n, 0.0);
  for (const auto& tri : mesh.triangles()) {
    const Tri c = mesh.corners(tri.id);
    const Point bc = centroid(c);
    const double a = coeff(iface(bc) < 0.0 ? Side::Plus : Side::Minus, bc);
    const auto ke = local_stiffness(c, {a, a, a});
    const auto fe = local_load(c, f);
    for (int i = 0; i < 3; ++i) {
      sys.rhs[tri.v[i]] += fe[i];
      for (int j = 0; j < 3; ++j) t.add(tri.v[i], tri.v[j], ke[i][j]);
    }
  }
  sys.K = SparseMatrix(t);
  if (opt.eliminate_dirichlet)
    apply_dirichlet(sys.K, sys.rhs, sys.dofs.dirichlet, boundary_values(mesh, g));
  return sys;
}

namespace detail {

/// Loops over fitted elements, dispatching each element entry to a (row, col, value) sink with
/// global indices in the [vertices | enriched] layout.
template <class Sink>
void assemble_primal(const FittedMesh& fitted, const DofMap& dofs, const CoefficientField& coeff,
                     const ScalarField& f, Sink&& add_matrix, std::vector<double>& rhs) {
  const auto nodal = build_discrete_coefficient(fitted, coeff);
  const auto& elems = fitted.all_elements();
  const auto global = [&](const BasisFunction& b) { return b.enriched ? dofs.num_vertex + b.dof : b.dof; };
  for (std::size_t e = 0; e < elems.size(); ++e) {
    const auto s = element_system(fitted, dofs, elems[e], nodal[e], f);
    const auto& fns = s.basis.fns;
    for (std::size_t i = 0; i < fns.size(); ++i) {
      rhs[global(fns[i])] += s.F[i];
      for (std::size_t j = 0; j < fns.size(); ++j) add_matrix(global(fns[i]), global(fns[j]), s.K[i][j]);
    }
  }
}

}  // namespace detail

/// Conforming enriched method on the fitted mesh: unknowns [vertices | cut points].
inline LinearSystem assemble_fitted(const FittedMesh& fitted, const CoefficientField& coeff,
                                    const ScalarField& f, const ScalarField& g,
                                    const AssemblyOptions& opt = {}) {
  LinearSystem sys;
  sys.dofs = make_dof_map(fitted, Method::Fitted);
  const int n = sys.dofs.num_vertex + sys.dofs.num_enriched;
  TripletList t(n, n);
  t.reserve(9 * fitted.all_elements().size() + 16 * fitted.band().size());
  sys.rhs.assign(n, 0.0);
  detail::assemble_primal(fitted, sys.dofs, coeff, f, [&](int i, int j, double v) { t.add(i, j, v); },
                          sys.rhs);
  sys.K = SparseMatrix(t);
  if (opt.eliminate_dirichlet) {
    std::vector<char> fixed(sys.dofs.dirichlet);
    fixed.resize(n, 0);
    auto values = boundary_values(fitted.base(), g);
    values.resize(n, 0.0);
    apply_dirichlet(sys.K, sys.rhs, fixed, values);
  }
  return sys;
}

/// Saddle-point blocks
///   [ A   C   0 ] [u]   [b]
///   [ C^T D   B ] [v] = [c]
///   [ 0   B^T 0 ] [l]   [0]
/// with B = -int_e [v] ds, the jump taken as (entering side) - (leaving side) of the interface.
struct BlockSystem {
  DofMap dofs;
  SparseMatrix A;  // vertex x vertex
  SparseMatrix C;  // vertex x enriched
  SparseMatrix D;  // enriched x enriched, block diagonal by triangle
  SparseMatrix B;  // enriched x multiplier
  std::vector<double> b, c;

  int nv() const { return dofs.num_vertex; }
  int ne() const { return dofs.num_enriched; }
  int nl() const { return dofs.num_multipliers; }
  int size() const { return dofs.total(); }

  /// The full symmetric indefinite matrix in the [u | v | lambda] layout.
  SparseMatrix monolithic() const {
    TripletList t(size(), size());
    A.for_each([&](int i, int j, double v) { t.add(i, j, v); });
    C.for_each([&](int i, int j, double v) {
      t.add(i, nv() + j, v);
      t.add(nv() + j, i, v);
    });
    D.for_each([&](int i, int j, double v) { t.add(nv() + i, nv() + j, v); });
    B.for_each([&](int i, int j, double v) {
      t.add(nv() + i, nv() + ne() + j, v);
      t.add(nv() + ne() + j, nv() + i, v);
    });
    return SparseMatrix(t);
  }

  std::vector<double> monolithic_rhs() const {
    std::vector<double> r(b);
    r.insert(r.end(), c.begin(), c.end());
    r.resize(size(), 0.0);
    return r;
  }
};

inline BlockSystem assemble_hybrid(const FittedMesh& fitted, const CoefficientField& coeff,
                                   const ScalarField& f, const ScalarField& g,
                                   const AssemblyOptions& opt = {}) {
  const Mesh& m = fitted.base();
  BlockSystem s;
  s.dofs = make_dof_map(fitted, Method::Hybrid);
  const int nv = s.nv(), ne = s.ne(), nl = s.nl();
  TripletList ta(nv, nv), tc(nv, ne), td(ne, ne), tb(ne, nl);
  ta.reserve(9 * fitted.all_elements().size());
  std::vector<double> rhs(nv + ne, 0.0);
  detail::assemble_primal(
      fitted, s.dofs, coeff, f,
      [&](int i, int j, double v) {
        if (i < nv && j < nv)
          ta.add(i, j, v);
        else if (i < nv)
          tc.add(i, j - nv, v);
        else if (j >= nv)
          td.add(i - nv, j - nv, v);
      },
      rhs);

  for (int l = 0; l < nl; ++l) {
    const int e = s.dofs.multiplier_edge[l];
    const auto& edge = m.edge(e);
    const double half_len = 0.5 * distance(m.vertex(edge.v0).p, m.vertex(edge.v1).p);
    const auto [entering, leaving] = fitted.entry_exit_triangles(e);
    const int dof_in = s.dofs.edge_dof[entering][m.local_edge(entering, e)];
    const int dof_out = s.dofs.edge_dof[leaving][m.local_edge(leaving, e)];
    tb.add(dof_in, l, -half_len);
    tb.add(dof_out, l, half_len);
  }

  s.A = SparseMatrix(ta);
  s.C = SparseMatrix(tc);
  s.D = SparseMatrix(td);
  s.B = SparseMatrix(tb);
  s.b.assign(rhs.begin(), rhs.begin() + nv);
  s.c.assign(rhs.begin() + nv, rhs.end());

  if (opt.eliminate_dirichlet) {
    const auto values = boundary_values(m, g);
    apply_dirichlet(s.A, s.b, s.dofs.dirichlet, values);
    for (int i = 0; i < nv; ++i) {
      if (!s.dofs.dirichlet[i]) continue;
      const auto cols = s.C.row_cols(i);
      auto vals = s.C.row_values(i);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        s.c[cols[k]] -= vals[k] * values[i];
        vals[k] = 0.0;
      }
    }
  }
  return s;
}

}  // namespace ifem
