#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ifem/assembly.hpp"
#include "ifem/errors.hpp"
#include "ifem/interface_geometry.hpp"
#include "ifem/mesh.hpp"
#include "ifem/solver.hpp"

namespace ifem {

/// Radially symmetric transmission problem on (-1,1)^2 with f = 1 and a circular interface.
struct RadialProblem {
  double alpha = 1.0;  // inside
  double beta = 10.0;  // outside
  double r1 = 0.5;
  double r2_squared = 2.0;
  Point center{0.0, 0.0};

  double p() const { return alpha / beta; }

  void validate() const {
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    if (!(r1 > 0.0 && r1 < 1.0)) throw ConfigError("r1 must lie in (0,1)");
    const double reach = std::max(std::abs(center.x), std::abs(center.y)) + r1;
    if (!(reach < 1.0)) throw ConfigError("circle must lie strictly inside the square");
  }

  double radius_squared(Point x) const {
    const Vec2 d = x - center;
    return dot(d, d);
  }

  double coefficient(Side s) const { return s == Side::Plus ? alpha : beta; }

  /// Branch formulas, valid on all of the plane (used as smooth extensions).
  double u_branch(Side s, Point x) const {
    const double r2 = radius_squared(x);
    if (s == Side::Plus) return (r1 * r1 - r2) / (4.0 * alpha) + (r2_squared - r1 * r1) / (4.0 * beta);
    return (r2_squared - r2) / (4.0 * beta);
  }
  Vec2 grad_branch(Side s, Point x) const { return (x - center) * (-0.5 / coefficient(s)); }

  /// Points on the circle take the outside branch.
  Side side(Point x) const { return radius_squared(x) < r1 * r1 ? Side::Plus : Side::Minus; }
  double exact_u(Point x) const { return u_branch(side(x), x); }
  Vec2 exact_grad(Point x) const { return grad_branch(side(x), x); }

  LevelSetInterface interface() const { return LevelSetInterface::circle(center, r1); }
  CoefficientField coefficient_field() const { return CoefficientField::piecewise_constant(alpha, beta); }
  ScalarField source() const {
    return [](Point) { return 1.0; };
  }
  ScalarField boundary() const {
    return [*this](Point x) { return exact_u(x); };
  }
};

/// Reference gradient used by e1h.
enum class NormVariant { Nodal, Sub, Parent };

inline const char* to_string(NormVariant v) {
  switch (v) {
    case NormVariant::Nodal: return "nodal";
    case NormVariant::Sub: return "sub";
    default: return "parent";
  }
}

inline NormVariant parse_norm_variant(const std::string& s) {
  if (s == "nodal") return NormVariant::Nodal;
  if (s == "sub") return NormVariant::Sub;
  if (s == "parent") return NormVariant::Parent;
  throw ConfigError("norm-variant: unknown value '" + s + "' (expected nodal|sub|parent)");
}

/// Discrete solution on the fitted mesh (standard solutions carry no enriched part).
struct DiscreteSolution {
  Method method = Method::Standard;
  DofMap dofs;
  std::vector<double> u_vertex;
  std::vector<double> u_enriched;
  std::vector<double> lambda;
};

/// Constant gradient of u_h on one fitted element.
inline Vec2 element_gradient(const FittedMesh& fitted, const DiscreteSolution& s, const SubTriangle& k) {
  const auto eb = element_basis(fitted, s.dofs, k);
  Vec2 g{0.0, 0.0};
  for (const auto& f : eb.fns) g = g + f.grad * (f.enriched ? s.u_enriched[f.dof] : s.u_vertex[f.dof]);
  return g;
}

struct ErrorReport {
  Method method = Method::Standard;
  int n = 0;
  double p = 0.0;
  int nodes = 0;  // M
  double e0h = 0.0;
  double e0inf = 0.0;
  double e1h = 0.0;
};

namespace detail {
/// Exact integral over t of |L(x) - g|^2 where L is linear with the given vertex values.
inline double midpoint_square_error(const Tri& t, const std::array<Vec2, 3>& vertex_values, Vec2 g) {
  const double w = signed_area(t) / 3.0;
  double s = 0.0;
  for (int q = 0; q < 3; ++q) {
    const Vec2 l = (vertex_values[q] + vertex_values[(q + 1) % 3]) * 0.5;
    const Vec2 d = l - g;
    s += w * dot(d, d);
  }
  return s;
}

inline double interpolate_linear(const Tri& t, const std::array<double, 3>& vals, Point x) {
  const auto l = barycentric(t, x);
  return l[0] * vals[0] + l[1] * vals[1] + l[2] * vals[2];
}
}  // namespace detail

/// Discrete L2 and max norms over all mesh nodes and a broken H1 seminorm of the gradient error.
///
/// Nodal: grad(I_h u) - grad(u_h), I_h the nodal interpolant on the mesh the method lives on
///        (parent triangles for the standard method, fitted elements otherwise).
/// Sub: linear interpolant of the exact gradient on every fitted element, each element using the
///      gradient branch of its own side.
/// Parent: linear interpolant of the exact gradient from the parent triangle's vertices, nodes on
///      the circle taking the outside branch.
/// The standard method has no subtriangles, so Sub and Parent coincide there.
inline ErrorReport error_norms(const FittedMesh& fitted, const DiscreteSolution& s, const RadialProblem& pb,
                               NormVariant variant = NormVariant::Nodal) {
  const Mesh& m = fitted.base();
  ErrorReport r;
  r.method = s.method;
  r.n = m.subdivisions();
  r.p = pb.p();
  r.nodes = m.num_vertices();
  double sum = 0.0;
  for (const auto& v : m.vertices()) {
    const double e = std::abs(pb.exact_u(v.p) - s.u_vertex[v.id]);
    sum += e * e;
    r.e0inf = std::max(r.e0inf, e);
  }
  r.e0h = std::sqrt(sum / r.nodes);

  double h1 = 0.0;
  if (s.method == Method::Standard) {
    for (const auto& t : m.triangles()) {
      const Tri c = m.corners(t.id);
      const auto g = barycentric_gradients(c);
      Vec2 gh{0.0, 0.0};
      Vec2 gi{0.0, 0.0};
      for (int i = 0; i < 3; ++i) {
        gh = gh + g[i] * s.u_vertex[t.v[i]];
        gi = gi + g[i] * pb.exact_u(c[i]);
      }
      if (variant == NormVariant::Nodal) {
        const Vec2 d = gi - gh;
        h1 += signed_area(c) * dot(d, d);
      } else {
        h1 += detail::midpoint_square_error(c, {pb.exact_grad(c[0]), pb.exact_grad(c[1]), pb.exact_grad(c[2])}, gh);
      }
    }
  } else {
    for (const auto& t : m.triangles()) {
      const Tri pc = m.corners(t.id);
      const std::array<Vec2, 3> parent_vals{pb.exact_grad(pc[0]), pb.exact_grad(pc[1]), pb.exact_grad(pc[2])};
      for (const auto& k : fitted.elements(t.id)) {
        const Vec2 gh = element_gradient(fitted, s, k);
        if (variant == NormVariant::Nodal) {
          // cut points lie on the interface, where both branches agree
          const auto g = barycentric_gradients(k.pts);
          Vec2 gi{0.0, 0.0};
          for (int i = 0; i < 3; ++i) gi = gi + g[i] * pb.u_branch(k.side, k.pts[i]);
          const Vec2 d = gi - gh;
          h1 += k.area() * dot(d, d);
          continue;
        }
        std::array<Vec2, 3> vals;
        if (variant == NormVariant::Sub) {
          for (int i = 0; i < 3; ++i) vals[i] = pb.grad_branch(k.side, k.pts[i]);
        } else if (k.label == SubLabel::Whole) {
          vals = parent_vals;
        } else {
          for (int i = 0; i < 3; ++i) {
            const std::array<double, 3> gx{parent_vals[0].x, parent_vals[1].x, parent_vals[2].x};
            const std::array<double, 3> gy{parent_vals[0].y, parent_vals[1].y, parent_vals[2].y};
            vals[i] = {detail::interpolate_linear(pc, gx, k.pts[i]), detail::interpolate_linear(pc, gy, k.pts[i])};
          }
        }
        h1 += detail::midpoint_square_error(k.pts, vals, gh);
      }
    }
  }
  r.e1h = std::sqrt(h1);
  return r;
}

// ---------------------------------------------------------------------------------------------
// Pipeline

struct RunDiagnostics {
  int dofs = 0;
  int multipliers = 0;
  int cg_iterations = 0;
  int outer_iterations = 0;
  long inner_iterations = 0;
  double constraint_residual = 0.0;
  double max_jump = 0.0;
  double seconds = 0.0;
};

struct RunResult {
  ErrorReport errors;
  RunDiagnostics diag;
  DiscreteSolution solution;
};

/// Data of -div(a grad u) = f, u = g on the boundary. The interface is the fitted mesh's.
struct Problem {
  CoefficientField coeff;
  ScalarField f;
  ScalarField g;
};

inline Problem make_problem(const RadialProblem& pb) { return {pb.coefficient_field(), pb.source(), pb.boundary()}; }

inline DiscreteSolution solve_problem(const FittedMesh& fitted, const Problem& pb, Method method,
                                      const SolverConfig& cfg, RunDiagnostics* diag = nullptr) {
  RunDiagnostics local;
  RunDiagnostics& d = diag ? *diag : local;
  const auto& coeff = pb.coeff;
  DiscreteSolution s;
  s.method = method;
  if (method == Method::Standard) {
    const auto sys = assemble_standard(fitted.base(), coeff, fitted.interface(), pb.f, pb.g);
    CgReport rep;
    s.u_vertex = solve_standard(sys, cfg, &rep);
    s.dofs = sys.dofs;
    d.cg_iterations = rep.iterations;
    d.dofs = sys.dofs.num_free_vertices();
  } else if (method == Method::Fitted) {
    const auto sys = assemble_fitted(fitted, coeff, pb.f, pb.g);
    CgReport rep;
    auto x = solve_fitted(sys, cfg, &rep);
    s.dofs = sys.dofs;
    s.u_vertex.assign(x.begin(), x.begin() + sys.dofs.num_vertex);
    s.u_enriched.assign(x.begin() + sys.dofs.num_vertex, x.end());
    d.cg_iterations = rep.iterations;
    d.dofs = sys.dofs.num_free_vertices() + sys.dofs.num_enriched;
  } else {
    const auto sys = assemble_hybrid(fitted, coeff, pb.f, pb.g);
    auto h = solve_hybrid(sys, cfg);
    s.dofs = sys.dofs;
    s.u_vertex = std::move(h.u_vertex);
    s.u_enriched = std::move(h.u_enriched);
    s.lambda = std::move(h.lambda);
    d.outer_iterations = h.outer_iterations;
    d.inner_iterations = h.inner_iterations;
    d.constraint_residual = h.constraint_residual;
    d.max_jump = h.max_jump;
    d.dofs = sys.dofs.num_free_vertices() + sys.dofs.num_enriched;
    d.multipliers = sys.dofs.num_multipliers;
  }
  return s;
}

/// mesh -> fitted mesh -> assemble -> solve -> errors.
inline RunResult run_method(const RadialProblem& pb, Method method, int n, const SolverConfig& cfg = {},
                            NormVariant variant = NormVariant::Nodal) {
  pb.validate();
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto fitted = build_fitted_mesh(build_structured_mesh(n), pb.interface());
  RunResult r;
  r.solution = solve_problem(fitted, make_problem(pb), method, cfg, &r.diag);
  r.errors = error_norms(fitted, r.solution, pb, variant);
  r.diag.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Linear data g(x, y) = c0 + c1 x + c2 y with f = 0 and a constant coefficient: every method
/// must reproduce g exactly. Returns the max nodal error, enriched coefficients included (they are
/// corrections to the parent interpolant and must vanish).
inline double patch_test_error(Method method, int n, const LevelSetInterface& iface, double a,
                               const SolverConfig& cfg, std::array<double, 3> c = {0.3, 1.0, -0.7}) {
  const auto fitted = build_fitted_mesh(build_structured_mesh(n), iface);
  const ScalarField g = [c](Point x) { return c[0] + c[1] * x.x + c[2] * x.y; };
  const Problem pb{CoefficientField::piecewise_constant(a, a), [](Point) { return 0.0; }, g};
  const auto s = solve_problem(fitted, pb, method, cfg);
  double err = 0.0;
  for (const auto& v : fitted.base().vertices()) err = std::max(err, std::abs(s.u_vertex[v.id] - g(v.p)));
  for (double w : s.u_enriched) err = std::max(err, std::abs(w));
  return err;
}

// ---------------------------------------------------------------------------------------------
// Convergence tables

inline std::optional<double> rate(double coarse, double fine) {
  if (!(coarse > 0.0) || !(fine > 0.0)) return std::nullopt;
  return std::log2(coarse / fine);
}

struct ConvergenceRow {
  int n = 0;
  std::optional<ErrorReport> errors;
  std::optional<double> rate0h, rate0inf, rate1h;
  RunDiagnostics diag;
  std::string failure;  // "geometry: ...", "config: ..." or "solver: ..." when this N failed
};

struct ConvergenceTable {
  Method method = Method::Standard;
  double p = 0.0;
  std::vector<ConvergenceRow> rows;

  const ConvergenceRow* row(int n) const {
    for (const auto& r : rows)
      if (r.n == n) return &r;
    return nullptr;
  }
};

inline void validate_n_list(const std::vector<int>& ns) {
  if (ns.empty()) throw ConfigError("n-list is empty");
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] < 1) throw ConfigError("n-list entries must be positive");
    if (i > 0 && ns[i] != 2 * ns[i - 1])
      throw ConfigError("n-list must double from entry to entry (" + std::to_string(ns[i - 1]) + " -> " +
                        std::to_string(ns[i]) + ")");
  }
}

/// Rates are log2 of successive error ratios; a failed row leaves its neighbours' rates empty.
inline ConvergenceTable convergence_study(const RadialProblem& pb, Method method, const std::vector<int>& ns,
                                          const SolverConfig& cfg = {}, NormVariant variant = NormVariant::Nodal) {
  validate_n_list(ns);
  pb.validate();
  ConvergenceTable t;
  t.method = method;
  t.p = pb.p();
  for (int n : ns) {
    ConvergenceRow row;
    row.n = n;
    try {
      auto r = run_method(pb, method, n, cfg, variant);
      row.errors = r.errors;
      row.diag = r.diag;
    } catch (const GeometryError& e) {
      row.failure = std::string("geometry: ") + e.what();
    } catch (const ConfigError& e) {
      row.failure = std::string("config: ") + e.what();
    } catch (const Error& e) {
      row.failure = std::string("solver: ") + e.what();
    }
    if (!t.rows.empty() && t.rows.back().errors && row.errors) {
      const auto& a = *t.rows.back().errors;
      const auto& b = *row.errors;
      row.rate0h = rate(a.e0h, b.e0h);
      row.rate0inf = rate(a.e0inf, b.e0inf);
      row.rate1h = rate(a.e1h, b.e1h);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------------------------
// Multiplier diagnostic

struct FluxEntry {
  int edge = -1;
  double lambda = 0.0;
  double exact = 0.0;
};

struct FluxReport {
  std::vector<FluxEntry> entries;
  double max_abs = 0.0;
  double mean_abs = 0.0;
};

/// Hat-weighted edge average (2/|e|) int_e a du/dn psi ds of the exact conormal flux, with n
/// pointing from the entering into the leaving triangle and psi the cut-point hat along e.
inline double exact_edge_flux(const FittedMesh& fitted, int edge, const RadialProblem& pb) {
  const Mesh& m = fitted.base();
  const auto& e = m.edge(edge);
  const Point a = m.vertex(e.v0).p, b = m.vertex(e.v1).p;
  const Point c = fitted.cut_point(edge)->p;
  const int entering = fitted.entry_exit_triangles(edge).first;
  const Point apex = m.vertex(m.triangle(entering).v[m.local_edge(entering, edge)]).p;
  Vec2 n{b.y - a.y, a.x - b.x};
  n = n * (1.0 / norm(n));
  if (dot(n, apex - a) > 0.0) n = n * -1.0;  // outward from the entering triangle
  const auto flux = [&](Point x) { return dot(pb.grad_branch(pb.side(x), x) * pb.coefficient(pb.side(x)), n); };
  // flux is continuous and linear, psi is linear on each half: two-point Gauss is exact.
  const double g = 0.5 / std::sqrt(3.0);
  double integral = 0.0;
  for (const auto& [from, to] : {std::pair{a, c}, std::pair{b, c}}) {
    const double len = distance(from, to);
    for (double s : {0.5 - g, 0.5 + g}) integral += 0.5 * len * flux(lerp(from, to, s)) * s;
  }
  return 2.0 * integral / distance(a, b);
}

inline FluxReport flux_diagnostic(const FittedMesh& fitted, const DiscreteSolution& s, const RadialProblem& pb) {
  FluxReport r;
  for (std::size_t l = 0; l < s.lambda.size(); ++l) {
    const int e = s.dofs.multiplier_edge[l];
    FluxEntry f{e, s.lambda[l], exact_edge_flux(fitted, e, pb)};
    const double d = std::abs(f.lambda - f.exact);
    r.max_abs = std::max(r.max_abs, d);
    r.mean_abs += d;
    r.entries.push_back(f);
  }
  if (!r.entries.empty()) r.mean_abs /= static_cast<double>(r.entries.size());
  return r;
}

}  // namespace ifem
