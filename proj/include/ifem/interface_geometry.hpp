#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ifem/errors.hpp"
#include "ifem/geometry.hpp"
#include "ifem/mesh.hpp"

namespace ifem {

/// Plus is the interior of the interface curve (phi < 0), Minus the exterior.
enum class Side { Plus, Minus };

inline const char* to_string(Side s) { return s == Side::Plus ? "+" : "-"; }

enum class VertexState { Inside, Outside, On };

inline Side side_of(VertexState s) { return s == VertexState::Inside ? Side::Plus : Side::Minus; }

struct Circle {
  Point center;
  double radius = 0.0;
};

/// Closed interface given as the zero set of a level-set function, negative inside.
class LevelSetInterface {
public:
  static LevelSetInterface circle(Point center, double radius) {
    if (!(radius > 0.0)) throw ConfigError("interface radius must be positive");
    LevelSetInterface s;
    s.circle_ = Circle{center, radius};
    s.phi_ = [center, radius](Point p) { return distance(p, center) - radius; };
    return s;
  }

  static LevelSetInterface implicit(std::function<double(Point)> phi) {
    if (!phi) throw ConfigError("level-set function is empty");
    LevelSetInterface s;
    s.phi_ = std::move(phi);
    return s;
  }

  double operator()(Point p) const { return phi_(p); }
  const std::optional<Circle>& as_circle() const { return circle_; }

  /// Same zero set, but without the closed-form circle shortcut.
  LevelSetInterface without_closed_form() const {
    LevelSetInterface s = *this;
    s.circle_.reset();
    return s;
  }

private:
  LevelSetInterface() = default;
  std::function<double(Point)> phi_;
  std::optional<Circle> circle_;
};

struct GeometryTolerances {
  double vertex_on = 1e-12;  // |phi(v)| below this puts v on the interface
  double snap = 1e-9;        // cut parameters closer than this to an end snap to that vertex
};

namespace detail {

/// Roots of |a + t(b-a) - c|^2 = R^2, ascending; empty when the line misses the circle.
inline std::vector<double> circle_line_roots(const Circle& c, Point a, Point b) {
  const Vec2 d = b - a;
  const Vec2 w = a - c.center;
  const double qa = dot(d, d);
  const double qb = dot(d, w);  // half of the linear coefficient
  const double qc = dot(w, w) - c.radius * c.radius;
  const double disc = qb * qb - qa * qc;
  if (disc < 0.0) return {};
  const double s = std::sqrt(disc);
  const double q = -(qb + std::copysign(s, qb));
  if (q == 0.0) return {0.0};
  std::vector<double> r{q / qa, qc / q};
  std::sort(r.begin(), r.end());
  return r;
}

inline double bisect_edge(const LevelSetInterface& iface, Point a, Point b, double fa, double fb,
                          double tol) {
  if (!((fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0)))
    throw GeometryError("bisection interval does not bracket a root");
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = iface(lerp(a, b, mid));
    if (std::abs(fm) <= tol || hi - lo < 1e-17) return mid;
    if ((fm < 0.0) == (fa < 0.0)) {
      lo = mid;
      fa = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Parameter of the sign change of phi on the segment a->b, whose end values have strictly
/// opposite signs. Closed form for circles, bisection to |phi| <= 1e-13 |b-a| otherwise.
inline double segment_root(const LevelSetInterface& iface, Point a, Point b) {
  const double fa = iface(a);
  const double fb = iface(b);
  if (const auto& c = iface.as_circle()) {
    if (!((fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0)))
      throw GeometryError("segment end values do not bracket the interface");
    double best = std::numeric_limits<double>::quiet_NaN();
    double best_gap = std::numeric_limits<double>::infinity();
    for (double t : detail::circle_line_roots(*c, a, b)) {
      const double gap = t < 0.0 ? -t : (t > 1.0 ? t - 1.0 : 0.0);
      if (gap < best_gap) {
        best_gap = gap;
        best = t;
      }
    }
    if (std::isnan(best)) throw GeometryError("no circle root on a sign-changing segment");
    return std::clamp(best, 0.0, 1.0);
  }
  return detail::bisect_edge(iface, a, b, fa, fb, 1e-13 * distance(a, b));
}

/// Result of intersecting one edge with the interface.
struct EdgeCut {
  double t = 0.0;        // along a -> b
  Point p;
  int snapped_end = -1;  // 0 or 1 when the cut coincides with (or was snapped to) an endpoint
};

/// Intersection of segment a->b with the interface. Empty when both ends lie strictly on the
/// same side. An endpoint on the interface, or a cut within `tol.snap` of it, is reported as
/// snapped to that endpoint.
inline std::optional<EdgeCut> edge_intersection(Point a, Point b, const LevelSetInterface& iface,
                                                const GeometryTolerances& tol = {}) {
  const double fa = iface(a);
  const double fb = iface(b);
  if (std::abs(fa) < tol.vertex_on) return EdgeCut{0.0, a, 0};
  if (std::abs(fb) < tol.vertex_on) return EdgeCut{1.0, b, 1};
  if ((fa < 0.0) == (fb < 0.0)) return std::nullopt;
  const double t = segment_root(iface, a, b);
  if (t < tol.snap) return EdgeCut{0.0, a, 0};
  if (t > 1.0 - tol.snap) return EdgeCut{1.0, b, 1};
  return EdgeCut{t, lerp(a, b, t), -1};
}

/// Overload on mesh edges, parameterized from v0 to v1.
inline std::optional<EdgeCut> edge_intersection(const Mesh& mesh, const Edge& e,
                                                const LevelSetInterface& iface,
                                                const GeometryTolerances& tol = {}) {
  return edge_intersection(mesh.vertex(e.v0).p, mesh.vertex(e.v1).p, iface, tol);
}

// ---------------------------------------------------------------------------------------------
// Triangle classification

/// Case 1: the triangle does not meet the interface.
struct Uncut {
  Side side;
};

/// Case 2: the interface touches the triangle only along an edge or at a vertex.
struct EdgeAligned {
  Side side;
};

/// Case 3: two edges cut at interior points. Local edge k is the edge opposite local vertex k.
struct CutTwoEdges {
  int apex = -1;        // local vertex shared by both cut edges
  Side apex_side = Side::Plus;
  int entry_edge = -1;  // e+_T, where the counterclockwise interface enters T
  int exit_edge = -1;   // e-_T
  Point entry_point;
  Point exit_point;
  int remaining_edge() const { return apex; }
};

/// Case 4: the interface passes through a vertex and cuts the opposite edge.
struct CutEdgeVertex {
  int on_vertex = -1;  // local vertex on the interface
  int cut_edge = -1;   // local edge opposite on_vertex
  Point cut_point;
  Side next_side = Side::Plus;  // side of local vertex on_vertex+1
  bool enters_at_vertex = false;
};

using TriangleClassification = std::variant<Uncut, EdgeAligned, CutTwoEdges, CutEdgeVertex>;

inline bool is_cut(const TriangleClassification& c) {
  return std::holds_alternative<CutTwoEdges>(c) || std::holds_alternative<CutEdgeVertex>(c);
}

/// Classification from vertex states and the (non-snapped) cut points on the local edges.
inline TriangleClassification classify_from_states(const Tri& corners,
                                                   const std::array<VertexState, 3>& s,
                                                   const std::array<std::optional<Point>, 3>& cuts,
                                                   int tri_id = -1) {
  int n_on = 0;
  for (auto st : s) n_on += st == VertexState::On ? 1 : 0;
  const int n_cuts = static_cast<int>(std::count_if(cuts.begin(), cuts.end(),
                                                    [](const auto& c) { return c.has_value(); }));
  if (n_cuts == 3) throw GeometryError("all three edges crossed by the interface", tri_id);

  if (n_on == 3) throw GeometryError("all vertices on the interface", tri_id);
  if (n_on == 2) {
    for (int k = 0; k < 3; ++k)
      if (s[k] != VertexState::On) return EdgeAligned{side_of(s[k])};
  }
  if (n_on == 1) {
    int k = 0;
    while (s[k] != VertexState::On) ++k;
    const VertexState sa = s[(k + 1) % 3];
    const VertexState sb = s[(k + 2) % 3];
    if (sa == sb) return EdgeAligned{side_of(sa)};
    if (!cuts[k]) throw GeometryError("inconsistent cut data opposite an interface vertex", tri_id);
    CutEdgeVertex c;
    c.on_vertex = k;
    c.cut_edge = k;
    c.cut_point = *cuts[k];
    c.next_side = side_of(sa);
    // The interior must lie to the left of the traversal direction.
    const Point v = corners[k];
    const Point a = corners[(k + 1) % 3];
    const bool a_left_of_v_to_p = cross(c.cut_point - v, a - v) > 0.0;
    c.enters_at_vertex = (sa == VertexState::Inside) == a_left_of_v_to_p;
    return c;
  }

  if (s[0] == s[1] && s[1] == s[2]) {
    if (n_cuts != 0) throw GeometryError("cut edge in a triangle with uniform sign", tri_id);
    return Uncut{side_of(s[0])};
  }
  int apex = 0;
  for (int k = 0; k < 3; ++k)
    if (s[k] != s[(k + 1) % 3] && s[k] != s[(k + 2) % 3]) apex = k;
  const int edge_to_a = (apex + 2) % 3;  // edge (apex, apex+1) is opposite apex+2
  const int edge_to_b = (apex + 1) % 3;
  if (!cuts[edge_to_a] || !cuts[edge_to_b])
    throw GeometryError("sign change without a cut point", tri_id);
  CutTwoEdges c;
  c.apex = apex;
  c.apex_side = side_of(s[apex]);
  const Point pa = *cuts[edge_to_a];
  const Point pb = *cuts[edge_to_b];
  const bool apex_left_of_pa_to_pb = cross(pb - pa, corners[apex] - pa) > 0.0;
  if ((s[apex] == VertexState::Inside) == apex_left_of_pa_to_pb) {
    c.entry_edge = edge_to_a;
    c.exit_edge = edge_to_b;
    c.entry_point = pa;
    c.exit_point = pb;
  } else {
    c.entry_edge = edge_to_b;
    c.exit_edge = edge_to_a;
    c.entry_point = pb;
    c.exit_point = pa;
  }
  return c;
}

namespace detail {

struct CutAnalysis {
  std::vector<double> phi;
  std::vector<VertexState> state;
  std::vector<std::optional<EdgeCut>> cut;  // only strict interior cuts survive
  int snapped = 0;                          // vertices moved onto the interface by snapping
};

/// Vertex states and interior edge cuts, with snapping propagated to a fixed point so that
/// every triangle sharing an edge sees the same data.
inline CutAnalysis analyze_cuts(std::span<const Point> pts, std::span<const std::array<int, 2>> edges,
                                const LevelSetInterface& iface, const GeometryTolerances& tol) {
  CutAnalysis r;
  r.phi.resize(pts.size());
  r.state.resize(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    r.phi[i] = iface(pts[i]);
    r.state[i] = std::abs(r.phi[i]) < tol.vertex_on
                     ? VertexState::On
                     : (r.phi[i] < 0.0 ? VertexState::Inside : VertexState::Outside);
  }
  r.cut.assign(edges.size(), std::nullopt);
  const auto strict_pair = [&](const std::array<int, 2>& e) {
    const auto s0 = r.state[e[0]], s1 = r.state[e[1]];
    return s0 != VertexState::On && s1 != VertexState::On && s0 != s1;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto& e = edges[k];
      if (!strict_pair(e)) continue;
      const Point a = pts[e[0]], b = pts[e[1]];
      const double t = segment_root(iface, a, b);
      if (t < tol.snap || t > 1.0 - tol.snap) {
        r.state[t < tol.snap ? e[0] : e[1]] = VertexState::On;
        ++r.snapped;
        changed = true;
      }
    }
  }
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& e = edges[k];
    const Point a = pts[e[0]], b = pts[e[1]];
    if (strict_pair(e)) {
      const double t = segment_root(iface, a, b);
      r.cut[k] = EdgeCut{t, lerp(a, b, t), -1};
    } else if (const auto& c = iface.as_circle();
               c && r.state[e[0]] == VertexState::Outside && r.state[e[1]] == VertexState::Outside) {
      const auto roots = circle_line_roots(*c, a, b);
      if (roots.size() == 2 && roots[0] > 0.0 && roots[1] < 1.0 &&
          c->radius - distance(c->center, lerp(a, b, 0.5 * (roots[0] + roots[1]))) > tol.vertex_on)
        throw GeometryError("interface crosses one edge twice; mesh too coarse for the interface");
    }
  }
  return r;
}

}  // namespace detail

/// Classify a standalone triangle (counterclockwise corners) against the interface.
inline TriangleClassification classify_triangle(const Tri& corners, const LevelSetInterface& iface,
                                                const GeometryTolerances& tol = {}) {
  const std::array<std::array<int, 2>, 3> edges{{{1, 2}, {2, 0}, {0, 1}}};
  const auto a = detail::analyze_cuts(corners, edges, iface, tol);
  std::array<std::optional<Point>, 3> cuts;
  for (int k = 0; k < 3; ++k)
    if (a.cut[k]) cuts[k] = a.cut[k]->p;
  return classify_from_states(corners, {a.state[0], a.state[1], a.state[2]}, cuts);
}

// ---------------------------------------------------------------------------------------------
// Subtriangulation

enum class SubLabel { Whole, K1, K2, K3 };

inline const char* to_string(SubLabel k) {
  switch (k) {
    case SubLabel::K1: return "K1";
    case SubLabel::K2: return "K2";
    case SubLabel::K3: return "K3";
    default: return "T";
  }
}

/// A node of the fitted mesh: either an original vertex or the cut point on an edge.
struct FittedNode {
  bool is_cut = false;
  int id = -1;     // global vertex id, or global edge id for cut points
  int local = -1;  // local vertex index in the parent, or local edge index for cut points

  friend bool operator==(const FittedNode&, const FittedNode&) = default;
};

struct SubTriangle {
  int parent = -1;
  SubLabel label = SubLabel::Whole;
  std::array<FittedNode, 3> nodes;
  Tri pts;  // counterclockwise
  Side side = Side::Plus;

  double area() const { return signed_area(pts); }
};

/// Identity of the parent triangle used to label subtriangle nodes.
struct ParentIds {
  int tri = -1;
  std::array<int, 3> vertex{0, 1, 2};
  std::array<int, 3> edge{0, 1, 2};
};

/// Split a cut triangle along the chord of the interface. Case 3 yields K1 (apex side) and the
/// quadrilateral split into K2 (sharing the chord with K1) and K3 along the diagonal with the
/// larger minimum angle. Case 4 yields K1 (the + piece) and K2.
inline std::vector<SubTriangle> subtriangulate(const Tri& corners, const TriangleClassification& cls,
                                               const ParentIds& ids = {}) {
  const double parent_area = signed_area(corners);
  const auto vnode = [&](int k) { return FittedNode{false, ids.vertex[k], k}; };
  const auto cnode = [&](int k) { return FittedNode{true, ids.edge[k], k}; };
  std::vector<SubTriangle> out;
  const auto add = [&](SubLabel label, std::array<FittedNode, 3> n, Tri p, Side side) {
    SubTriangle s{ids.tri, label, n, p, side};
    if (!(s.area() > 1e-14 * parent_area))
      throw GeometryError("degenerate subtriangle in the interface split", ids.tri);
    out.push_back(s);
  };

  if (const auto* c = std::get_if<CutTwoEdges>(&cls)) {
    const int k = c->apex;
    const int ia = (k + 1) % 3, ib = (k + 2) % 3;
    const int ea = ib, eb = ia;  // local edges (apex,a) and (apex,b)
    const Point pa = c->entry_edge == ea ? c->entry_point : c->exit_point;
    const Point pb = c->entry_edge == eb ? c->entry_point : c->exit_point;
    const Point apex = corners[k], a = corners[ia], b = corners[ib];
    const Side far = c->apex_side == Side::Plus ? Side::Minus : Side::Plus;

    add(SubLabel::K1, {vnode(k), cnode(ea), cnode(eb)}, {apex, pa, pb}, c->apex_side);

    // diagonal pa-b
    const Tri k2_a{pa, b, pb}, k3_a{pa, a, b};
    // diagonal pb-a
    const Tri k2_b{pa, a, pb}, k3_b{pb, a, b};
    const double q_a = std::min(min_angle(k2_a), min_angle(k3_a));
    const double q_b = std::min(min_angle(k2_b), min_angle(k3_b));
    bool use_a;
    if (std::abs(q_a - q_b) <= 1e-12 * std::max(q_a, q_b))
      use_a = ids.vertex[ib] < ids.vertex[ia];
    else
      use_a = q_a > q_b;
    if (use_a) {
      add(SubLabel::K2, {cnode(ea), vnode(ib), cnode(eb)}, k2_a, far);
      add(SubLabel::K3, {cnode(ea), vnode(ia), vnode(ib)}, k3_a, far);
    } else {
      add(SubLabel::K2, {cnode(ea), vnode(ia), cnode(eb)}, k2_b, far);
      add(SubLabel::K3, {cnode(eb), vnode(ia), vnode(ib)}, k3_b, far);
    }
    return out;
  }

  if (const auto* c = std::get_if<CutEdgeVertex>(&cls)) {
    const int k = c->on_vertex;
    const int ia = (k + 1) % 3, ib = (k + 2) % 3;
    const Side side_a = c->next_side;
    const Side side_b = side_a == Side::Plus ? Side::Minus : Side::Plus;
    SubTriangle first{ids.tri, SubLabel::K1, {vnode(k), vnode(ia), cnode(k)},
                      {corners[k], corners[ia], c->cut_point}, side_a};
    SubTriangle second{ids.tri, SubLabel::K2, {vnode(k), cnode(k), vnode(ib)},
                       {corners[k], c->cut_point, corners[ib]}, side_b};
    if (side_a == Side::Minus) {
      std::swap(first.label, second.label);
      add(second.label, second.nodes, second.pts, second.side);
      add(first.label, first.nodes, first.pts, first.side);
    } else {
      add(first.label, first.nodes, first.pts, first.side);
      add(second.label, second.nodes, second.pts, second.side);
    }
    return out;
  }
  throw GeometryError("subtriangulate requires a cut triangle", ids.tri);
}

// ---------------------------------------------------------------------------------------------
// Fitted mesh

struct CutPoint {
  int edge = -1;
  double t = 0.0;  // from v0 to v1
  Point p;
};

struct PolylineNode {
  FittedNode node;  // `local` is unused here
  Point p;
};

/// Original mesh plus the interface split: classifications, subtriangles, the cut-edge set and
/// the chord polyline gamma_h. Immutable once built.
class FittedMesh {
public:
  const Mesh& base() const { return base_; }
  const LevelSetInterface& interface() const { return iface_; }
  const GeometryTolerances& tolerances() const { return tol_; }

  VertexState vertex_state(int v) const { return state_[v]; }
  double vertex_phi(int v) const { return phi_[v]; }

  const TriangleClassification& classification(int tri) const { return cls_[tri]; }
  bool is_cut_triangle(int tri) const { return is_cut(cls_[tri]); }

  /// Cut triangles (cases 3 and 4) in id order.
  const std::vector<int>& band() const { return band_; }
  /// Edges crossed in their interior, in id order.
  const std::vector<int>& cut_edges() const { return cut_edges_; }
  const std::optional<CutPoint>& cut_point(int edge) const { return cut_[edge]; }
  /// Position of `edge` within cut_edges(), or -1.
  int cut_index(int edge) const { return cut_index_[edge]; }

  /// Fitted elements of a triangle: the triangle itself when uncut, else its subtriangles.
  std::span<const SubTriangle> elements(int tri) const {
    return {elements_.data() + offsets_[tri], elements_.data() + offsets_[tri + 1]};
  }
  const std::vector<SubTriangle>& all_elements() const { return elements_; }

  /// Closed counterclockwise polyline; the first node is repeated at the end.
  const std::vector<PolylineNode>& gamma_h() const { return gamma_h_; }
  /// Owning cut triangle of polyline segment i (between nodes i and i+1), -1 for mesh edges.
  const std::vector<int>& gamma_h_owner() const { return gamma_owner_; }

  double gamma_h_length() const {
    double l = 0.0;
    for (std::size_t i = 0; i + 1 < gamma_h_.size(); ++i) l += distance(gamma_h_[i].p, gamma_h_[i + 1].p);
    return l;
  }

  int vertices_on_interface() const {
    return static_cast<int>(std::count(state_.begin(), state_.end(), VertexState::On));
  }
  int snapped_by_tolerance() const { return snapped_; }

  int count_uncut() const { return count_of<Uncut>(); }
  int count_edge_aligned() const { return count_of<EdgeAligned>(); }
  int count_cut_two_edges() const { return count_of<CutTwoEdges>(); }
  int count_cut_edge_vertex() const { return count_of<CutEdgeVertex>(); }

  /// For a cut edge: the adjacent triangle where the interface enters through it and the one it
  /// leaves through it. The multiplier jump is taken as (entering side) - (leaving side).
  std::pair<int, int> entry_exit_triangles(int edge) const { return edge_sides_[cut_index_[edge]]; }

  friend FittedMesh build_fitted_mesh(Mesh mesh, LevelSetInterface iface, GeometryTolerances tol);

private:
  FittedMesh(Mesh m, LevelSetInterface i, GeometryTolerances t)
      : base_(std::move(m)), iface_(std::move(i)), tol_(t) {}

  template <class Case>
  int count_of() const {
    return static_cast<int>(std::count_if(cls_.begin(), cls_.end(),
                                          [](const auto& c) { return std::holds_alternative<Case>(c); }));
  }

  Mesh base_;
  LevelSetInterface iface_;
  GeometryTolerances tol_;
  std::vector<double> phi_;
  std::vector<VertexState> state_;
  int snapped_ = 0;
  std::vector<std::optional<CutPoint>> cut_;
  std::vector<int> cut_edges_;
  std::vector<int> cut_index_;
  std::vector<std::pair<int, int>> edge_sides_;
  std::vector<TriangleClassification> cls_;
  std::vector<int> band_;
  std::vector<SubTriangle> elements_;
  std::vector<std::size_t> offsets_;
  std::vector<PolylineNode> gamma_h_;
  std::vector<int> gamma_owner_;
};

/// Classify every triangle, split the cut ones and assemble gamma_h.
inline FittedMesh build_fitted_mesh(Mesh mesh, LevelSetInterface iface, GeometryTolerances tol = {}) {
  FittedMesh f(std::move(mesh), std::move(iface), tol);
  const Mesh& m = f.base_;

  std::vector<Point> pts;
  pts.reserve(m.num_vertices());
  for (const auto& v : m.vertices()) pts.push_back(v.p);
  std::vector<std::array<int, 2>> edges;
  edges.reserve(m.num_edges());
  for (const auto& e : m.edges()) edges.push_back({e.v0, e.v1});

  auto analysis = detail::analyze_cuts(pts, edges, f.iface_, tol);
  for (const auto& v : m.vertices())
    if (v.on_boundary && analysis.state[v.id] == VertexState::On)
      throw GeometryError("interface touches the domain boundary at vertex " + std::to_string(v.id));
  for (const auto& e : m.edges())
    if (analysis.cut[e.id] && e.on_boundary())
      throw GeometryError("interface crosses the domain boundary on edge " + std::to_string(e.id));

  f.phi_ = std::move(analysis.phi);
  f.state_ = std::move(analysis.state);
  f.snapped_ = analysis.snapped;
  f.cut_.assign(m.num_edges(), std::nullopt);
  f.cut_index_.assign(m.num_edges(), -1);
  for (int e = 0; e < m.num_edges(); ++e) {
    if (!analysis.cut[e]) continue;
    f.cut_[e] = CutPoint{e, analysis.cut[e]->t, analysis.cut[e]->p};
    f.cut_index_[e] = static_cast<int>(f.cut_edges_.size());
    f.cut_edges_.push_back(e);
  }

  f.cls_.reserve(m.num_triangles());
  f.offsets_.reserve(m.num_triangles() + 1);
  f.offsets_.push_back(0);
  for (const auto& t : m.triangles()) {
    const Tri corners = m.corners(t.id);
    std::array<VertexState, 3> s;
    std::array<std::optional<Point>, 3> cuts;
    for (int k = 0; k < 3; ++k) {
      s[k] = f.state_[t.v[k]];
      if (f.cut_[t.e[k]]) cuts[k] = f.cut_[t.e[k]]->p;
    }
    auto cls = classify_from_states(corners, s, cuts, t.id);
    if (is_cut(cls)) {
      f.band_.push_back(t.id);
      const auto subs = subtriangulate(corners, cls, ParentIds{t.id, t.v, t.e});
      f.elements_.insert(f.elements_.end(), subs.begin(), subs.end());
    } else {
      const Side side = std::holds_alternative<Uncut>(cls) ? std::get<Uncut>(cls).side
                                                           : std::get<EdgeAligned>(cls).side;
      f.elements_.push_back(SubTriangle{t.id,
                                        SubLabel::Whole,
                                        {FittedNode{false, t.v[0], 0}, FittedNode{false, t.v[1], 1},
                                         FittedNode{false, t.v[2], 2}},
                                        corners,
                                        side});
    }
    f.cls_.push_back(std::move(cls));
    f.offsets_.push_back(f.elements_.size());
  }

  // Directed chord segments, inside on the left.
  const auto key_of = [&](const FittedNode& n) -> std::int64_t {
    return n.is_cut ? m.num_vertices() + static_cast<std::int64_t>(n.id) : n.id;
  };
  struct Segment {
    PolylineNode from, to;
    int owner;
  };
  std::vector<Segment> segments;
  std::vector<std::pair<int, int>> sides(f.cut_edges_.size(), {-1, -1});
  for (int tri : f.band_) {
    const auto& t = m.triangle(tri);
    if (const auto* c = std::get_if<CutTwoEdges>(&f.cls_[tri])) {
      const FittedNode in{true, t.e[c->entry_edge], -1}, out{true, t.e[c->exit_edge], -1};
      segments.push_back({{in, c->entry_point}, {out, c->exit_point}, tri});
      sides[f.cut_index_[in.id]].first = tri;
      sides[f.cut_index_[out.id]].second = tri;
    } else {
      const auto& cv = std::get<CutEdgeVertex>(f.cls_[tri]);
      const PolylineNode v{{false, t.v[cv.on_vertex], -1}, m.vertex(t.v[cv.on_vertex]).p};
      const PolylineNode p{{true, t.e[cv.cut_edge], -1}, cv.cut_point};
      if (cv.enters_at_vertex) {
        segments.push_back({v, p, tri});
        sides[f.cut_index_[p.node.id]].second = tri;
      } else {
        segments.push_back({p, v, tri});
        sides[f.cut_index_[p.node.id]].first = tri;
      }
    }
  }
  for (std::size_t i = 0; i < sides.size(); ++i)
    if (sides[i].first < 0 || sides[i].second < 0 || sides[i].first == sides[i].second)
      throw GeometryError("cut edge " + std::to_string(f.cut_edges_[i]) +
                          " lacks a consistent entering/leaving triangle pair");
  f.edge_sides_ = std::move(sides);

  // Mesh edges lying on the interface (both ends On, one neighbour on each side).
  for (const auto& e : m.edges()) {
    if (f.state_[e.v0] != VertexState::On || f.state_[e.v1] != VertexState::On) continue;
    if (e.on_boundary()) continue;
    int inside_tri = -1;
    for (int tri : {e.tri_left, e.tri_right}) {
      const auto* ea = std::get_if<EdgeAligned>(&f.cls_[tri]);
      if (ea && ea->side == Side::Plus) inside_tri = tri;
    }
    if (inside_tri < 0) continue;
    const int k = m.local_edge(inside_tri, e.id);
    const auto& t = m.triangle(inside_tri);
    // counterclockwise in the inside triangle keeps the inside on the left
    const int a = t.v[(k + 1) % 3], b = t.v[(k + 2) % 3];
    segments.push_back({{{false, a, -1}, m.vertex(a).p}, {{false, b, -1}, m.vertex(b).p}, -1});
  }

  if (segments.empty()) return f;
  std::map<std::int64_t, std::size_t> by_start;
  for (std::size_t i = 0; i < segments.size(); ++i)
    if (!by_start.emplace(key_of(segments[i].from.node), i).second)
      throw GeometryError("interface polyline branches at a node");
  std::size_t cur = 0;
  std::vector<bool> used(segments.size(), false);
  f.gamma_h_.push_back(segments[0].from);
  for (std::size_t n = 0; n < segments.size(); ++n) {
    if (used[cur]) throw GeometryError("interface polyline closes early; several components?");
    used[cur] = true;
    f.gamma_h_.push_back(segments[cur].to);
    f.gamma_owner_.push_back(segments[cur].owner);
    const auto it = by_start.find(key_of(segments[cur].to.node));
    if (it == by_start.end()) throw GeometryError("interface polyline is not closed");
    cur = it->second;
  }
  if (cur != 0 || key_of(f.gamma_h_.front().node) != key_of(f.gamma_h_.back().node))
    throw GeometryError("interface polyline is not a single closed curve");
  return f;
}

/// Side of gamma_h a point lies on. Points exactly on gamma_h count as +.
inline Side side_of_point(Point p, const FittedMesh& fitted) {
  const int tri = fitted.base().locate(p);
  const auto elems = fitted.elements(tri);
  if (elems.size() == 1) return elems[0].side;
  constexpr double eps = 1e-12;
  for (Side want : {Side::Plus, Side::Minus}) {
    for (const auto& k : elems) {
      if (k.side != want) continue;
      const auto l = barycentric(k.pts, p);
      if (l[0] >= -eps && l[1] >= -eps && l[2] >= -eps) return want;
    }
  }
  // Outside all pieces by round-off: fall back to the nearest centroid.
  double best = std::numeric_limits<double>::infinity();
  Side side = Side::Plus;
  for (const auto& k : elems) {
    const double d = distance(centroid(k.pts), p);
    if (d < best) {
      best = d;
      side = k.side;
    }
  }
  return side;
}

// ---------------------------------------------------------------------------------------------
// Quality diagnostics

struct QualityReport {
  double h = 0.0;
  double min_inradius = 0.0;
  double h_over_rho = 0.0;
  double min_angle_deg = 0.0;
  std::optional<double> min_cut_fraction;     // min over cut edges of min(t, 1-t)
  std::optional<double> min_cut_edge_over_h;  // min |e| / h over cut edges
  int edge_aligned = 0;
  int vertices_on_interface = 0;
  int snapped_by_tolerance = 0;
};

namespace detail {
inline void accumulate_quality(QualityReport& q, const Tri& t) {
  q.min_inradius = std::min(q.min_inradius, inradius(t));
  q.min_angle_deg = std::min(q.min_angle_deg, min_angle(t) * 180.0 / std::numbers::pi);
}
}  // namespace detail

inline QualityReport mesh_quality_report(const Mesh& mesh) {
  QualityReport q;
  q.h = mesh.h();
  q.min_inradius = std::numeric_limits<double>::infinity();
  q.min_angle_deg = 180.0;
  for (const auto& t : mesh.triangles()) detail::accumulate_quality(q, mesh.corners(t.id));
  q.h_over_rho = q.h / q.min_inradius;
  return q;
}

inline QualityReport mesh_quality_report(const FittedMesh& fitted) {
  const Mesh& m = fitted.base();
  QualityReport q;
  q.h = m.h();
  q.min_inradius = std::numeric_limits<double>::infinity();
  q.min_angle_deg = 180.0;
  for (const auto& k : fitted.all_elements()) detail::accumulate_quality(q, k.pts);
  q.h_over_rho = q.h / q.min_inradius;
  for (int e : fitted.cut_edges()) {
    const auto& c = *fitted.cut_point(e);
    const double frac = std::min(c.t, 1.0 - c.t);
    const auto& edge = m.edge(e);
    const double len = distance(m.vertex(edge.v0).p, m.vertex(edge.v1).p) / q.h;
    q.min_cut_fraction = std::min(q.min_cut_fraction.value_or(1.0), frac);
    q.min_cut_edge_over_h = std::min(q.min_cut_edge_over_h.value_or(len), len);
  }
  q.edge_aligned = fitted.count_edge_aligned();
  q.vertices_on_interface = fitted.vertices_on_interface();
  q.snapped_by_tolerance = fitted.snapped_by_tolerance();
  return q;
}

}  // namespace ifem
