#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "ifem/interface_geometry.hpp"

using namespace ifem;

namespace {

double segment_distance(Point p, Point a, Point b) {
  const Vec2 d = b - a;
  const double t = std::clamp(dot(p - a, d) / dot(d, d), 0.0, 1.0);
  return distance(p, lerp(a, b, t));
}

/// Even-odd ray casting against the closed polyline.
bool inside_polygon(Point p, const std::vector<PolylineNode>& poly) {
  bool in = false;
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
    const Point a = poly[i].p, b = poly[i + 1].p;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) in = !in;
    }
  }
  return in;
}

double shoelace(const std::vector<PolylineNode>& poly) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) s += cross(poly[i].p, poly[i + 1].p);
  return 0.5 * s;
}

/// Grid vertices exactly on the centered circle of radius 1/2: (4i-2N)^2 + (4j-2N)^2 = N^2.
int lattice_points_on_half_circle(int n) {
  int count = 0;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const long a = 4L * i - 2L * n, b = 4L * j - 2L * n;
      count += a * a + b * b == static_cast<long>(n) * n ? 1 : 0;
    }
  return count;
}

struct Config {
  int n;
  Point center;
  double radius;
};

std::string name(const Config& c) {
  return "N=" + std::to_string(c.n) + " c=(" + std::to_string(c.center.x) + "," + std::to_string(c.center.y) + ")";
}

}  // namespace

TEST(CircleRoots, HandComputed) {
  const Circle c{{0.0, 0.0}, 0.5};
  const auto r = detail::circle_line_roots(c, {-1.0, 0.0}, {1.0, 0.0});
  ASSERT_EQ(r.size(), 2u);
  EXPECT_NEAR(r[0], 0.25, 1e-15);
  EXPECT_NEAR(r[1], 0.75, 1e-15);
  EXPECT_TRUE(detail::circle_line_roots(c, {-1.0, 0.6}, {1.0, 0.6}).empty());
}

TEST(EdgeIntersection, InteriorCut) {
  const auto iface = LevelSetInterface::circle({0.0, 0.0}, 0.5);
  const auto cut = edge_intersection({0.0, 0.0}, {1.0, 0.0}, iface);
  ASSERT_TRUE(cut);
  EXPECT_NEAR(cut->t, 0.5, 1e-15);
  EXPECT_EQ(cut->snapped_end, -1);
  EXPECT_FALSE(edge_intersection({0.6, 0.0}, {1.0, 0.0}, iface));
}

TEST(EdgeIntersection, SnapsNearEndpoints) {
  const auto iface = LevelSetInterface::circle({0.0, 0.0}, 0.5);
  const auto on = edge_intersection({0.5, 0.0}, {1.0, 0.0}, iface);
  ASSERT_TRUE(on);
  EXPECT_EQ(on->snapped_end, 0);
  const auto near = edge_intersection({0.0, 0.0}, {0.5 + 1e-11, 0.0}, iface);
  ASSERT_TRUE(near);
  EXPECT_EQ(near->snapped_end, 1);
}

TEST(EdgeIntersection, BisectionMatchesClosedForm) {
  const auto iface = LevelSetInterface::circle({0.1, -0.05}, 0.45);
  const auto generic = iface.without_closed_form();
  const Point a{-0.2, 0.1}, b{0.7, 0.3};
  const auto c1 = edge_intersection(a, b, iface), c2 = edge_intersection(a, b, generic);
  ASSERT_TRUE(c1 && c2);
  EXPECT_NEAR(c1->t, c2->t, 1e-12);
  EXPECT_LE(std::abs(iface(c2->p)), 1e-12);
}

TEST(Classify, UncutSides) {
  const auto iface = LevelSetInterface::circle({0.0, 0.0}, 0.5);
  const auto in = classify_triangle({Point{0, 0}, Point{0.1, 0}, Point{0, 0.1}}, iface);
  ASSERT_TRUE(std::holds_alternative<Uncut>(in));
  EXPECT_EQ(std::get<Uncut>(in).side, Side::Plus);
  const auto out = classify_triangle({Point{0.8, 0.8}, Point{0.9, 0.8}, Point{0.8, 0.9}}, iface);
  EXPECT_EQ(std::get<Uncut>(out).side, Side::Minus);
}

TEST(Classify, TwoCutEdgesOrientsCounterclockwise) {
  const auto iface = LevelSetInterface::circle({0.0, 0.0}, 0.5);
  // apex (0.4, 0) inside, others outside
  const Tri t{Point{0.4, 0.0}, Point{0.7, 0.0}, Point{0.4, 0.35}};
  const auto c = classify_triangle(t, iface);
  ASSERT_TRUE(std::holds_alternative<CutTwoEdges>(c));
  const auto& k = std::get<CutTwoEdges>(c);
  EXPECT_EQ(k.apex, 0);
  EXPECT_EQ(k.apex_side, Side::Plus);
  // the inside must lie left of entry -> exit
  EXPECT_GT(cross(k.exit_point - k.entry_point, t[0] - k.entry_point), 0.0);
  EXPECT_NEAR(distance(k.entry_point, {0, 0}), 0.5, 1e-15);
  EXPECT_NEAR(distance(k.exit_point, {0, 0}), 0.5, 1e-15);
}

TEST(Classify, VertexAndOppositeEdge) {
  const auto iface = LevelSetInterface::circle({0.0, 0.0}, 0.5);
  const Tri t{Point{0.5, 0.0}, Point{0.7, 0.3}, Point{0.2, 0.1}};
  const auto c = classify_triangle(t, iface);
  ASSERT_TRUE(std::holds_alternative<CutEdgeVertex>(c));
  EXPECT_EQ(std::get<CutEdgeVertex>(c).on_vertex, 0);
}

TEST(Classify, TouchingAlongAnEdgeIsAligned) {
  // two vertices on the circle, third outside: no interior crossing
  const auto iface = LevelSetInterface::circle({0.0, 0.0}, 0.5);
  const Tri t{Point{0.3, 0.4}, Point{0.4, -0.3}, Point{0.9, 0.0}};
  const auto c = classify_triangle(t, iface);
  ASSERT_TRUE(std::holds_alternative<EdgeAligned>(c));
  EXPECT_EQ(std::get<EdgeAligned>(c).side, Side::Minus);
}

TEST(Subtriangulate, CaseThreeAreasAndLabels) {
  const auto iface = LevelSetInterface::circle({0.0, 0.0}, 0.5);
  const Tri t{Point{0.4, 0.0}, Point{0.7, 0.0}, Point{0.4, 0.35}};
  const auto subs = subtriangulate(t, classify_triangle(t, iface));
  ASSERT_EQ(subs.size(), 3u);
  double total = 0.0;
  for (const auto& k : subs) {
    EXPECT_GT(k.area(), 0.0);
    total += k.area();
  }
  EXPECT_NEAR(total, signed_area(t), 1e-15);
  EXPECT_EQ(subs[0].label, SubLabel::K1);
  EXPECT_EQ(subs[0].side, Side::Plus);
  EXPECT_EQ(subs[1].side, Side::Minus);
  EXPECT_EQ(subs[2].side, Side::Minus);
  EXPECT_EQ(subs[0].pts[0], t[0]);  // K1 is (apex, Pa, Pb)
}

TEST(FittedMesh, LatticePointsOnCircleMatchIntegerSearch) {
  for (int n : {4, 10, 20, 40, 60, 80}) {
    const auto f = build_fitted_mesh(build_structured_mesh(n), LevelSetInterface::circle({0, 0}, 0.5));
    EXPECT_EQ(f.vertices_on_interface(), lattice_points_on_half_circle(n)) << "N=" << n;
    EXPECT_EQ(f.snapped_by_tolerance(), 0);
  }
  EXPECT_EQ(lattice_points_on_half_circle(10), 0);
  EXPECT_EQ(lattice_points_on_half_circle(20), 12);
}

TEST(FittedMesh, OffCenterCircleHasNoVertexOnIt) {
  const auto f = build_fitted_mesh(build_structured_mesh(10), LevelSetInterface::circle({0.01, 0.0}, 0.5));
  EXPECT_EQ(f.vertices_on_interface(), 0);
  EXPECT_EQ(f.count_cut_edge_vertex(), 0);
}

TEST(FittedMesh, RejectsInterfaceLeavingTheDomain) {
  EXPECT_THROW(build_fitted_mesh(build_structured_mesh(10), LevelSetInterface::circle({0.7, 0.0}, 0.5)),
               GeometryError);
}

TEST(FittedMesh, RejectsDoubleCrossingOfOneEdge) {
  // N=2 puts the edge (0,0)-(1,0) across a small circle centered just above it
  EXPECT_THROW(build_fitted_mesh(build_structured_mesh(2), LevelSetInterface::circle({0.5, 0.05}, 0.2)),
               GeometryError);
}

TEST(FittedMesh, EntryExitTrianglesShareTheEdge) {
  const auto f = build_fitted_mesh(build_structured_mesh(20), LevelSetInterface::circle({0, 0}, 0.5));
  const Mesh& m = f.base();
  for (int e : f.cut_edges()) {
    const auto [in, out] = f.entry_exit_triangles(e);
    EXPECT_NE(in, out);
    EXPECT_GE(m.local_edge(in, e), 0);
    EXPECT_GE(m.local_edge(out, e), 0);
  }
}

TEST(FittedMesh, QualityReport) {
  const auto f = build_fitted_mesh(build_structured_mesh(10), LevelSetInterface::circle({0, 0}, 0.5));
  const auto q0 = mesh_quality_report(f.base());
  EXPECT_NEAR(q0.h_over_rho, 2.0 + std::sqrt(2.0), 1e-12);
  const auto q = mesh_quality_report(f);
  EXPECT_GE(q.h_over_rho, q0.h_over_rho);
  ASSERT_TRUE(q.min_cut_fraction);
  EXPECT_GT(*q.min_cut_fraction, 0.0);
  EXPECT_LE(*q.min_cut_fraction, 0.5);
}

class GeometrySuite : public ::testing::TestWithParam<Config> {};

TEST_P(GeometrySuite, AreaPartition) {
  const auto c = GetParam();
  const auto f = build_fitted_mesh(build_structured_mesh(c.n), LevelSetInterface::circle(c.center, c.radius));
  const Mesh& m = f.base();
  double total = 0.0;
  for (const auto& t : m.triangles()) {
    double s = 0.0;
    for (const auto& k : f.elements(t.id)) {
      EXPECT_GT(k.area(), 0.0);
      s += k.area();
    }
    EXPECT_NEAR(s, m.area(t.id), 1e-12 * m.area(t.id)) << name(c) << " tri " << t.id;
    total += s;
  }
  EXPECT_NEAR(total, 4.0, 4.0 * 1e-12);
}

TEST_P(GeometrySuite, CutPointsLieOnTheCircle) {
  const auto c = GetParam();
  const auto f = build_fitted_mesh(build_structured_mesh(c.n), LevelSetInterface::circle(c.center, c.radius));
  for (int e : f.cut_edges()) {
    const auto& cp = *f.cut_point(e);
    EXPECT_LE(std::abs(distance(cp.p, c.center) - c.radius), 1e-12);
    EXPECT_GT(cp.t, 0.0);
    EXPECT_LT(cp.t, 1.0);
  }
}

TEST_P(GeometrySuite, PolylineIsClosedCounterclockwiseAndEnclosesThePlusSide) {
  const auto c = GetParam();
  const auto f = build_fitted_mesh(build_structured_mesh(c.n), LevelSetInterface::circle(c.center, c.radius));
  const auto& g = f.gamma_h();
  ASSERT_GE(g.size(), 4u);
  EXPECT_EQ(g.front().p, g.back().p);
  double plus_area = 0.0;
  for (const auto& k : f.all_elements())
    if (k.side == Side::Plus) plus_area += k.area();
  EXPECT_NEAR(shoelace(g), plus_area, 1e-12);
  // inscribed polygon: shorter than the circle, by O(h^2)
  const double circ = 2.0 * std::numbers::pi * c.radius;
  EXPECT_LT(f.gamma_h_length(), circ);
  EXPECT_LT(circ - f.gamma_h_length(), 2.0 * f.base().max_edge_length() * f.base().max_edge_length());
}

TEST_P(GeometrySuite, CutEdgeCountMatchesCutTriangles) {
  const auto c = GetParam();
  const auto f = build_fitted_mesh(build_structured_mesh(c.n), LevelSetInterface::circle(c.center, c.radius));
  const int ne = static_cast<int>(f.cut_edges().size());
  EXPECT_EQ(2 * ne, 2 * f.count_cut_two_edges() + f.count_cut_edge_vertex());
  if (f.vertices_on_interface() == 0) {
    EXPECT_EQ(ne, static_cast<int>(f.band().size()));
  }
}

TEST_P(GeometrySuite, SubtriangleSidesAgreeWithSampling) {
  const auto c = GetParam();
  const auto f = build_fitted_mesh(build_structured_mesh(c.n), LevelSetInterface::circle(c.center, c.radius));
  const auto& g = f.gamma_h();
  const Mesh& m = f.base();
  constexpr int kGrid = 50;
  int checked = 0;
  for (int tri : f.band()) {
    const Tri t = m.corners(tri);
    for (int i = 0; i < kGrid; ++i)
      for (int j = 0; i + j < kGrid; ++j) {
        const double l1 = (i + 1.0 / 3.0) / kGrid, l2 = (j + 1.0 / 3.0) / kGrid;
        const Point p = t[0] * (1.0 - l1 - l2) + t[1] * l1 + t[2] * l2;
        double dmin = 1.0;
        for (std::size_t s = 0; s + 1 < g.size(); ++s) dmin = std::min(dmin, segment_distance(p, g[s].p, g[s + 1].p));
        if (dmin < 1e-9) continue;
        const Side oracle = inside_polygon(p, g) ? Side::Plus : Side::Minus;
        Side found = Side::Minus;
        bool located = false;
        for (const auto& k : f.elements(tri)) {
          const auto l = barycentric(k.pts, p);
          if (l[0] >= -1e-12 && l[1] >= -1e-12 && l[2] >= -1e-12) {
            found = k.side;
            located = true;
            break;
          }
        }
        ASSERT_TRUE(located) << name(c) << " tri " << tri;
        EXPECT_EQ(found, oracle) << name(c) << " tri " << tri;
        ++checked;
      }
  }
  EXPECT_GT(checked, 0);
  for (const auto& t : m.triangles()) {
    if (f.is_cut_triangle(t.id)) continue;
    const Point p = centroid(m.corners(t.id));
    EXPECT_EQ(f.elements(t.id)[0].side, inside_polygon(p, g) ? Side::Plus : Side::Minus);
  }
}

TEST_P(GeometrySuite, ImplicitInterfaceReproducesTheCircle) {
  const auto c = GetParam();
  const auto iface = LevelSetInterface::circle(c.center, c.radius);
  const auto a = build_fitted_mesh(build_structured_mesh(c.n), iface);
  const auto b = build_fitted_mesh(build_structured_mesh(c.n), iface.without_closed_form());
  ASSERT_EQ(a.cut_edges(), b.cut_edges());
  for (int e : a.cut_edges()) EXPECT_LE(distance(a.cut_point(e)->p, b.cut_point(e)->p), 1e-12);
  EXPECT_EQ(a.band(), b.band());
}

INSTANTIATE_TEST_SUITE_P(CenteredAndOffCenter, GeometrySuite,
                         ::testing::Values(Config{4, {0.0, 0.0}, 0.5}, Config{10, {0.0, 0.0}, 0.5},
                                           Config{20, {0.0, 0.0}, 0.5}, Config{40, {0.0, 0.0}, 0.5},
                                           Config{8, {0.13, -0.07}, 0.5}, Config{10, {0.13, -0.07}, 0.5},
                                           Config{20, {0.13, -0.07}, 0.5}, Config{40, {0.13, -0.07}, 0.5},
                                           Config{10, {0.01, 0.0}, 0.5}, Config{40, {-0.21, 0.17}, 0.41}, Config{40, {-0.12, 0.08}, 0.44}));
