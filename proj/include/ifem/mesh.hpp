#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ifem/errors.hpp"
#include "ifem/geometry.hpp"

namespace ifem {

struct Vertex {
  int id = -1;
  Point p;
  bool on_boundary = false;
};

struct Triangle {
  int id = -1;
  std::array<int, 3> v{};  // counterclockwise
  std::array<int, 3> e{};  // e[k] is the edge opposite v[k]
};

struct Edge {
  int id = -1;
  int v0 = -1;  // v0 < v1
  int v1 = -1;
  int tri_left = -1;
  int tri_right = -1;  // -1 on the boundary

  bool on_boundary() const { return tri_right < 0; }
};

/// Structured conforming triangulation of (-1,1)^2. Immutable once built.
class Mesh {
public:
  Mesh() = default;

  int subdivisions() const { return n_; }
  /// Grid spacing 2/N, the leg length of every triangle.
  double h() const { return 2.0 / n_; }
  /// Longest edge (the diagonal) 2*sqrt(2)/N.
  double max_edge_length() const { return std::sqrt(2.0) * h(); }

  const std::vector<Vertex>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<Edge>& edges() const { return edges_; }

  const Vertex& vertex(int id) const { return vertices_[id]; }
  const Triangle& triangle(int id) const { return triangles_[id]; }
  const Edge& edge(int id) const { return edges_[id]; }

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }
  int num_edges() const { return static_cast<int>(edges_.size()); }

  Tri corners(int tri) const {
    const auto& t = triangles_[tri];
    return {vertices_[t.v[0]].p, vertices_[t.v[1]].p, vertices_[t.v[2]].p};
  }

  double area(int tri) const { return signed_area(corners(tri)); }

  /// Local index of edge `edge` within triangle `tri`, or -1.
  int local_edge(int tri, int edge) const {
    for (int k = 0; k < 3; ++k)
      if (triangles_[tri].e[k] == edge) return k;
    return -1;
  }

  /// Vertex id at grid position (i, j).
  int grid_vertex(int i, int j) const { return j * (n_ + 1) + i; }

  /// Triangle containing p (ties resolved towards the lower-left cell).
  int locate(Point p) const {
    const double s = 0.5 * n_;
    int i = static_cast<int>(std::floor((p.x + 1.0) * s));
    int j = static_cast<int>(std::floor((p.y + 1.0) * s));
    i = std::clamp(i, 0, n_ - 1);
    j = std::clamp(j, 0, n_ - 1);
    const double lx = (p.x + 1.0) * s - i;
    const double ly = (p.y + 1.0) * s - j;
    return 2 * (j * n_ + i) + (ly > lx ? 1 : 0);
  }

  int num_boundary_edges() const {
    int count = 0;
    for (const auto& e : edges_) count += e.on_boundary() ? 1 : 0;
    return count;
  }

  friend Mesh build_structured_mesh(int n);

private:
  int n_ = 0;
  std::vector<Vertex> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Edge> edges_;
};

/// Uniform (N+1)^2 grid, each square split along its lower-left to upper-right diagonal.
inline Mesh build_structured_mesh(int n) {
  if (n < 1) throw ConfigError("N must be a positive integer, got " + std::to_string(n));

  Mesh m;
  m.n_ = n;
  m.vertices_.reserve(static_cast<std::size_t>(n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      Vertex v;
      v.id = static_cast<int>(m.vertices_.size());
      v.p = {-1.0 + 2.0 * i / n, -1.0 + 2.0 * j / n};
      v.on_boundary = i == 0 || j == 0 || i == n || j == n;
      m.vertices_.push_back(v);
    }
  }

  m.triangles_.reserve(2 * static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int ll = m.grid_vertex(i, j);
      const int lr = m.grid_vertex(i + 1, j);
      const int ur = m.grid_vertex(i + 1, j + 1);
      const int ul = m.grid_vertex(i, j + 1);
      for (const auto& vs : {std::array{ll, lr, ur}, std::array{ll, ur, ul}}) {
        Triangle t;
        t.id = static_cast<int>(m.triangles_.size());
        t.v = vs;
        m.triangles_.push_back(t);
      }
    }
  }

  std::map<std::pair<int, int>, int> edge_ids;
  for (auto& t : m.triangles_) {
    for (int k = 0; k < 3; ++k) {
      int a = t.v[(k + 1) % 3];
      int b = t.v[(k + 2) % 3];
      if (a > b) std::swap(a, b);
      auto [it, inserted] = edge_ids.try_emplace({a, b}, static_cast<int>(m.edges_.size()));
      if (inserted) {
        Edge e;
        e.id = it->second;
        e.v0 = a;
        e.v1 = b;
        e.tri_left = t.id;
        m.edges_.push_back(e);
      } else {
        m.edges_[it->second].tri_right = t.id;
      }
      t.e[k] = it->second;
    }
  }
  return m;
}

}  // namespace ifem
