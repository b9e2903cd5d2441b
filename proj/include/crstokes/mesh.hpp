#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace crstokes {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point a) { return std::hypot(a.x, a.y); }

/// An edge of the triangulation.
///
/// The normal is the outward normal of `left_tri`. For interior faces it
/// therefore points from `left_tri` into `right_tri`, and `left_tri` is the
/// smaller of the two triangle indices. The jump of a broken function across
/// the face is (left trace) - (right trace).
struct Face {
  std::array<std::size_t, 2> vertex_ids{};
  Point normal;
  double length = 0.0;
  std::size_t left_tri = 0;
  std::optional<std::size_t> right_tri;
  Point midpoint;

  bool is_boundary() const { return !right_tri.has_value(); }
};

/// Conforming triangulation with full edge connectivity.
///
/// Local face i of a triangle is the edge opposite its local vertex i.
class TriMesh {
 public:
  TriMesh(std::vector<Point> vertices, std::vector<std::array<std::size_t, 3>> triangles)
      : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
      if (signed_area(t) <= 0.0) {
        throw std::invalid_argument("TriMesh: triangle " + std::to_string(t) +
                                    " is not counter-clockwise or is degenerate");
      }
    }
    build_faces();
  }

  const std::vector<Point>& vertices() const { return vertices_; }
  const std::vector<std::array<std::size_t, 3>>& triangles() const { return triangles_; }
  const std::vector<Face>& faces() const { return faces_; }
  const std::vector<std::array<std::size_t, 3>>& tri_to_faces() const { return tri_to_faces_; }

  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_triangles() const { return triangles_.size(); }
  std::size_t num_faces() const { return faces_.size(); }
  std::size_t num_interior_faces() const { return num_interior_faces_; }

  /// Largest face diameter.
  double h_max() const { return h_max_; }
  double h_min() const { return h_min_; }

  std::array<Point, 3> corners(std::size_t t) const {
    const auto& tri = triangles_[t];
    return {vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]};
  }

  double signed_area(std::size_t t) const {
    const auto c = corners(t);
    return 0.5 * ((c[1].x - c[0].x) * (c[2].y - c[0].y) - (c[2].x - c[0].x) * (c[1].y - c[0].y));
  }

  double area(std::size_t t) const { return std::abs(signed_area(t)); }

  Point barycenter(std::size_t t) const {
    const auto c = corners(t);
    return {(c[0].x + c[1].x + c[2].x) / 3.0, (c[0].y + c[1].y + c[2].y) / 3.0};
  }

  /// Element diameter h_kappa (longest edge).
  double diameter(std::size_t t) const {
    const auto& f = tri_to_faces_[t];
    return std::max({faces_[f[0]].length, faces_[f[1]].length, faces_[f[2]].length});
  }

  /// Local index (0..2) of face `f` inside triangle `t`.
  int local_face_index(std::size_t t, std::size_t f) const {
    for (int i = 0; i < 3; ++i) {
      if (tri_to_faces_[t][i] == f) return i;
    }
    throw std::out_of_range("TriMesh: face is not on triangle");
  }

 private:
  void build_faces() {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> edge_index;
    tri_to_faces_.assign(triangles_.size(), {0, 0, 0});
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
      const auto& tri = triangles_[t];
      for (int i = 0; i < 3; ++i) {
        std::size_t a = tri[(i + 1) % 3];
        std::size_t b = tri[(i + 2) % 3];
        auto key = std::minmax(a, b);
        auto [it, inserted] = edge_index.try_emplace({key.first, key.second}, faces_.size());
        if (inserted) {
          Face face;
          face.vertex_ids = {a, b};
          face.left_tri = t;
          const Point pa = vertices_[a];
          const Point pb = vertices_[b];
          const Point tangent = pb - pa;
          face.length = norm(tangent);
          // (a, b) runs counter-clockwise around t, so the outward normal is the
          // tangent rotated clockwise.
          face.normal = {tangent.y / face.length, -tangent.x / face.length};
          face.midpoint = 0.5 * (pa + pb);
          faces_.push_back(face);
        } else {
          Face& face = faces_[it->second];
          if (face.right_tri) {
            throw std::invalid_argument("TriMesh: edge shared by more than two triangles");
          }
          // Triangles are visited in index order, so the first owner is the smaller index.
          face.right_tri = t;
        }
        tri_to_faces_[t][i] = it->second;
      }
    }
    num_interior_faces_ = 0;
    h_max_ = 0.0;
    h_min_ = faces_.empty() ? 0.0 : faces_.front().length;
    for (const auto& f : faces_) {
      if (!f.is_boundary()) ++num_interior_faces_;
      h_max_ = std::max(h_max_, f.length);
      h_min_ = std::min(h_min_, f.length);
    }
  }

  std::vector<Point> vertices_;
  std::vector<std::array<std::size_t, 3>> triangles_;
  std::vector<Face> faces_;
  std::vector<std::array<std::size_t, 3>> tri_to_faces_;
  std::size_t num_interior_faces_ = 0;
  double h_max_ = 0.0;
  double h_min_ = 0.0;
};

/// Uniform triangulation of the unit square: n x n cells, each split by the
/// diagonal from its lower-left to its upper-right corner.
inline TriMesh build_structured(std::size_t n) {
  if (n == 0) throw std::invalid_argument("build_structured: n must be positive");
  const double inv = 1.0 / static_cast<double>(n);
  std::vector<Point> vertices;
  vertices.reserve((n + 1) * (n + 1));
  for (std::size_t j = 0; j <= n; ++j) {
    for (std::size_t i = 0; i <= n; ++i) {
      vertices.push_back({static_cast<double>(i) * inv, static_cast<double>(j) * inv});
    }
  }
  auto vid = [n](std::size_t i, std::size_t j) { return j * (n + 1) + i; };
  std::vector<std::array<std::size_t, 3>> triangles;
  triangles.reserve(2 * n * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t ll = vid(i, j), lr = vid(i + 1, j), ur = vid(i + 1, j + 1), ul = vid(i, j + 1);
      triangles.push_back({ll, lr, ur});
      triangles.push_back({ll, ur, ul});
    }
  }
  return TriMesh(std::move(vertices), std::move(triangles));
}

enum class MarkRule { barycenter, all_vertices };

/// Discrete subdomain: the union of triangles selected from a disc.
struct SubdomainMark {
  std::vector<std::size_t> element_ids;  // sorted ascending
  std::vector<char> is_marked;           // indexed by triangle
  MarkRule rule = MarkRule::barycenter;
  Point center;
  double radius = 0.0;

  bool contains(std::size_t t) const { return is_marked[t] != 0; }
  bool empty() const { return element_ids.empty(); }
};

inline SubdomainMark mark_subdomain(const TriMesh& mesh, Point center, double radius,
                                    MarkRule rule = MarkRule::barycenter) {
  if (!(radius >= 0.0)) throw std::invalid_argument("mark_subdomain: radius must be non-negative");
  SubdomainMark mark;
  mark.rule = rule;
  mark.center = center;
  mark.radius = radius;
  mark.is_marked.assign(mesh.num_triangles(), 0);
  auto inside = [&](Point p) { return norm(p - center) < radius; };
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    bool selected = false;
    if (rule == MarkRule::barycenter) {
      selected = inside(mesh.barycenter(t));
    } else {
      const auto c = mesh.corners(t);
      selected = inside(c[0]) && inside(c[1]) && inside(c[2]);
    }
    if (selected) {
      mark.is_marked[t] = 1;
      mark.element_ids.push_back(t);
    }
  }
  return mark;
}

}  // namespace crstokes
