#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace maxnl {

using cplx = std::complex<double>;
using Vec3 = std::array<double, 3>;
using CVec3 = std::array<cplx, 3>;

// Where the three components of a vector field live on the cubic grid.
// edge: E_c at node + h/2 e_c.  face: H_c at node + h/2 (e_a + e_b), a,b != c.
// node: all components at nodes (collocated).
enum class Layout : std::uint8_t { edge = 0, face = 1, node = 2 };

// Sampling lattice for scalar fields. `half` is the (2n+1)^3 lattice of
// nodes, edge midpoints, face centres and cell centres.
enum class Location : std::uint8_t { node = 0, cell = 1, half = 2 };

const char* to_string(Layout layout);
const char* to_string(Location loc);

class Grid {
 public:
  explicit Grid(int n_cells, double side = 1.0, bool staggered = true);

  int n() const { return n_; }
  double side() const { return side_; }
  double h() const { return side_ / n_; }
  double cell_volume() const { return h() * h() * h(); }
  bool staggered() const { return staggered_; }

  bool operator==(const Grid& other) const { return n_ == other.n_ && side_ == other.side_; }
  bool operator!=(const Grid& other) const { return !(*this == other); }

 private:
  int n_;
  double side_;
  bool staggered_;
};

// Row-major 3-D index space.
struct Shape {
  std::array<int, 3> dims{0, 0, 0};

  std::size_t size() const { return std::size_t(dims[0]) * dims[1] * dims[2]; }
  std::size_t index(int i, int j, int k) const {
    return (std::size_t(i) * dims[1] + j) * dims[2] + k;
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
  }
};

// Shape of component c for a vector layout.
Shape component_shape(const Grid& g, Layout layout, int c);
// Position of component c entry (i,j,k) in doubled units (multiples of h/2).
std::array<int, 3> doubled_position(Layout layout, int c, int i, int j, int k);
Shape scalar_shape(const Grid& g, Location loc);

class ScalarFieldC {
 public:
  ScalarFieldC(const Grid& g, Location loc);

  const Grid& grid() const { return grid_; }
  Location location() const { return loc_; }
  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }

  cplx& at(int i, int j, int k) { return values_[shape_.index(i, j, k)]; }
  const cplx& at(int i, int j, int k) const { return values_[shape_.index(i, j, k)]; }
  std::span<cplx> values() { return values_; }
  std::span<const cplx> values() const { return values_; }

  Vec3 position(int i, int j, int k) const;

  static ScalarFieldC sample(const Grid& g, Location loc, const std::function<cplx(const Vec3&)>& f);

 private:
  Grid grid_;
  Location loc_;
  Shape shape_;
  std::vector<cplx> values_;
};

class VectorField3C {
 public:
  VectorField3C(const Grid& g, Layout layout);

  const Grid& grid() const { return grid_; }
  Layout layout() const { return layout_; }
  const Shape& shape(int c) const { return shapes_[c]; }

  std::span<cplx> comp(int c) { return comps_[c]; }
  std::span<const cplx> comp(int c) const { return comps_[c]; }
  cplx& at(int c, int i, int j, int k) { return comps_[c][shapes_[c].index(i, j, k)]; }
  const cplx& at(int c, int i, int j, int k) const { return comps_[c][shapes_[c].index(i, j, k)]; }

  Vec3 position(int c, int i, int j, int k) const;
  std::size_t total_size() const { return comps_[0].size() + comps_[1].size() + comps_[2].size(); }

  VectorField3C& operator+=(const VectorField3C& o);
  VectorField3C& operator-=(const VectorField3C& o);
  VectorField3C& operator*=(cplx s);
  void axpy(cplx a, const VectorField3C& x);  // this += a x
  void fill(cplx v);

  // Samples component c of f at that component's own location.
  static VectorField3C sample(const Grid& g, Layout layout, const std::function<CVec3(const Vec3&)>& f);

 private:
  Grid grid_;
  Layout layout_;
  std::array<Shape, 3> shapes_;
  std::array<std::vector<cplx>, 3> comps_;
};

VectorField3C operator+(VectorField3C a, const VectorField3C& b);
VectorField3C operator-(VectorField3C a, const VectorField3C& b);
VectorField3C operator*(cplx s, VectorField3C a);

// U = (E, H) with E on edges and H on faces.
struct FieldPair {
  VectorField3C E;
  VectorField3C H;

  explicit FieldPair(const Grid& g) : E(g, Layout::edge), H(g, Layout::face) {}
  FieldPair(VectorField3C e, VectorField3C h);

  const Grid& grid() const { return E.grid(); }
  FieldPair& operator+=(const FieldPair& o);
  FieldPair& operator-=(const FieldPair& o);
  FieldPair& operator*=(cplx s);
  void axpy(cplx a, const FieldPair& x);
};

FieldPair operator+(FieldPair a, const FieldPair& b);
FieldPair operator-(FieldPair a, const FieldPair& b);
FieldPair operator*(cplx s, FieldPair a);

// Edges lying in the six boundary planes; these carry the tangential trace.
struct BoundaryEdge {
  int c, i, j, k;
  std::size_t flat;  // index into component c of an edge field
  Vec3 normal;       // outward normal of one face containing the edge
};

class BoundaryEdgeMap {
 public:
  explicit BoundaryEdgeMap(const Grid& g);
  const Grid& grid() const { return grid_; }
  std::size_t size() const { return edges_.size(); }
  const BoundaryEdge& operator[](std::size_t m) const { return edges_[m]; }
  const std::vector<BoundaryEdge>& edges() const { return edges_; }
  // Per-component mask of boundary edges (true on boundary).
  const std::vector<char>& mask(int c) const { return masks_[c]; }

  static std::shared_ptr<const BoundaryEdgeMap> get(const Grid& g);

 private:
  Grid grid_;
  std::vector<BoundaryEdge> edges_;
  std::array<std::vector<char>, 3> masks_;
};

bool is_boundary_edge(const Grid& g, int c, int i, int j, int k);

// Tangential field on the boundary, stored as one value per boundary edge
// (the edge direction is tangent to every face containing it, so the normal
// part is zero by construction).
class TangentialBoundaryField {
 public:
  explicit TangentialBoundaryField(const Grid& g);

  const Grid& grid() const { return map_->grid(); }
  const BoundaryEdgeMap& map() const { return *map_; }
  std::size_t size() const { return values_.size(); }
  std::span<cplx> values() { return values_; }
  std::span<const cplx> values() const { return values_; }
  cplx& operator[](std::size_t m) { return values_[m]; }
  const cplx& operator[](std::size_t m) const { return values_[m]; }

  // Full 3-vector at boundary edge m: the edge direction times the value.
  CVec3 vector_at(std::size_t m) const;

  TangentialBoundaryField& operator+=(const TangentialBoundaryField& o);
  TangentialBoundaryField& operator*=(cplx s);
  void axpy(cplx a, const TangentialBoundaryField& x);

  // Copies the values onto the boundary edges of an edge field (interior zero).
  VectorField3C to_edge_field() const;

  // Tangential trace of the vector function f sampled at boundary edges.
  static TangentialBoundaryField sample(const Grid& g, const std::function<CVec3(const Vec3&)>& f);

 private:
  std::shared_ptr<const BoundaryEdgeMap> map_;
  std::vector<cplx> values_;
};

TangentialBoundaryField operator+(TangentialBoundaryField a, const TangentialBoundaryField& b);
TangentialBoundaryField operator*(cplx s, TangentialBoundaryField a);

}  // namespace maxnl
