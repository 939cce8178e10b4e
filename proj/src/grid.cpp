#include "maxnl/grid.hpp"

#include <map>
#include <mutex>

#include "maxnl/errors.hpp"

namespace maxnl {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::layout_mismatch: return "layout-mismatch";
    case ErrorKind::envelope_violation: return "envelope-violation";
    case ErrorKind::resonance: return "resonance";
    case ErrorKind::non_convergence: return "non-convergence";
    case ErrorKind::data_too_large: return "data-too-large";
    case ErrorKind::fit_rejected: return "fit-rejected";
    case ErrorKind::zero_signal: return "zero-signal";
    case ErrorKind::construction: return "construction";
    case ErrorKind::io: return "io";
    case ErrorKind::config: return "config";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

const char* to_string(Layout layout) {
  switch (layout) {
    case Layout::edge: return "edge";
    case Layout::face: return "face";
    case Layout::node: return "node";
  }
  return "?";
}

const char* to_string(Location loc) {
  switch (loc) {
    case Location::node: return "node";
    case Location::cell: return "cell";
    case Location::half: return "half";
  }
  return "?";
}

Grid::Grid(int n_cells, double side, bool staggered) : n_(n_cells), side_(side), staggered_(staggered) {
  if (n_cells < 2) fail(ErrorKind::invalid_argument, "grid needs at least 2 cells per axis");
  if (!(side > 0)) fail(ErrorKind::invalid_argument, "domain side must be positive");
}

Shape component_shape(const Grid& g, Layout layout, int c) {
  const int n = g.n();
  Shape s;
  for (int a = 0; a < 3; ++a) {
    switch (layout) {
      case Layout::edge: s.dims[a] = (a == c) ? n : n + 1; break;
      case Layout::face: s.dims[a] = (a == c) ? n + 1 : n; break;
      case Layout::node: s.dims[a] = n + 1; break;
    }
  }
  return s;
}

std::array<int, 3> doubled_position(Layout layout, int c, int i, int j, int k) {
  std::array<int, 3> idx{i, j, k}, p{};
  for (int a = 0; a < 3; ++a) {
    int off = 0;
    if (layout == Layout::edge) off = (a == c) ? 1 : 0;
    else if (layout == Layout::face) off = (a == c) ? 0 : 1;
    p[a] = 2 * idx[a] + off;
  }
  return p;
}

Shape scalar_shape(const Grid& g, Location loc) {
  const int n = g.n();
  switch (loc) {
    case Location::node: return Shape{{n + 1, n + 1, n + 1}};
    case Location::cell: return Shape{{n, n, n}};
    case Location::half: return Shape{{2 * n + 1, 2 * n + 1, 2 * n + 1}};
  }
  return {};
}

ScalarFieldC::ScalarFieldC(const Grid& g, Location loc)
    : grid_(g), loc_(loc), shape_(scalar_shape(g, loc)), values_(shape_.size()) {}

Vec3 ScalarFieldC::position(int i, int j, int k) const {
  const double h = grid_.h();
  switch (loc_) {
    case Location::node: return {i * h, j * h, k * h};
    case Location::cell: return {(i + 0.5) * h, (j + 0.5) * h, (k + 0.5) * h};
    case Location::half: return {0.5 * i * h, 0.5 * j * h, 0.5 * k * h};
  }
  return {};
}

ScalarFieldC ScalarFieldC::sample(const Grid& g, Location loc, const std::function<cplx(const Vec3&)>& f) {
  ScalarFieldC s(g, loc);
  const auto& d = s.shape().dims;
  for (int i = 0; i < d[0]; ++i)
    for (int j = 0; j < d[1]; ++j)
      for (int k = 0; k < d[2]; ++k) s.at(i, j, k) = f(s.position(i, j, k));
  return s;
}

VectorField3C::VectorField3C(const Grid& g, Layout layout) : grid_(g), layout_(layout) {
  for (int c = 0; c < 3; ++c) {
    shapes_[c] = component_shape(g, layout, c);
    comps_[c].assign(shapes_[c].size(), cplx(0.0));
  }
}

Vec3 VectorField3C::position(int c, int i, int j, int k) const {
  auto p = doubled_position(layout_, c, i, j, k);
  const double hh = 0.5 * grid_.h();
  return {p[0] * hh, p[1] * hh, p[2] * hh};
}

static void check_same(const VectorField3C& a, const VectorField3C& b) {
  if (a.grid() != b.grid() || a.layout() != b.layout())
    fail(ErrorKind::layout_mismatch, "vector fields differ in grid or layout");
}

VectorField3C& VectorField3C::operator+=(const VectorField3C& o) {
  check_same(*this, o);
  for (int c = 0; c < 3; ++c)
    for (std::size_t m = 0; m < comps_[c].size(); ++m) comps_[c][m] += o.comps_[c][m];
  return *this;
}

VectorField3C& VectorField3C::operator-=(const VectorField3C& o) {
  check_same(*this, o);
  for (int c = 0; c < 3; ++c)
    for (std::size_t m = 0; m < comps_[c].size(); ++m) comps_[c][m] -= o.comps_[c][m];
  return *this;
}

VectorField3C& VectorField3C::operator*=(cplx s) {
  for (auto& v : comps_)
    for (auto& x : v) x *= s;
  return *this;
}

void VectorField3C::axpy(cplx a, const VectorField3C& x) {
  check_same(*this, x);
  for (int c = 0; c < 3; ++c)
    for (std::size_t m = 0; m < comps_[c].size(); ++m) comps_[c][m] += a * x.comps_[c][m];
}

void VectorField3C::fill(cplx v) {
  for (auto& comp : comps_) std::fill(comp.begin(), comp.end(), v);
}

VectorField3C VectorField3C::sample(const Grid& g, Layout layout, const std::function<CVec3(const Vec3&)>& f) {
  VectorField3C out(g, layout);
  for (int c = 0; c < 3; ++c) {
    const auto& d = out.shape(c).dims;
    for (int i = 0; i < d[0]; ++i)
      for (int j = 0; j < d[1]; ++j)
        for (int k = 0; k < d[2]; ++k) out.at(c, i, j, k) = f(out.position(c, i, j, k))[c];
  }
  return out;
}

VectorField3C operator+(VectorField3C a, const VectorField3C& b) { return a += b; }
VectorField3C operator-(VectorField3C a, const VectorField3C& b) { return a -= b; }
VectorField3C operator*(cplx s, VectorField3C a) { return a *= s; }

FieldPair::FieldPair(VectorField3C e, VectorField3C h) : E(std::move(e)), H(std::move(h)) {
  if (E.grid() != H.grid()) fail(ErrorKind::layout_mismatch, "field pair components on different grids");
  if (E.layout() != Layout::edge || H.layout() != Layout::face)
    fail(ErrorKind::layout_mismatch, "field pair expects E on edges and H on faces");
}

FieldPair& FieldPair::operator+=(const FieldPair& o) { E += o.E; H += o.H; return *this; }
FieldPair& FieldPair::operator-=(const FieldPair& o) { E -= o.E; H -= o.H; return *this; }
FieldPair& FieldPair::operator*=(cplx s) { E *= s; H *= s; return *this; }
void FieldPair::axpy(cplx a, const FieldPair& x) { E.axpy(a, x.E); H.axpy(a, x.H); }

FieldPair operator+(FieldPair a, const FieldPair& b) { return a += b; }
FieldPair operator-(FieldPair a, const FieldPair& b) { return a -= b; }
FieldPair operator*(cplx s, FieldPair a) { return a *= s; }

bool is_boundary_edge(const Grid& g, int c, int i, int j, int k) {
  const int n = g.n();
  std::array<int, 3> idx{i, j, k};
  for (int a = 0; a < 3; ++a)
    if (a != c && (idx[a] == 0 || idx[a] == n)) return true;
  return false;
}

BoundaryEdgeMap::BoundaryEdgeMap(const Grid& g) : grid_(g) {
  const int n = g.n();
  for (int c = 0; c < 3; ++c) {
    Shape s = component_shape(g, Layout::edge, c);
    masks_[c].assign(s.size(), 0);
    for (int i = 0; i < s.dims[0]; ++i)
      for (int j = 0; j < s.dims[1]; ++j)
        for (int k = 0; k < s.dims[2]; ++k) {
          if (!is_boundary_edge(g, c, i, j, k)) continue;
          std::array<int, 3> idx{i, j, k};
          Vec3 nrm{0, 0, 0};
          for (int a = 0; a < 3; ++a) {
            if (a == c) continue;
            if (idx[a] == 0) { nrm[a] = -1; break; }
            if (idx[a] == n) { nrm[a] = 1; break; }
          }
          const std::size_t flat = s.index(i, j, k);
          masks_[c][flat] = 1;
          edges_.push_back({c, i, j, k, flat, nrm});
        }
  }
}

std::shared_ptr<const BoundaryEdgeMap> BoundaryEdgeMap::get(const Grid& g) {
  static std::mutex mtx;
  static std::map<std::pair<int, double>, std::shared_ptr<const BoundaryEdgeMap>> cache;
  std::lock_guard<std::mutex> lock(mtx);
  auto key = std::make_pair(g.n(), g.side());
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto m = std::make_shared<const BoundaryEdgeMap>(g);
  cache.emplace(key, m);
  return m;
}

TangentialBoundaryField::TangentialBoundaryField(const Grid& g)
    : map_(BoundaryEdgeMap::get(g)), values_(map_->size(), cplx(0.0)) {}

CVec3 TangentialBoundaryField::vector_at(std::size_t m) const {
  CVec3 v{0.0, 0.0, 0.0};
  v[(*map_)[m].c] = values_[m];
  return v;
}

TangentialBoundaryField& TangentialBoundaryField::operator+=(const TangentialBoundaryField& o) {
  if (grid() != o.grid()) fail(ErrorKind::layout_mismatch, "boundary fields on different grids");
  for (std::size_t m = 0; m < values_.size(); ++m) values_[m] += o.values_[m];
  return *this;
}

TangentialBoundaryField& TangentialBoundaryField::operator*=(cplx s) {
  for (auto& v : values_) v *= s;
  return *this;
}

void TangentialBoundaryField::axpy(cplx a, const TangentialBoundaryField& x) {
  if (grid() != x.grid()) fail(ErrorKind::layout_mismatch, "boundary fields on different grids");
  for (std::size_t m = 0; m < values_.size(); ++m) values_[m] += a * x.values_[m];
}

VectorField3C TangentialBoundaryField::to_edge_field() const {
  VectorField3C e(grid(), Layout::edge);
  for (std::size_t m = 0; m < values_.size(); ++m) {
    const auto& be = (*map_)[m];
    e.comp(be.c)[be.flat] = values_[m];
  }
  return e;
}

TangentialBoundaryField TangentialBoundaryField::sample(const Grid& g, const std::function<CVec3(const Vec3&)>& f) {
  TangentialBoundaryField out(g);
  const double hh = 0.5 * g.h();
  for (std::size_t m = 0; m < out.size(); ++m) {
    const auto& be = out.map()[m];
    auto p = doubled_position(Layout::edge, be.c, be.i, be.j, be.k);
    out[m] = f({p[0] * hh, p[1] * hh, p[2] * hh})[be.c];
  }
  return out;
}

TangentialBoundaryField operator+(TangentialBoundaryField a, const TangentialBoundaryField& b) { return a += b; }
TangentialBoundaryField operator*(cplx s, TangentialBoundaryField a) { return a *= s; }

}  // namespace maxnl
