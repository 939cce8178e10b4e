#include "maxnl/calculus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "maxnl/errors.hpp"
#include "maxnl/kernels.hpp"

namespace maxnl {

namespace k = kernels::omp;

namespace {

kernels::Yee3 yee(VectorField3C& v) { return {v.comp(0).data(), v.comp(1).data(), v.comp(2).data()}; }
kernels::CYee3 cyee(const VectorField3C& v) { return {v.comp(0).data(), v.comp(1).data(), v.comp(2).data()}; }

void require_staggered(const Grid& g) {
  if (!g.staggered()) fail(ErrorKind::layout_mismatch, "discrete curl/div need the staggered layout");
}

// Axes along which a component sits on nodes (n+1 points).
std::array<bool, 3> node_axes(Layout layout, int c) {
  std::array<bool, 3> out{};
  for (int a = 0; a < 3; ++a) {
    if (layout == Layout::edge) out[a] = (a != c);
    else if (layout == Layout::face) out[a] = (a == c);
    else out[a] = true;
  }
  return out;
}

double pow_sum(std::span<const cplx> v, const Shape& s, const std::array<bool, 3>& nodes, double p) {
  bool flags[3] = {nodes[0], nodes[1], nodes[2]};
  return k::weighted_pow_sum(v.data(), s.dims[0], s.dims[1], s.dims[2], flags, p);
}

// Forward difference along axis a, one-sided (backward) at the last index.
std::vector<cplx> forward_diff(std::span<const cplx> v, const Shape& s, int a, double h) {
  std::vector<cplx> out(v.size());
  const auto& d = s.dims;
  const double ih = 1.0 / h;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < d[0]; ++i)
    for (int j = 0; j < d[1]; ++j)
      for (int kk = 0; kk < d[2]; ++kk) {
        int idx[3] = {i, j, kk};
        int lo[3] = {i, j, kk}, hi[3] = {i, j, kk};
        if (idx[a] + 1 < d[a]) hi[a] += 1;
        else lo[a] -= 1;
        out[s.index(i, j, kk)] = (v[s.index(hi[0], hi[1], hi[2])] - v[s.index(lo[0], lo[1], lo[2])]) * ih;
      }
  return out;
}

void check_p(double p) {
  if (!(p >= 1.0) || !std::isfinite(p)) fail(ErrorKind::invalid_argument, "norm exponent must be finite and >= 1");
}

}  // namespace

VectorField3C curl_h(const VectorField3C& field) {
  const Grid& g = field.grid();
  require_staggered(g);
  if (field.layout() == Layout::edge) {
    VectorField3C out(g, Layout::face);
    k::curl_edge_to_face(g.n(), g.h(), cyee(field), yee(out));
    return out;
  }
  if (field.layout() == Layout::face) {
    VectorField3C out(g, Layout::edge);
    k::curl_face_to_edge(g.n(), g.h(), cyee(field), yee(out));
    return out;
  }
  fail(ErrorKind::layout_mismatch, "curl_h expects an edge or face field");
}

ScalarFieldC div_h(const VectorField3C& field) {
  const Grid& g = field.grid();
  require_staggered(g);
  if (field.layout() == Layout::face) {
    ScalarFieldC out(g, Location::cell);
    k::div_face_to_cell(g.n(), g.h(), cyee(field), out.values().data());
    return out;
  }
  if (field.layout() == Layout::edge) {
    ScalarFieldC out(g, Location::node);
    k::div_edge_to_node(g.n(), g.h(), cyee(field), out.values().data());
    return out;
  }
  fail(ErrorKind::layout_mismatch, "div_h expects an edge or face field");
}

VectorField3C grad_h(const ScalarFieldC& s) {
  const Grid& g = s.grid();
  require_staggered(g);
  if (s.location() != Location::node) fail(ErrorKind::layout_mismatch, "grad_h expects a node field");
  VectorField3C out(g, Layout::edge);
  k::grad_node_to_edge(g.n(), g.h(), s.values().data(), yee(out));
  return out;
}

TangentialBoundaryField tangential_trace(const VectorField3C& field) {
  if (field.layout() != Layout::edge) fail(ErrorKind::layout_mismatch, "tangential_trace expects an edge field");
  TangentialBoundaryField out(field.grid());
  const auto& map = out.map();
  for (std::size_t m = 0; m < map.size(); ++m) out[m] = field.comp(map[m].c)[map[m].flat];
  return out;
}

TangentialBoundaryField magnetic_trace(const VectorField3C& H) {
  if (H.layout() != Layout::face) fail(ErrorKind::layout_mismatch, "magnetic_trace expects a face field");
  VectorField3C c = curl_h(H);
  TangentialBoundaryField out = tangential_trace(c);
  out *= -H.grid().h();
  return out;
}

cplx boundary_pairing(const TangentialBoundaryField& a, const TangentialBoundaryField& b) {
  if (a.grid() != b.grid()) fail(ErrorKind::layout_mismatch, "boundary fields on different grids");
  cplx acc = 0.0;
  for (std::size_t m = 0; m < a.size(); ++m) acc += a[m] * b[m];
  const double h = a.grid().h();
  return acc * (h * h);
}

cplx volume_pairing(const VectorField3C& a, const VectorField3C& b, bool interior_edges_only) {
  if (a.grid() != b.grid() || a.layout() != b.layout())
    fail(ErrorKind::layout_mismatch, "volume_pairing: fields differ in grid or layout");
  const bool skip = interior_edges_only && a.layout() == Layout::edge;
  std::shared_ptr<const BoundaryEdgeMap> map;
  if (skip) map = BoundaryEdgeMap::get(a.grid());
  cplx acc = 0.0;
  for (int c = 0; c < 3; ++c) {
    auto va = a.comp(c);
    auto vb = b.comp(c);
    for (std::size_t m = 0; m < va.size(); ++m) {
      if (skip && map->mask(c)[m]) continue;
      acc += va[m] * vb[m];
    }
  }
  return acc * a.grid().cell_volume();
}

double norm_Lp(const VectorField3C& field, double p) {
  check_p(p);
  double acc = 0.0;
  for (int c = 0; c < 3; ++c) acc += pow_sum(field.comp(c), field.shape(c), node_axes(field.layout(), c), p);
  return std::pow(acc * field.grid().cell_volume(), 1.0 / p);
}

double norm_Linf(const VectorField3C& field) {
  double mx = 0.0;
  for (int c = 0; c < 3; ++c) mx = std::max(mx, k::max_abs(field.comp(c).data(), field.comp(c).size()));
  return mx;
}

double norm_W1p(const VectorField3C& field, double p) {
  check_p(p);
  const double h = field.grid().h();
  double acc = 0.0;
  for (int c = 0; c < 3; ++c) {
    const auto nodes = node_axes(field.layout(), c);
    acc += pow_sum(field.comp(c), field.shape(c), nodes, p);
    for (int a = 0; a < 3; ++a) {
      auto d = forward_diff(field.comp(c), field.shape(c), a, h);
      acc += pow_sum(d, field.shape(c), nodes, p);
    }
  }
  return std::pow(acc * field.grid().cell_volume(), 1.0 / p);
}

double norm_Lp(const FieldPair& u, double p) {
  return std::pow(std::pow(norm_Lp(u.E, p), p) + std::pow(norm_Lp(u.H, p), p), 1.0 / p);
}

double norm_Linf(const FieldPair& u) { return std::max(norm_Linf(u.E), norm_Linf(u.H)); }

double norm_W1p(const FieldPair& u, double p) {
  return std::pow(std::pow(norm_W1p(u.E, p), p) + std::pow(norm_W1p(u.H, p), p), 1.0 / p);
}

double norm_Linf(const ScalarFieldC& s) { return k::max_abs(s.values().data(), s.size()); }

double norm_L2(const ScalarFieldC& s) {
  std::array<bool, 3> nodes{};
  nodes.fill(s.location() != Location::cell);
  double scale = s.grid().cell_volume();
  if (s.location() == Location::half) scale /= 8.0;
  return std::sqrt(pow_sum(s.values(), s.shape(), nodes, 2.0) * scale);
}

double norm_Linf(const TangentialBoundaryField& f) { return k::max_abs(f.values().data(), f.size()); }

double norm_boundary(const TangentialBoundaryField& f, double p) {
  check_p(p);
  const Grid& g = f.grid();
  const int n = g.n();
  const double h = g.h();
  const VectorField3C e = f.to_edge_field();
  double acc = 0.0;
  // Face by face: trapezoid-weighted tangential components, plus the surface
  // divergence at nodes interior to the face.
  for (int a = 0; a < 3; ++a) {
    const int u = (a + 1) % 3, v = (a + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      auto val = [&](int comp, int pu, int pv) {
        std::array<int, 3> idx{};
        idx[a] = side * n;
        idx[u] = pu;
        idx[v] = pv;
        return e.at(comp, idx[0], idx[1], idx[2]);
      };
      for (int i = 0; i < n; ++i)
        for (int j = 0; j <= n; ++j) {
          const double w = (j == 0 || j == n) ? 0.5 : 1.0;
          acc += w * (std::pow(std::abs(val(u, i, j)), p) + std::pow(std::abs(val(v, j, i)), p));
        }
      for (int iu = 1; iu < n; ++iu)
        for (int iv = 1; iv < n; ++iv) {
          const cplx d = val(u, iu, iv) - val(u, iu - 1, iv) + val(v, iu, iv) - val(v, iu, iv - 1);
          acc += std::pow(std::abs(d / h), p);
        }
    }
  }
  return std::pow(acc * h * h, 1.0 / p);
}

VectorField3C random_field(const Grid& g, Layout layout, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  VectorField3C out(g, layout);
  for (int c = 0; c < 3; ++c)
    for (auto& x : out.comp(c)) x = cplx(nd(rng), nd(rng));
  return out;
}

ScalarFieldC random_scalar(const Grid& g, Location loc, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  ScalarFieldC out(g, loc);
  for (auto& x : out.values()) x = cplx(nd(rng), nd(rng));
  return out;
}

FieldPair random_smooth_pair(const Grid& g, std::uint64_t seed, int modes) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_int_distribution<int> wave(-2, 2);
  struct Mode {
    Vec3 k;
    CVec3 pe, ph;
  };
  std::vector<Mode> ms;
  for (int m = 0; m < modes; ++m) {
    Mode md;
    for (int a = 0; a < 3; ++a) md.k[a] = std::numbers::pi * wave(rng) / g.side();
    for (int a = 0; a < 3; ++a) md.pe[a] = cplx(nd(rng), nd(rng));
    for (int a = 0; a < 3; ++a) md.ph[a] = cplx(nd(rng), nd(rng));
    ms.push_back(md);
  }
  auto eval = [&](const Vec3& x, bool electric) {
    CVec3 v{0.0, 0.0, 0.0};
    for (const auto& md : ms) {
      const cplx ph = std::exp(cplx(0.0, md.k[0] * x[0] + md.k[1] * x[1] + md.k[2] * x[2]));
      for (int a = 0; a < 3; ++a) v[a] += (electric ? md.pe[a] : md.ph[a]) * ph;
    }
    return v;
  };
  return FieldPair(VectorField3C::sample(g, Layout::edge, [&](const Vec3& x) { return eval(x, true); }),
                   VectorField3C::sample(g, Layout::face, [&](const Vec3& x) { return eval(x, false); }));
}

double estimate_embedding_constant(const Grid& g, double p, int ensemble, std::uint64_t seed) {
  double best = 0.0;
  for (int m = 0; m < ensemble; ++m) {
    FieldPair u = random_smooth_pair(g, seed + 7919u * m, 1 + m % 4);
    const double w = norm_W1p(u, p);
    if (w > 0) best = std::max(best, norm_Linf(u) / w);
  }
  return best;
}

}  // namespace maxnl
