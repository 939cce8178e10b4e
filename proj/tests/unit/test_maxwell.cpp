#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "maxnl/calculus.hpp"
#include "maxnl/errors.hpp"
#include "maxnl/maxwell.hpp"

using namespace maxnl;
using Catch::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

MaterialProfile vacuum(int n, double omega) {
  MaterialProfile m;
  m.grid = Grid(n);
  m.omega = omega;
  return m;
}

MaterialProfile bumpy(int n, double omega) {
  MaterialProfile m = vacuum(n, omega);
  m.epsilon = CoefficientField::gaussian(1.0, 0.4, {0.5, 0.45, 0.55}, 0.2);
  m.mu = CoefficientField::gaussian(1.0, cplx(0.2, 0.05), {0.4, 0.5, 0.5}, 0.25);
  return m;
}

struct PlaneWave {
  double omega;
  Vec3 k;
  FieldPair sample(const Grid& g) const {
    FieldPair u(g);
    const CVec3 kxp{k[1], -k[0], 0.0};
    u.E = VectorField3C::sample(g, Layout::edge, [&](const Vec3& x) {
      const cplx ph = std::exp(cplx(0, k[0] * x[0] + k[1] * x[1] + k[2] * x[2]));
      return CVec3{0.0, 0.0, ph};
    });
    u.H = VectorField3C::sample(g, Layout::face, [&](const Vec3& x) {
      const cplx ph = std::exp(cplx(0, k[0] * x[0] + k[1] * x[1] + k[2] * x[2]));
      return CVec3{kxp[0] * ph / omega, kxp[1] * ph / omega, 0.0};
    });
    return u;
  }
};

double rel_err(const FieldPair& a, const FieldPair& b) { return norm_Linf(a - b) / norm_Linf(b); }

}  // namespace

TEST_CASE("operator rows match the mimetic curl", "[maxwell]") {
  const auto mat = vacuum(5, 1.3);
  SolverOptions opt;
  opt.estimate_condition = false;
  LinearMaxwellOperator op(mat, opt);
  FieldPair u(mat.grid);
  u.E = random_field(mat.grid, Layout::edge, 1);
  auto lu = op.apply(u);
  auto c = curl_h(u.E);
  CHECK(norm_Linf(lu.H - c) <= 1e-12 * norm_Linf(c));

  FieldPair v(mat.grid);
  v.H = random_field(mat.grid, Layout::face, 2);
  auto lv = op.apply(v);
  auto ct = curl_h(v.H);
  double worst = 0;
  for (int cc = 0; cc < 3; ++cc) {
    const auto& s = lv.E.shape(cc);
    for (int i = 0; i < s.dims[0]; ++i)
      for (int j = 0; j < s.dims[1]; ++j)
        for (int k = 0; k < s.dims[2]; ++k) {
          if (is_boundary_edge(mat.grid, cc, i, j, k)) {
            CHECK(lv.E.at(cc, i, j, k) == 0.0);
            continue;
          }
          worst = std::max(worst, std::abs(lv.E.at(cc, i, j, k) - ct.at(cc, i, j, k)));
        }
  }
  CHECK(worst <= 1e-12 * norm_Linf(ct));
}

TEST_CASE("zero data gives zero field", "[maxwell]") {
  LinearMaxwellOperator op(vacuum(6, 1.0));
  auto [u, rep] = op.solve_homogeneous(TangentialBoundaryField(op.grid()));
  CHECK(norm_Linf(u) == 0.0);
  auto [v, rep2] = op.solve_inhomogeneous(FieldPair(op.grid()));
  CHECK(norm_Linf(v) == 0.0);
}

TEST_CASE("plane wave is recovered at second order", "[maxwell]") {
  const double w = 2.0;
  const PlaneWave pw{w, {w * 0.6, w * 0.8, 0.0}};
  std::vector<double> errs, cobs;
  for (int n : {8, 16}) {
    LinearMaxwellOperator op(vacuum(n, w));
    const FieldPair exact = pw.sample(op.grid());
    auto [u, rep] = op.solve_homogeneous(tangential_trace(exact.E));
    CHECK(rep.residual <= 1e-10);
    CHECK(rep.method == "sparse-lu");
    errs.push_back(rel_err(u, exact));
    cobs.push_back(rep.C_obs);
  }
  INFO("errors " << errs[0] << " " << errs[1]);
  CHECK(errs[1] < 1e-2);
  CHECK(errs[0] / errs[1] == Approx(4.0).margin(1.0));
  // Observed stability constant is grid independent to within 30%.
  CHECK(cobs[1] / cobs[0] == Approx(1.0).margin(0.3));
}

TEST_CASE("linearity of the solution map", "[maxwell][property]") {
  const auto mat = bumpy(6, 1.7);
  LinearMaxwellOperator op(mat);
  const auto pw = PlaneWave{1.7, {1.7 * 0.6, 0.0, 1.7 * 0.8}}.sample(mat.grid);
  const auto f = tangential_trace(pw.E);
  auto [u, r1] = op.solve_homogeneous(f);
  const cplx c(0.3, -1.2);
  auto [uc, r2] = op.solve_homogeneous(c * f);
  CHECK(norm_Linf(uc - c * u) <= 1e-9 * norm_Linf(uc));

  FieldPair J(mat.grid), J2(mat.grid);
  J.E = random_field(mat.grid, Layout::edge, 5);
  J.H = random_field(mat.grid, Layout::face, 6);
  J2.E = random_field(mat.grid, Layout::edge, 7);
  J2.H = random_field(mat.grid, Layout::face, 8);
  auto [a, ra] = op.solve_inhomogeneous(J);
  auto [b, rb] = op.solve_inhomogeneous(J2);
  auto [ab, rab] = op.solve_inhomogeneous(J + J2);
  CHECK(norm_Linf(ab - a - b) <= 1e-9 * norm_Linf(ab));
  CHECK(ra.C_obs > 0);
}

TEST_CASE("manufactured solutions", "[maxwell]") {
  // Smooth fields with vanishing tangential E on the cube boundary.
  auto E_exact = [](const Vec3& x) {
    return CVec3{std::sin(kPi * x[1]) * std::sin(kPi * x[2]) * (1.0 + x[0]),
                 std::sin(kPi * x[0]) * std::sin(kPi * x[2]) * cplx(1.0, x[1]),
                 std::sin(kPi * x[0]) * std::sin(kPi * x[1])};
  };
  auto H_exact = [](const Vec3& x) {
    return CVec3{std::cos(x[1] + 2 * x[2]), cplx(x[0] * x[2], 1.0), std::exp(-x[0]) * x[1]};
  };
  const double w = 1.4;

  SECTION("discrete residual data is reproduced to solver precision") {
    const auto mat = bumpy(7, w);
    LinearMaxwellOperator op(mat);
    FieldPair ex(mat.grid);
    ex.E = VectorField3C::sample(mat.grid, Layout::edge, E_exact);
    ex.H = VectorField3C::sample(mat.grid, Layout::face, H_exact);
    auto [u, rep] = op.solve_inhomogeneous(op.apply(ex));
    CHECK(rel_err(u, ex) <= 1e-9);
  }

  SECTION("continuum residual data converges at second order") {
    // eps = mu = 1: J_m = curl E - i w H, J_e = curl H + i w E.
    auto curlE = [](const Vec3& x) {
      const double sx = std::sin(kPi * x[0]), sy = std::sin(kPi * x[1]), sz = std::sin(kPi * x[2]);
      const double cx = std::cos(kPi * x[0]), cy = std::cos(kPi * x[1]), cz = std::cos(kPi * x[2]);
      // E = (sy sz (1+x), sx sz (1 + i y), sx sy)
      const cplx dEz_dy = kPi * sx * cy, dEy_dz = kPi * sx * cz * cplx(1.0, x[1]);
      const cplx dEx_dz = kPi * sy * cz * (1.0 + x[0]), dEz_dx = kPi * cx * sy;
      const cplx dEy_dx = kPi * cx * sz * cplx(1.0, x[1]), dEx_dy = kPi * cy * sz * (1.0 + x[0]);
      return CVec3{dEz_dy - dEy_dz, dEx_dz - dEz_dx, dEy_dx - dEx_dy};
    };
    auto curlH = [](const Vec3& x) {
      // H = (cos(y + 2z), x z + i, e^{-x} y)
      const cplx dHz_dy = std::exp(-x[0]), dHy_dz = x[0];
      const cplx dHx_dz = -2.0 * std::sin(x[1] + 2 * x[2]), dHz_dx = -std::exp(-x[0]) * x[1];
      const cplx dHy_dx = x[2], dHx_dy = -std::sin(x[1] + 2 * x[2]);
      return CVec3{dHz_dy - dHy_dz, dHx_dz - dHz_dx, dHy_dx - dHx_dy};
    };
    const cplx iw(0, w);
    std::vector<double> errs;
    for (int n : {8, 16}) {
      LinearMaxwellOperator op(vacuum(n, w));
      const Grid& g = op.grid();
      FieldPair J(g), ex(g);
      J.H = VectorField3C::sample(g, Layout::face, [&](const Vec3& x) {
        auto c = curlE(x);
        auto h = H_exact(x);
        return CVec3{c[0] - iw * h[0], c[1] - iw * h[1], c[2] - iw * h[2]};
      });
      J.E = VectorField3C::sample(g, Layout::edge, [&](const Vec3& x) {
        auto c = curlH(x);
        auto e = E_exact(x);
        return CVec3{c[0] + iw * e[0], c[1] + iw * e[1], c[2] + iw * e[2]};
      });
      ex.E = VectorField3C::sample(g, Layout::edge, E_exact);
      ex.H = VectorField3C::sample(g, Layout::face, H_exact);
      auto [u, rep] = op.solve_inhomogeneous(J);
      errs.push_back(norm_Linf(u.E - ex.E) / norm_Linf(ex.E));
    }
    INFO("errors " << errs[0] << " " << errs[1]);
    CHECK(errs[0] / errs[1] == Approx(4.0).margin(1.2));
  }
}

TEST_CASE("discrete reciprocity and divergence constraints", "[maxwell][property]") {
  const auto mat = bumpy(7, 1.9);
  LinearMaxwellOperator op(mat);
  const Grid& g = mat.grid;
  const auto a = PlaneWave{1.9, {1.9 * 0.6, 1.9 * 0.8, 0.0}}.sample(g);
  const auto b = PlaneWave{1.9, {0.0, 1.9 * 0.8, 1.9 * 0.6}}.sample(g);
  auto [U, r1] = op.solve_homogeneous(tangential_trace(a.E));
  auto [u, r2] = op.solve_homogeneous(tangential_trace(b.E) + cplx(0.5, 0.2) * tangential_trace(a.E));
  const cplx lhs = boundary_pairing(tangential_trace(U.E), magnetic_trace(u.H));
  const cplx rhs = boundary_pairing(tangential_trace(u.E), magnetic_trace(U.H));
  CHECK(std::abs(lhs - rhs) <= 1e-8 * std::abs(lhs));

  // div(eps E) and div(mu H) vanish at interior nodes / all cells.
  auto epsE = U.E;
  const auto eps = sample_staggered(mat.epsilon, g, Layout::edge);
  for (int c = 0; c < 3; ++c)
    for (std::size_t m = 0; m < epsE.comp(c).size(); ++m) epsE.comp(c)[m] *= eps.comp[c][m];
  const auto d = div_h(epsE);
  double worst = 0;
  for (int i = 1; i < g.n(); ++i)
    for (int j = 1; j < g.n(); ++j)
      for (int k = 1; k < g.n(); ++k) worst = std::max(worst, std::abs(d.at(i, j, k)));
  CHECK(worst <= 1e-8 * norm_Linf(U.E) / g.h());

  auto muH = U.H;
  const auto mu = sample_staggered(mat.mu, g, Layout::face);
  for (int c = 0; c < 3; ++c)
    for (std::size_t m = 0; m < muH.comp(c).size(); ++m) muH.comp(c)[m] *= mu.comp[c][m];
  CHECK(norm_Linf(div_h(muH)) <= 1e-8 * norm_Linf(U.H) / g.h());
}

TEST_CASE("Krylov path agrees with the direct path", "[maxwell]") {
  SolverOptions krylov;
  krylov.direct_max_n = 0;
  krylov.estimate_condition = false;
  SECTION("constant coefficients: preconditioner is exact") {
    const auto mat = vacuum(8, 2.3);
    LinearMaxwellOperator dir(mat), kry(mat, krylov);
    CHECK_FALSE(kry.direct());
    const auto pw = PlaneWave{2.3, {2.3 * 0.6, 0.0, 2.3 * 0.8}}.sample(mat.grid);
    FieldPair J(mat.grid);
    J.E = random_field(mat.grid, Layout::edge, 3);
    auto [a, ra] = dir.solve(tangential_trace(pw.E), J);
    auto [b, rb] = kry.solve(tangential_trace(pw.E), J);
    CHECK(rb.method == "gmres-fft");
    CHECK(rb.iterations <= 2);
    CHECK(norm_Linf(a - b) <= 1e-8 * norm_Linf(a));
  }
  SECTION("variable coefficients") {
    const auto mat = bumpy(8, 2.3);
    LinearMaxwellOperator dir(mat), kry(mat, krylov);
    const auto pw = PlaneWave{2.3, {2.3 * 0.6, 0.0, 2.3 * 0.8}}.sample(mat.grid);
    auto [a, ra] = dir.solve_homogeneous(tangential_trace(pw.E));
    auto [b, rb] = kry.solve_homogeneous(tangential_trace(pw.E));
    CHECK(rb.iterations > 0);
    CHECK(rb.residual <= 1e-10);
    CHECK(norm_Linf(a - b) <= 1e-7 * norm_Linf(a));
  }
}

TEST_CASE("resonances", "[maxwell]") {
  const Grid g(6);
  const auto freqs = discrete_cavity_frequencies(g, 6.0);
  REQUIRE(!freqs.empty());
  // Lowest discrete cavity frequency of the unit cube: sqrt(2) * (2/h) sin(pi h / 2).
  CHECK(freqs[0] == Approx(std::sqrt(2.0) * 12.0 * std::sin(kPi / 12.0)).epsilon(1e-14));

  SECTION("scan peaks at the cavity frequency") {
    auto scan = resonance_scan(vacuum(6, 1.0), freqs[0] - 0.2, freqs[0] + 0.2, 41);
    auto peak = std::max_element(scan.begin(), scan.end(),
                                 [](const ResonancePoint& a, const ResonancePoint& b) { return a.condition < b.condition; });
    CHECK(std::abs(peak->omega - freqs[0]) <= 0.011);
    CHECK(peak->condition > 20 * scan.front().condition);
  }
  SECTION("exact resonance is flagged and solves refuse") {
    LinearMaxwellOperator op(vacuum(6, freqs[0]));
    CHECK(op.resonant());
    CHECK_THROWS_AS(op.solve_homogeneous(TangentialBoundaryField(op.grid())), Error);
  }
  SECTION("omega near zero is flagged") {
    auto scan = resonance_scan(vacuum(4, 1.0), 0.0, 1e-5, 2);
    CHECK(scan[0].flagged);
    CHECK(scan[1].flagged);
  }
  SECTION("non-resonant frequency is not flagged") {
    LinearMaxwellOperator op(vacuum(6, 1.0));
    CHECK_FALSE(op.resonant());
    CHECK(std::isfinite(op.condition_estimate()));
  }
  SECTION("cavity frequencies converge at second order") {
    const double exact = kPi * std::sqrt(2.0);
    const double e8 = discrete_cavity_frequencies(Grid(8), 5.0)[0] - exact;
    const double e16 = discrete_cavity_frequencies(Grid(16), 5.0)[0] - exact;
    CHECK(e8 / e16 == Approx(4.0).margin(0.1));
  }
}

TEST_CASE("solve report serializes", "[maxwell]") {
  LinearMaxwellOperator op(vacuum(4, 1.0));
  const auto pw = PlaneWave{1.0, {0.6, 0.8, 0.0}}.sample(op.grid());
  auto [u, rep] = op.solve_homogeneous(tangential_trace(pw.E));
  auto j = nlohmann::json::parse(rep.to_json());
  CHECK(j["method"] == "sparse-lu");
  CHECK(j["residual"].get<double>() <= 1e-10);
  CHECK(j["condition_estimate"].get<double>() > 1.0);
}
