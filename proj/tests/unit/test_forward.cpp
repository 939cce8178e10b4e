#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "maxnl/calculus.hpp"
#include "maxnl/errors.hpp"
#include "maxnl/forward.hpp"

using namespace maxnl;
using Catch::Approx;

namespace {

MaterialProfile medium(int n = 8, double omega = 1.5) {
  MaterialProfile m;
  m.grid = Grid(n);
  m.omega = omega;
  return m;
}

TangentialBoundaryField plane_wave_trace(const Grid& g, double omega) {
  return TangentialBoundaryField::sample(g, [&](const Vec3& x) {
    const cplx ph = std::exp(cplx(0, omega * (0.6 * x[0] + 0.8 * x[1])));
    return CVec3{0.0, 0.0, ph};
  });
}

double loglog_slope(const std::vector<double>& t, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = double(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double a = std::log(t[i]), b = std::log(y[i]);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

NonlinearLaw kerr_law() { return NonlinearLaw::kerr(CoefficientField::constant(1.0), CoefficientField::constant(0.5)); }

}  // namespace

TEST_CASE("picard step trivial cases", "[forward]") {
  LinearMaxwellOperator op(medium(6));
  const auto f = plane_wave_trace(op.grid(), 1.5);
  auto [U0, rep] = op.solve_homogeneous(cplx(0.1) * f);
  const FieldPair U = random_smooth_pair(op.grid(), 3);
  CHECK(norm_Linf(picard_step(op, NonlinearLaw::linear(), U0, U) - U0) == 0.0);
  CHECK(norm_Linf(picard_step(op, kerr_law(), U0, FieldPair(op.grid())) - U0) == 0.0);

  auto st = solve_nonlinear(op, kerr_law(), TangentialBoundaryField(op.grid()));
  CHECK(st.converged);
  CHECK(st.iterations == 1);
  CHECK(norm_Linf(st.U) == 0.0);
}

TEST_CASE("picard step contracts for small fields", "[forward][property]") {
  LinearMaxwellOperator op(medium(6));
  const auto law = kerr_law();
  auto [U0, rep] = op.solve_homogeneous(cplx(0.1) * plane_wave_trace(op.grid(), 1.5));
  for (std::uint64_t s = 0; s < 3; ++s) {
    FieldPair a = random_smooth_pair(op.grid(), 10 + s), b = random_smooth_pair(op.grid(), 20 + s);
    a *= 0.15 / norm_Linf(a);
    b *= 0.15 / norm_Linf(b);
    const double r = norm_W1p(picard_step(op, law, U0, a) - picard_step(op, law, U0, b), 4.0) / norm_W1p(a - b, 4.0);
    CHECK(r < 1.0);
  }
}

TEST_CASE("nonlinear solve converges geometrically to a unique fixed point", "[forward][property]") {
  LinearMaxwellOperator op(medium(8));
  const auto law = kerr_law();
  const auto f = plane_wave_trace(op.grid(), 1.5);
  const auto est = estimate_threshold(op, law, f);
  INFO(est.to_json());
  REQUIRE(est.f_max > 0);
  const double scale = 0.5 * est.f_max / norm_boundary(f, 4.0);
  PicardOptions opt;
  opt.tol = 1e-12;
  auto st = solve_nonlinear(op, law, cplx(scale) * f, opt);
  CHECK(st.converged);
  CHECK(st.ball_radius <= est.m);
  // A single contraction ratio bounds every step after the first.
  REQUIRE(st.ratios.size() >= 2);
  CHECK(st.max_ratio() < 1.0);

  // Fixed-point residual.
  auto [U0, rep] = op.solve_homogeneous(cplx(scale) * f);
  const FieldPair TU = picard_step(op, law, U0, st.U);
  CHECK(norm_W1p(TU - st.U, 4.0) <= 10 * opt.tol * norm_W1p(st.U, 4.0));

  // Start from half the linear solution instead.
  FieldPair V = cplx(0.5) * U0;
  for (int it = 0; it < 200; ++it) {
    FieldPair next = picard_step(op, law, U0, V);
    const double step = norm_W1p(next - V, 4.0);
    V = std::move(next);
    if (step <= opt.tol * norm_W1p(V, 4.0)) break;
  }
  CHECK(norm_W1p(V - st.U, 4.0) <= 10 * opt.tol * norm_W1p(st.U, 4.0));
}

TEST_CASE("nonlinear correction orders in the data size", "[forward]") {
  LinearMaxwellOperator op(medium(6));
  const auto f = plane_wave_trace(op.grid(), 1.5);
  const auto kerr = NonlinearLaw::kerr(CoefficientField::constant(1.0), CoefficientField::constant(0.0));
  const auto sat = NonlinearLaw(Susceptibility::saturable(CoefficientField::constant(1.0), CoefficientField::constant(1.0)),
                                Susceptibility::zero(), 1.0, 10.0);
  PicardOptions opt;
  opt.tol = 1e-14;
  std::vector<double> ts, rel, diff, cobs;
  for (double t : {0.02, 0.04, 0.08, 0.16}) {
    auto [U0, r] = op.solve_homogeneous(cplx(t) * f);
    auto a = solve_nonlinear(op, kerr, cplx(t) * f, opt);
    auto b = solve_nonlinear(op, sat, cplx(t) * f, opt);
    ts.push_back(t);
    rel.push_back(norm_W1p(a.U - U0, 4.0) / norm_W1p(U0, 4.0));
    diff.push_back(norm_W1p(a.U - b.U, 4.0));
    cobs.push_back(a.norm_ratio);
  }
  CHECK(loglog_slope(ts, rel) == Approx(2.0).margin(0.1));
  CHECK(loglog_slope(ts, diff) == Approx(5.0).margin(0.2));
  // ||U|| <= C ||f|| with C stable as f shrinks.
  CHECK(cobs.front() / cobs.back() == Approx(1.0).margin(0.1));
}

TEST_CASE("oversized data reports the achievable scale", "[forward]") {
  LinearMaxwellOperator op(medium(6));
  const auto f = plane_wave_trace(op.grid(), 1.5);
  try {
    solve_nonlinear(op, NonlinearLaw::kerr(CoefficientField::constant(5.0), CoefficientField::constant(5.0)),
                    cplx(3.0) * f);
    FAIL("expected DataTooLarge");
  } catch (const DataTooLarge& e) {
    CHECK(e.kind() == ErrorKind::data_too_large);
    CHECK(e.achievable_scale() > 0.0);
    CHECK(e.achievable_scale() < 1.0);
  }
}

TEST_CASE("measurement map", "[forward]") {
  LinearMaxwellOperator op(medium(6));
  const auto f = plane_wave_trace(op.grid(), 1.5);
  const std::vector<double> ts{0.025, 0.05, 0.1};

  SECTION("linear law scales exactly") {
    auto ms = measurement_map(op, NonlinearLaw::linear(), f, {1.0, 0.3});
    const auto d = ms.items[1].ttr_H + cplx(-0.3) * ms.items[0].ttr_H;
    CHECK(norm_Linf(d) <= 1e-12 * norm_Linf(ms.items[1].ttr_H));
    CHECK(norm_Linf(ms.items[1].ttr_E + cplx(-0.3) * f) <= 1e-15);
  }
  SECTION("Kerr deviation is cubic and the set round-trips") {
    PicardOptions opt;
    opt.tol = 1e-14;
    auto lin = measurement_map(op, NonlinearLaw::linear(), f, {1.0});
    auto ms = measurement_map(op, kerr_law(), f, ts, opt, "plane wave");
    std::vector<double> dev;
    for (const auto& it : ms.items) dev.push_back(norm_Linf(it.ttr_H + cplx(-it.t) * lin.items[0].ttr_H));
    CHECK(loglog_slope(ts, dev) == Approx(3.0).margin(0.1));

    const auto dir = std::filesystem::temp_directory_path() / "maxnl_measure_test";
    ms.save(dir.string(), "abc123");
    auto back = MeasurementSet::load(dir.string());
    REQUIRE(back.items.size() == ms.items.size());
    CHECK(back.omega == ms.omega);
    CHECK(norm_Linf(back.items[2].ttr_H + cplx(-1.0) * ms.items[2].ttr_H) == 0.0);
    std::filesystem::remove_all(dir);
  }
  SECTION("laws differing at second order differ at fifth order") {
    PicardOptions opt;
    opt.tol = 1e-14;
    std::vector<CoefficientField> a2{CoefficientField::constant(1.0), CoefficientField::constant(0.0)};
    std::vector<CoefficientField> b2{CoefficientField::constant(1.0), CoefficientField::constant(2.0)};
    NonlinearLaw l1(Susceptibility::from_series(a2), Susceptibility::zero(), 1.0, 10.0);
    NonlinearLaw l2(Susceptibility::from_series(b2), Susceptibility::zero(), 1.0, 10.0);
    auto m1 = measurement_map(op, l1, f, ts, opt);
    auto m2 = measurement_map(op, l2, f, ts, opt);
    std::vector<double> dev;
    for (std::size_t i = 0; i < ts.size(); ++i) dev.push_back(norm_Linf(m1.items[i].ttr_H + cplx(-1.0) * m2.items[i].ttr_H));
    CHECK(loglog_slope(ts, dev) == Approx(5.0).margin(0.2));
  }
}
