#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "maxnl/asymptotics.hpp"
#include "maxnl/calculus.hpp"
#include "maxnl/errors.hpp"
#include "maxnl/inverse.hpp"

using namespace maxnl;
using Catch::Approx;

namespace {

MaterialProfile vacuum(int n, double omega = 1.0) {
  MaterialProfile m;
  m.grid = Grid(n);
  m.omega = omega;
  return m;
}

MaterialProfile lumpy(int n) {
  MaterialProfile m = vacuum(n, 1.5);
  m.epsilon = CoefficientField::gaussian(1.0, 0.3, {0.5, 0.5, 0.5}, 0.2);
  m.mu = CoefficientField::gaussian(1.0, 0.1, {0.4, 0.5, 0.6}, 0.25);
  return m;
}

TangentialBoundaryField datum(const Grid& g, double kx, double ky) {
  return TangentialBoundaryField::sample(g, [&](const Vec3& x) {
    const cplx ph = std::exp(cplx(0, kx * x[0] + ky * x[1]));
    return CVec3{0.3 * ph, cplx(0, 0.2) * ph, ph};
  });
}

CoefficientField half_sampled(const Grid& g, const std::function<cplx(const Vec3&)>& fn) {
  return CoefficientField::sampled(std::make_shared<const ScalarFieldC>(ScalarFieldC::sample(g, Location::half, fn)));
}

}  // namespace

TEST_CASE("zeta family", "[inverse]") {
  SECTION("closed forms at k = 1") {
    const auto f = ZetaFamily::make({1.0, 0.0, 0.0}, 10.0, 1.0);
    const auto id = check_zeta_identities(f);
    for (const auto& s : id.self) CHECK(std::abs(s - 1.0) < 1e-12);
    CHECK(id.z0z1.real() == Approx(-201.0));
    CHECK(id.z2z3c.real() == Approx(201.5));
    // the value with xi^2 / 4 instead of xi^2 / 2 is off by xi^2 / 4
    CHECK(id.literal_norm_gap == Approx(0.25 / 201.5).epsilon(1e-9));
    CHECK(id.max_defect < 1e-13);
    CHECK(std::abs(id.phase[0] - 1.0) < 1e-13);
  }
  SECTION("random frequencies and orders") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> u(1.0, 50.0);
    for (int i = 0; i < 100; ++i) {
      const Vec3 xi{3 * n01(rng), 3 * n01(rng), 3 * n01(rng)};
      const int k = 1 + i % 3;
      const auto f = ZetaFamily::make(xi, u(rng), 1.3, k);
      const auto id = check_zeta_identities(f);
      CHECK(id.max_defect < 1e-12);
      for (int c = 0; c < 3; ++c) CHECK(std::abs(id.phase[c] - xi[c]) < 1e-10 * (1 + f.tau));
    }
  }
  SECTION("xi = 0 is allowed") {
    const auto f = ZetaFamily::make({0, 0, 0}, 5.0, 1.0);
    CHECK(check_zeta_identities(f).max_defect < 1e-13);
  }
  SECTION("json") {
    const auto j = nlohmann::json::parse(ZetaFamily::make({0, 2, 0}, 3.0, 1.0).to_json());
    CHECK(j.at("zeta").size() == 4);
  }
}

TEST_CASE("polarization", "[inverse]") {
  SECTION("plans") {
    CHECK(PolarizationPlan::for_order(1).phases == std::array<int, 3>{4, 4, 1});
    CHECK(PolarizationPlan::for_order(2).phases == std::array<int, 3>{4, 6, 1});
    for (int k = 1; k <= 3; ++k) {
      CHECK(PolarizationPlan::for_order(k).alias_degree() > 2 * k + 1);
      CHECK(PolarizationPlan::for_order(k, false).alias_degree() > 2 * k + 1);
    }
    PolarizationPlan bad;
    bad.k = 2;
    bad.phases = {2, 2, 1};
    CHECK_THROWS_AS(bad.validate(), Error);
  }
  SECTION("monomial") {
    for (int k = 1; k <= 2; ++k) {
      const auto plan = PolarizationPlan::for_order(k);
      const cplx got = polarization_extract(
          [&](const std::array<cplx, 3>& t) {
            return cplx(2.5, -1) * t[0] * std::pow(t[1], k) * std::pow(std::conj(t[2]), k);
          },
          plan);
      CHECK(std::abs(got - cplx(2.5, -1)) < 1e-13);
    }
  }
  SECTION("gauge-covariant cubic with other monomials") {
    // F(t) = |t1 + 2 t2 + 3i t3|^2 (t1 + 2 t2 + 3i t3) . stuff has target coefficient
    // of t1 t2 conj(t3): 2 * 1 * 2 * conj(3i) = -12i
    const auto plan = PolarizationPlan::for_order(1);
    const cplx got = polarization_extract(
        [](const std::array<cplx, 3>& t) {
          const cplx z = t[0] + 2.0 * t[1] + cplx(0, 3) * t[2];
          return std::norm(z) * z;
        },
        plan);
    CHECK(std::abs(got - cplx(0, -12)) < 1e-12);
  }
  SECTION("radii remove the next odd degree") {
    auto plan = PolarizationPlan::for_order(1, true, {1.0, 0.5});
    const cplx got = polarization_extract(
        [](const std::array<cplx, 3>& t) {
          const cplx z = t[0] + t[1] + t[2];
          return std::norm(z) * z + 0.7 * std::norm(z) * std::norm(z) * z;
        },
        plan);
    CHECK(std::abs(got - 2.0) < 1e-12);
    // one radius leaves the quintic's aliased share
    const cplx one = polarization_extract(
        [](const std::array<cplx, 3>& t) {
          const cplx z = t[0] + t[1] + t[2];
          return std::norm(z) * z + 0.7 * std::norm(z) * std::norm(z) * z;
        },
        PolarizationPlan::for_order(1, true, {1.0}));
    CHECK(std::abs(one - 2.0) > 0.1);
  }
  SECTION("functions without the monomial give zero") {
    const cplx got = polarization_extract(
        [](const std::array<cplx, 3>& t) { return t[0] * t[0] * t[1] + std::conj(t[2]) * t[1] * t[1]; },
        PolarizationPlan::for_order(1));
    CHECK(std::abs(got) < 1e-14);
  }
  SECTION("vector oracle") {
    const auto v = polarization_extract(
        [](const std::array<cplx, 3>& t) {
          const cplx m = t[0] * t[1] * std::conj(t[2]);
          return std::vector<cplx>{m, 2.0 * m, t[0]};
        },
        PolarizationPlan::for_order(1));
    REQUIRE(v.size() == 3);
    CHECK(std::abs(v[1] - 2.0) < 1e-14);
    CHECK(std::abs(v[2]) < 1e-14);
  }
}

TEST_CASE("boundary identity", "[inverse]") {
  for (const MaterialProfile& mat : {vacuum(6), lumpy(6)}) {
    const LinearMaxwellOperator op(mat);
    const Grid& g = op.grid();
    const FieldPair U0 = op.solve_homogeneous(datum(g, 0.8, 0.4)).first;
    const FieldPair u0 = op.solve_homogeneous(datum(g, -0.3, 1.1)).first;
    const auto law = NonlinearLaw::kerr(CoefficientField::gaussian(0.2, 0.5, {0.5, 0.4, 0.5}, 0.2),
                                        CoefficientField::constant(0.3));
    const auto ref = NonlinearLaw::kerr(CoefficientField::constant(0.2), CoefficientField::constant(0.1));

    const auto W = expansion_fields(op, law, U0, 1);
    const auto Wr = expansion_fields(op, ref, U0, 1);
    const cplx bd = probe_integral_I_k(1, magnetic_trace(W[1].H), magnetic_trace(Wr[1].H), u0);
    const cplx vol = volume_integral_I_k(law, ref, 1, U0, u0);
    CHECK(std::abs(vol) > 1e-6);
    CHECK(std::abs(bd - vol) <= 1e-10 * std::abs(vol));

    // identical media
    CHECK(std::abs(probe_integral_I_k(1, magnetic_trace(W[1].H), magnetic_trace(W[1].H), u0)) == 0.0);
    // linear in u0
    const cplx twice = probe_integral_I_k(1, magnetic_trace(W[1].H), magnetic_trace(Wr[1].H), cplx(2.0) * u0);
    CHECK(std::abs(twice - 2.0 * bd) <= 1e-13 * std::abs(bd));
  }
  SECTION("order 2 needs the correction") {
    const Grid g(4);
    const TangentialBoundaryField z(g);
    FieldPair u0(g);
    CHECK_THROWS_AS(probe_integral_I_k(2, z, z, u0), Error);
    CHECK(probe_integral_I_k(2, z, z, u0, cplx(1.0)) == cplx(-1.0));
    CHECK_THROWS_AS(probe_integral_I_k(1, TangentialBoundaryField(Grid(5)), z, u0), Error);
  }
}

TEST_CASE("reconstruction config", "[inverse]") {
  ReconstructionConfig cfg;
  auto half = cfg.lattice();
  CHECK(half.size() == 41);
  cfg.assume_real = false;
  CHECK(cfg.lattice().size() == 81);
  cfg.lattice_radius2 = 1;
  CHECK(cfg.lattice().size() == 7);
  cfg.validate(Grid(8));
  cfg.lattice_radius2 = 9;
  CHECK_THROWS_AS(cfg.validate(Grid(8)), Error);
  cfg.lattice_radius2 = 1;
  cfg.taus.clear();
  CHECK_THROWS_AS(cfg.validate(Grid(8)), Error);
}

TEST_CASE("dictionary", "[inverse]") {
  const auto mat = vacuum(8);
  ReconstructionConfig cfg;
  const auto d = build_dictionary(mat, {1, 0, 0}, cfg, 8.0, 1);
  REQUIRE(d.traces.size() == 4);
  CHECK(d.feasible);
  CHECK(d.family.tau <= 8.0);
  for (const auto& f : d.traces) CHECK(norm_Linf(f) == Approx(1.0));
  double prod = d.scale[0] * d.scale[1] * d.scale[2] * d.scale[3];
  CHECK(prod >= 0.5 * cfg.growth_floor);
  // a tiny budget forces tau down to zero
  cfg.growth_floor = 0.5;
  const auto low = build_dictionary(mat, {2, 1, 0}, cfg, 8.0, 1);
  CHECK(low.family.tau == 0.0);
  CHECK_FALSE(low.feasible);
}

TEST_CASE("band-limited recovery", "[inverse][slow]") {
  const auto mat = vacuum(8);
  const LinearMaxwellOperator op(mat);
  const Grid& g = op.grid();
  ReconstructionConfig cfg;
  cfg.lattice_radius2 = 1;
  const auto truth = [](const Vec3& x) { return cplx(0.3 + 0.2 * std::cos(2 * std::numbers::pi * x[1])); };
  const auto ref = NonlinearLaw::kerr(CoefficientField::constant(0.5), CoefficientField::constant(0.0));
  const auto target = NonlinearLaw::kerr(half_sampled(g, [&](const Vec3& x) { return 0.5 + truth(x); }),
                                         CoefficientField::constant(0.0));
  const auto mt = synthesize_measurements(op, target, cfg, 2);
  const auto mr = synthesize_measurements(op, ref, cfg, 2);

  SECTION("kernel solve") {
    const auto est = fourier_recover(mt, mr, mat, ref, cfg);
    CHECK(est.status == "ok");
    CHECK(relative_l2_error(est.estimate, truth) < 1e-6);
    CHECK(est.imag_ratio < 1e-12);
    CHECK(est.frequencies.size() == 4);
  }
  SECTION("identical media give zero") {
    const auto est = fourier_recover(mr, mr, mat, ref, cfg);
    CHECK(norm_Linf(est.estimate) == 0.0);
  }
  SECTION("induction: Kerr target has no quintic term") {
    const auto st = induction_driver(mt, mr, mat, ref, cfg, 3);
    REQUIRE(st.size() == 3);
    CHECK(relative_l2_error(st[0].estimate, truth) < 1e-6);
    CHECK(norm_Linf(st[1].estimate) < 1e-5 * norm_Linf(st[0].estimate));
    CHECK(st[1].frequencies.front().lower_order > 0.0);
    CHECK(st[2].status == "no-data");
  }
  SECTION("save and load") {
    const auto dir = std::filesystem::temp_directory_path() / "maxnl_meas_test";
    std::filesystem::remove_all(dir);
    mt.save(dir.string(), "abc123");
    const auto back = InverseMeasurementSet::load(dir.string());
    REQUIRE(back.items.size() == mt.items.size());
    const auto e1 = fourier_recover(back, mr, mat, ref, cfg);
    const auto e0 = fourier_recover(mt, mr, mat, ref, cfg);
    const auto a = e1.estimate.values(), b = e0.estimate.values();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
    e0.write(dir.string(), "abc123");
    CHECK(std::filesystem::exists(dir / "estimate_a1.mxf"));
    std::filesystem::remove_all(dir);
  }
  SECTION("wrong grid") {
    CHECK_THROWS_AS(fourier_recover(mt, mr, vacuum(6), ref, cfg), Error);
  }
}

TEST_CASE("magnetic coefficient recovery", "[inverse][slow]") {
  const auto mat = vacuum(8);
  const LinearMaxwellOperator op(mat);
  ReconstructionConfig cfg;
  cfg.lattice_radius2 = 1;
  cfg.which = Which::Y;
  const auto truth = [](const Vec3& x) { return cplx(0.3 + 0.2 * std::cos(2 * std::numbers::pi * x[2])); };
  const auto target = NonlinearLaw(Susceptibility::zero(), Susceptibility::kerr(half_sampled(mat.grid, truth)), 1.0, 10.0);
  const auto lin = NonlinearLaw::linear();
  const auto est = fourier_recover(synthesize_measurements(op, target, cfg, 1), synthesize_measurements(op, lin, cfg, 1),
                                   mat, lin, cfg);
  CHECK(est.status == "ok");
  CHECK(relative_l2_error(est.estimate, truth) < 1e-6);
  CHECK(nlohmann::json::parse(est.to_json()).at("coefficient") == "b");
}

TEST_CASE("measurement modes and symmetries", "[inverse][slow]") {
  const auto mat = vacuum(8);
  const LinearMaxwellOperator op(mat);
  const Grid& g = op.grid();
  ReconstructionConfig cfg;
  cfg.lattice_radius2 = 1;
  const double pi2 = 2 * std::numbers::pi;
  const auto ref = NonlinearLaw::kerr(CoefficientField::constant(0.5), CoefficientField::constant(0.0));
  auto shifted = [&](double y0) {
    return [=](const Vec3& x) { return cplx(0.3 + 0.2 * std::cos(pi2 * (x[1] - y0))); };
  };
  auto law_for = [&](const std::function<cplx(const Vec3&)>& delta) {
    return NonlinearLaw::kerr(half_sampled(g, [&](const Vec3& x) { return 0.5 + delta(x); }),
                              CoefficientField::constant(0.0));
  };
  const auto mr = synthesize_measurements(op, ref, cfg, 1);
  const auto exp0 = fourier_recover(synthesize_measurements(op, law_for(shifted(0.0)), cfg, 1), mr, mat, ref, cfg);

  SECTION("translation") {
    const auto est = fourier_recover(synthesize_measurements(op, law_for(shifted(0.25)), cfg, 1), mr, mat, ref, cfg);
    CHECK(relative_l2_error(est.estimate, shifted(0.25)) < 1e-6);
  }
  SECTION("converged traces and probe amplitude") {
    cfg.mode = MeasurementMode::converged;
    const auto law = law_for(shifted(0.0));
    std::vector<double> errs;
    for (double amp : {0.02, 0.01}) {
      cfg.amplitude = amp;
      const auto est = fourier_recover(synthesize_measurements(op, law, cfg, 1),
                                       synthesize_measurements(op, ref, cfg, 1), mat, ref, cfg);
      errs.push_back(relative_l2_error(est.estimate, [&](const Vec3& x) { return exp0.evaluate(x); }));
    }
    CHECK(errs[0] < 1e-5);
    CHECK(errs[1] < 1e-5);
  }
}
