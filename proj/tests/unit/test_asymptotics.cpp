#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <nlohmann/json.hpp>

#include "maxnl/asymptotics.hpp"
#include "maxnl/calculus.hpp"
#include "maxnl/errors.hpp"

using namespace maxnl;
using Catch::Approx;

namespace {

MaterialProfile medium(int n) {
  MaterialProfile m;
  m.grid = Grid(n);
  m.omega = 1.5;
  m.epsilon = CoefficientField::gaussian(1.0, 0.3, {0.5, 0.5, 0.5}, 0.2);
  return m;
}

TangentialBoundaryField datum(const Grid& g) {
  return TangentialBoundaryField::sample(g, [&](const Vec3& x) {
    const cplx ph = std::exp(cplx(0, 1.5 * (0.6 * x[0] + 0.8 * x[1])));
    return CVec3{0.3 * ph, 0.0, ph};
  });
}

NonlinearLaw kerr(double a = 1.0, double b = 0.5) {
  return NonlinearLaw::kerr(CoefficientField::constant(a), CoefficientField::constant(b));
}

NonlinearLaw saturable() {
  return NonlinearLaw(Susceptibility::saturable(CoefficientField::constant(1.0), CoefficientField::constant(1.0)),
                      Susceptibility::kerr(CoefficientField::constant(0.5)), 1.0, 10.0);
}

}  // namespace

TEST_CASE("iterates", "[asymptotics]") {
  LinearMaxwellOperator op(medium(6));
  const auto f = datum(op.grid());
  const FieldPair U0 = op.solve_homogeneous(f).first;
  const double t = 0.2;

  auto lin = compute_iterates(op, NonlinearLaw::linear(), U0, t, 3);
  for (const auto& u : lin) CHECK(norm_Linf(u - cplx(t) * U0) == 0.0);

  const auto law = kerr();
  auto it = compute_iterates(op, law, U0, t, 4);
  const FieldPair W1 = op.solve_inhomogeneous(eval_F_k(law, 1, U0)).first;
  CHECK(norm_Linf(it[1] - cplx(t) * U0 - cplx(std::pow(t, 3)) * W1) <= 1e-12 * norm_Linf(it[1]));

  PicardOptions po;
  po.tol = 1e-14;
  const auto st = solve_nonlinear_from(op, law, cplx(t) * U0, po);
  double prev = 1e300;
  for (int k = 1; k <= 4; ++k) {
    const double d = norm_W1p(it[k] - st.U, 4.0);
    CHECK(d < prev);
    prev = d;
  }

  // Odd in t.
  auto neg = compute_iterates(op, saturable(), U0, -t, 3);
  auto pos = compute_iterates(op, saturable(), U0, t, 3);
  for (int k = 0; k <= 3; ++k) CHECK(norm_Linf(neg[k] + pos[k]) <= 1e-14 * norm_Linf(pos[k]));
}

TEST_CASE("order fits", "[asymptotics]") {
  LinearMaxwellOperator op(medium(6));
  const auto f = datum(op.grid());
  const auto ts = default_t_values(0.2);
  CHECK(ts.size() == 8);
  CHECK(ts.front() == Approx(0.2 / 30));

  CHECK(order_fit_V(op, kerr(), f, 1, ts).slope == Approx(3.0).margin(0.1));
  CHECK(order_fit_V(op, saturable(), f, 2, ts).slope == Approx(5.0).margin(0.2));
  CHECK(order_fit_remainder(op, kerr(), f, 0, ts).slope == Approx(3.0).margin(0.1));
  CHECK(order_fit_remainder(op, kerr(), f, 1, ts).slope == Approx(5.0).margin(0.2));

  try {
    order_fit_V(op, NonlinearLaw::linear(), f, 1, ts);
    FAIL("expected zero signal");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::zero_signal);
  }

  // Far outside the contraction regime the fit is refused.
  bool refused = false;
  try {
    order_fit_remainder(op, kerr(8.0, 8.0), f, 1, default_t_values(2.0));
  } catch (const Error& e) {
    refused = e.kind() == ErrorKind::fit_rejected || e.kind() == ErrorKind::data_too_large;
  }
  CHECK(refused);
}

TEST_CASE("W_k extraction", "[asymptotics]") {
  SECTION("k = 1 agrees with the direct recursion on a 16^3 grid") {
    LinearMaxwellOperator op(medium(16));
    const auto f = datum(op.grid());
    const auto law = saturable();
    const FieldPair U0 = op.solve_homogeneous(f).first;
    const FieldPair direct = op.solve_inhomogeneous(eval_F_k(law, 1, U0)).first;
    const FieldPair fitted = extract_W_k(op, law, f, 1, default_t_values(0.05));
    CHECK(norm_Linf(fitted - direct) <= 1e-6 * norm_Linf(direct));
    CHECK(norm_Linf(tangential_trace(fitted.E)) <= 1e-12 * norm_Linf(fitted));
    CHECK(wk_equation_residual(op, law, direct, U0) <= 1e-8);
  }
  LinearMaxwellOperator op(medium(6));
  const auto f = datum(op.grid());
  const FieldPair U0 = op.solve_homogeneous(f).first;
  SECTION("trivial and linear cases") {
    CHECK(norm_Linf(extract_W_k(op, NonlinearLaw::linear(), f, 1, default_t_values(0.1))) == 0.0);
    const auto zero_first = NonlinearLaw::kerr(CoefficientField::constant(0.0), CoefficientField::constant(0.0));
    CHECK(wk_equation_residual(op, zero_first, FieldPair(op.grid()), U0) == 0.0);

    const auto ts = default_t_values(0.1);
    const FieldPair w1 = extract_W_k(op, kerr(1.0, 0.0), f, 1, ts);
    const FieldPair w2 = extract_W_k(op, kerr(2.0, 0.0), f, 1, ts);
    CHECK(norm_Linf(w2 - cplx(2.0) * w1) <= 1e-8 * norm_Linf(w2));
  }
  SECTION("independent of the t sample and of the iterate used") {
    const auto law = saturable();
    std::vector<double> a, b;
    for (int i = 0; i < 6; ++i) {
      a.push_back(0.01 * (i + 1));
      b.push_back(0.0105 * (i + 1) + 0.002);
    }
    const FieldPair wa = extract_W_k(op, law, f, 1, a);
    const FieldPair wb = extract_W_k(op, law, f, 1, b);
    CHECK(norm_Linf(wa - wb) <= 1e-4 * norm_Linf(wa));
    const FieldPair w_from_2 = extract_W_k(op, law, f, 1, a, 2);
    CHECK(norm_Linf(wa - w_from_2) <= 1e-3 * norm_Linf(wa));
  }
  SECTION("too few samples are refused") {
    CHECK_THROWS_AS(extract_W_k(op, kerr(), f, 2, {0.1, 0.2, 0.3}), Error);
  }
}

TEST_CASE("expansion record serializes", "[asymptotics]") {
  LinearMaxwellOperator op(medium(5));
  const auto f = datum(op.grid());
  auto rec = expansion_record(op, kerr(), f, 1, default_t_values(0.2));
  auto j = nlohmann::json::parse(rec.to_json());
  CHECK(j["correction_fit"]["slope"].get<double>() == Approx(3.0).margin(0.1));
  CHECK(j["remainder_fit"]["slope"].get<double>() == Approx(5.0).margin(0.2));
  CHECK(j["t_values"].size() == 8);
}

TEST_CASE("exact expansion fields", "[asymptotics]") {
  LinearMaxwellOperator op(medium(6));
  const auto f = datum(op.grid());
  const FieldPair U0 = op.solve_homogeneous(f).first;
  const auto law = saturable();
  const auto W = expansion_fields(op, law, U0, 2);
  REQUIRE(W.size() == 3);
  const FieldPair W1 = op.solve_inhomogeneous(eval_F_k(law, 1, U0)).first;
  CHECK(norm_Linf(W[1] - W1) <= 1e-13 * norm_Linf(W1));
  CHECK(norm_Linf(tangential_trace(W[2].E)) == 0.0);

  // The truncated expansion leaves a remainder of order t^7.
  PicardOptions po;
  po.tol = 1e-15;
  std::vector<double> ts, rem;
  for (double t : {0.02, 0.04, 0.08}) {
    const auto st = solve_nonlinear_from(op, law, cplx(t) * U0, po);
    FieldPair approx = cplx(t) * U0;
    approx.axpy(std::pow(t, 3), W[1]);
    approx.axpy(std::pow(t, 5), W[2]);
    ts.push_back(t);
    rem.push_back(norm_W1p(st.U - approx, 4.0));
  }
  CHECK(fit_loglog(ts, rem).slope == Approx(7.0).margin(0.3));

  // Kerr laws have no t^5 source beyond the W_1 feedback.
  const auto kw = expansion_fields(op, kerr(1.0, 0.0), U0, 2);
  const FieldPair w1 = op.solve_inhomogeneous(eval_F_k(kerr(1.0, 0.0), 1, U0)).first;
  CHECK(norm_Linf(kw[1] - w1) <= 1e-13 * norm_Linf(w1));
  CHECK(norm_Linf(kw[2]) > 0.0);
}
