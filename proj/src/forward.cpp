#include "maxnl/forward.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "maxnl/calculus.hpp"
#include "maxnl/errors.hpp"
#include "maxnl/field_io.hpp"

namespace maxnl {

FieldPair picard_step(const LinearMaxwellOperator& op, const NonlinearLaw& law, const FieldPair& U0,
                      const FieldPair& U) {
  if (law.is_linear()) return U0;
  FieldPair out = U0;
  out += op.solve_inhomogeneous(eval_F(law, U)).first;
  return out;
}

double PicardState::max_ratio() const {
  return ratios.empty() ? 0.0 : *std::max_element(ratios.begin(), ratios.end());
}

std::string PicardState::to_json() const {
  nlohmann::json j{{"iterations", iterations}, {"converged", converged},  {"ball_radius", ball_radius},
                   {"norm_ratio", norm_ratio}, {"step_norms", step_norms}, {"ratios", ratios}};
  return j.dump(2);
}

namespace {

enum class Outcome { converged, contraction_failed, max_iter };

Outcome iterate(const LinearMaxwellOperator& op, const NonlinearLaw& law, const FieldPair& U0,
                const PicardOptions& opt, PicardState& st) {
  st = PicardState{U0, {}, {}, norm_W1p(U0, opt.p), 0.0, 0, false};
  for (int it = 1; it <= opt.max_iter; ++it) {
    FieldPair next(U0.grid());
    try {
      next = picard_step(op, law, U0, st.U);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::envelope_violation) return Outcome::contraction_failed;
      throw;
    }
    const double step = norm_W1p(next - st.U, opt.p);
    const double size = norm_W1p(next, opt.p);
    if (!st.step_norms.empty() && st.step_norms.back() > 0) st.ratios.push_back(step / st.step_norms.back());
    st.step_norms.push_back(step);
    st.U = std::move(next);
    st.iterations = it;
    st.ball_radius = std::max(st.ball_radius, size);
    if (!std::isfinite(step)) return Outcome::contraction_failed;
    if (step <= opt.tol * size || size == 0.0) {
      st.converged = true;
      return Outcome::converged;
    }
    // Two consecutive non-contracting steps after the transient.
    const auto& r = st.ratios;
    if (r.size() >= 3 && r[r.size() - 1] >= 1.0 && r[r.size() - 2] >= 1.0) return Outcome::contraction_failed;
  }
  return Outcome::max_iter;
}

}  // namespace

PicardState solve_nonlinear_from(const LinearMaxwellOperator& op, const NonlinearLaw& law, const FieldPair& U0,
                                 const PicardOptions& opt) {
  PicardState st{U0, {}, {}, 0.0, 0.0, 0, false};
  const Outcome out = iterate(op, law, U0, opt, st);
  if (out == Outcome::converged) return st;
  if (out == Outcome::max_iter)
    fail(ErrorKind::non_convergence,
         fmt::format("Picard iteration did not reach tol {:.2e} in {} steps (last ratio {:.3f})", opt.tol,
                     opt.max_iter, st.ratios.empty() ? 0.0 : st.ratios.back()));
  // Contraction failed: find the largest converging scale 2^-j.
  double scale = 1.0, achievable = 0.0;
  for (int j = 1; j <= opt.max_halvings; ++j) {
    scale *= 0.5;
    PicardState probe = st;
    if (iterate(op, law, cplx(scale) * U0, opt, probe) == Outcome::converged) {
      achievable = scale;
      break;
    }
  }
  spdlog::warn("Picard contraction failed; achievable data scale {}", achievable);
  throw DataTooLarge(fmt::format("boundary data too large for contraction; achievable scale {}", achievable),
                     achievable);
}

PicardState solve_nonlinear(const LinearMaxwellOperator& op, const NonlinearLaw& law,
                            const TangentialBoundaryField& f, const PicardOptions& opt) {
  auto [U0, rep] = op.solve_homogeneous(f);
  PicardState st = solve_nonlinear_from(op, law, U0, opt);
  const double fb = norm_boundary(f, opt.p);
  st.norm_ratio = fb > 0 ? norm_W1p(st.U, opt.p) / fb : 0.0;
  return st;
}

std::string ThresholdEstimate::to_json() const {
  nlohmann::json j{{"C_G", C_G}, {"C_L", C_L}, {"c_embed", c_embed}, {"C_hom", C_hom}, {"m", m}, {"f_max", f_max}};
  return j.dump(2);
}

ThresholdEstimate estimate_threshold(const LinearMaxwellOperator& op, const NonlinearLaw& law,
                                     const TangentialBoundaryField& f, double p, std::uint64_t seed) {
  const Grid& g = op.grid();
  ThresholdEstimate est;
  est.c_embed = estimate_embedding_constant(g, p, 8, seed);
  for (int m = 0; m < 3; ++m) {
    FieldPair J = random_smooth_pair(g, seed + 101 * (m + 1), 2 + m);
    auto [GJ, rep] = op.solve_inhomogeneous(J);
    est.C_G = std::max(est.C_G, norm_W1p(GJ, p) / norm_W1p(J, p));
  }
  if (!law.is_linear()) {
    const double amp = 0.25 * std::sqrt(law.s0());
    for (int m = 0; m < 3; ++m) {
      FieldPair a = random_smooth_pair(g, seed + 211 * (m + 1), 3);
      FieldPair b = random_smooth_pair(g, seed + 307 * (m + 1), 3);
      a *= amp / norm_Linf(a);
      b *= amp / norm_Linf(b);
      est.C_L = std::max(est.C_L, lipschitz_check(law, a, b, p, std::numeric_limits<double>::infinity()));
    }
  }
  auto [U0, rep] = op.solve_homogeneous(f);
  // Smooth random pairs have a small sup / W1p ratio; pairs shaped like the
  // actual iterates see the larger constant.
  if (!law.is_linear() && norm_Linf(U0) > 0) {
    const double amp = 0.25 * std::sqrt(law.s0());
    FieldPair a = U0;
    a *= amp / norm_Linf(U0);
    for (int m = 0; m < 3; ++m) {
      FieldPair b = random_smooth_pair(g, seed + 401 * (m + 1), 3);
      b *= (0.1 + 0.4 * m) * amp / norm_Linf(b);
      b += a;
      est.C_L = std::max(est.C_L, lipschitz_check(law, a, b, p, std::numeric_limits<double>::infinity()));
    }
    FieldPair half = a;
    half *= 0.5;
    est.C_L = std::max(est.C_L, lipschitz_check(law, a, half, p, std::numeric_limits<double>::infinity()));
  }
  const double fb = norm_boundary(f, p);
  est.C_hom = fb > 0 ? norm_W1p(U0, p) / fb : 0.0;
  // Pointwise intensity is |U|^2, so the envelope radius is sqrt(s0) when s0 < 1.
  const double envelope = std::min(law.s0(), std::sqrt(law.s0())) / est.c_embed;
  const double contraction = est.C_L > 0 ? 1.0 / std::sqrt(2.0 * est.C_G * est.C_L) : envelope;
  est.m = std::min(envelope, contraction);
  est.f_max = est.C_hom > 0 ? est.m / (2.0 * est.C_hom) : std::numeric_limits<double>::infinity();
  return est;
}

MeasurementSet measurement_map(const LinearMaxwellOperator& op, const NonlinearLaw& law,
                               const TangentialBoundaryField& f, const std::vector<double>& t_values,
                               const PicardOptions& opt, const std::string& f_descriptor) {
  MeasurementSet ms;
  ms.omega = op.omega();
  ms.n = op.grid().n();
  ms.f_descriptor = f_descriptor;
  ms.law_descriptor = law.describe();
  auto [U1, rep] = op.solve_homogeneous(f);

  const int count = int(t_values.size());
  std::vector<std::optional<Measurement>> items(count);
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (int m = 0; m < count; ++m) {
    try {
      const double t = t_values[m];
      PicardState st = solve_nonlinear_from(op, law, cplx(t) * U1, opt);
      items[m] = Measurement{t, tangential_trace(st.U.E), magnetic_trace(st.U.H), st.iterations};
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  for (auto& it : items) ms.items.push_back(std::move(*it));
  return ms;
}

void MeasurementSet::save(const std::string& dir, const std::string& config_hash) const {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create directory " + dir);
  nlohmann::json j{{"config_hash", config_hash}, {"omega", omega}, {"n", n}, {"f", f_descriptor},
                   {"law", law_descriptor}};
  for (std::size_t m = 0; m < items.size(); ++m) {
    const auto& it = items[m];
    const std::string e_name = fmt::format("ttrE_{:03d}.mxf", m), h_name = fmt::format("ttrH_{:03d}.mxf", m);
    write_field((fs::path(dir) / e_name).string(), it.ttr_E, Precision::complex128, config_hash);
    write_field((fs::path(dir) / h_name).string(), it.ttr_H, Precision::complex128, config_hash);
    j["measurements"].push_back({{"t", it.t}, {"iterations", it.iterations}, {"ttr_E", e_name}, {"ttr_H", h_name}});
  }
  std::ofstream os(fs::path(dir) / "measurements.json");
  if (!os) fail(ErrorKind::io, "cannot write measurements.json in " + dir);
  os << j.dump(2) << "\n";
}

MeasurementSet MeasurementSet::load(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream is(fs::path(dir) / "measurements.json");
  if (!is) fail(ErrorKind::io, "cannot read measurements.json in " + dir);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    fail(ErrorKind::io, std::string("malformed measurements.json: ") + e.what());
  }
  MeasurementSet ms;
  ms.omega = j.value("omega", 0.0);
  ms.n = j.value("n", 0);
  ms.f_descriptor = j.value("f", "");
  ms.law_descriptor = j.value("law", "");
  for (const auto& m : j["measurements"])
    ms.items.push_back(Measurement{m["t"].get<double>(),
                                   read_boundary_field((fs::path(dir) / m["ttr_E"].get<std::string>()).string()),
                                   read_boundary_field((fs::path(dir) / m["ttr_H"].get<std::string>()).string()),
                                   m["iterations"].get<int>()});
  return ms;
}

}  // namespace maxnl
