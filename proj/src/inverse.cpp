#include "maxnl/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "maxnl/asymptotics.hpp"
#include "maxnl/calculus.hpp"
#include "maxnl/errors.hpp"
#include "maxnl/field_io.hpp"
#include "maxnl/kernels.hpp"

namespace maxnl {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;
const cplx I{0.0, 1.0};

cplx bdot(const CVec3& a, const CVec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
CVec3 conj3(const CVec3& a) { return {std::conj(a[0]), std::conj(a[1]), std::conj(a[2])}; }
double norm2(const CVec3& a) { return std::norm(a[0]) + std::norm(a[1]) + std::norm(a[2]); }
double l1(const Vec3& v) { return std::abs(v[0]) + std::abs(v[1]) + std::abs(v[2]); }

Vec3 normalized(Vec3 v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  for (double& x : v) x /= n;
  return v;
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

nlohmann::json cjson(cplx z) { return nlohmann::json::array({z.real(), z.imag()}); }
nlohmann::json cjson(const CVec3& v) { return nlohmann::json::array({cjson(v[0]), cjson(v[1]), cjson(v[2])}); }
cplx from_cjson(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

// ---------------------------------------------------------------- zeta family

ZetaFamily ZetaFamily::make(const Vec3& xi, double tau, double omega, int k) {
  if (!(tau >= 0.0)) fail(ErrorKind::invalid_argument, "tau must be >= 0");
  if (!(omega > 0.0)) fail(ErrorKind::invalid_argument, "omega must be positive");
  if (k < 1) fail(ErrorKind::invalid_argument, "order k must be >= 1");
  ZetaFamily f;
  f.xi = xi;
  f.tau = tau;
  f.omega = omega;
  f.k = k;
  const double x = f.xi_norm();
  const double s = std::sqrt(tau * tau + 0.25 * x * x);
  const double c = std::sqrt(omega * omega + tau * tau);
  const double ca = std::sqrt(omega * omega + k * k * s * s - 0.25 * x * x);
  f.decay = s;

  // Frame: e1 -> xi direction, e3 -> the unit vector orthogonal to xi with the
  // smallest l1 norm (least growth over the cube).
  const Vec3 e1 = x > 0 ? normalized(xi) : Vec3{1, 0, 0};
  Vec3 e3{0, 0, 0};
  double best = 1e300;
  for (int a = 0; a < 3; ++a) {
    Vec3 ea{0, 0, 0};
    ea[a] = 1;
    const Vec3 cnd = cross(e1, ea);
    const double nn = std::sqrt(cnd[0] * cnd[0] + cnd[1] * cnd[1] + cnd[2] * cnd[2]);
    if (nn < 1e-8) continue;
    const Vec3 u = normalized(cnd);
    if (l1(u) < best - 1e-12) {
      best = l1(u);
      e3 = u;
    }
  }
  // Prefer +e3 orientation when it is one of the axes.
  if (std::abs(std::abs(e3[2]) - 1.0) < 1e-14) e3 = {0, 0, 1};
  const Vec3 e2 = cross(e3, e1);
  f.frame = {e1, e2, e3};

  const std::array<Vec3, 4> alpha{Vec3{0.5 * x, -ca, 0}, Vec3{0.5 * x, ca, 0}, Vec3{-0.5 * x, -c, 0},
                                  Vec3{-0.5 * x, -c, 0}};
  const std::array<double, 4> beta{k * s, k * s, -s, -s};
  for (int j = 0; j < 4; ++j)
    for (int a = 0; a < 3; ++a)
      f.zeta[j][a] = alpha[j][0] * e1[a] + alpha[j][1] * e2[a] + cplx(alpha[j][2] * e3[a], beta[j] * e3[a]);
  return f;
}

double ZetaFamily::xi_norm() const { return std::sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]); }

double ZetaFamily::growth(int j, double side) const {
  const Vec3 b{zeta[j][0].imag(), zeta[j][1].imag(), zeta[j][2].imag()};
  return 0.5 * side * l1(b);
}

std::string ZetaFamily::to_json() const {
  nlohmann::json j{{"xi", xi}, {"tau", tau}, {"omega", omega}, {"k", k}, {"decay", decay}};
  for (const auto& z : zeta) j["zeta"].push_back(cjson(z));
  j["frame"] = frame;
  return j.dump(2);
}

ZetaIdentities check_zeta_identities(const ZetaFamily& f) {
  ZetaIdentities r;
  const double w2 = f.omega * f.omega, x2 = f.xi_norm() * f.xi_norm(), s = f.decay, k = f.k;
  const double c = std::sqrt(w2 + f.tau * f.tau), ca = std::sqrt(w2 + k * k * s * s - 0.25 * x2);
  for (int j = 0; j < 4; ++j) {
    r.self[j] = bdot(f.zeta[j], f.zeta[j]);
    r.norm2[j] = norm2(f.zeta[j]);
  }
  r.z0z1 = bdot(f.zeta[0], f.zeta[1]);
  r.z2z3c = bdot(f.zeta[2], conj3(f.zeta[3]));
  r.z0z2 = bdot(f.zeta[0], f.zeta[2]);
  r.z1z3 = bdot(f.zeta[1], f.zeta[3]);
  for (int a = 0; a < 3; ++a)
    r.phase[a] = f.zeta[0][a] + f.zeta[1][a] + k * (f.zeta[2][a] - std::conj(f.zeta[3][a]));

  // Closed forms; for k = 1 they read -w^2 - 2 tau^2, 2 tau^2 + w^2 + xi^2/2,
  // 2 tau^2 + w^2 and -w^2.
  const double scale = std::max({w2, r.norm2[0], r.norm2[2]});
  auto rel = [&](cplx got, double want) { return std::abs(got - want) / scale; };
  double d = 0;
  for (int j = 0; j < 4; ++j) d = std::max(d, rel(r.self[j], w2));
  d = std::max(d, rel(r.norm2[0], w2 + 2 * k * k * s * s));
  d = std::max(d, rel(r.norm2[2], w2 + 2 * s * s));
  d = std::max(d, rel(r.z0z1, 0.25 * x2 - ca * ca - k * k * s * s));
  d = std::max(d, rel(r.z2z3c, w2 + 2 * s * s));
  d = std::max(d, rel(r.z0z2, -0.25 * x2 + c * ca + k * s * s));
  d = std::max(d, rel(r.z1z3, -0.25 * x2 - c * ca + k * s * s));
  for (int a = 0; a < 3; ++a) d = std::max(d, std::abs(r.phase[a] - f.xi[a]) / std::sqrt(scale));
  r.max_defect = d;
  const double literal = 2 * f.tau * f.tau + w2 + 0.25 * x2;
  r.literal_norm_gap = (r.norm2[2] - literal) / r.norm2[2];
  return r;
}

std::string ZetaIdentities::to_json() const {
  nlohmann::json j;
  for (int q = 0; q < 4; ++q) {
    j["self"].push_back(cjson(self[q]));
    j["norm2"].push_back(norm2[q]);
  }
  j["z0z1"] = cjson(z0z1);
  j["z2z3c"] = cjson(z2z3c);
  j["z0z2"] = cjson(z0z2);
  j["z1z3"] = cjson(z1z3);
  j["phase"] = cjson(phase);
  j["max_defect"] = max_defect;
  j["literal_norm_gap"] = literal_norm_gap;
  return j.dump(2);
}

// ---------------------------------------------------------------- polarization

PolarizationPlan PolarizationPlan::for_order(int k, bool gauge, std::vector<double> radii) {
  if (k < 1) fail(ErrorKind::invalid_argument, "order k must be >= 1");
  PolarizationPlan p;
  p.k = k;
  p.radii = std::move(radii);
  p.phases = {4, 2 * k + 2, gauge ? 1 : 2 * k + 2};
  for (int guard = 0; p.alias_degree() <= p.target_degree(); ++guard) {
    if (guard > 64) fail(ErrorKind::invalid_argument, "no alias-free polarization grid found");
    p.phases[guard % 2] += 2;
  }
  return p;
}

std::size_t PolarizationPlan::size() const {
  return radii.size() * std::size_t(phases[0]) * phases[1] * phases[2];
}

std::vector<std::array<cplx, 3>> PolarizationPlan::points() const {
  std::vector<std::array<cplx, 3>> out;
  out.reserve(size());
  for (double r : radii)
    for (int a = 0; a < phases[0]; ++a)
      for (int b = 0; b < phases[1]; ++b)
        for (int c = 0; c < phases[2]; ++c)
          out.push_back({std::polar(r, two_pi * a / phases[0]), std::polar(r, two_pi * b / phases[1]),
                         std::polar(r, two_pi * c / phases[2])});
  return out;
}

int PolarizationPlan::alias_degree() const {
  const std::array<int, 3> p{1, k, -k};
  int best = 1 << 30;
  const int span = 4;
  for (int a = -span; a <= span; ++a)
    for (int b = -span; b <= span; ++b)
      for (int c = gauge() ? 0 : -span; c <= (gauge() ? 0 : span); ++c) {
        if (a == 0 && b == 0 && c == 0) continue;
        const int q1 = p[0] + a * phases[0], q2 = p[1] + b * phases[1];
        // Under gauge covariance the winding of t3 is fixed by the total winding 1.
        const int q3 = gauge() ? 1 - q1 - q2 : p[2] + c * phases[2];
        best = std::min(best, std::abs(q1) + std::abs(q2) + std::abs(q3));
      }
  return best;
}

void PolarizationPlan::validate() const {
  if (k < 1) fail(ErrorKind::invalid_argument, "order k must be >= 1");
  if (phases[0] < 1 || phases[1] < 1 || phases[2] < 1) fail(ErrorKind::invalid_argument, "phase counts must be >= 1");
  if (radii.empty()) fail(ErrorKind::invalid_argument, "polarization needs at least one radius");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0)) fail(ErrorKind::invalid_argument, "radii must be positive");
    for (std::size_t j = 0; j < i; ++j)
      if (radii[i] == radii[j]) fail(ErrorKind::invalid_argument, "radii must be distinct");
  }
  const int ad = alias_degree();
  if (ad <= target_degree())
    fail(ErrorKind::invalid_argument,
         fmt::format("sampling grid {}x{}x{} too small for degree {}: a monomial of degree {} aliases onto the target",
                     phases[0], phases[1], phases[2], target_degree(), ad));
}

std::vector<cplx> polarization_reduce(const PolarizationPlan& plan, const std::vector<std::vector<cplx>>& values) {
  plan.validate();
  if (values.size() != plan.size()) fail(ErrorKind::invalid_argument, "sample count does not match the plan");
  const std::size_t width = values.empty() ? 0 : values[0].size();
  for (const auto& v : values)
    if (v.size() != width) fail(ErrorKind::invalid_argument, "oracle values differ in length");
  const std::size_t per_radius = plan.size() / plan.radii.size();
  const int R = int(plan.radii.size());

  // Radial weights: row 0 of the inverse of r_i^{d0 + 2q}.
  Eigen::MatrixXd V(R, R);
  const double rmax = *std::max_element(plan.radii.begin(), plan.radii.end());
  for (int i = 0; i < R; ++i)
    for (int q = 0; q < R; ++q) V(i, q) = std::pow(plan.radii[i] / rmax, plan.target_degree() + 2 * q);
  const Eigen::MatrixXd Vinv = V.inverse();
  const double unscale = std::pow(rmax, -plan.target_degree());

  std::vector<cplx> out(width, 0.0);
  std::size_t idx = 0;
  for (int i = 0; i < R; ++i) {
    const double w = Vinv(0, i) * unscale / double(per_radius);
    for (int a = 0; a < plan.phases[0]; ++a)
      for (int b = 0; b < plan.phases[1]; ++b)
        for (int c = 0; c < plan.phases[2]; ++c, ++idx) {
          const double phi = two_pi * (double(a) / plan.phases[0] + double(plan.k * b) / plan.phases[1] -
                                       (plan.gauge() ? 0.0 : double(plan.k * c) / plan.phases[2]));
          const cplx e = w * std::polar(1.0, -phi);
          const auto& v = values[idx];
          for (std::size_t q = 0; q < width; ++q) out[q] += e * v[q];
        }
  }
  return out;
}

std::vector<cplx> polarization_extract(const VectorOracle& oracle, const PolarizationPlan& plan) {
  plan.validate();
  std::vector<std::vector<cplx>> values;
  for (const auto& t : plan.points()) values.push_back(oracle(t));
  return polarization_reduce(plan, values);
}

cplx polarization_extract(const std::function<cplx(const std::array<cplx, 3>&)>& oracle, const PolarizationPlan& plan) {
  return polarization_extract([&](const std::array<cplx, 3>& t) { return std::vector<cplx>{oracle(t)}; }, plan)[0];
}

// ---------------------------------------------------------------- integral identity

cplx probe_integral_I_k(int k, const TangentialBoundaryField& ttrH_k, const TangentialBoundaryField& ttrH_k_ref,
                        const FieldPair& u0, std::optional<cplx> lower_order) {
  if (k < 1) fail(ErrorKind::invalid_argument, "order k must be >= 1");
  if (k >= 2 && !lower_order)
    fail(ErrorKind::invalid_argument,
         fmt::format("order {} needs the lower-order correction (0 when the coefficients below {} agree)", k, k));
  if (ttrH_k.grid() != u0.grid() || ttrH_k_ref.grid() != u0.grid())
    fail(ErrorKind::layout_mismatch, "traces and probe live on different grids");
  TangentialBoundaryField d = ttrH_k;
  d.axpy(-1.0, ttrH_k_ref);
  return boundary_pairing(tangential_trace(u0.E), d) - lower_order.value_or(0.0);
}

cplx volume_integral_I_k(const NonlinearLaw& law, const NonlinearLaw& law_ref, int k, const FieldPair& U0,
                         const FieldPair& u0) {
  const FieldPair dF = eval_F_k(law, k, U0) - eval_F_k(law_ref, k, U0);
  return volume_pairing(dF.H, u0.H) + volume_pairing(dF.E, u0.E, true);
}

// ---------------------------------------------------------------- leading products

std::string LeadingProductReport::to_json() const {
  return nlohmann::json{{"tau", tau},
                        {"k", k},
                        {"main_deviation", main_deviation},
                        {"cross_term", cross_term},
                        {"full_deviation", full_deviation},
                        {"main_scale", main_scale}}
      .dump(2);
}

LeadingProductReport leading_product_checks(const ZetaFamily& family, const std::array<const CGOSolution*, 4>& probes,
                                            const MaterialProfile& mat, double margin) {
  for (const auto* p : probes)
    if (!p) fail(ErrorKind::invalid_argument, "four CGO probes are required");
  const bool se = probes[0]->probe().sigma_e, sh = probes[0]->probe().sigma_h;
  for (const auto* p : probes)
    if (p->probe().sigma_e != se || p->probe().sigma_h != sh)
      fail(ErrorKind::invalid_argument, "probes must share their polarization");
  for (int j = 0; j < 4; ++j)
    for (int a = 0; a < 3; ++a)
      if (std::abs(probes[j]->probe().zeta[a] - family.zeta[j][a]) > 1e-9 * (1 + std::abs(family.zeta[j][a])))
        fail(ErrorKind::invalid_argument, fmt::format("probe {} does not carry zeta_{}", j, j));
  const bool electric = se;  // electric products when sigma_e is set, magnetic otherwise
  const double sigma = electric ? 1.0 : (sh ? 1.0 : 0.0);
  const int k = family.k;
  const Grid& g = mat.grid;
  const double h = g.h(), side = g.side();
  LeadingProductReport r;
  r.tau = family.tau;
  r.k = k;
  for (int i = 0; i <= g.n(); ++i)
    for (int j = 0; j <= g.n(); ++j)
      for (int l = 0; l <= g.n(); ++l) {
        const Vec3 x{i * h, j * h, l * h};
        bool keep = true;
        for (double v : x) keep = keep && v >= margin * side - 1e-12 && v <= (1 - margin) * side + 1e-12;
        if (!keep) continue;
        std::array<CVec3, 4> F;
        for (int q = 0; q < 4; ++q) {
          const auto eh = probes[q]->factored(x);
          F[q] = electric ? eh.first : eh.second;
        }
        const cplx coef = electric ? mat.epsilon(x) : mat.mu(x);
        const cplx lead = -sigma * std::pow(std::abs(coef), -k) / coef;
        const cplx d23 = bdot(F[2], conj3(F[3]));
        const cplx main = bdot(F[0], F[1]) * std::pow(d23, k);
        const cplx crossv = bdot(F[0], F[2]) * bdot(F[1], F[3]) * std::pow(d23, k - 1);
        const cplx full = std::pow(d23, k) * bdot(F[1], F[0]) +
                          double(k) * bdot(F[1], conj3(F[3])) * std::pow(d23, k - 1) * bdot(F[2], F[0]);
        r.main_deviation = std::max(r.main_deviation, std::abs(main - lead));
        r.cross_term = std::max(r.cross_term, std::abs(crossv));
        r.full_deviation = std::max(r.full_deviation, std::abs(full - double(k + 1) * lead));
        r.main_scale = std::max(r.main_scale, std::abs(lead));
      }
  return r;
}

// ---------------------------------------------------------------- configuration

const char* to_string(MeasurementMode m) { return m == MeasurementMode::expansion ? "expansion" : "converged"; }
const char* to_string(FactorMode m) {
  switch (m) {
    case FactorMode::kernel: return "kernel";
    case FactorMode::diagonal: return "diagonal";
    case FactorMode::leading: return "leading";
  }
  return "?";
}

std::vector<std::array<int, 3>> ReconstructionConfig::lattice() const {
  std::vector<std::array<int, 3>> out;
  const int R = int(std::floor(std::sqrt(std::max(0.0, lattice_radius2))));
  for (int a = -R; a <= R; ++a)
    for (int b = -R; b <= R; ++b)
      for (int c = -R; c <= R; ++c) {
        if (a * a + b * b + c * c > lattice_radius2 + 1e-9) continue;
        if (assume_real) {
          // keep m = 0 and the members whose first non-zero entry is positive
          const int lead = a != 0 ? a : (b != 0 ? b : c);
          if (lead < 0) continue;
        }
        out.push_back({a, b, c});
      }
  return out;
}

void ReconstructionConfig::validate(const Grid& g) const {
  if (k < 1) fail(ErrorKind::config, "reconstruction order k must be >= 1");
  if (!(lattice_radius2 >= 0)) fail(ErrorKind::config, "lattice radius must be >= 0");
  if (taus.empty()) fail(ErrorKind::config, "at least one tau cap is needed");
  for (double t : taus)
    if (!(t >= 0)) fail(ErrorKind::config, "tau caps must be >= 0");
  if (!(growth_floor > 0 && growth_floor < 1)) fail(ErrorKind::config, "growth floor must lie in (0, 1)");
  if (!(amplitude > 0)) fail(ErrorKind::config, "amplitude must be positive");
  if (!(regularization >= 0)) fail(ErrorKind::config, "regularization must be >= 0");
  if (mode == MeasurementMode::converged && radii.empty()) fail(ErrorKind::config, "converged mode needs radii");
  // Half-Nyquist cap on the lattice frequencies.
  const int R = int(std::floor(std::sqrt(std::max(0.0, lattice_radius2))));
  const double kmax = two_pi * R / g.side();
  const double cap = 0.5 * std::numbers::pi / g.h();
  if (kmax > cap + 1e-12)
    fail(ErrorKind::config, fmt::format("lattice frequency {:.4g} exceeds half the grid Nyquist bound {:.4g}", kmax, cap));
  PolarizationPlan::for_order(k, true, mode == MeasurementMode::converged ? radii : std::vector<double>{1.0})
      .validate();
}

std::string ReconstructionConfig::to_json() const {
  nlohmann::json j{{"k", k},
                   {"which", which == Which::X ? "a" : "b"},
                   {"lattice_radius2", lattice_radius2},
                   {"assume_real", assume_real},
                   {"taus", taus},
                   {"growth_floor", growth_floor},
                   {"mode", to_string(mode)},
                   {"factor", to_string(factor)},
                   {"amplitude", amplitude},
                   {"radii", radii},
                   {"regularization", regularization},
                   {"lower_order_floor", lower_order_floor},
                   {"box", {{"n", box.n}, {"scale", box.scale}, {"blend", box.blend}}}};
  return j.dump(2);
}

// ---------------------------------------------------------------- probe dictionary

namespace {

bool unit_medium(const MaterialProfile& mat) {
  return mat.epsilon.is_constant() && mat.mu.is_constant() && mat.epsilon.base() == cplx(1.0) &&
         mat.mu.base() == cplx(1.0);
}

Vec3 lattice_xi(const std::array<int, 3>& m, double side) {
  return {two_pi * m[0] / side, two_pi * m[1] / side, two_pi * m[2] / side};
}

// Electric trace of the CGO solution for zeta on the grid.
TangentialBoundaryField cgo_trace(const MaterialProfile& mat, const CGOProbe& probe, const PotentialQ* Q,
                                  const NeumannOptions& opt) {
  const Grid& g = mat.grid;
  if (unit_medium(mat)) {
    const auto amp = vacuum_cgo_amplitudes(probe).first;
    const double c = 0.5 * g.side();
    return TangentialBoundaryField::sample(g, [&](const Vec3& x) {
      const cplx ph = std::exp(I * (probe.zeta[0] * (x[0] - c) + probe.zeta[1] * (x[1] - c) + probe.zeta[2] * (x[2] - c)));
      return CVec3{ph * amp[0], ph * amp[1], ph * amp[2]};
    });
  }
  return assemble_cgo(probe, *Q, opt).electric_trace(g);
}

}  // namespace

ProbeDictionary build_dictionary(const MaterialProfile& mat, const std::array<int, 3>& m,
                                 const ReconstructionConfig& cfg, double tau_cap, int k, const PotentialQ* Q) {
  const Grid& g = mat.grid;
  const Vec3 xi = lattice_xi(m, g.side());
  ProbeDictionary d;
  d.m = m;
  // Total growth of the normalised product is 2 k s side |frame e3|_1.
  const ZetaFamily probe_frame = ZetaFamily::make(xi, 0.0, mat.omega, k);
  const double budget = std::log(1.0 / cfg.growth_floor);
  const double s_max = budget / (2.0 * k * g.side() * l1(probe_frame.frame[2]));
  const double half = 0.5 * probe_frame.xi_norm();
  d.feasible = s_max >= half;
  const double tau = std::min(tau_cap, std::sqrt(std::max(0.0, s_max * s_max - half * half)));
  d.family = ZetaFamily::make(xi, tau, mat.omega, k);

  std::unique_ptr<PotentialQ> own;
  if (!unit_medium(mat) && !Q) {
    own = std::make_unique<PotentialQ>(assemble_Q(mat, cfg.box));
    Q = own.get();
  }
  const bool se = cfg.which == Which::X, sh = cfg.which == Which::Y;
  for (int j = 0; j < 4; ++j) {
    if (j == 3 && d.family.zeta[3] == d.family.zeta[2]) {
      d.traces.push_back(d.traces[2]);
      d.scale[3] = d.scale[2];
      continue;
    }
    const CGOProbe probe = CGOProbe::make(d.family.zeta[j], mat.omega, se, sh, tau);
    TangentialBoundaryField f = cgo_trace(mat, probe, Q, cfg.neumann);
    const double mx = norm_Linf(f);
    if (!(mx > 0) || !std::isfinite(mx)) fail(ErrorKind::construction, "CGO trace vanishes or overflows");
    d.scale[j] = 1.0 / mx;
    f *= d.scale[j];
    d.traces.push_back(std::move(f));
  }
  return d;
}

// ---------------------------------------------------------------- measurements

namespace {

std::vector<FieldPair> probe_solutions(const LinearMaxwellOperator& op, const ProbeDictionary& d) {
  std::vector<FieldPair> U;
  for (int j = 0; j < 4; ++j) {
    if (j == 3 && d.family.zeta[3] == d.family.zeta[2]) {
      U.push_back(U[2]);
      continue;
    }
    U.push_back(op.solve_homogeneous(d.traces[j]).first);
  }
  return U;
}

PolarizationPlan measurement_plan(const ReconstructionConfig& cfg, int k) {
  if (cfg.mode == MeasurementMode::expansion) return PolarizationPlan::for_order(k, true, {1.0});
  std::vector<double> r;
  for (double x : cfg.radii) r.push_back(x * cfg.amplitude);
  return PolarizationPlan::for_order(k, true, r);
}

FieldPair combine(const std::vector<FieldPair>& U, const std::array<cplx, 3>& t) {
  FieldPair U0 = t[0] * U[1];
  U0.axpy(t[1], U[2]);
  U0.axpy(t[2], U[3]);
  return U0;
}

FrequencyMeasurements measure_frequency(const LinearMaxwellOperator& op, const NonlinearLaw& law,
                                        const ProbeDictionary& d, const std::vector<FieldPair>& U,
                                        const ReconstructionConfig& cfg, int k, int slot) {
  FrequencyMeasurements fm;
  fm.m = d.m;
  fm.tau = d.family.tau;
  fm.tau_slot = slot;
  fm.k = k;
  const PolarizationPlan plan = measurement_plan(cfg, k);
  for (const auto& t : plan.points()) {
    const FieldPair U0 = combine(U, t);
    fm.t.push_back(t);
    if (cfg.mode == MeasurementMode::expansion) {
      const auto W = expansion_fields(op, law, U0, k);
      fm.ttrH.push_back(magnetic_trace(W[k].H));
    } else {
      const PicardState st = solve_nonlinear_from(op, law, U0, cfg.picard);
      fm.ttrH.push_back(magnetic_trace(st.U.H));
    }
  }
  return fm;
}

}  // namespace

const FrequencyMeasurements* InverseMeasurementSet::find(const std::array<int, 3>& m, int k, int tau_slot) const {
  for (const auto& it : items)
    if (it.m == m && it.k == k && it.tau_slot == tau_slot) return &it;
  return nullptr;
}

InverseMeasurementSet synthesize_measurements(const LinearMaxwellOperator& op, const NonlinearLaw& law,
                                              const ReconstructionConfig& cfg, int K) {
  const MaterialProfile& mat = op.material();
  cfg.validate(mat.grid);
  if (K < 1) fail(ErrorKind::invalid_argument, "at least one order must be measured");
  std::unique_ptr<PotentialQ> Q;
  if (!unit_medium(mat)) Q = std::make_unique<PotentialQ>(assemble_Q(mat, cfg.box));
  InverseMeasurementSet out;
  out.mode = cfg.mode;
  out.omega = mat.omega;
  out.n = mat.grid.n();
  out.law_descriptor = law.describe();
  const auto lattice = cfg.lattice();
  for (std::size_t im = 0; im < lattice.size(); ++im)
    for (int slot = 0; slot < int(cfg.taus.size()); ++slot)
      for (int k = 1; k <= K; ++k) {
        const ProbeDictionary d = build_dictionary(mat, lattice[im], cfg, cfg.taus[slot], k, Q.get());
        const auto U = probe_solutions(op, d);
        out.items.push_back(measure_frequency(op, law, d, U, cfg, k, slot));
        spdlog::debug("measured m=({},{},{}) k={} tau={:.3g} [{}/{}]", d.m[0], d.m[1], d.m[2], k, d.family.tau,
                      im + 1, lattice.size());
      }
  return out;
}

void InverseMeasurementSet::save(const std::string& dir, const std::string& config_hash) const {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "traces", ec);
  if (ec) fail(ErrorKind::io, "cannot create " + dir + ": " + ec.message());
  nlohmann::json j{{"mode", to_string(mode)},
                   {"omega", omega},
                   {"n", n},
                   {"law", law_descriptor},
                   {"config_hash", config_hash}};
  j["items"] = nlohmann::json::array();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    nlohmann::json e{{"m", it.m}, {"tau", it.tau}, {"tau_slot", it.tau_slot}, {"k", it.k}};
    for (std::size_t s = 0; s < it.t.size(); ++s) {
      const std::string name = fmt::format("traces/item{:04d}_s{:03d}.mxf", i, s);
      write_field((fs::path(dir) / name).string(), it.ttrH[s], Precision::complex128, config_hash);
      e["t"].push_back({cjson(it.t[s][0]), cjson(it.t[s][1]), cjson(it.t[s][2])});
      e["files"].push_back(name);
    }
    j["items"].push_back(e);
  }
  std::ofstream os(fs::path(dir) / "measurements.json");
  if (!os) fail(ErrorKind::io, "cannot write " + dir + "/measurements.json");
  os << j.dump(2) << "\n";
}

InverseMeasurementSet InverseMeasurementSet::load(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream is(fs::path(dir) / "measurements.json");
  if (!is) fail(ErrorKind::io, "missing " + dir + "/measurements.json");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    fail(ErrorKind::io, std::string("malformed measurements.json: ") + e.what());
  }
  InverseMeasurementSet out;
  try {
    out.mode = j.at("mode").get<std::string>() == "converged" ? MeasurementMode::converged : MeasurementMode::expansion;
    out.omega = j.at("omega").get<double>();
    out.n = j.at("n").get<int>();
    out.law_descriptor = j.value("law", "");
    for (const auto& e : j.at("items")) {
      FrequencyMeasurements it;
      it.m = e.at("m").get<std::array<int, 3>>();
      it.tau = e.at("tau").get<double>();
      it.tau_slot = e.value("tau_slot", 0);
      it.k = e.at("k").get<int>();
      const auto& ts = e.at("t");
      const auto& files = e.at("files");
      for (std::size_t s = 0; s < ts.size(); ++s) {
        it.t.push_back({from_cjson(ts[s][0]), from_cjson(ts[s][1]), from_cjson(ts[s][2])});
        it.ttrH.push_back(read_boundary_field((fs::path(dir) / files[s].get<std::string>()).string()));
      }
      out.items.push_back(std::move(it));
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorKind::io, std::string("malformed measurements.json: ") + e.what());
  }
  return out;
}

// ---------------------------------------------------------------- recovery

namespace {

// Entries of the layout carrying the recovered coefficient: interior edges for
// a_k, all faces for b_k.
struct Entries {
  std::vector<int> comp;
  std::vector<std::size_t> flat;
  std::vector<Vec3> pos;
};

Entries coefficient_entries(const Grid& g, Which which) {
  Entries e;
  const Layout layout = which == Which::X ? Layout::edge : Layout::face;
  const VectorField3C like(g, layout);
  const auto bmap = BoundaryEdgeMap::get(g);
  for (int c = 0; c < 3; ++c) {
    const auto& sh = like.shape(c);
    for (int i = 0; i < sh.dims[0]; ++i)
      for (int j = 0; j < sh.dims[1]; ++j)
        for (int k = 0; k < sh.dims[2]; ++k) {
          const std::size_t m = sh.index(i, j, k);
          if (layout == Layout::edge && bmap->mask(c)[m]) continue;
          e.comp.push_back(c);
          e.flat.push_back(m);
          e.pos.push_back(like.position(c, i, j, k));
        }
  }
  return e;
}

std::vector<double> entry_intensity(const VectorField3C& v, const Entries& e) {
  std::array<std::vector<double>, 3> s;
  for (int c = 0; c < 3; ++c) s[c].resize(v.comp(c).size());
  kernels::omp::intensity(v.grid().n(), v.layout() == Layout::edge ? 0 : 1,
                          {v.comp(0).data(), v.comp(1).data(), v.comp(2).data()}, s[0].data(), s[1].data(),
                          s[2].data());
  std::vector<double> out(e.flat.size());
  for (std::size_t q = 0; q < out.size(); ++q) out[q] = s[e.comp[q]][e.flat[q]];
  return out;
}

// Coefficient of t1 t2^k conj(t3)^k in |V0|^{2k} V0 . v0 at every entry, with
// V0 = t1 V1 + t2 V2 + t3 V3 (V = E for a_k, H for b_k).
std::vector<cplx> polarized_kernel(const std::vector<FieldPair>& U, int k, Which which, const Entries& e) {
  const PolarizationPlan plan = PolarizationPlan::for_order(k, true, {1.0});
  auto pick = [&](const FieldPair& f) -> const VectorField3C& { return which == Which::X ? f.E : f.H; };
  std::vector<std::vector<cplx>> values;
  for (const auto& t : plan.points()) {
    VectorField3C V = t[0] * pick(U[1]);
    V.axpy(t[1], pick(U[2]));
    V.axpy(t[2], pick(U[3]));
    const auto s = entry_intensity(V, e);
    std::vector<cplx> v(e.flat.size());
    const auto& v0 = pick(U[0]);
    for (std::size_t q = 0; q < v.size(); ++q)
      v[q] = std::pow(s[q], k) * V.comp(e.comp[q])[e.flat[q]] * v0.comp(e.comp[q])[e.flat[q]];
    values.push_back(std::move(v));
  }
  return polarization_reduce(plan, values);
}

std::vector<std::array<int, 3>> full_lattice(double r2) {
  ReconstructionConfig c;
  c.lattice_radius2 = r2;
  c.assume_real = false;
  return c.lattice();
}

std::array<int, 3> neg(const std::array<int, 3>& m) { return {-m[0], -m[1], -m[2]}; }

// Per-entry values of e^{2 pi i b.x / side} for every basis vector b.
struct Basis {
  std::vector<std::array<int, 3>> modes;
  Eigen::MatrixXcd phi;  // entries x modes
  int index(const std::array<int, 3>& m) const {
    for (std::size_t i = 0; i < modes.size(); ++i)
      if (modes[i] == m) return int(i);
    return -1;
  }
};

Basis make_basis(const std::vector<std::array<int, 3>>& modes, const std::vector<Vec3>& pos, double side) {
  Basis b;
  b.modes = modes;
  b.phi.resize(Eigen::Index(pos.size()), Eigen::Index(modes.size()));
  for (std::size_t q = 0; q < pos.size(); ++q)
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const double ph = two_pi * (modes[i][0] * pos[q][0] + modes[i][1] * pos[q][1] + modes[i][2] * pos[q][2]) / side;
      b.phi(Eigen::Index(q), Eigen::Index(i)) = std::polar(1.0, ph);
    }
  return b;
}

// Series law whose coefficients below k are reference + recovered differences.
NonlinearLaw hypothesis_law(const NonlinearLaw& ref, const std::vector<CoefficientEstimate>& lower, int k,
                            const Grid& g) {
  auto side = [&](Which w) {
    std::vector<CoefficientField> series;
    for (int j = 1; j <= k; ++j) {
      const CoefficientEstimate* delta = nullptr;
      if (j < k && j - 1 < int(lower.size()) && lower[j - 1].which == w && lower[j - 1].evaluate)
        delta = &lower[j - 1];
      const auto& sus = ref.get(w);
      auto f = std::make_shared<ScalarFieldC>(ScalarFieldC::sample(g, Location::half, [&](const Vec3& x) {
        return sus.coefficient(j, x) + (delta ? delta->evaluate(x) : cplx(0.0));
      }));
      series.push_back(CoefficientField::sampled(f));
    }
    return Susceptibility::from_series(series);
  };
  return NonlinearLaw(side(Which::X), side(Which::Y), ref.s0(), ref.M_bound(), k);
}

// Real least squares by truncated SVD; returns x and fills diagnostics.
Eigen::VectorXd filtered_lsq(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double reg, double* cond,
                             double* resid) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  const double smin = sv.size() ? sv(sv.size() - 1) : 0.0;
  *cond = smin > 0 ? smax / smin : std::numeric_limits<double>::infinity();
  // Truncated SVD: directions below reg * smax are dropped, the rest are solved exactly.
  const double cut = reg * smax;
  Eigen::VectorXd f(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) f(i) = sv(i) > 0 && sv(i) >= cut ? 1.0 / sv(i) : 0.0;
  const Eigen::VectorXd x = svd.matrixV() * f.asDiagonal() * (svd.matrixU().transpose() * b);
  const double bn = b.norm();
  *resid = bn > 0 ? (A * x - b).norm() / bn : 0.0;
  return x;
}

}  // namespace

std::string CoefficientEstimate::to_json() const {
  nlohmann::json j{{"k", k},
                   {"coefficient", which == Which::X ? "a" : "b"},
                   {"status", status},
                   {"solve_residual", solve_residual},
                   {"condition", condition},
                   {"imag_ratio", imag_ratio},
                   {"estimate_norm_L2", norm_L2(estimate)},
                   {"estimate_max", norm_Linf(estimate)}};
  if (relative_error) j["relative_error"] = *relative_error;
  if (truth_norm) j["truth_norm_L2"] = *truth_norm;
  for (const auto& f : frequencies)
    j["frequencies"].push_back({{"m", f.m},
                                {"xi", f.xi},
                                {"tau", f.tau},
                                {"feasible", f.feasible},
                                {"data", cjson(f.data)},
                                {"factor", cjson(f.factor)},
                                {"fourier", cjson(f.fourier)},
                                {"lower_order", f.lower_order}});
  return j.dump(2);
}

void CoefficientEstimate::write(const std::string& dir, const std::string& config_hash) const {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + dir + ": " + ec.message());
  const std::string stem = fmt::format("estimate_{}{}", which == Which::X ? "a" : "b", k);
  write_field((fs::path(dir) / (stem + ".mxf")).string(), estimate, Precision::complex128, config_hash);
  {
    auto j = nlohmann::json::parse(to_json());
    j["config_hash"] = config_hash;
    std::ofstream os(fs::path(dir) / (stem + ".json"));
    if (!os) fail(ErrorKind::io, "cannot write " + stem + ".json");
    os << j.dump(2) << "\n";
  }
  std::ofstream os(fs::path(dir) / (stem + "_fourier.csv"));
  if (!os) fail(ErrorKind::io, "cannot write " + stem + "_fourier.csv");
  os << "# " << config_hash << "\n";
  os << "m0,m1,m2,xi0,xi1,xi2,tau,feasible,data_re,data_im,factor_re,factor_im,fourier_re,fourier_im,lower_order\n";
  for (const auto& f : frequencies)
    os << fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n",
                      f.m[0], f.m[1], f.m[2], f.xi[0], f.xi[1], f.xi[2], f.tau, f.feasible ? 1 : 0, f.data.real(),
                      f.data.imag(), f.factor.real(), f.factor.imag(), f.fourier.real(), f.fourier.imag(),
                      f.lower_order);
}

CoefficientEstimate fourier_recover(const InverseMeasurementSet& target, const InverseMeasurementSet& reference,
                                    const MaterialProfile& mat, const NonlinearLaw& reference_law,
                                    const ReconstructionConfig& cfg, const std::vector<CoefficientEstimate>& lower) {
  const Grid& g = mat.grid;
  cfg.validate(g);
  const int k = cfg.k;
  for (const auto* set : {&target, &reference}) {
    if (set->n != g.n()) fail(ErrorKind::config, "measurement grid differs from the material grid");
    if (set->mode != cfg.mode) fail(ErrorKind::config, "measurement mode differs from the configuration");
    if (std::abs(set->omega - mat.omega) > 1e-12 * mat.omega)
      fail(ErrorKind::config, "measurement frequency differs from the material");
  }
  const LinearMaxwellOperator op(mat);
  std::unique_ptr<PotentialQ> Q;
  if (!unit_medium(mat)) Q = std::make_unique<PotentialQ>(assemble_Q(mat, cfg.box));

  CoefficientEstimate est(g);
  est.k = k;
  est.which = cfg.which;

  // Lower-order correction, simulated with the reference law plus recovered differences.
  bool correct = false;
  for (int j = 1; j < k && j - 1 < int(lower.size()); ++j)
    correct = correct || norm_Linf(lower[j - 1].estimate) > cfg.lower_order_floor;
  std::optional<NonlinearLaw> hyp, ref_series;
  if (correct) {
    hyp = hypothesis_law(reference_law, lower, k, g);
    ref_series = hypothesis_law(reference_law, {}, k, g);
  }

  const Entries entries = coefficient_entries(g, cfg.which);
  const auto basis_modes = full_lattice(cfg.lattice_radius2);
  const Basis basis = make_basis(basis_modes, entries.pos, g.side());
  const double sign = cfg.which == Which::X ? -1.0 : 1.0;
  const double h3 = g.cell_volume();
  const PolarizationPlan plan = measurement_plan(cfg, k);
  const auto lattice = cfg.lattice();
  const int slots = cfg.factor == FactorMode::leading ? int(cfg.taus.size()) : 1;
  const Vec3 centre{0.5 * g.side(), 0.5 * g.side(), 0.5 * g.side()};
  const double volume = g.side() * g.side() * g.side();

  // rows[slot][i]: kernel row over the basis, data[slot][i]
  std::vector<std::vector<Eigen::RowVectorXcd>> rows(slots);
  std::vector<std::vector<cplx>> data(slots), lead(slots);
  std::vector<std::vector<double>> taus(slots);
  double raw_max = 0.0;
  for (int slot = 0; slot < slots; ++slot)
    for (const auto& m : lattice) {
      const ProbeDictionary d = build_dictionary(mat, m, cfg, cfg.taus[slot], k, Q.get());
      const FrequencyMeasurements* ft = target.find(m, k, slot);
      const FrequencyMeasurements* fr = reference.find(m, k, slot);
      if (!ft || !fr)
        fail(ErrorKind::io, fmt::format("no order-{} measurements for m = ({}, {}, {})", k, m[0], m[1], m[2]));
      if (std::abs(ft->tau - d.family.tau) > 1e-9 * (1 + d.family.tau) ||
          std::abs(fr->tau - d.family.tau) > 1e-9 * (1 + d.family.tau))
        fail(ErrorKind::config, "measurement dictionary does not match the configuration");
      if (ft->ttrH.size() != plan.size() || fr->ttrH.size() != plan.size())
        fail(ErrorKind::config, "measurement sample count does not match the polarization plan");
      const auto U = probe_solutions(op, d);

      std::vector<std::vector<cplx>> values;
      for (std::size_t q = 0; q < plan.size(); ++q) {
        const cplx v = probe_integral_I_k(k, ft->ttrH[q], fr->ttrH[q], U[0], cplx(0.0));
        raw_max = std::max(raw_max, std::abs(v));
        values.push_back({v});
      }
      cplx dk = polarization_reduce(plan, values)[0];
      FrequencyRecord rec;
      if (correct) {
        const auto mh = measure_frequency(op, *hyp, d, U, cfg, k, slot);
        const auto mr = measure_frequency(op, *ref_series, d, U, cfg, k, slot);
        std::vector<std::vector<cplx>> pv;
        for (std::size_t q = 0; q < plan.size(); ++q)
          pv.push_back({probe_integral_I_k(k, mh.ttrH[q], mr.ttrH[q], U[0], cplx(0.0))});
        const cplx pred = polarization_reduce(plan, pv)[0];
        dk -= pred;
        rec.lower_order = std::abs(pred);
      }

      const auto P = polarized_kernel(U, k, cfg.which, entries);
      Eigen::RowVectorXcd row = Eigen::RowVectorXcd::Zero(Eigen::Index(basis.modes.size()));
      for (std::size_t q = 0; q < P.size(); ++q) row += (sign * h3 * P[q]) * basis.phi.row(Eigen::Index(q));

      const Vec3 xi = lattice_xi(m, g.side());
      double prod = d.scale[0] * d.scale[1];
      for (int r = 0; r < k; ++r) prod *= d.scale[2] * d.scale[3];
      const cplx lf = sign * -(k + 1.0) * prod * volume *
                      std::exp(-I * (xi[0] * centre[0] + xi[1] * centre[1] + xi[2] * centre[2]));
      rows[slot].push_back(row);
      data[slot].push_back(dk);
      lead[slot].push_back(lf);
      taus[slot].push_back(d.family.tau);
      if (slot == 0) {
        rec.m = m;
        rec.xi = xi;
        rec.tau = d.family.tau;
        rec.feasible = d.feasible;
        rec.data = dk;
        const int di = basis.index(neg(m));
        rec.factor = cfg.factor == FactorMode::leading ? lf : row(di);
        est.frequencies.push_back(rec);
      }
      spdlog::debug("recover k={} m=({},{},{}) tau={:.3g} data={:.3e}", k, m[0], m[1], m[2], d.family.tau,
                    std::abs(dk));
    }

  // Coefficients c_b of the estimate over the full basis.
  const Eigen::Index nb = Eigen::Index(basis.modes.size());
  Eigen::VectorXcd c = Eigen::VectorXcd::Zero(nb);
  const std::size_t nm = lattice.size();
  if (cfg.factor == FactorMode::kernel) {
    if (cfg.assume_real) {
      // real unknowns: u_0, then (u, v) for every half-lattice mode m != 0 with c_{+-m} = u +- i v
      std::vector<std::array<int, 3>> half;
      for (const auto& m : lattice) half.push_back(m);
      const Eigen::Index nu = Eigen::Index(2 * half.size() - 1);
      Eigen::MatrixXd A(Eigen::Index(2 * nm), nu);
      Eigen::VectorXd b(Eigen::Index(2 * nm));
      for (std::size_t i = 0; i < nm; ++i) {
        const auto& row = rows[0][i];
        const double rn = row.norm();
        const double w = rn > 0 ? 1.0 / rn : 0.0;
        Eigen::Index col = 0;
        for (const auto& m : half) {
          const int ip = basis.index(m), in = basis.index(neg(m));
          if (m == std::array<int, 3>{0, 0, 0}) {
            const cplx gsum = row(ip);
            A(2 * i, col) = w * gsum.real();
            A(2 * i + 1, col) = w * gsum.imag();
            ++col;
          } else {
            const cplx gu = row(ip) + row(in), gv = I * (row(ip) - row(in));
            A(2 * i, col) = w * gu.real();
            A(2 * i + 1, col) = w * gu.imag();
            A(2 * i, col + 1) = w * gv.real();
            A(2 * i + 1, col + 1) = w * gv.imag();
            col += 2;
          }
        }
        b(2 * i) = w * data[0][i].real();
        b(2 * i + 1) = w * data[0][i].imag();
      }
      const Eigen::VectorXd x = filtered_lsq(A, b, cfg.regularization, &est.condition, &est.solve_residual);
      Eigen::Index col = 0;
      for (const auto& m : half) {
        const int ip = basis.index(m), in = basis.index(neg(m));
        if (m == std::array<int, 3>{0, 0, 0}) {
          c(ip) = x(col++);
        } else {
          c(ip) = cplx(x(col), x(col + 1));
          c(in) = cplx(x(col), -x(col + 1));
          col += 2;
        }
      }
    } else {
      // complex system stacked as real and imaginary parts
      Eigen::MatrixXd A(Eigen::Index(2 * nm), 2 * nb);
      Eigen::VectorXd b(Eigen::Index(2 * nm));
      for (std::size_t i = 0; i < nm; ++i) {
        const auto& row = rows[0][i];
        const double rn = row.norm();
        const double w = rn > 0 ? 1.0 / rn : 0.0;
        for (Eigen::Index j = 0; j < nb; ++j) {
          A(2 * i, j) = w * row(j).real();
          A(2 * i, nb + j) = -w * row(j).imag();
          A(2 * i + 1, j) = w * row(j).imag();
          A(2 * i + 1, nb + j) = w * row(j).real();
        }
        b(2 * i) = w * data[0][i].real();
        b(2 * i + 1) = w * data[0][i].imag();
      }
      const Eigen::VectorXd x = filtered_lsq(A, b, cfg.regularization, &est.condition, &est.solve_residual);
      for (Eigen::Index j = 0; j < nb; ++j) c(j) = cplx(x(j), x(nb + j));
    }
  } else {
    double worst = 0, best = 1e300;
    for (std::size_t i = 0; i < nm; ++i) {
      const int in = basis.index(neg(lattice[i]));
      cplx value;
      if (cfg.factor == FactorMode::diagonal) {
        const cplx f = rows[0][i](in);
        if (std::abs(f) <= cfg.regularization * rows[0][i].norm())
          fail(ErrorKind::construction, "division by a near-zero kernel factor");
        value = data[0][i] / f;
        worst = std::max(worst, std::abs(f));
        best = std::min(best, std::abs(f));
      } else {
        // c0 + c1 / tau over the tau caps (a single cap divides directly)
        Eigen::MatrixXcd A(slots, slots > 1 ? 2 : 1);
        Eigen::VectorXcd b(slots);
        for (int s = 0; s < slots; ++s) {
          A(s, 0) = 1.0;
          if (slots > 1) A(s, 1) = taus[s][i] > 0 ? 1.0 / taus[s][i] : 0.0;
          b(s) = data[s][i] / lead[s][i];
        }
        value = A.colPivHouseholderQr().solve(b)(0);
        worst = std::max(worst, std::abs(lead[0][i]));
        best = std::min(best, std::abs(lead[0][i]));
      }
      c(in) = value;
      if (cfg.assume_real && lattice[i] != std::array<int, 3>{0, 0, 0}) c(basis.index(lattice[i])) = std::conj(value);
    }
    est.condition = best > 0 ? worst / best : std::numeric_limits<double>::infinity();
    est.solve_residual = 0.0;
  }
  double dmax = 0;
  for (const auto& rec : est.frequencies) dmax = std::max(dmax, std::abs(rec.data));
  if (dmax <= 1e-13 * raw_max) {
    // rounding-level data: report an exact zero instead of amplified noise
    c.setZero();
    est.status = "zero-signal";
  }
  for (auto& rec : est.frequencies) rec.fourier = c(basis.index(neg(rec.m)));

  {
    std::vector<std::array<int, 3>> modes;
    std::vector<cplx> coef;
    for (Eigen::Index b = 0; b < nb; ++b)
      if (c(b) != cplx(0.0)) {
        modes.push_back(basis.modes[b]);
        coef.push_back(c(b));
      }
    const double side = g.side();
    const bool leading = cfg.factor == FactorMode::leading;
    const Which which = cfg.which;
    const CoefficientField medium = which == Which::X ? mat.epsilon : mat.mu;
    est.evaluate = [modes, coef, side, leading, medium, k](const Vec3& x) {
      cplx v = 0.0;
      for (std::size_t b = 0; b < modes.size(); ++b)
        v += coef[b] * std::polar(1.0, two_pi * (modes[b][0] * x[0] + modes[b][1] * x[1] + modes[b][2] * x[2]) / side);
      if (leading) {
        const cplx m = medium(x);
        v *= std::pow(std::abs(m), k) * m;
      }
      return v;
    };
  }
  // Estimate on the nodes.
  auto& field = est.estimate;
  const auto& sh = field.shape();
  double re2 = 0, im2 = 0;
  for (int i = 0; i < sh.dims[0]; ++i)
    for (int j = 0; j < sh.dims[1]; ++j)
      for (int l = 0; l < sh.dims[2]; ++l) {
        const cplx v = est.evaluate(field.position(i, j, l));
        field.at(i, j, l) = v;
        re2 += v.real() * v.real();
        im2 += v.imag() * v.imag();
      }
  est.imag_ratio = re2 + im2 > 0 ? std::sqrt(im2 / (re2 + im2)) : 0.0;

  if (!std::isfinite(norm_Linf(field))) est.status = "non-finite";
  return est;
}

std::vector<CoefficientEstimate> induction_driver(const InverseMeasurementSet& target,
                                                  const InverseMeasurementSet& reference, const MaterialProfile& mat,
                                                  const NonlinearLaw& reference_law, ReconstructionConfig cfg, int K,
                                                  double divergence) {
  std::vector<CoefficientEstimate> out;
  for (int k = 1; k <= K; ++k) {
    cfg.k = k;
    bool have = true;
    for (const auto& m : cfg.lattice()) have = have && target.find(m, k) && reference.find(m, k);
    if (!have) {
      CoefficientEstimate stop(mat.grid);
      stop.k = k;
      stop.which = cfg.which;
      stop.status = "no-data";
      out.push_back(std::move(stop));
      spdlog::warn("stage {}: no measurements of this order, stopping", k);
      break;
    }
    try {
      out.push_back(fourier_recover(target, reference, mat, reference_law, cfg, out));
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("stage k={}: {}", k, e.what()));
    }
    auto& est = out.back();
    if (est.status == "ok" && est.solve_residual > divergence) est.status = "diverged";
    if (est.status != "ok" && est.status != "zero-signal") {
      spdlog::warn("stage {}: {}, stopping", k, est.status);
      break;
    }
  }
  return out;
}

double relative_l2_error(const ScalarFieldC& estimate, const std::function<cplx(const Vec3&)>& truth,
                         double* truth_norm) {
  const ScalarFieldC t = ScalarFieldC::sample(estimate.grid(), estimate.location(), truth);
  ScalarFieldC diff = estimate;
  auto dv = diff.values();
  const auto tv = t.values();
  for (std::size_t i = 0; i < dv.size(); ++i) dv[i] -= tv[i];
  const double tn = norm_L2(t);
  if (truth_norm) *truth_norm = tn;
  return tn > 0 ? norm_L2(diff) / tn : norm_L2(diff);
}

}  // namespace maxnl
