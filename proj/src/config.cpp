#include "maxnl/config.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "maxnl/calculus.hpp"
#include "maxnl/errors.hpp"

namespace maxnl {

namespace {

using json = nlohmann::json;

json to_json(const toml::node& n) {
  if (auto t = n.as_table()) {
    json j = json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = to_json(v);
    return j;
  }
  if (auto a = n.as_array()) {
    json j = json::array();
    for (const auto& v : *a) j.push_back(to_json(v));
    return j;
  }
  if (auto v = n.as_string()) return v->get();
  if (auto v = n.as_integer()) return v->get();
  if (auto v = n.as_floating_point()) return v->get();
  if (auto v = n.as_boolean()) return v->get();
  fail(ErrorKind::config, "dates and times are not valid configuration values");
}

void known_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) fail(ErrorKind::config, where + " must be a table");
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) fail(ErrorKind::config, fmt::format("unknown key '{}' in {}", k, where));
}

template <class T>
T get(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    fail(ErrorKind::config, fmt::format("{}.{} has the wrong type", where, key));
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) fail(ErrorKind::config, msg);
}

cplx complex_value(const json& v, const std::string& where) {
  if (v.is_number()) return v.get<double>();
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return {v[0].get<double>(), v[1].get<double>()};
  fail(ErrorKind::config, where + " must be a number or [re, im]");
}

Vec3 vec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) fail(ErrorKind::config, where + " must have three entries");
  Vec3 out;
  for (int c = 0; c < 3; ++c) {
    if (!v[c].is_number()) fail(ErrorKind::config, where + " must be numeric");
    out[c] = v[c].get<double>();
  }
  return out;
}

CVec3 cvec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) fail(ErrorKind::config, where + " must have three entries");
  return {complex_value(v[0], where), complex_value(v[1], where), complex_value(v[2], where)};
}

CoefficientField coefficient(const json& v, const std::string& where) {
  if (v.is_number() || v.is_array()) return CoefficientField::constant(complex_value(v, where));
  known_keys(v, where, {"kind", "value", "base", "amplitude", "centre", "width", "terms"});
  const std::string kind = get<std::string>(v, "kind", "constant", where);
  if (kind == "constant") return CoefficientField::constant(complex_value(v.value("value", json(0.0)), where));
  if (kind == "gaussian") {
    const double w = get<double>(v, "width", 0.15, where);
    require(w > 0, where + ".width must be positive");
    return CoefficientField::gaussian(complex_value(v.value("base", json(0.0)), where),
                                      complex_value(v.value("amplitude", json(0.0)), where),
                                      vec3(v.value("centre", json{0.5, 0.5, 0.5}), where + ".centre"), w);
  }
  if (kind == "polynomial") {
    std::vector<CoefficientField::Monomial> terms;
    for (const auto& t : v.value("terms", json::array())) {
      known_keys(t, where + ".terms", {"coef", "powers"});
      CoefficientField::Monomial m;
      m.coef = complex_value(t.value("coef", json(0.0)), where);
      const auto p = t.value("powers", json{0, 0, 0});
      require(p.is_array() && p.size() == 3, where + ".terms.powers must have three entries");
      m.px = p[0].get<int>();
      m.py = p[1].get<int>();
      m.pz = p[2].get<int>();
      require(m.px >= 0 && m.py >= 0 && m.pz >= 0, where + ".terms.powers must be >= 0");
      terms.push_back(m);
    }
    return CoefficientField::polynomial(std::move(terms));
  }
  fail(ErrorKind::config, fmt::format("{}: unknown coefficient kind '{}'", where, kind));
}

Susceptibility susceptibility(const json& v, const std::string& where) {
  known_keys(v, where, {"kind", "a", "b", "terms"});
  const std::string kind = get<std::string>(v, "kind", "zero", where);
  if (kind == "zero") return Susceptibility::zero();
  if (kind == "kerr") return Susceptibility::kerr(coefficient(v.value("a", json(0.0)), where + ".a"));
  if (kind == "saturable")
    return Susceptibility::saturable(coefficient(v.value("a", json(0.0)), where + ".a"),
                                     coefficient(v.value("b", json(0.0)), where + ".b"));
  if (kind == "series") {
    std::vector<CoefficientField> terms;
    for (const auto& t : v.value("terms", json::array())) terms.push_back(coefficient(t, where + ".terms"));
    return Susceptibility::from_series(std::move(terms));
  }
  fail(ErrorKind::config, fmt::format("{}: unknown susceptibility kind '{}'", where, kind));
}

NonlinearLaw law(const json& j, const std::string& where) {
  if (j.is_null()) return NonlinearLaw::linear();
  known_keys(j, where, {"s0", "M_bound", "k_max", "x", "y"});
  const double s0 = get<double>(j, "s0", 1.0, where);
  const double M = get<double>(j, "M_bound", 10.0, where);
  const int kmax = get<int>(j, "k_max", 12, where);
  require(s0 > 0, where + ".s0 must be positive");
  require(M > 0, where + ".M_bound must be positive");
  require(kmax >= 1, where + ".k_max must be >= 1");
  return NonlinearLaw(susceptibility(j.value("x", json::object()), where + ".x"),
                      susceptibility(j.value("y", json::object()), where + ".y"), s0, M, kmax);
}

RunConfig parse(json j, std::optional<std::uint64_t> seed, std::optional<double> tol) {
  known_keys(j, "the configuration",
             {"seed", "grid", "medium", "law", "reference_law", "solver", "picard", "datum", "asymptotics", "cgo",
              "reconstruct"});
  if (seed) j["seed"] = *seed;
  if (tol) j["picard"]["tol"] = *tol;

  RunConfig rc;
  rc.seed = get<std::uint64_t>(j, "seed", 1, "seed");

  const json grid = j.value("grid", json::object());
  known_keys(grid, "grid", {"n", "side"});
  const int n = get<int>(grid, "n", 16, "grid");
  const double side = get<double>(grid, "side", 1.0, "grid");
  require(n >= 2 && n <= 256, "grid.n must lie in [2, 256]");
  require(side > 0, "grid.side must be positive");

  const json med = j.value("medium", json::object());
  known_keys(med, "medium", {"omega", "epsilon", "mu", "lambda_bound", "M_bound"});
  rc.material.grid = Grid(n, side);
  rc.material.omega = get<double>(med, "omega", 1.0, "medium");
  require(rc.material.omega > 0, "medium.omega must be positive");
  rc.material.epsilon = coefficient(med.value("epsilon", json(1.0)), "medium.epsilon");
  rc.material.mu = coefficient(med.value("mu", json(1.0)), "medium.mu");
  rc.material.lambda_bound = get<double>(med, "lambda_bound", 0.5, "medium");
  rc.material.M_bound = get<double>(med, "M_bound", 10.0, "medium");

  rc.law = law(j.value("law", json()), "law");
  rc.reference_law = law(j.value("reference_law", json()), "reference_law");

  const json sol = j.value("solver", json::object());
  known_keys(sol, "solver", {"tol", "direct_max_n", "max_iter", "gmres_restart"});
  rc.solver.tol = get<double>(sol, "tol", rc.solver.tol, "solver");
  rc.solver.direct_max_n = get<int>(sol, "direct_max_n", rc.solver.direct_max_n, "solver");
  rc.solver.max_iter = get<int>(sol, "max_iter", rc.solver.max_iter, "solver");
  rc.solver.gmres_restart = get<int>(sol, "gmres_restart", rc.solver.gmres_restart, "solver");
  require(rc.solver.tol > 0 && rc.solver.tol < 1, "solver.tol must lie in (0, 1)");
  require(rc.solver.max_iter > 0, "solver.max_iter must be positive");

  const json pic = j.value("picard", json::object());
  known_keys(pic, "picard", {"tol", "max_iter", "p", "max_halvings"});
  rc.picard.tol = get<double>(pic, "tol", rc.picard.tol, "picard");
  rc.picard.max_iter = get<int>(pic, "max_iter", rc.picard.max_iter, "picard");
  rc.picard.p = get<double>(pic, "p", rc.picard.p, "picard");
  rc.picard.max_halvings = get<int>(pic, "max_halvings", rc.picard.max_halvings, "picard");
  require(rc.picard.tol > 0 && rc.picard.tol < 1, "picard.tol must lie in (0, 1)");
  require(rc.picard.max_iter > 0, "picard.max_iter must be positive");
  require(rc.picard.p > 3, "picard.p must exceed 3");

  const json dat = j.value("datum", json::object());
  known_keys(dat, "datum", {"kind", "direction", "polarization", "amplitude", "threshold_fraction"});
  rc.datum.kind = get<std::string>(dat, "kind", rc.datum.kind, "datum");
  require(rc.datum.kind == "plane_wave" || rc.datum.kind == "zero" || rc.datum.kind == "random",
          "datum.kind must be plane_wave, zero or random");
  if (dat.contains("direction")) rc.datum.direction = vec3(dat["direction"], "datum.direction");
  if (dat.contains("polarization")) rc.datum.polarization = cvec3(dat["polarization"], "datum.polarization");
  rc.datum.amplitude = get<double>(dat, "amplitude", rc.datum.amplitude, "datum");
  rc.datum.threshold_fraction = get<double>(dat, "threshold_fraction", 0.0, "datum");
  require(rc.datum.amplitude >= 0, "datum.amplitude must be >= 0");
  require(rc.datum.threshold_fraction >= 0, "datum.threshold_fraction must be >= 0");

  const json as = j.value("asymptotics", json::object());
  known_keys(as, "asymptotics", {"orders", "t_max", "t_count", "slope_tol", "picard_tol", "max_fit_residual", "p"});
  rc.asymptotics.orders = get<std::vector<int>>(as, "orders", rc.asymptotics.orders, "asymptotics");
  rc.asymptotics.t_max = get<double>(as, "t_max", rc.asymptotics.t_max, "asymptotics");
  rc.asymptotics.t_count = get<int>(as, "t_count", rc.asymptotics.t_count, "asymptotics");
  rc.asymptotics.slope_tol = get<double>(as, "slope_tol", rc.asymptotics.slope_tol, "asymptotics");
  rc.asymptotics.options.picard_tol = get<double>(as, "picard_tol", 1e-14, "asymptotics");
  rc.asymptotics.options.max_fit_residual = get<double>(as, "max_fit_residual", 0.1, "asymptotics");
  rc.asymptotics.options.p = get<double>(as, "p", 4.0, "asymptotics");
  for (int k : rc.asymptotics.orders) require(k >= 1 && k <= 4, "asymptotics.orders must lie in [1, 4]");
  require(rc.asymptotics.t_max > 0, "asymptotics.t_max must be positive");
  require(rc.asymptotics.t_count >= 2, "asymptotics.t_count must be >= 2");

  const json cg = j.value("cgo", json::object());
  known_keys(cg, "cgo",
             {"taus", "box_n", "box_scale", "blend", "neumann_tol", "neumann_max_iter", "electric", "decay_factor",
              "residual_tol"});
  rc.cgo.taus = get<std::vector<double>>(cg, "taus", rc.cgo.taus, "cgo");
  rc.cgo.box.n = get<int>(cg, "box_n", rc.cgo.box.n, "cgo");
  rc.cgo.box.scale = get<double>(cg, "box_scale", rc.cgo.box.scale, "cgo");
  rc.cgo.box.blend = get<double>(cg, "blend", rc.cgo.box.blend, "cgo");
  rc.cgo.neumann.tol = get<double>(cg, "neumann_tol", rc.cgo.neumann.tol, "cgo");
  rc.cgo.neumann.max_iter = get<int>(cg, "neumann_max_iter", rc.cgo.neumann.max_iter, "cgo");
  rc.cgo.electric = get<bool>(cg, "electric", true, "cgo");
  rc.cgo.decay_factor = get<double>(cg, "decay_factor", 2.0, "cgo");
  rc.cgo.residual_tol = get<double>(cg, "residual_tol", 1e-10, "cgo");
  require(!rc.cgo.taus.empty(), "cgo.taus must not be empty");
  for (double t : rc.cgo.taus) require(t > 0, "cgo.taus must be positive");
  require(rc.cgo.box.n >= 8 && rc.cgo.box.n % 2 == 0, "cgo.box_n must be even and >= 8");
  require(rc.cgo.box.scale > 1, "cgo.box_scale must exceed 1");
  require(rc.cgo.decay_factor >= 1, "cgo.decay_factor must be >= 1");

  const json re = j.value("reconstruct", json::object());
  known_keys(re, "reconstruct",
             {"K", "which", "lattice_radius2", "assume_real", "taus", "growth_floor", "mode", "factor", "amplitude",
              "radii", "regularization", "lower_order_floor", "measurements", "reference_measurements",
              "save_measurements", "max_error", "divergence", "box_n", "box_scale", "blend"});
  auto& rs = rc.reconstruct;
  auto& c = rs.cfg;
  rs.K = get<int>(re, "K", 1, "reconstruct");
  require(rs.K >= 1 && rs.K <= 4, "reconstruct.K must lie in [1, 4]");
  const std::string which = get<std::string>(re, "which", "a", "reconstruct");
  require(which == "a" || which == "b", "reconstruct.which must be a or b");
  c.which = which == "a" ? Which::X : Which::Y;
  c.lattice_radius2 = get<double>(re, "lattice_radius2", c.lattice_radius2, "reconstruct");
  c.assume_real = get<bool>(re, "assume_real", c.assume_real, "reconstruct");
  c.taus = get<std::vector<double>>(re, "taus", c.taus, "reconstruct");
  c.growth_floor = get<double>(re, "growth_floor", c.growth_floor, "reconstruct");
  const std::string mode = get<std::string>(re, "mode", "expansion", "reconstruct");
  require(mode == "expansion" || mode == "converged", "reconstruct.mode must be expansion or converged");
  c.mode = mode == "expansion" ? MeasurementMode::expansion : MeasurementMode::converged;
  const std::string factor = get<std::string>(re, "factor", "kernel", "reconstruct");
  require(factor == "kernel" || factor == "diagonal" || factor == "leading",
          "reconstruct.factor must be kernel, diagonal or leading");
  c.factor = factor == "kernel" ? FactorMode::kernel : factor == "diagonal" ? FactorMode::diagonal : FactorMode::leading;
  c.amplitude = get<double>(re, "amplitude", c.amplitude, "reconstruct");
  c.radii = get<std::vector<double>>(re, "radii", c.radii, "reconstruct");
  c.regularization = get<double>(re, "regularization", c.regularization, "reconstruct");
  c.lower_order_floor = get<double>(re, "lower_order_floor", c.lower_order_floor, "reconstruct");
  c.box.n = get<int>(re, "box_n", c.box.n, "reconstruct");
  c.box.scale = get<double>(re, "box_scale", c.box.scale, "reconstruct");
  c.box.blend = get<double>(re, "blend", c.box.blend, "reconstruct");
  c.picard = rc.picard;
  c.picard.tol = std::min(rc.picard.tol, 1e-14);
  rs.measurements = get<std::string>(re, "measurements", "", "reconstruct");
  rs.reference_measurements = get<std::string>(re, "reference_measurements", "", "reconstruct");
  rs.save_measurements = get<bool>(re, "save_measurements", true, "reconstruct");
  rs.max_error = get<double>(re, "max_error", -1.0, "reconstruct");
  rs.divergence = get<double>(re, "divergence", 0.5, "reconstruct");
  if (j.contains("reconstruct")) {
    try {
      c.validate(rc.material.grid);
    } catch (const Error& e) {
      fail(ErrorKind::config, std::string("reconstruct: ") + e.what());
    }
  }

  rc.canonical = j.dump();
  return rc;
}

}  // namespace

TangentialBoundaryField DatumSpec::sample(const Grid& g, double omega, std::uint64_t seed) const {
  if (kind == "zero") return TangentialBoundaryField(g);
  auto wave = [&](const Vec3& d, const CVec3& p, cplx amp) {
    return [=](const Vec3& x) {
      const cplx ph = amp * std::exp(cplx(0, omega * (d[0] * x[0] + d[1] * x[1] + d[2] * x[2])));
      return CVec3{ph * p[0], ph * p[1], ph * p[2]};
    };
  };
  if (kind == "plane_wave") {
    const double dn = std::sqrt(direction[0] * direction[0] + direction[1] * direction[1] + direction[2] * direction[2]);
    if (!(dn > 0)) fail(ErrorKind::config, "datum.direction must be nonzero");
    const Vec3 d{direction[0] / dn, direction[1] / dn, direction[2] / dn};
    return TangentialBoundaryField::sample(g, wave(d, polarization, amplitude));
  }
  // three plane waves with random directions, polarizations and phases
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  std::vector<std::function<CVec3(const Vec3&)>> parts;
  for (int w = 0; w < 3; ++w) {
    Vec3 d{n01(rng), n01(rng), n01(rng)};
    const double dn = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    for (auto& x : d) x /= dn;
    const CVec3 p{cplx(n01(rng), n01(rng)), cplx(n01(rng), n01(rng)), cplx(n01(rng), n01(rng))};
    parts.push_back(wave(d, p, 1.0));
  }
  TangentialBoundaryField f = TangentialBoundaryField::sample(g, [&](const Vec3& x) {
    CVec3 v{0, 0, 0};
    for (const auto& p : parts) {
      const CVec3 u = p(x);
      for (int c = 0; c < 3; ++c) v[c] += u[c];
    }
    return v;
  });
  const double mx = norm_Linf(f);
  if (mx > 0) f *= amplitude / mx;
  return f;
}

std::string DatumSpec::describe() const {
  if (kind == "zero") return "zero";
  if (kind == "random") return fmt::format("random(amplitude={})", amplitude);
  return fmt::format("plane_wave(d=({},{},{}), amplitude={})", direction[0], direction[1], direction[2], amplitude);
}

RunConfig RunConfig::from_string(const std::string& text, std::optional<std::uint64_t> seed, std::optional<double> tol) {
  toml::table tbl;
  try {
    tbl = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e.description() << " at line " << e.source().begin.line;
    fail(ErrorKind::config, "TOML: " + os.str());
  }
  return parse(to_json(tbl), seed, tol);
}

RunConfig RunConfig::from_file(const std::string& path, std::optional<std::uint64_t> seed, std::optional<double> tol) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::io, "cannot read configuration " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return from_string(ss.str(), seed, tol);
}

std::string RunConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace maxnl
