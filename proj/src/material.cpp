#include "maxnl/material.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "maxnl/calculus.hpp"
#include "maxnl/errors.hpp"
#include "maxnl/kernels.hpp"

namespace maxnl {

// ---------------------------------------------------------------- coefficients

CoefficientField CoefficientField::constant(cplx value) {
  CoefficientField c;
  c.kind_ = Kind::constant;
  c.base_ = value;
  return c;
}

CoefficientField CoefficientField::polynomial(std::vector<Monomial> terms) {
  CoefficientField c;
  c.kind_ = Kind::polynomial;
  c.terms_ = std::move(terms);
  return c;
}

CoefficientField CoefficientField::gaussian(cplx base, cplx amplitude, const Vec3& centre, double width) {
  if (!(width > 0)) fail(ErrorKind::invalid_argument, "gaussian width must be positive");
  CoefficientField c;
  c.kind_ = Kind::gaussian;
  c.base_ = base;
  c.amplitude_ = amplitude;
  c.centre_ = centre;
  c.width_ = width;
  return c;
}

CoefficientField CoefficientField::sampled(std::shared_ptr<const ScalarFieldC> field) {
  if (!field || field->location() == Location::cell)
    fail(ErrorKind::invalid_argument, "sampled coefficients need a node or half-lattice field");
  CoefficientField c;
  c.kind_ = Kind::sampled;
  c.field_ = std::move(field);
  return c;
}

cplx CoefficientField::operator()(const Vec3& x) const {
  switch (kind_) {
    case Kind::constant: return base_;
    case Kind::polynomial: {
      cplx acc = 0.0;
      for (const auto& t : terms_)
        acc += t.coef * std::pow(x[0], t.px) * std::pow(x[1], t.py) * std::pow(x[2], t.pz);
      return acc;
    }
    case Kind::gaussian: {
      double r2 = 0;
      for (int a = 0; a < 3; ++a) r2 += (x[a] - centre_[a]) * (x[a] - centre_[a]);
      return base_ + amplitude_ * std::exp(-r2 / (2 * width_ * width_));
    }
    case Kind::sampled: {
      const auto& f = *field_;
      const double step = f.location() == Location::half ? 0.5 * f.grid().h() : f.grid().h();
      const auto& d = f.shape().dims;
      int i0[3];
      double w[3];
      for (int a = 0; a < 3; ++a) {
        double u = std::clamp(x[a] / step, 0.0, double(d[a] - 1));
        i0[a] = std::min(int(std::floor(u)), d[a] - 2);
        w[a] = u - i0[a];
      }
      cplx acc = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          for (int c = 0; c < 2; ++c)
            acc += (a ? w[0] : 1 - w[0]) * (b ? w[1] : 1 - w[1]) * (c ? w[2] : 1 - w[2]) *
                   f.at(i0[0] + a, i0[1] + b, i0[2] + c);
      return acc;
    }
  }
  return 0.0;
}

bool CoefficientField::is_zero() const {
  switch (kind_) {
    case Kind::constant: return base_ == 0.0;
    case Kind::polynomial:
      return std::all_of(terms_.begin(), terms_.end(), [](const Monomial& m) { return m.coef == 0.0; });
    case Kind::gaussian: return base_ == 0.0 && amplitude_ == 0.0;
    case Kind::sampled:
      return std::all_of(field_->values().begin(), field_->values().end(), [](cplx v) { return v == 0.0; });
  }
  return false;
}

std::string CoefficientField::describe() const {
  switch (kind_) {
    case Kind::constant: return fmt::format("constant({}{:+}i)", base_.real(), base_.imag());
    case Kind::polynomial: return fmt::format("polynomial({} terms)", terms_.size());
    case Kind::gaussian:
      return fmt::format("gaussian(base={}, amp={}, centre=({},{},{}), width={})", base_.real(), amplitude_.real(),
                         centre_[0], centre_[1], centre_[2], width_);
    case Kind::sampled: return fmt::format("sampled(n={})", field_->grid().n());
  }
  return "?";
}

CoefficientField CoefficientField::scaled(cplx s) const {
  CoefficientField c = *this;
  switch (kind_) {
    case Kind::constant: c.base_ *= s; break;
    case Kind::polynomial:
      for (auto& t : c.terms_) t.coef *= s;
      break;
    case Kind::gaussian:
      c.base_ *= s;
      c.amplitude_ *= s;
      break;
    case Kind::sampled: {
      auto f = std::make_shared<ScalarFieldC>(*field_);
      for (auto& v : f->values()) v *= s;
      c.field_ = f;
      break;
    }
  }
  return c;
}

StaggeredSamples sample_staggered(const CoefficientField& c, const Grid& g, Layout layout) {
  StaggeredSamples out;
  VectorField3C probe(g, layout);
  for (int comp = 0; comp < 3; ++comp) {
    const auto& d = probe.shape(comp).dims;
    out.comp[comp].resize(probe.shape(comp).size());
    if (c.is_constant()) {
      std::fill(out.comp[comp].begin(), out.comp[comp].end(), c(Vec3{0, 0, 0}));
      continue;
    }
    for (int i = 0; i < d[0]; ++i)
      for (int j = 0; j < d[1]; ++j)
        for (int k = 0; k < d[2]; ++k)
          out.comp[comp][probe.shape(comp).index(i, j, k)] = c(probe.position(comp, i, j, k));
  }
  return out;
}

ScalarFieldC MaterialProfile::epsilon_field(Location loc) const {
  return ScalarFieldC::sample(grid, loc, [this](const Vec3& x) { return epsilon(x); });
}

ScalarFieldC MaterialProfile::mu_field(Location loc) const {
  return ScalarFieldC::sample(grid, loc, [this](const Vec3& x) { return mu(x); });
}

// ---------------------------------------------------------------- susceptibilities

Susceptibility Susceptibility::kerr(CoefficientField a) {
  Susceptibility s;
  s.form = ClosedForm::kerr;
  s.strength = std::move(a);
  return s;
}

Susceptibility Susceptibility::saturable(CoefficientField a, CoefficientField b) {
  Susceptibility s;
  s.form = ClosedForm::saturable;
  s.strength = std::move(a);
  s.saturation = std::move(b);
  return s;
}

Susceptibility Susceptibility::from_series(std::vector<CoefficientField> coeffs) {
  Susceptibility s;
  s.form = ClosedForm::none;
  s.series = std::move(coeffs);
  return s;
}

cplx Susceptibility::coefficient(int k, const Vec3& x) const {
  if (k < 1) fail(ErrorKind::invalid_argument, "series index starts at 1");
  switch (form) {
    case ClosedForm::kerr: return k == 1 ? strength(x) : 0.0;
    case ClosedForm::saturable: return strength(x) * std::pow(-saturation(x), k - 1);
    case ClosedForm::none: return k <= int(series.size()) ? series[k - 1](x) : 0.0;
  }
  return 0.0;
}

cplx Susceptibility::value(const Vec3& x, double s, int k_max) const {
  switch (form) {
    case ClosedForm::kerr: return strength(x) * s;
    case ClosedForm::saturable: return strength(x) * s / (1.0 + saturation(x) * s);
    case ClosedForm::none: {
      cplx acc = 0.0, sk = s;
      const int K = std::min<int>(k_max, int(series.size()));
      for (int k = 1; k <= K; ++k, sk *= s) acc += series[k - 1](x) * sk;
      return acc;
    }
  }
  return 0.0;
}

bool Susceptibility::is_zero() const {
  switch (form) {
    case ClosedForm::kerr:
    case ClosedForm::saturable: return strength.is_zero();
    case ClosedForm::none:
      return std::all_of(series.begin(), series.end(), [](const CoefficientField& c) { return c.is_zero(); });
  }
  return true;
}

std::string Susceptibility::describe() const {
  switch (form) {
    case ClosedForm::kerr: return "kerr(" + strength.describe() + ")";
    case ClosedForm::saturable: return "saturable(" + strength.describe() + ", " + saturation.describe() + ")";
    case ClosedForm::none: return fmt::format("series({} terms)", series.size());
  }
  return "?";
}

// ---------------------------------------------------------------- law

NonlinearLaw::NonlinearLaw(Susceptibility x, Susceptibility y, double s0, double M_bound, int k_max)
    : x_(std::move(x)), y_(std::move(y)), s0_(s0), M_(M_bound), k_max_(k_max) {
  if (!(s0 > 0) || !(M_bound > 0)) fail(ErrorKind::invalid_argument, "s0 and M must be positive");
  if (k_max < 1) fail(ErrorKind::invalid_argument, "K_max must be at least 1");
}

NonlinearLaw NonlinearLaw::linear() { return NonlinearLaw(Susceptibility::zero(), Susceptibility::zero(), 1.0, 10.0); }

NonlinearLaw NonlinearLaw::kerr(CoefficientField a, CoefficientField b, double s0, double M_bound) {
  return NonlinearLaw(Susceptibility::kerr(std::move(a)), Susceptibility::kerr(std::move(b)), s0, M_bound);
}

std::string NonlinearLaw::describe() const {
  return fmt::format("X={}, Y={}, s0={}, M={}, K_max={}", x_.describe(), y_.describe(), s0_, M_, k_max_);
}

double NonlinearLaw::tail_bound(double s) const {
  if (s >= s0_) return std::numeric_limits<double>::infinity();
  const double r = s / s0_;
  return M_ * s0_ * std::pow(r, k_max_ + 1) / (1.0 - r);
}

NonlinearLaw NonlinearLaw::scaled(cplx scale) const {
  auto scale_one = [&](const Susceptibility& s) {
    Susceptibility out = s;
    out.strength = s.strength.scaled(scale);
    for (auto& c : out.series) c = c.scaled(scale);
    return out;
  };
  return NonlinearLaw(scale_one(x_), scale_one(y_), s0_, M_, k_max_);
}

NonlinearLaw NonlinearLaw::single_order(int k) const {
  if (k < 1 || k > k_max_) fail(ErrorKind::invalid_argument, "order out of range");
  auto pick = [&](const Susceptibility& s) {
    if (s.is_zero()) return Susceptibility::zero();
    std::vector<CoefficientField> coeffs(k, CoefficientField::constant(0.0));
    switch (s.form) {
      case ClosedForm::kerr:
        if (k == 1) return Susceptibility::kerr(s.strength);
        return Susceptibility::zero();
      case ClosedForm::saturable:
        if (!s.saturation.is_constant())
          fail(ErrorKind::invalid_argument, "single_order of a saturable law needs a constant saturation");
        coeffs[k - 1] = s.strength.scaled(std::pow(-s.saturation(Vec3{0, 0, 0}), k - 1));
        break;
      case ClosedForm::none:
        if (k <= int(s.series.size())) coeffs[k - 1] = s.series[k - 1];
        break;
    }
    return Susceptibility::from_series(coeffs);
  };
  return NonlinearLaw(pick(x_), pick(y_), s0_, M_, k_max_);
}

const NonlinearLaw::Sampled& NonlinearLaw::on_grid(const Grid& g) const {
  std::lock_guard<std::mutex> lock(*cache_mutex_);
  for (const auto& s : cache_)
    if (s->grid == g) return *s;
  auto s = std::make_shared<Sampled>(Sampled{g, {}, {}, {}, {}, {}, {}});
  auto fill = [&](const Susceptibility& sus, Layout layout, StaggeredSamples& strength, StaggeredSamples& sat,
                  std::vector<StaggeredSamples>& series) {
    if (sus.form == ClosedForm::none) {
      for (const auto& c : sus.series) series.push_back(sample_staggered(c, g, layout));
    } else {
      strength = sample_staggered(sus.strength, g, layout);
      if (sus.form == ClosedForm::saturable) sat = sample_staggered(sus.saturation, g, layout);
    }
  };
  fill(x_, Layout::edge, s->x_strength, s->x_saturation, s->x_series);
  fill(y_, Layout::face, s->y_strength, s->y_saturation, s->y_series);
  cache_.push_back(s);
  return *s;
}

// ---------------------------------------------------------------- evaluation

ScalarFieldC eval_X(const NonlinearLaw& law, Which which, const ScalarFieldC& s, EvalReport* report) {
  const Susceptibility& sus = law.get(which);
  ScalarFieldC out(s.grid(), s.location());
  const auto& d = s.shape().dims;
  double smax = 0.0;
  for (auto v : s.values()) {
    if (v.real() < 0 || std::abs(v.imag()) > 0) fail(ErrorKind::invalid_argument, "intensity must be real and >= 0");
    smax = std::max(smax, v.real());
  }
  if (smax >= law.s0())
    fail(ErrorKind::envelope_violation, fmt::format("intensity {} exceeds s0 = {}", smax, law.s0()));
  for (int i = 0; i < d[0]; ++i)
    for (int j = 0; j < d[1]; ++j)
      for (int k = 0; k < d[2]; ++k)
        out.at(i, j, k) = sus.value(s.position(i, j, k), s.at(i, j, k).real(), law.k_max());
  if (report) {
    report->closed_form = sus.form != ClosedForm::none;
    report->tail_bound = law.tail_bound(smax);
    report->max_intensity = smax;
  }
  return out;
}

namespace {

struct Intensities {
  std::array<std::vector<double>, 3> s;
};

Intensities intensities(const VectorField3C& v) {
  Intensities out;
  for (int c = 0; c < 3; ++c) out.s[c].resize(v.comp(c).size());
  kernels::omp::intensity(v.grid().n(), v.layout() == Layout::edge ? 0 : 1,
                          {v.comp(0).data(), v.comp(1).data(), v.comp(2).data()}, out.s[0].data(), out.s[1].data(),
                          out.s[2].data());
  return out;
}

double max_of(const Intensities& in) {
  double m = 0;
  for (const auto& v : in.s)
    for (double x : v) m = std::max(m, x);
  return m;
}

// out_c = sign * chi(s) * v_c at every entry.
void apply_susceptibility(const Susceptibility& sus, const StaggeredSamples& strength, const StaggeredSamples& sat,
                          const std::vector<StaggeredSamples>& series, int k_max, const VectorField3C& v,
                          const Intensities& in, double sign, VectorField3C& out) {
  if (sus.is_zero()) return;
  for (int c = 0; c < 3; ++c) {
    const auto src = v.comp(c);
    auto dst = out.comp(c);
    const auto& s = in.s[c];
    const std::size_t count = src.size();
    switch (sus.form) {
      case ClosedForm::kerr: {
        const auto& a = strength.comp[c];
#pragma omp parallel for schedule(static)
        for (std::size_t m = 0; m < count; ++m) dst[m] = sign * a[m] * s[m] * src[m];
        break;
      }
      case ClosedForm::saturable: {
        const auto& a = strength.comp[c];
        const auto& b = sat.comp[c];
#pragma omp parallel for schedule(static)
        for (std::size_t m = 0; m < count; ++m) dst[m] = sign * a[m] * s[m] / (1.0 + b[m] * s[m]) * src[m];
        break;
      }
      case ClosedForm::none: {
        const int K = std::min<int>(k_max, int(series.size()));
#pragma omp parallel for schedule(static)
        for (std::size_t m = 0; m < count; ++m) {
          cplx acc = 0.0;
          double sk = s[m];
          for (int k = 0; k < K; ++k, sk *= s[m]) acc += series[k].comp[c][m] * sk;
          dst[m] = sign * acc * src[m];
        }
        break;
      }
    }
  }
}

}  // namespace

FieldPair eval_F(const NonlinearLaw& law, const FieldPair& U, EvalReport* report) {
  const Grid& g = U.grid();
  FieldPair out(g);
  if (law.is_linear()) {
    if (report) *report = EvalReport{true, 0.0, 0.0};
    return out;
  }
  const auto& smp = law.on_grid(g);
  const Intensities sE = intensities(U.E);
  const Intensities sH = intensities(U.H);
  const double smax = std::max(max_of(sE), max_of(sH));
  if (smax >= law.s0())
    fail(ErrorKind::envelope_violation, fmt::format("field intensity {:.4g} exceeds s0 = {:.4g}", smax, law.s0()));
  apply_susceptibility(law.X(), smp.x_strength, smp.x_saturation, smp.x_series, law.k_max(), U.E, sE, -1.0, out.E);
  apply_susceptibility(law.Y(), smp.y_strength, smp.y_saturation, smp.y_series, law.k_max(), U.H, sH, 1.0, out.H);
  if (report) {
    const bool closed = law.X().form != ClosedForm::none && law.Y().form != ClosedForm::none;
    *report = EvalReport{closed, closed ? 0.0 : law.tail_bound(smax), smax};
  }
  return out;
}

FieldPair eval_F_k(const NonlinearLaw& law, int k, const FieldPair& U) {
  if (k < 1 || k > law.k_max()) fail(ErrorKind::invalid_argument, fmt::format("order {} outside 1..{}", k, law.k_max()));
  const Grid& g = U.grid();
  FieldPair out(g);
  auto one = [&](const Susceptibility& sus, Layout layout, const VectorField3C& v, double sign, VectorField3C& dst) {
    if (sus.is_zero()) return;
    const Intensities in = intensities(v);
    // Sample the k-th coefficient at this layout.
    VectorField3C probe(g, layout);
    for (int c = 0; c < 3; ++c) {
      const auto& sh = probe.shape(c);
      const auto& d = sh.dims;
      auto src = v.comp(c);
      auto o = dst.comp(c);
      for (int i = 0; i < d[0]; ++i)
        for (int j = 0; j < d[1]; ++j)
          for (int kk = 0; kk < d[2]; ++kk) {
            const std::size_t m = sh.index(i, j, kk);
            const cplx coef = sus.coefficient(k, probe.position(c, i, j, kk));
            o[m] = sign * coef * std::pow(in.s[c][m], k) * src[m];
          }
    }
  };
  one(law.X(), Layout::edge, U.E, -1.0, out.E);
  one(law.Y(), Layout::face, U.H, 1.0, out.H);
  return out;
}

// ---------------------------------------------------------------- validation

bool ValidationReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const AssumptionCheck& c) { return c.pass; });
}

std::string ValidationReport::to_json() const {
  nlohmann::json j;
  j["all_pass"] = all_pass();
  for (const auto& c : checks)
    j["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"measured", c.measured}, {"bound", c.bound},
                           {"detail", c.detail}});
  return j.dump(2);
}

namespace {

// Max over nodes of |c| and |first differences| / h.
double w1inf_proxy(const ScalarFieldC& f) {
  const auto& d = f.shape().dims;
  const double h = f.grid().h();
  double m = norm_Linf(f);
  for (int i = 0; i < d[0]; ++i)
    for (int j = 0; j < d[1]; ++j)
      for (int k = 0; k < d[2]; ++k) {
        const cplx v = f.at(i, j, k);
        if (i + 1 < d[0]) m = std::max(m, std::abs(f.at(i + 1, j, k) - v) / h);
        if (j + 1 < d[1]) m = std::max(m, std::abs(f.at(i, j + 1, k) - v) / h);
        if (k + 1 < d[2]) m = std::max(m, std::abs(f.at(i, j, k + 1) - v) / h);
      }
  return m;
}

// Max over orders 0..5 and axes of |forward difference of order r| / h^r.
double w5inf_proxy(const ScalarFieldC& f) {
  const auto& d = f.shape().dims;
  const double h = f.grid().h();
  double m = norm_Linf(f);
  for (int a = 0; a < 3; ++a) {
    std::vector<cplx> cur(f.values().begin(), f.values().end());
    std::array<int, 3> dims = d;
    for (int r = 1; r <= 5 && dims[a] > 1; ++r) {
      std::array<int, 3> nd = dims;
      nd[a] -= 1;
      std::vector<cplx> next(std::size_t(nd[0]) * nd[1] * nd[2]);
      for (int i = 0; i < nd[0]; ++i)
        for (int j = 0; j < nd[1]; ++j)
          for (int k = 0; k < nd[2]; ++k) {
            int hi[3] = {i, j, k};
            hi[a] += 1;
            const auto lo_idx = (std::size_t(i) * dims[1] + j) * dims[2] + k;
            const auto hi_idx = (std::size_t(hi[0]) * dims[1] + hi[1]) * dims[2] + hi[2];
            const cplx v = (cur[hi_idx] - cur[lo_idx]) / h;
            next[(std::size_t(i) * nd[1] + j) * nd[2] + k] = v;
            m = std::max(m, std::abs(v));
          }
      cur.swap(next);
      dims = nd;
    }
  }
  return m;
}

// W1inf (or Linf) proxy norms of the first `count` series coefficients.
std::vector<double> coefficient_norms(const Susceptibility& sus, const Grid& g, int count, bool with_derivative) {
  std::vector<double> out;
  if (sus.is_zero()) return out;
  auto norm_of = [&](const ScalarFieldC& f) { return with_derivative ? w1inf_proxy(f) : norm_Linf(f); };
  switch (sus.form) {
    case ClosedForm::kerr:
      out.push_back(norm_of(ScalarFieldC::sample(g, Location::node, [&](const Vec3& x) { return sus.strength(x); })));
      break;
    case ClosedForm::none:
      for (const auto& c : sus.series)
        out.push_back(norm_of(ScalarFieldC::sample(g, Location::node, [&](const Vec3& x) { return c(x); })));
      break;
    case ClosedForm::saturable: {
      auto a = ScalarFieldC::sample(g, Location::node, [&](const Vec3& x) { return sus.strength(x); });
      auto b = ScalarFieldC::sample(g, Location::node, [&](const Vec3& x) { return -sus.saturation(x); });
      for (int k = 1; k <= count; ++k) {
        out.push_back(norm_of(a));
        for (std::size_t m = 0; m < a.size(); ++m) a.values()[m] *= b.values()[m];
      }
      break;
    }
  }
  return out;
}

}  // namespace

ValidationReport validate_assumptions(const MaterialProfile& mat, const NonlinearLaw& law, int s_samples) {
  ValidationReport rep;
  const Grid& g = mat.grid;
  auto eps = mat.epsilon_field(Location::half);
  auto mu = mat.mu_field(Location::half);

  {
    AssumptionCheck c{"frequency", mat.omega > 0, mat.omega, 0.0, "omega must be positive"};
    rep.checks.push_back(c);
  }
  {
    bool finite = true;
    for (auto v : eps.values()) finite = finite && std::isfinite(v.real()) && std::isfinite(v.imag());
    for (auto v : mu.values()) finite = finite && std::isfinite(v.real()) && std::isfinite(v.imag());
    rep.checks.push_back({"smoothness", finite, finite ? 1.0 : 0.0, 1.0, "sampled coefficients finite"});
  }
  {
    double mn = std::numeric_limits<double>::infinity();
    for (auto v : eps.values()) mn = std::min(mn, v.real());
    for (auto v : mu.values()) mn = std::min(mn, v.real());
    rep.checks.push_back(
        {"ellipticity", mn > mat.lambda_bound, mn, mat.lambda_bound, "min Re(eps), Re(mu) must exceed lambda"});
  }
  {
    auto epsn = mat.epsilon_field(Location::node);
    auto mun = mat.mu_field(Location::node);
    const double r = std::max(w5inf_proxy(epsn), w5inf_proxy(mun));
    rep.checks.push_back({"regularity", r < mat.M_bound, r, mat.M_bound, "W5inf proxy of eps, mu below M"});
  }

  // Series bounds; saturable laws are expanded far enough to expose divergence.
  const int count = std::max(law.k_max(), 200);
  const auto ax1 = coefficient_norms(law.X(), g, count, true);
  const auto by1 = coefficient_norms(law.Y(), g, count, true);
  const auto ax0 = coefficient_norms(law.X(), g, count, false);
  const auto by0 = coefficient_norms(law.Y(), g, count, false);
  const std::size_t K = std::max({ax1.size(), by1.size()});
  auto at = [](const std::vector<double>& v, std::size_t k) { return k < v.size() ? v[k] : 0.0; };

  double worst_env = 0, worst_slope = 0, worst_curv = 0;
  bool converged = true;
  for (int i = 1; i <= s_samples; ++i) {
    const double s = law.s0() * (i < s_samples ? double(i) / s_samples : 1.0 - 1e-3);
    double env = 0, slope = 0, curv = 0, last = 0;
    double sk = 1.0;  // s^{k-1}
    for (std::size_t k = 1; k <= K; ++k, sk *= s) {
      const double w1 = at(ax1, k - 1) + at(by1, k - 1);
      const double w0 = at(ax0, k - 1) + at(by0, k - 1);
      env += w1 * sk * s;
      slope += k * w1 * sk;
      if (k >= 2) curv += k * (k - 1) * w0 * sk / s;
      last = w1 * sk * s;
    }
    if (K >= 100 && last > 1e-8 * std::max(env, 1e-300)) converged = false;
    worst_env = std::max(worst_env, env / s);
    worst_slope = std::max(worst_slope, slope);
    worst_curv = std::max(worst_curv, curv);
  }
  const double M = law.M_bound();
  rep.checks.push_back({"series-envelope", converged && worst_env < M, converged ? worst_env : INFINITY, M,
                        converged ? "sum (|a_k|+|b_k|) s^k < M s on (0, s0)" : "series does not converge on (0, s0)"});
  rep.checks.push_back({"series-slope", converged && worst_slope < M, converged ? worst_slope : INFINITY, M,
                        "sum k (|a_k|+|b_k|) s^(k-1) < M on (0, s0)"});
  rep.checks.push_back({"series-curvature", converged && worst_curv < M, converged ? worst_curv : INFINITY, M,
                        "sum k(k-1) (|a_k|+|b_k|) s^(k-2) < M on (0, s0)"});
  return rep;
}

double lipschitz_check(const NonlinearLaw& law, const FieldPair& U, const FieldPair& Uprime, double p,
                       double norm_cap) {
  const double nu = norm_W1p(U, p), nv = norm_W1p(Uprime, p);
  if (nu > norm_cap || nv > norm_cap)
    fail(ErrorKind::envelope_violation, fmt::format("norm {:.4g} exceeds cap {:.4g}", std::max(nu, nv), norm_cap));
  const double diff = norm_W1p(U - Uprime, p);
  if (diff == 0.0) return 0.0;
  const double num = norm_W1p(eval_F(law, U) - eval_F(law, Uprime), p);
  return num / ((nu * nu + nv * nv) * diff);
}

double cubic_constant(const NonlinearLaw& law, const FieldPair& U, double p) {
  const double nu = norm_W1p(U, p);
  if (nu == 0.0) return 0.0;
  return norm_W1p(eval_F(law, U), p) / (nu * nu * nu);
}

}  // namespace maxnl
