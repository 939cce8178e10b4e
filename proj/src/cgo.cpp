#include "maxnl/cgo.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <fftw3.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "maxnl/calculus.hpp"
#include "maxnl/errors.hpp"
#include "maxnl/field_io.hpp"

namespace maxnl {

namespace {

constexpr cplx I{0.0, 1.0};

using CV3 = Eigen::Matrix<cplx, 3, 1>;

CV3 to_eigen(const CVec3& v) { return CV3(v[0], v[1], v[2]); }
CVec3 to_array(const CV3& v) { return {v(0), v(1), v(2)}; }

// Bilinear cross product (Eigen's cross conjugates complex results).
CV3 cross(const CV3& a, const CV3& b) {
  return CV3(a(1) * b(2) - a(2) * b(1), a(2) * b(0) - a(0) * b(2), a(0) * b(1) - a(1) * b(0));
}

// In-place complex 3-D transforms of size n^3, plans shared per size.
class Fft3 {
 public:
  static const Fft3& get(int n) {
    static std::mutex mtx;
    static std::map<int, std::unique_ptr<Fft3>> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto& slot = cache[n];
    if (!slot) slot.reset(new Fft3(n));
    return *slot;
  }
  void forward(std::vector<cplx>& a) const { run(fwd_, a); }
  // Unnormalised inverse.
  void backward(std::vector<cplx>& a) const { run(bwd_, a); }

 private:
  explicit Fft3(int n) {
    std::vector<cplx> scratch(std::size_t(n) * n * n);
    auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
    fwd_ = fftw_plan_dft_3d(n, n, n, p, p, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    bwd_ = fftw_plan_dft_3d(n, n, n, p, p, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!fwd_ || !bwd_) fail(ErrorKind::construction, "FFTW plan creation failed");
  }
  static void run(fftw_plan plan, std::vector<cplx>& a) {
    auto* p = reinterpret_cast<fftw_complex*>(a.data());
    fftw_execute_dft(plan, p, p);
  }
  fftw_plan fwd_ = nullptr, bwd_ = nullptr;
};

int signed_bin(int m, int n) { return m < n / 2 ? m : m - n; }

// P with grad -> i k and the 1/i factor applied: the symbol of P at k.
Vec8 apply_symbol(const CV3& k, const Vec8& F) {
  const CV3 H = F.segment<3>(slot_H), E = F.segment<3>(slot_E);
  Vec8 out;
  out(slot_h) = k(0) * E(0) + k(1) * E(1) + k(2) * E(2);
  out.segment<3>(slot_H) = k * F(slot_e) - cross(k, E);
  out(slot_e) = k(0) * H(0) + k(1) * H(1) + k(2) * H(2);
  out.segment<3>(slot_E) = k * F(slot_h) + cross(k, H);
  return out;
}

Eigen::Matrix3cd cross_matrix(const CV3& v) {
  Eigen::Matrix3cd X;
  X << 0.0, -v(2), v(1), v(2), 0.0, -v(0), -v(1), v(0), 0.0;
  return X;
}

cplx bilinear(const CV3& a, const CV3& b) { return a(0) * b(0) + a(1) * b(1) + a(2) * b(2); }

// Multiplies every node of u by e^{+-i theta.x}.
void modulate(const ExtensionBox& box, const Vec3& theta, EightField& u, int sign) {
  if (theta[0] == 0.0 && theta[1] == 0.0 && theta[2] == 0.0) return;
  const std::size_t N = box.size();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t idx = 0; idx < std::ptrdiff_t(N); ++idx) {
    const Vec3 x = box.position(idx);
    const cplx ph = std::exp(cplx(0.0, sign * (theta[0] * x[0] + theta[1] * x[1] + theta[2] * x[2])));
    for (auto& c : u.comp) c[idx] *= ph;
  }
}

template <class F>
void for_each_mode(const ExtensionBox& box, F&& f) {
  const int n = box.n();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) f(box.index(i, j, k), signed_bin(i, n), signed_bin(j, n), signed_bin(k, n));
}

// Periodic multiplier 1/(|k+theta|^2 + 2 zeta.(k+theta)) on each component.
void faddeev_periodic(const ExtensionBox& box, const CVec3& zeta, const Vec3& theta, EightField& g) {
  const Fft3& fft = Fft3::get(box.n());
  const double dk = box.dk();
  const double norm = 1.0 / double(box.size());
  for (auto& c : g.comp) {
    fft.forward(c);
    for_each_mode(box, [&](std::size_t idx, int a, int b, int d) {
      const double k0 = a * dk + theta[0], k1 = b * dk + theta[1], k2 = d * dk + theta[2];
      const cplx s = k0 * k0 + k1 * k1 + k2 * k2 + 2.0 * (zeta[0] * k0 + zeta[1] * k1 + zeta[2] * k2);
      c[idx] *= norm / s;
    });
    fft.backward(c);
  }
}

// e^{-i theta.x} P (e^{i theta.x} u) for periodic u.
EightField spectral_P(const ExtensionBox& box, const Vec3& theta, const EightField& u) {
  const Fft3& fft = Fft3::get(box.n());
  EightField U = u;
  for (auto& c : U.comp) fft.forward(c);
  const double dk = box.dk();
  const double norm = 1.0 / double(box.size());
  const bool shifted = theta[0] != 0.0 || theta[1] != 0.0 || theta[2] != 0.0;
  const int n = box.n();
  for_each_mode(box, [&](std::size_t idx, int a, int b, int d) {
    // Without a shift the Nyquist plane carries no odd derivative.
    auto kk = [&](int m, double t) { return (!shifted && 2 * std::abs(m) == n) ? 0.0 : m * dk + t; };
    const CV3 k(kk(a, theta[0]), kk(b, theta[1]), kk(d, theta[2]));
    U.set(idx, norm * apply_symbol(k, U.at(idx)));
  });
  for (auto& c : U.comp) fft.backward(c);
  return U;
}

// Spectral curl of e^{i theta.x} v (v periodic), returned without the phase.
std::array<std::vector<cplx>, 3> spectral_curl(const ExtensionBox& box, const Vec3& theta,
                                               const std::array<const std::vector<cplx>*, 3>& v) {
  const Fft3& fft = Fft3::get(box.n());
  std::array<std::vector<cplx>, 3> V{*v[0], *v[1], *v[2]}, out;
  for (auto& c : V) fft.forward(c);
  for (auto& c : out) c.assign(box.size(), 0.0);
  const double dk = box.dk();
  const double norm = 1.0 / double(box.size());
  const bool shifted = theta[0] != 0.0 || theta[1] != 0.0 || theta[2] != 0.0;
  const int n = box.n();
  for_each_mode(box, [&](std::size_t idx, int a, int b, int d) {
    auto kk = [&](int m, double t) { return (!shifted && 2 * std::abs(m) == n) ? 0.0 : m * dk + t; };
    const CV3 k(kk(a, theta[0]), kk(b, theta[1]), kk(d, theta[2]));
    const CV3 w(V[0][idx], V[1][idx], V[2][idx]);
    const CV3 c = I * cross(k, w) * norm;
    for (int q = 0; q < 3; ++q) out[q][idx] = c(q);
  });
  for (auto& c : out) fft.backward(c);
  return out;
}

// Second-order spectral derivatives of a periodic scalar: gradient,
// Hessian (xx, yy, zz, xy, xz, yz) and Laplacian.
struct Derivs {
  std::array<std::vector<cplx>, 3> grad;
  std::array<std::vector<cplx>, 6> hess;
  std::vector<cplx> lap;
};

Derivs spectral_derivs(const ExtensionBox& box, const std::vector<cplx>& f, bool second) {
  const Fft3& fft = Fft3::get(box.n());
  std::vector<cplx> F = f;
  fft.forward(F);
  const int n = box.n();
  const double dk = box.dk();
  const double norm = 1.0 / double(box.size());
  auto kval = [&](int m) { return 2 * std::abs(m) == n ? 0.0 : m * dk; };
  auto make = [&](auto&& mult) {
    std::vector<cplx> out(F.size());
    for_each_mode(box, [&](std::size_t idx, int a, int b, int d) {
      out[idx] = F[idx] * mult(kval(a), kval(b), kval(d)) * norm;
    });
    fft.backward(out);
    return out;
  };
  Derivs D;
  D.grad[0] = make([](double x, double, double) { return I * x; });
  D.grad[1] = make([](double, double y, double) { return I * y; });
  D.grad[2] = make([](double, double, double z) { return I * z; });
  if (second) {
    D.hess[0] = make([](double x, double, double) { return cplx(-x * x); });
    D.hess[1] = make([](double, double y, double) { return cplx(-y * y); });
    D.hess[2] = make([](double, double, double z) { return cplx(-z * z); });
    D.hess[3] = make([](double x, double y, double) { return cplx(-x * y); });
    D.hess[4] = make([](double x, double, double z) { return cplx(-x * z); });
    D.hess[5] = make([](double, double y, double z) { return cplx(-y * z); });
    D.lap.resize(F.size());
    for (std::size_t m = 0; m < F.size(); ++m) D.lap[m] = D.hess[0][m] + D.hess[1][m] + D.hess[2][m];
  }
  return D;
}

double l2(const EightField& u) {
  double acc = 0.0;
  for (const auto& c : u.comp)
    for (const auto& v : c) acc += std::norm(v);
  return std::sqrt(acc);
}

// Cubic Lagrange weights for offset s in [0,1) about nodes -1, 0, 1, 2.
std::array<double, 4> cubic_weights(double s) {
  return {-s * (s - 1) * (s - 2) / 6.0, (s + 1) * (s - 1) * (s - 2) / 2.0, -(s + 1) * s * (s - 2) / 2.0,
          (s + 1) * s * (s - 1) / 6.0};
}

}  // namespace

// ---------------------------------------------------------------------------

ExtensionBox::ExtensionBox(const Grid& domain, const ExtensionSpec& spec) : domain_(domain), spec_(spec) {
  if (spec.n < 8 || spec.n % 2 != 0) fail(ErrorKind::invalid_argument, "extension box needs an even n >= 8");
  if (!(spec.scale > 1.0)) fail(ErrorKind::invalid_argument, "extension box must be larger than the domain");
  side_ = spec.scale * domain.side();
  const double c = 0.5 * domain.side();
  centre_ = {c, c, c};
  origin_ = {c - 0.5 * side_, c - 0.5 * side_, c - 0.5 * side_};
  const double reach = (0.5 + spec.blend) * domain.side();
  if (reach > 0.5 * side_ - 2.0 * spacing())
    fail(ErrorKind::invalid_argument,
         fmt::format("blend shell ({} domain sides) does not fit inside the extension box", spec.blend));
  if (spec.blend * domain.side() < 4.0 * spacing())
    fail(ErrorKind::invalid_argument,
         fmt::format("blend width {} is below four box spacings; the extension is not smooth enough", spec.blend));
}

double ExtensionBox::dk() const { return 2.0 * std::numbers::pi / side_; }

Vec3 ExtensionBox::position(std::size_t idx) const {
  const std::size_t n = spec_.n;
  const std::size_t k = idx % n, j = (idx / n) % n, i = idx / (n * n);
  const double h = spacing();
  return {origin_[0] + i * h, origin_[1] + j * h, origin_[2] + k * h};
}

double ExtensionBox::wavenumber(int m) const { return signed_bin(m, spec_.n) * dk(); }

bool ExtensionBox::inside_domain(const Vec3& x) const {
  const double s = domain_.side();
  for (double v : x)
    if (v < -1e-12 || v > s + 1e-12) return false;
  return true;
}

double ExtensionBox::blend_weight(const Vec3& x) const {
  const double s = domain_.side();
  double d2 = 0.0;
  for (double v : x) {
    const double out = v < 0 ? -v : (v > s ? v - s : 0.0);
    d2 += out * out;
  }
  const double t = std::min(1.0, std::sqrt(d2) / (spec_.blend * s));
  return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

// ---------------------------------------------------------------------------

EightField::EightField(int n_points) : n(n_points) {
  for (auto& c : comp) c.assign(std::size_t(n) * n * n, 0.0);
}

Vec8 EightField::at(std::size_t idx) const {
  Vec8 v;
  for (int q = 0; q < 8; ++q) v(q) = comp[q][idx];
  return v;
}

void EightField::set(std::size_t idx, const Vec8& v) {
  for (int q = 0; q < 8; ++q) comp[q][idx] = v(q);
}

double EightField::max_abs() const {
  double m = 0.0;
  for (const auto& c : comp)
    for (const auto& v : c) m = std::max(m, std::abs(v));
  return m;
}

EightField& EightField::operator+=(const EightField& o) {
  for (int q = 0; q < 8; ++q)
    for (std::size_t m = 0; m < comp[q].size(); ++m) comp[q][m] += o.comp[q][m];
  return *this;
}

EightField& EightField::operator*=(cplx s) {
  for (auto& c : comp)
    for (auto& v : c) v *= s;
  return *this;
}

// ---------------------------------------------------------------------------

CGOProbe CGOProbe::make(const CVec3& zeta, double omega, bool sigma_e, bool sigma_h, double tau) {
  if (!(omega > 0)) fail(ErrorKind::invalid_argument, "probe frequency must be positive");
  CGOProbe p;
  p.zeta = zeta;
  p.omega = omega;
  p.sigma_e = sigma_e;
  p.sigma_h = sigma_h;
  const cplx zz = zeta[0] * zeta[0] + zeta[1] * zeta[1] + zeta[2] * zeta[2];
  const double zn2 = std::norm(zeta[0]) + std::norm(zeta[1]) + std::norm(zeta[2]);
  if (std::abs(zz - omega * omega) > 1e-12 * std::max(zn2, omega * omega))
    fail(ErrorKind::invalid_argument,
         fmt::format("zeta.zeta = {}{:+}i differs from omega^2 = {}", zz.real(), zz.imag(), omega * omega));
  p.tau = tau > 0 ? tau : std::sqrt(std::norm(zeta[0].imag()) + std::norm(zeta[1].imag()) + std::norm(zeta[2].imag()));
  for (int q = 0; q < 3; ++q) {
    const cplx v = std::conj(zeta[q]) / zn2;
    p.a_vec[q] = sigma_e ? v : 0.0;
    p.b_vec[q] = sigma_h ? v : 0.0;
  }
  return p;
}

CGOProbe CGOProbe::simple(double omega, double tau, bool sigma_e, bool sigma_h) {
  return make({std::sqrt(omega * omega + tau * tau), 0.0, cplx(0.0, tau)}, omega, sigma_e, sigma_h, tau);
}

double CGOProbe::zeta_norm() const {
  return std::sqrt(std::norm(zeta[0]) + std::norm(zeta[1]) + std::norm(zeta[2]));
}

std::string CGOProbe::to_json() const {
  auto cv = [](const CVec3& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& c : v) a.push_back({c.real(), c.imag()});
    return a;
  };
  nlohmann::json j{{"zeta", cv(zeta)}, {"omega", omega},     {"sigma_e", sigma_e},    {"sigma_h", sigma_h},
                   {"tau", tau},       {"zeta_norm", zeta_norm()}, {"a", cv(a_vec)}, {"b", cv(b_vec)}};
  return j.dump(2);
}

Vec8 build_L(const CGOProbe& p) {
  const CV3 z = to_eigen(p.zeta), a = to_eigen(p.a_vec), b = to_eigen(p.b_vec);
  const double zn = p.zeta_norm();
  Vec8 L;
  L(slot_h) = bilinear(z, a) / zn;
  L.segment<3>(slot_H) = p.omega * b / zn;
  L(slot_e) = bilinear(z, b) / zn;
  L.segment<3>(slot_E) = p.omega * a / zn;
  return L;
}

std::pair<CVec3, CVec3> vacuum_cgo_amplitudes(const CGOProbe& p) {
  const Vec8 Y = apply_symbol(to_eigen(p.zeta), build_L(p)) - p.omega * build_L(p);
  return {to_array(Y.segment<3>(slot_E)), to_array(Y.segment<3>(slot_H))};
}

// ---------------------------------------------------------------------------

struct PotentialQ::Data {
  std::shared_ptr<const ExtensionBox> box;
  double omega = 1.0;
  std::vector<cplx> eps, mu, kappa, lap_a, lap_b;
  std::array<std::vector<cplx>, 3> ga, gb, gk;
  std::array<std::vector<cplx>, 6> ha, hb;
  std::vector<std::size_t> support;  // nodes where the blend weight is positive
  std::vector<char> in_support;
  bool vanishes = false;
  double sup = 0.0;
};

namespace {

Eigen::Matrix3cd sym3(const std::array<std::vector<cplx>, 6>& h, std::size_t m) {
  Eigen::Matrix3cd H;
  H << h[0][m], h[3][m], h[4][m], h[3][m], h[1][m], h[5][m], h[4][m], h[5][m], h[2][m];
  return H;
}

CV3 vec3(const std::array<std::vector<cplx>, 3>& v, std::size_t m) { return CV3(v[0][m], v[1][m], v[2][m]); }

}  // namespace

const ExtensionBox& PotentialQ::box() const { return *d_->box; }
double PotentialQ::omega() const { return d_->omega; }
cplx PotentialQ::epsilon(std::size_t m) const { return d_->eps[m]; }
cplx PotentialQ::mu(std::size_t m) const { return d_->mu[m]; }
bool PotentialQ::potential_vanishes() const { return d_->vanishes; }
double PotentialQ::potential_sup() const { return d_->sup; }

Mat8 PotentialQ::Q(std::size_t m) const {
  const Data& d = *d_;
  if (d.vanishes || !d.in_support[m]) return -d.omega * d.omega * Mat8::Identity();
  Mat8 Q = Mat8::Zero();
  const Eigen::Matrix3cd Ha = sym3(d.ha, m), Hb = sym3(d.hb, m);
  const Eigen::Matrix3cd Id = Eigen::Matrix3cd::Identity();
  Q(slot_h, slot_h) = 0.5 * d.lap_a[m];
  Q.block<3, 3>(slot_H, slot_H) = Ha - 0.5 * d.lap_a[m] * Id;
  Q(slot_e, slot_e) = 0.5 * d.lap_b[m];
  Q.block<3, 3>(slot_E, slot_E) = Hb - 0.5 * d.lap_b[m] * Id;
  const CV3 ga = vec3(d.ga, m), gb = vec3(d.gb, m), gk = vec3(d.gk, m);
  const cplx k2 = d.kappa[m] * d.kappa[m];
  const cplx da = k2 - 0.25 * bilinear(ga, ga), db = k2 - 0.25 * bilinear(gb, gb);
  for (int q = 0; q < 4; ++q) Q(q, q) -= da;
  for (int q = 4; q < 8; ++q) Q(q, q) -= db;
  for (int a = 0; a < 3; ++a) {
    const cplx c = 2.0 * I * gk(a);
    Q(slot_h, slot_E + a) += c;
    Q(slot_H + a, slot_e) += c;
    Q(slot_e, slot_H + a) += c;
    Q(slot_E + a, slot_h) += c;
  }
  return Q;
}

Mat8 PotentialQ::W(std::size_t m) const {
  const Data& d = *d_;
  const CV3 ga = vec3(d.ga, m), gb = vec3(d.gb, m);
  Mat8 N = Mat8::Zero();
  N.block<1, 3>(slot_h, slot_E) = ga.transpose();
  N.block<3, 1>(slot_H, slot_e) = ga;
  N.block<3, 3>(slot_H, slot_E) = cross_matrix(ga);
  N.block<1, 3>(slot_e, slot_H) = gb.transpose();
  N.block<3, 1>(slot_E, slot_h) = gb;
  N.block<3, 3>(slot_E, slot_H) = -cross_matrix(gb);
  return d.kappa[m] * Mat8::Identity() + N / (2.0 * I);
}

void PotentialQ::apply_potential(const EightField& phi, EightField& out) const {
  const Data& d = *d_;
  if (out.size() != phi.size()) out = EightField(phi.n);
  for (auto& c : out.comp) std::fill(c.begin(), c.end(), 0.0);
  if (d.vanishes) return;
  const double w2 = d.omega * d.omega;
  const std::ptrdiff_t count = std::ptrdiff_t(d.support.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < count; ++s) {
    const std::size_t m = d.support[s];
    const Vec8 v = (Q(m) + w2 * Mat8::Identity()) * phi.at(m);
    out.set(m, v);
  }
}

double PotentialQ::consistency_defect() const {
  const Data& d = *d_;
  const ExtensionBox& box = *d.box;
  const std::size_t N = box.size();
  double defect = 0.0, scale = 0.0;
  for (int c = 0; c < 8; ++c) {
    EightField Wt(box.n());
    for (std::size_t m = 0; m < N; ++m) Wt.set(m, W(m).transpose().col(c));
    const EightField PW = spectral_P(box, {0, 0, 0}, Wt);
    for (std::size_t m = 0; m < N; ++m) {
      if (!box.inside_domain(box.position(m))) continue;
      const Mat8 q = Q(m);
      const Vec8 r = q.col(c) + PW.at(m) + W(m) * Wt.at(m);
      defect = std::max(defect, r.cwiseAbs().maxCoeff());
      scale = std::max(scale, q.cwiseAbs().maxCoeff());
    }
  }
  return scale > 0 ? defect / scale : defect;
}

PotentialQ assemble_Q(const MaterialProfile& mat, const ExtensionSpec& ext) {
  auto d = std::make_shared<PotentialQ::Data>();
  d->box = std::make_shared<const ExtensionBox>(mat.grid, ext);
  d->omega = mat.omega;
  if (!(mat.omega > 0)) fail(ErrorKind::invalid_argument, "frequency must be positive");
  const ExtensionBox& box = *d->box;
  const std::size_t N = box.size();
  d->eps.resize(N);
  d->mu.resize(N);
  d->kappa.resize(N);
  std::vector<cplx> alpha(N), beta(N);
  const bool unit = mat.epsilon.is_constant() && mat.mu.is_constant() && mat.epsilon.base() == 1.0 &&
                    mat.mu.base() == 1.0;
  double min_re = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < N; ++m) {
    const Vec3 x = box.position(m);
    const double w = box.blend_weight(x);
    cplx e = 1.0, u = 1.0;
    if (w > 0.0) {
      d->support.push_back(m);
      e = 1.0 + w * (mat.epsilon(x) - 1.0);
      u = 1.0 + w * (mat.mu(x) - 1.0);
    }
    min_re = std::min({min_re, e.real(), u.real()});
    d->eps[m] = e;
    d->mu[m] = u;
    alpha[m] = std::log(e);
    beta[m] = std::log(u);
    d->kappa[m] = mat.omega * std::sqrt(u) * std::sqrt(e);
  }
  if (!(min_re > 0.0))
    fail(ErrorKind::invalid_argument,
         fmt::format("extended coefficients need positive real parts (min {:.3g})", min_re));
  if (unit) {
    d->vanishes = true;
    d->support.clear();
    for (auto* v : {&d->lap_a, &d->lap_b}) v->assign(N, 0.0);
    for (auto* arr : {&d->ga, &d->gb, &d->gk})
      for (auto& v : *arr) v.assign(N, 0.0);
    for (auto* arr : {&d->ha, &d->hb})
      for (auto& v : *arr) v.assign(N, 0.0);
    return PotentialQ(d);
  }
  Derivs A = spectral_derivs(box, alpha, true), B = spectral_derivs(box, beta, true);
  std::vector<cplx> kshift(N);
  for (std::size_t m = 0; m < N; ++m) kshift[m] = d->kappa[m] - mat.omega;
  Derivs K = spectral_derivs(box, kshift, false);
  d->ga = std::move(A.grad);
  d->ha = std::move(A.hess);
  d->lap_a = std::move(A.lap);
  d->gb = std::move(B.grad);
  d->hb = std::move(B.hess);
  d->lap_b = std::move(B.lap);
  d->gk = std::move(K.grad);
  // Outside the shell the coefficients are exactly 1; Q there is -omega^2 I
  // and spectral ringing of the derivatives is not part of the potential.
  d->in_support.assign(N, 0);
  for (std::size_t m : d->support) d->in_support[m] = 1;
  PotentialQ Q(d);
  double sup = 0.0;
  const double w2 = mat.omega * mat.omega;
  for (std::size_t m : d->support)
    sup = std::max(sup, (Q.Q(m) + w2 * Mat8::Identity()).cwiseAbs().rowwise().sum().maxCoeff());
  d->sup = sup;
  return Q;
}

// ---------------------------------------------------------------------------

Vec3 choose_lattice_shift(const ExtensionBox& box, const CVec3& zeta, double* min_symbol) {
  const double dk = box.dk();
  const int n = box.n();
  auto smallest = [&](const Vec3& th) {
    double best = std::numeric_limits<double>::infinity();
#pragma omp parallel for reduction(min : best) schedule(static)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          const double k0 = signed_bin(i, n) * dk + th[0], k1 = signed_bin(j, n) * dk + th[1],
                       k2 = signed_bin(k, n) * dk + th[2];
          const cplx s = k0 * k0 + k1 * k1 + k2 * k2 + 2.0 * (zeta[0] * k0 + zeta[1] * k1 + zeta[2] * k2);
          best = std::min(best, std::abs(s));
        }
    return best;
  };
  Vec3 best_shift{0, 0, 0};
  double best = -1.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 4; ++c) {
        const Vec3 th{a * dk / 4, b * dk / 4, c * dk / 4};
        const double s = smallest(th);
        if (s > best) {
          best = s;
          best_shift = th;
        }
      }
  if (min_symbol) *min_symbol = best;
  if (!(best > 1e-8 * dk * dk))
    fail(ErrorKind::construction, "Faddeev symbol vanishes on every shifted lattice; resize the box");
  return best_shift;
}

EightField faddeev_apply(const ExtensionBox& box, const CVec3& zeta, const Vec3& shift, const EightField& phi) {
  EightField g = phi;
  modulate(box, shift, g, -1);
  faddeev_periodic(box, zeta, shift, g);
  modulate(box, shift, g, +1);
  return g;
}

EightField faddeev_operator(const ExtensionBox& box, const CVec3& zeta, const Vec3& shift, const EightField& u) {
  const Fft3& fft = Fft3::get(box.n());
  EightField g = u;
  modulate(box, shift, g, -1);
  const double dk = box.dk();
  const double norm = 1.0 / double(box.size());
  for (auto& c : g.comp) {
    fft.forward(c);
    for_each_mode(box, [&](std::size_t idx, int a, int b, int d) {
      const double k0 = a * dk + shift[0], k1 = b * dk + shift[1], k2 = d * dk + shift[2];
      const cplx s = k0 * k0 + k1 * k1 + k2 * k2 + 2.0 * (zeta[0] * k0 + zeta[1] * k1 + zeta[2] * k2);
      c[idx] *= s * norm;
    });
    fft.backward(c);
  }
  modulate(box, shift, g, +1);
  return g;
}

// ---------------------------------------------------------------------------

std::string NeumannReport::to_json() const {
  nlohmann::json j{{"iterations", iterations},
                   {"converged", converged},
                   {"updates", updates},
                   {"ratios", ratios},
                   {"contraction_proxy", contraction_proxy},
                   {"min_symbol", min_symbol},
                   {"shift", shift},
                   {"remainder_sup", remainder_sup}};
  return j.dump(2);
}

Remainder solve_remainder(const CGOProbe& probe, const PotentialQ& Q, const Vec8& L, const NeumannOptions& opt) {
  const ExtensionBox& box = Q.box();
  Remainder out;
  out.rho = EightField(box.n());
  NeumannReport& rep = out.report;
  if (Q.potential_vanishes()) {
    rep.converged = true;
    return out;
  }
  out.shift = choose_lattice_shift(box, probe.zeta, &rep.min_symbol);
  rep.shift = out.shift;
  // Source e^{-i theta.x} V L.
  EightField Lfield(box.n());
  for (int q = 0; q < 8; ++q) std::fill(Lfield.comp[q].begin(), Lfield.comp[q].end(), L(q));
  EightField src(box.n());
  Q.apply_potential(Lfield, src);
  modulate(box, out.shift, src, -1);

  if (opt.proxy_steps > 0) {
    std::mt19937_64 rng(1234);
    std::normal_distribution<double> nd;
    EightField x(box.n()), vx(box.n());
    for (auto& c : x.comp)
      for (auto& v : c) v = cplx(nd(rng), nd(rng));
    double ratio = 0.0;
    for (int s = 0; s < opt.proxy_steps; ++s) {
      const double before = l2(x);
      Q.apply_potential(x, vx);
      faddeev_periodic(box, probe.zeta, out.shift, vx);
      const double after = l2(vx);
      ratio = before > 0 ? after / before : 0.0;
      if (after == 0.0) break;
      x = vx;
      x *= 1.0 / after;
    }
    rep.contraction_proxy = ratio;
  }

  EightField& rho = out.rho;
  EightField next(box.n());
  for (int it = 1; it <= opt.max_iter; ++it) {
    Q.apply_potential(rho, next);
    next += src;
    faddeev_periodic(box, probe.zeta, out.shift, next);
    next *= -1.0;
    double upd = 0.0;
    for (int q = 0; q < 8; ++q)
      for (std::size_t m = 0; m < next.comp[q].size(); ++m) upd = std::max(upd, std::abs(next.comp[q][m] - rho.comp[q][m]));
    std::swap(rho, next);
    if (!rep.updates.empty() && rep.updates.back() > 0) rep.ratios.push_back(upd / rep.updates.back());
    rep.updates.push_back(upd);
    rep.iterations = it;
    const double size = rho.max_abs();
    if (upd <= opt.tol * size || size == 0.0) {
      rep.converged = true;
      break;
    }
    const auto& r = rep.ratios;
    if (!std::isfinite(upd) || (r.size() >= 3 && r[r.size() - 1] >= 1.0 && r[r.size() - 2] >= 1.0))
      fail(ErrorKind::non_convergence,
           fmt::format("Neumann series for the CGO remainder is not contracting at tau = {:.3g} "
                       "(ratio {:.3f}); increase tau",
                       probe.tau, r.empty() ? 0.0 : r.back()));
  }
  if (!rep.converged)
    fail(ErrorKind::non_convergence,
         fmt::format("Neumann series did not converge in {} steps at tau = {:.3g}", opt.max_iter, probe.tau));
  for (std::size_t m = 0; m < box.size(); ++m)
    if (box.inside_domain(box.position(m)))
      for (const auto& c : rho.comp) rep.remainder_sup = std::max(rep.remainder_sup, std::abs(c[m]));
  return out;
}

// ---------------------------------------------------------------------------

std::string CGODiagnostics::to_json() const {
  nlohmann::json j{{"tau", tau},
                   {"zeta_norm", zeta_norm},
                   {"r_e", r_e},
                   {"r_h", r_h},
                   {"scalar_slots", scalar_slots},
                   {"maxwell_residual", maxwell_residual},
                   {"neumann", nlohmann::json::parse(neumann.to_json())}};
  return j.dump(2);
}

CGOSolution::CGOSolution(CGOProbe probe, std::shared_ptr<const ExtensionBox> box, EightField xp, EightField xs,
                         Vec3 shift, CGODiagnostics diag)
    : probe_(std::move(probe)),
      box_(std::move(box)),
      xp_(std::move(xp)),
      xs_(std::move(xs)),
      shift_(shift),
      diag_(std::move(diag)) {}

std::pair<CVec3, CVec3> CGOSolution::factored(const Vec3& x) const {
  const ExtensionBox& box = *box_;
  const int n = box.n();
  const double h = box.spacing();
  std::array<int, 3> base;
  std::array<std::array<double, 4>, 3> w;
  for (int a = 0; a < 3; ++a) {
    const double u = (x[a] - box.origin()[a]) / h;
    const double fl = std::floor(u);
    base[a] = int(fl) - 1;
    w[a] = cubic_weights(u - fl);
  }
  const bool shifted = !xs_.comp[0].empty();
  std::array<cplx, 8> p{}, s{};
  for (int a = 0; a < 4; ++a) {
    const int i = ((base[0] + a) % n + n) % n;
    for (int b = 0; b < 4; ++b) {
      const int j = ((base[1] + b) % n + n) % n;
      const double wab = w[0][a] * w[1][b];
      for (int c = 0; c < 4; ++c) {
        const int k = ((base[2] + c) % n + n) % n;
        const double wt = wab * w[2][c];
        const std::size_t idx = box.index(i, j, k);
        for (int q = 1; q < 8; ++q) {
          if (q == slot_e) continue;
          p[q] += wt * xp_.comp[q][idx];
          if (shifted) s[q] += wt * xs_.comp[q][idx];
        }
      }
    }
  }
  const cplx ph = shifted ? std::exp(I * (shift_[0] * x[0] + shift_[1] * x[1] + shift_[2] * x[2])) : 0.0;
  CVec3 E, H;
  for (int a = 0; a < 3; ++a) {
    H[a] = p[slot_H + a] + ph * s[slot_H + a];
    E[a] = p[slot_E + a] + ph * s[slot_E + a];
  }
  return {E, H};
}

namespace {
cplx centred_phase(const CGOProbe& p, const ExtensionBox& box, const Vec3& x) {
  const Vec3& c = box.centre();
  return std::exp(I * (p.zeta[0] * (x[0] - c[0]) + p.zeta[1] * (x[1] - c[1]) + p.zeta[2] * (x[2] - c[2])));
}
}  // namespace

CVec3 CGOSolution::E(const Vec3& x) const {
  CVec3 v = factored(x).first;
  const cplx ph = centred_phase(probe_, *box_, x);
  for (auto& c : v) c *= ph;
  return v;
}

CVec3 CGOSolution::H(const Vec3& x) const {
  CVec3 v = factored(x).second;
  const cplx ph = centred_phase(probe_, *box_, x);
  for (auto& c : v) c *= ph;
  return v;
}

FieldPair CGOSolution::on_grid(const Grid& g) const {
  if (g.side() != box_->domain().side()) fail(ErrorKind::layout_mismatch, "grid side differs from the CGO domain");
  return FieldPair(VectorField3C::sample(g, Layout::edge, [&](const Vec3& x) { return E(x); }),
                   VectorField3C::sample(g, Layout::face, [&](const Vec3& x) { return H(x); }));
}

TangentialBoundaryField CGOSolution::electric_trace(const Grid& g) const {
  return TangentialBoundaryField::sample(g, [&](const Vec3& x) { return E(x); });
}

void CGOSolution::export_traces(const std::string& dir, const Grid& g, const std::string& tag) const {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create directory " + dir);
  const FieldPair U = on_grid(g);
  write_field((fs::path(dir) / "cgo_ttrE.mxf").string(), tangential_trace(U.E), Precision::complex128, tag);
  write_field((fs::path(dir) / "cgo_ttrH.mxf").string(), magnetic_trace(U.H), Precision::complex128, tag);
  std::ofstream os(fs::path(dir) / "cgo_probe.json");
  if (!os) fail(ErrorKind::io, "cannot write cgo_probe.json in " + dir);
  nlohmann::json j{{"config_hash", tag},
                   {"probe", nlohmann::json::parse(probe_.to_json())},
                   {"diagnostics", nlohmann::json::parse(diag_.to_json())}};
  os << j.dump(2) << "\n";
}

CGOSolution assemble_cgo(const CGOProbe& probe, const PotentialQ& Q, const NeumannOptions& opt) {
  if (std::abs(probe.omega - Q.omega()) > 1e-12 * Q.omega())
    fail(ErrorKind::invalid_argument, "probe frequency differs from the material frequency");
  const ExtensionBox& box = Q.box();
  const std::size_t N = box.size();
  const Vec8 L = build_L(probe);
  Remainder rem = solve_remainder(probe, Q, L, opt);
  const CV3 z = to_eigen(probe.zeta);
  const bool shifted = !Q.potential_vanishes();

  // Factored Y = (zeta-symbol - W^t)(L + R) + P R, split into periodic and shifted parts.
  EightField yp(box.n()), ys;
  const Vec8 zL = apply_symbol(z, L);
  for (std::size_t m = 0; m < N; ++m) yp.set(m, zL - Q.W(m).transpose() * L);
  if (shifted) {
    ys = spectral_P(box, rem.shift, rem.rho);
    for (std::size_t m = 0; m < N; ++m) {
      const Vec8 r = rem.rho.at(m);
      ys.set(m, ys.at(m) + apply_symbol(z, r) - Q.W(m).transpose() * r);
    }
  }

  CGODiagnostics diag;
  diag.tau = probe.tau;
  diag.zeta_norm = probe.zeta_norm();
  diag.neumann = rem.report;
  const double zn = probe.zeta_norm();
  for (std::size_t m = 0; m < N; ++m) {
    const Vec3 x = box.position(m);
    const bool in = box.inside_domain(x);
    const cplx ph = shifted ? std::exp(I * (rem.shift[0] * x[0] + rem.shift[1] * x[1] + rem.shift[2] * x[2])) : 0.0;
    if (in) {
      const cplx yh = yp.comp[slot_h][m] + (shifted ? ph * ys.comp[slot_h][m] : 0.0);
      const cplx ye = yp.comp[slot_e][m] + (shifted ? ph * ys.comp[slot_e][m] : 0.0);
      diag.scalar_slots = std::max({diag.scalar_slots, std::abs(yh), std::abs(ye)});
    }
    const cplx su = 1.0 / std::sqrt(Q.mu(m)), se = 1.0 / std::sqrt(Q.epsilon(m));
    for (int q = 0; q < 4; ++q) {
      yp.comp[q][m] *= su;
      yp.comp[q + 4][m] *= se;
      if (shifted) {
        ys.comp[q][m] *= su;
        ys.comp[q + 4][m] *= se;
      }
    }
    if (in) {
      for (int a = 0; a < 3; ++a) {
        const cplx E = yp.comp[slot_E + a][m] + (shifted ? ph * ys.comp[slot_E + a][m] : 0.0);
        const cplx H = yp.comp[slot_H + a][m] + (shifted ? ph * ys.comp[slot_H + a][m] : 0.0);
        const cplx lead_e = probe.sigma_e ? se * probe.zeta[a] / zn : 0.0;
        const cplx lead_h = probe.sigma_h ? su * probe.zeta[a] / zn : 0.0;
        diag.r_e = std::max(diag.r_e, std::abs(E - lead_e));
        diag.r_h = std::max(diag.r_h, std::abs(H - lead_h));
      }
    }
  }

  // Maxwell residual of the factored fields on the domain nodes.
  {
    auto curl_of = [&](int slot) {
      auto cp = spectral_curl(box, {0, 0, 0}, {&yp.comp[slot], &yp.comp[slot + 1], &yp.comp[slot + 2]});
      if (shifted) {
        auto cs = spectral_curl(box, rem.shift, {&ys.comp[slot], &ys.comp[slot + 1], &ys.comp[slot + 2]});
        for (std::size_t m = 0; m < N; ++m) {
          const Vec3 x = box.position(m);
          const cplx ph = std::exp(I * (rem.shift[0] * x[0] + rem.shift[1] * x[1] + rem.shift[2] * x[2]));
          for (int a = 0; a < 3; ++a) cp[a][m] += ph * cs[a][m];
        }
      }
      return cp;
    };
    const auto cE = curl_of(slot_E), cH = curl_of(slot_H);
    double res = 0.0, size = 0.0;
    const double w = probe.omega;
    for (std::size_t m = 0; m < N; ++m) {
      const Vec3 x = box.position(m);
      if (!box.inside_domain(x)) continue;
      const cplx ph = shifted ? std::exp(I * (rem.shift[0] * x[0] + rem.shift[1] * x[1] + rem.shift[2] * x[2])) : 0.0;
      CV3 E, H;
      for (int a = 0; a < 3; ++a) {
        E(a) = yp.comp[slot_E + a][m] + (shifted ? ph * ys.comp[slot_E + a][m] : 0.0);
        H(a) = yp.comp[slot_H + a][m] + (shifted ? ph * ys.comp[slot_H + a][m] : 0.0);
      }
      const CV3 r1 = I * cross(z, E) + CV3(cE[0][m], cE[1][m], cE[2][m]) - I * w * Q.mu(m) * H;
      const CV3 r2 = I * cross(z, H) + CV3(cH[0][m], cH[1][m], cH[2][m]) + I * w * Q.epsilon(m) * E;
      res = std::max({res, r1.cwiseAbs().maxCoeff(), r2.cwiseAbs().maxCoeff()});
      size = std::max({size, E.cwiseAbs().maxCoeff(), H.cwiseAbs().maxCoeff()});
    }
    diag.maxwell_residual = size > 0 ? res / (zn * size) : res;
  }
  spdlog::debug("CGO tau={} r_e={:.3e} r_h={:.3e} residual={:.3e}", probe.tau, diag.r_e, diag.r_h,
                diag.maxwell_residual);
  return CGOSolution(probe, std::shared_ptr<const ExtensionBox>(Q.data().box), std::move(yp),
                     shifted ? std::move(ys) : EightField(), rem.shift, std::move(diag));
}

}  // namespace maxnl
