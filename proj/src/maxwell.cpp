#include "maxnl/maxwell.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Sparse>
#include <Eigen/UmfPackSupport>
#include <fftw3.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "maxnl/calculus.hpp"
#include "maxnl/errors.hpp"
#include "maxnl/krylov.hpp"

namespace maxnl {

using SpMat = Eigen::SparseMatrix<cplx, Eigen::ColMajor, int>;

std::string SolveReport::to_json() const {
  nlohmann::json j{{"residual", residual},
                   {"iterations", iterations},
                   {"condition_estimate", condition_estimate},
                   {"C_obs", C_obs},
                   {"method", method},
                   {"omega", omega},
                   {"n", n}};
  return j.dump(2);
}

namespace {

struct Indexing {
  std::array<std::size_t, 3> edge_off{}, face_off{};
  std::size_t n_edges = 0, n_faces = 0;
  std::vector<int> interior;       // interior position -> edge index
  std::vector<int> to_interior;    // edge index -> interior position or -1

  explicit Indexing(const Grid& g) {
    for (int c = 0; c < 3; ++c) {
      edge_off[c] = n_edges;
      n_edges += component_shape(g, Layout::edge, c).size();
      face_off[c] = n_faces;
      n_faces += component_shape(g, Layout::face, c).size();
    }
    to_interior.assign(n_edges, -1);
    for (int c = 0; c < 3; ++c) {
      const Shape s = component_shape(g, Layout::edge, c);
      for (int i = 0; i < s.dims[0]; ++i)
        for (int j = 0; j < s.dims[1]; ++j)
          for (int k = 0; k < s.dims[2]; ++k)
            if (!is_boundary_edge(g, c, i, j, k)) {
              const int e = int(edge_off[c] + s.index(i, j, k));
              to_interior[e] = int(interior.size());
              interior.push_back(e);
            }
    }
  }
};

CVec flatten(const VectorField3C& f) {
  CVec v(f.total_size());
  std::size_t off = 0;
  for (int c = 0; c < 3; ++c) {
    auto s = f.comp(c);
    std::copy(s.begin(), s.end(), v.data() + off);
    off += s.size();
  }
  return v;
}

void unflatten(const CVec& v, VectorField3C& f) {
  std::size_t off = 0;
  for (int c = 0; c < 3; ++c) {
    auto s = f.comp(c);
    std::copy(v.data() + off, v.data() + off + s.size(), s.begin());
    off += s.size();
  }
}

CVec flatten_samples(const StaggeredSamples& s) {
  std::size_t total = s.comp[0].size() + s.comp[1].size() + s.comp[2].size();
  CVec v(total);
  std::size_t off = 0;
  for (int c = 0; c < 3; ++c) {
    std::copy(s.comp[c].begin(), s.comp[c].end(), v.data() + off);
    off += s.comp[c].size();
  }
  return v;
}

// Exact curl from edges to faces as a sparse matrix.
SpMat curl_matrix(const Grid& g, const Indexing& ix) {
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(4 * ix.n_faces);
  const double inv_h = 1.0 / g.h();
  for (int c = 0; c < 3; ++c) {
    const int a = (c + 1) % 3, b = (c + 2) % 3;
    const Shape fs = component_shape(g, Layout::face, c);
    const Shape sa = component_shape(g, Layout::edge, a);
    const Shape sb = component_shape(g, Layout::edge, b);
    for (int i = 0; i < fs.dims[0]; ++i)
      for (int j = 0; j < fs.dims[1]; ++j)
        for (int k = 0; k < fs.dims[2]; ++k) {
          const int row = int(ix.face_off[c] + fs.index(i, j, k));
          std::array<int, 3> p{i, j, k};
          std::array<int, 3> pa = p, pb = p;
          pa[a] += 1;
          pb[b] += 1;
          t.emplace_back(row, int(ix.edge_off[b] + sb.index(pa[0], pa[1], pa[2])), inv_h);
          t.emplace_back(row, int(ix.edge_off[b] + sb.index(i, j, k)), -inv_h);
          t.emplace_back(row, int(ix.edge_off[a] + sa.index(pb[0], pb[1], pb[2])), -inv_h);
          t.emplace_back(row, int(ix.edge_off[a] + sa.index(i, j, k)), inv_h);
        }
  }
  SpMat C(int(ix.n_faces), int(ix.n_edges));
  C.setFromTriplets(t.begin(), t.end());
  return C;
}

// Exact inverse of the constant-coefficient interior edge operator
//   (curl curl) / mu - w^2 eps
// diagonalised by cosine transforms along each component and sine
// transforms across it.
class YeePreconditioner {
 public:
  YeePreconditioner(int n, double h, double omega, cplx eps, cplx mu) : n_(n), h_(h), w2eps_(omega * omega * eps), inv_mu_(1.0 / mu) {
    for (int c = 0; c < 3; ++c) {
      int dims[3];
      fftw_r2r_kind fwd[3], inv[3];
      count_[c] = 1;
      for (int a = 0; a < 3; ++a) {
        dims[a] = a == c ? n : n - 1;
        fwd[a] = a == c ? FFTW_REDFT10 : FFTW_RODFT00;
        inv[a] = a == c ? FFTW_REDFT01 : FFTW_RODFT00;
        count_[c] *= dims[a];
        dims_[c][a] = dims[a];
      }
      std::vector<double> scratch(count_[c]);
      fwd_[c] = fftw_plan_r2r_3d(dims[0], dims[1], dims[2], scratch.data(), scratch.data(), fwd[0], fwd[1], fwd[2],
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
      inv_[c] = fftw_plan_r2r_3d(dims[0], dims[1], dims[2], scratch.data(), scratch.data(), inv[0], inv[1], inv[2],
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
      if (!fwd_[c] || !inv_[c]) fail(ErrorKind::construction, "FFTW plan creation failed");
    }
    for (int p = 0; p < n; ++p) ktil_.push_back(2.0 / h * std::sin(p * std::numbers::pi / (2.0 * n)));
  }
  ~YeePreconditioner() {
    for (int c = 0; c < 3; ++c) {
      fftw_destroy_plan(fwd_[c]);
      fftw_destroy_plan(inv_[c]);
    }
  }
  YeePreconditioner(const YeePreconditioner&) = delete;
  YeePreconditioner& operator=(const YeePreconditioner&) = delete;

  void apply(const CVec& in, CVec& out) const {
    std::array<std::vector<double>, 3> re, im;
    std::size_t off = 0;
    for (int c = 0; c < 3; ++c) {
      re[c].resize(count_[c]);
      im[c].resize(count_[c]);
      for (std::size_t m = 0; m < count_[c]; ++m) {
        re[c][m] = in[off + m].real();
        im[c][m] = in[off + m].imag();
      }
      fftw_execute_r2r(fwd_[c], re[c].data(), re[c].data());
      fftw_execute_r2r(fwd_[c], im[c].data(), im[c].data());
      off += count_[c];
    }
    const double scale = 1.0 / std::pow(2.0 * n_, 3);
#pragma omp parallel for schedule(static)
    for (int p = 0; p < n_; ++p)
      for (int q = 0; q < n_; ++q)
        for (int r = 0; r < n_; ++r) {
          const int mode[3] = {p, q, r};
          const double k[3] = {ktil_[p], ktil_[q], ktil_[r]};
          const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
          int comps[3], m = 0;
          std::size_t pos[3];
          for (int c = 0; c < 3; ++c) {
            bool present = true;
            int idx[3];
            for (int a = 0; a < 3; ++a) {
              if (a == c) {
                idx[a] = mode[a];
              } else {
                present = present && mode[a] >= 1;
                idx[a] = mode[a] - 1;
              }
            }
            if (!present) continue;
            comps[m] = c;
            pos[m] = (std::size_t(idx[0]) * dims_[c][1] + idx[1]) * dims_[c][2] + idx[2];
            ++m;
          }
          if (m == 0) continue;
          Eigen::Matrix3cd B = Eigen::Matrix3cd::Zero();
          Eigen::Vector3cd v = Eigen::Vector3cd::Zero();
          for (int s = 0; s < m; ++s) {
            v(s) = cplx(re[comps[s]][pos[s]], im[comps[s]][pos[s]]);
            for (int t = 0; t < m; ++t)
              B(s, t) = ((s == t ? k2 : 0.0) - k[comps[s]] * k[comps[t]]) * inv_mu_ - (s == t ? w2eps_ : 0.0);
          }
          Eigen::Vector3cd x = Eigen::Vector3cd::Zero();
          if (m == 1)
            x(0) = v(0) / B(0, 0);
          else if (m == 2)
            x.head<2>() = B.topLeftCorner<2, 2>().inverse() * v.head<2>();
          else
            x = B.inverse() * v;
          for (int s = 0; s < m; ++s) {
            re[comps[s]][pos[s]] = x(s).real() * scale;
            im[comps[s]][pos[s]] = x(s).imag() * scale;
          }
        }
    out.resize(in.size());
    off = 0;
    for (int c = 0; c < 3; ++c) {
      fftw_execute_r2r(inv_[c], re[c].data(), re[c].data());
      fftw_execute_r2r(inv_[c], im[c].data(), im[c].data());
      for (std::size_t m = 0; m < count_[c]; ++m) out[off + m] = cplx(re[c][m], im[c][m]);
      off += count_[c];
    }
  }

 private:
  int n_;
  double h_;
  cplx w2eps_, inv_mu_;
  std::array<std::size_t, 3> count_{};
  std::array<std::array<int, 3>, 3> dims_{};
  std::array<fftw_plan, 3> fwd_{}, inv_{};
  std::vector<double> ktil_;
};

double column_norm1(const SpMat& A) {
  double m = 0;
  for (int j = 0; j < A.outerSize(); ++j) {
    double s = 0;
    for (SpMat::InnerIterator it(A, j); it; ++it) s += std::abs(it.value());
    m = std::max(m, s);
  }
  return m;
}

}  // namespace

struct LinearMaxwellOperator::Impl {
  MaterialProfile mat;
  SolverOptions opt;
  Indexing ix;
  SpMat C, K, K_II;
  CVec eps_e, mu_f;
  std::unique_ptr<Eigen::UmfPackLU<SpMat>> lu;
  std::unique_ptr<YeePreconditioner> pre;
  double cond = 0.0;
  bool direct = true;

  Impl(const MaterialProfile& m, SolverOptions o) : mat(m), opt(o), ix(m.grid) {}

  // Solves K_II x = b.  Returns iterations (0 for direct) and relative residual.
  std::pair<int, double> solve_interior(const CVec& b, CVec& x) const {
    if (b.norm() == 0.0) {
      x.setZero(b.size());
      return {0, 0.0};
    }
    if (direct) {
      x = lu->solve(b);
      double r = (K_II * x - b).norm() / b.norm();
      for (int refine = 0; refine < 2 && r > opt.tol && std::isfinite(r); ++refine) {
        x += lu->solve(CVec(b - K_II * x));
        r = (K_II * x - b).norm() / b.norm();
      }
      if (!std::isfinite(r)) fail(ErrorKind::resonance, "sparse LU produced a non-finite solution");
      return {0, r};
    }
    x.setZero(b.size());
    auto A = [this](const CVec& in, CVec& out) { out = K_II * in; };
    auto M = [this](const CVec& in, CVec& out) { pre->apply(in, out); };
    const KrylovResult kr = gmres(A, M, b, x, opt.tol, opt.gmres_restart, opt.max_iter);
    if (!kr.converged)
      fail(ErrorKind::non_convergence,
           fmt::format("GMRES stalled at relative residual {:.3e} after {} iterations", kr.residual, kr.iterations));
    return {kr.iterations, kr.residual};
  }

  // Higham's 1-norm estimate of K_II^{-1}; K_II is complex symmetric, so the
  // adjoint solve is conj(K^{-1} conj(v)).
  double estimate_inverse_norm() const {
    const Eigen::Index N = K_II.rows();
    CVec x = CVec::Constant(N, 1.0 / double(N)), y, z;
    double est = 0.0;
    Eigen::Index last = -1;
    for (int it = 0; it < 5; ++it) {
      solve_interior(x, y);
      const double ny = y.lpNorm<1>();
      if (!std::isfinite(ny)) return std::numeric_limits<double>::infinity();
      if (it > 0 && ny <= est) break;
      est = ny;
      CVec xi(N);
      for (Eigen::Index m = 0; m < N; ++m) xi(m) = std::abs(y(m)) > 0 ? y(m) / std::abs(y(m)) : cplx(1.0);
      CVec xic = xi.conjugate();
      solve_interior(xic, z);
      z = z.conjugate();
      Eigen::Index jmax;
      z.cwiseAbs().maxCoeff(&jmax);
      if (jmax == last) break;
      last = jmax;
      x.setZero();
      x(jmax) = 1.0;
    }
    // Alternating-sign test vector guards against underestimates.
    CVec alt(N);
    for (Eigen::Index m = 0; m < N; ++m) alt(m) = (m % 2 ? -1.0 : 1.0) * (1.0 + double(m) / double(N - 1 > 0 ? N - 1 : 1));
    solve_interior(alt, y);
    est = std::max(est, 2.0 * y.lpNorm<1>() / (3.0 * double(N)));
    return est;
  }
};

LinearMaxwellOperator::LinearMaxwellOperator(const MaterialProfile& mat, SolverOptions opt) {
  const Grid& g = mat.grid;
  if (!g.staggered()) fail(ErrorKind::invalid_argument, "Maxwell solver needs a staggered grid");
  if (g.n() < 2) fail(ErrorKind::invalid_argument, "grid must have at least 2 cells per side");
  if (!(mat.omega > 0)) fail(ErrorKind::invalid_argument, "omega must be positive");
  auto impl = std::make_shared<Impl>(mat, opt);
  const double w = mat.omega;

  impl->C = curl_matrix(g, impl->ix);
  impl->eps_e = flatten_samples(sample_staggered(mat.epsilon, g, Layout::edge));
  impl->mu_f = flatten_samples(sample_staggered(mat.mu, g, Layout::face));
  const CVec inv_mu = impl->mu_f.cwiseInverse();
  SpMat Ct = impl->C.transpose();
  SpMat K = Ct * inv_mu.asDiagonal() * impl->C;
  for (int e = 0; e < int(impl->ix.n_edges); ++e) K.coeffRef(e, e) -= w * w * impl->eps_e(e);
  K.makeCompressed();
  impl->K = std::move(K);

  const auto& interior = impl->ix.interior;
  SpMat P(int(interior.size()), int(impl->ix.n_edges));
  {
    std::vector<Eigen::Triplet<cplx>> t;
    for (int m = 0; m < int(interior.size()); ++m) t.emplace_back(m, interior[m], 1.0);
    P.setFromTriplets(t.begin(), t.end());
  }
  impl->K_II = P * impl->K * SpMat(P.transpose());
  impl->K_II.makeCompressed();

  impl->direct = g.n() <= opt.direct_max_n;
  if (impl->direct) {
    impl->lu = std::make_unique<Eigen::UmfPackLU<SpMat>>();
    impl->lu->compute(impl->K_II);
    if (impl->lu->info() != Eigen::Success) {
      impl->cond = std::numeric_limits<double>::infinity();
      impl->direct = true;
      spdlog::warn("sparse LU failed at omega={} (singular system)", w);
    }
  } else {
    impl->pre = std::make_unique<YeePreconditioner>(g.n(), g.h(), w, impl->eps_e.mean(), impl->mu_f.mean());
  }
  if (opt.estimate_condition && std::isfinite(impl->cond)) {
    try {
      impl->cond = column_norm1(impl->K_II) * impl->estimate_inverse_norm();
    } catch (const Error&) {
      impl->cond = std::numeric_limits<double>::infinity();
    }
  }
  spdlog::debug("Maxwell operator n={} omega={} method={} cond~{:.3e}", g.n(), w, impl->direct ? "lu" : "gmres",
                impl->cond);
  impl_ = std::move(impl);
}

const MaterialProfile& LinearMaxwellOperator::material() const { return impl_->mat; }
const Grid& LinearMaxwellOperator::grid() const { return impl_->mat.grid; }
double LinearMaxwellOperator::omega() const { return impl_->mat.omega; }
const SolverOptions& LinearMaxwellOperator::options() const { return impl_->opt; }
bool LinearMaxwellOperator::direct() const { return impl_->direct; }
double LinearMaxwellOperator::condition_estimate() const { return impl_->cond; }
bool LinearMaxwellOperator::resonant() const { return !(impl_->cond <= impl_->opt.resonance_cap); }

FieldPair LinearMaxwellOperator::apply(const FieldPair& U) const {
  const Impl& I = *impl_;
  if (U.grid() != grid()) fail(ErrorKind::layout_mismatch, "field grid differs from operator grid");
  const cplx iw(0.0, omega());
  const CVec e = flatten(U.E), h = flatten(U.H);
  CVec jm = I.C * e - iw * I.mu_f.cwiseProduct(h);
  CVec je = I.C.transpose() * h + iw * I.eps_e.cwiseProduct(e);
  for (std::size_t m = 0; m < I.ix.n_edges; ++m)
    if (I.ix.to_interior[m] < 0) je(m) = 0.0;
  FieldPair out(grid());
  unflatten(je, out.E);
  unflatten(jm, out.H);
  return out;
}

std::pair<FieldPair, SolveReport> LinearMaxwellOperator::solve(const TangentialBoundaryField& f,
                                                               const FieldPair& J) const {
  const Impl& I = *impl_;
  const Grid& g = grid();
  if (f.grid() != g || J.grid() != g) fail(ErrorKind::layout_mismatch, "data grid differs from operator grid");
  if (resonant())
    fail(ErrorKind::resonance,
         fmt::format("omega={} is numerically resonant (condition estimate {:.3e})", omega(), I.cond));
  const cplx iw(0.0, omega());

  const CVec eb = flatten(f.to_edge_field());
  const CVec je = flatten(J.E), jm = flatten(J.H);
  const CVec full_rhs = iw * je + I.C.transpose() * jm.cwiseQuotient(I.mu_f) - I.K * eb;
  CVec b(I.ix.interior.size());
  for (std::size_t m = 0; m < I.ix.interior.size(); ++m) b(m) = full_rhs(I.ix.interior[m]);

  CVec x;
  const auto [iters, resid] = I.solve_interior(b, x);
  if (!(resid <= I.opt.tol))
    fail(ErrorKind::non_convergence, fmt::format("linear solve residual {:.3e} above tolerance", resid));

  CVec e = eb;
  for (std::size_t m = 0; m < I.ix.interior.size(); ++m) e(I.ix.interior[m]) = x(m);
  const CVec h = (I.C * e - jm).cwiseQuotient(iw * I.mu_f);

  FieldPair U(g);
  unflatten(e, U.E);
  unflatten(h, U.H);

  SolveReport rep;
  rep.residual = resid;
  rep.iterations = iters;
  rep.condition_estimate = I.cond;
  rep.method = I.direct ? "sparse-lu" : "gmres-fft";
  rep.omega = omega();
  rep.n = g.n();
  const double p = I.opt.norm_p;
  const double fb = norm_boundary(f, p);
  const double jn = norm_Lp(J.E, p) + norm_Lp(J.H, p);
  const double denom = fb > 0 ? fb : jn;
  rep.C_obs = denom > 0 ? norm_W1p(U, p) / denom : 0.0;
  return {std::move(U), rep};
}

std::pair<FieldPair, SolveReport> LinearMaxwellOperator::solve_homogeneous(const TangentialBoundaryField& f) const {
  return solve(f, FieldPair(grid()));
}

std::pair<FieldPair, SolveReport> LinearMaxwellOperator::solve_inhomogeneous(const FieldPair& J) const {
  return solve(TangentialBoundaryField(grid()), J);
}

std::pair<FieldPair, SolveReport> LinearMaxwellOperator::solve_inhomogeneous(const VectorField3C& J_m,
                                                                             const VectorField3C& J_e) const {
  if (J_m.layout() != Layout::face || J_e.layout() != Layout::edge)
    fail(ErrorKind::layout_mismatch, "J_m lives on faces and J_e on edges");
  return solve_inhomogeneous(FieldPair(J_e, J_m));
}

std::vector<ResonancePoint> resonance_scan(const MaterialProfile& mat, double omega_min, double omega_max, int count,
                                           SolverOptions opt) {
  if (count < 1) fail(ErrorKind::invalid_argument, "scan needs at least one frequency");
  opt.estimate_condition = true;
  std::vector<ResonancePoint> out(count);
  for (int m = 0; m < count; ++m) {
    const double w = count == 1 ? omega_min : omega_min + (omega_max - omega_min) * m / double(count - 1);
    if (!(w > 0)) {
      out[m] = {w, std::numeric_limits<double>::infinity(), true};
      continue;
    }
    MaterialProfile mw = mat;
    mw.omega = w;
    LinearMaxwellOperator op(mw, opt);
    out[m] = {w, op.condition_estimate(), op.resonant()};
  }
  return out;
}

std::vector<double> discrete_cavity_frequencies(const Grid& g, double omega_max) {
  const int n = g.n();
  std::vector<double> k(n);
  for (int p = 0; p < n; ++p) k[p] = 2.0 / g.h() * std::sin(p * std::numbers::pi / (2.0 * n));
  std::vector<double> out;
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q)
      for (int r = 0; r < n; ++r) {
        if ((p > 0) + (q > 0) + (r > 0) < 2) continue;
        const double w = std::sqrt(k[p] * k[p] + k[q] * k[q] + k[r] * k[r]);
        if (w <= omega_max) out.push_back(w);
      }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end(), [](double a, double b) { return std::abs(a - b) < 1e-12 * b; }),
            out.end());
  return out;
}

}  // namespace maxnl
