#include "maxnl/krylov.hpp"

#include <cmath>
#include <vector>

namespace maxnl {

namespace {

// Givens rotation zeroing b in (a; b).
void make_rotation(std::complex<double> a, std::complex<double> b, double& c, std::complex<double>& s) {
  const double na = std::abs(a), nb = std::abs(b);
  if (nb == 0.0) {
    c = 1.0;
    s = 0.0;
    return;
  }
  if (na == 0.0) {
    c = 0.0;
    s = std::conj(b) / nb;
    return;
  }
  const double r = std::hypot(na, nb);
  c = na / r;
  s = (a / na) * std::conj(b) / r;
}

}  // namespace

KrylovResult gmres(const LinearMap& A, const LinearMap& precond, const CVec& b, CVec& x, double tol, int restart,
                   int max_iter) {
  using cplx = std::complex<double>;
  KrylovResult res;
  const Eigen::Index N = b.size();
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    x.setZero(N);
    res.converged = true;
    return res;
  }
  if (x.size() != N) x.setZero(N);

  CVec r(N), w(N), z(N);
  std::vector<CVec> V(restart + 1, CVec(N));
  Eigen::MatrixXcd Hm = Eigen::MatrixXcd::Zero(restart + 1, restart);
  std::vector<double> cs(restart);
  std::vector<cplx> sn(restart);
  CVec g(restart + 1);

  auto apply_M = [&](const CVec& in, CVec& out) {
    if (precond)
      precond(in, out);
    else
      out = in;
  };

  A(x, w);
  r = b - w;
  double beta = r.norm();
  res.residual = beta / bnorm;
  while (res.iterations < max_iter) {
    if (res.residual <= tol) {
      res.converged = true;
      return res;
    }
    V[0] = r / beta;
    g.setZero();
    g(0) = beta;
    Hm.setZero();
    int j = 0;
    for (; j < restart && res.iterations < max_iter; ++j) {
      ++res.iterations;
      apply_M(V[j], z);
      A(z, w);
      for (int i = 0; i <= j; ++i) {
        Hm(i, j) = V[i].dot(w);
        w -= Hm(i, j) * V[i];
      }
      Hm(j + 1, j) = w.norm();
      if (std::abs(Hm(j + 1, j)) > 0) V[j + 1] = w / Hm(j + 1, j);
      for (int i = 0; i < j; ++i) {
        const cplx t = cs[i] * Hm(i, j) + sn[i] * Hm(i + 1, j);
        Hm(i + 1, j) = -std::conj(sn[i]) * Hm(i, j) + cs[i] * Hm(i + 1, j);
        Hm(i, j) = t;
      }
      make_rotation(Hm(j, j), Hm(j + 1, j), cs[j], sn[j]);
      Hm(j, j) = cs[j] * Hm(j, j) + sn[j] * Hm(j + 1, j);
      Hm(j + 1, j) = 0.0;
      g(j + 1) = -std::conj(sn[j]) * g(j);
      g(j) = cs[j] * g(j);
      res.residual = std::abs(g(j + 1)) / bnorm;
      if (res.residual <= tol) {
        ++j;
        break;
      }
    }
    // Back substitution and update.
    CVec y = Hm.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
    CVec upd = CVec::Zero(N);
    for (int i = 0; i < j; ++i) upd += y(i) * V[i];
    apply_M(upd, z);
    x += z;
    A(x, w);
    r = b - w;
    beta = r.norm();
    res.residual = beta / bnorm;
    if (beta == 0.0) break;
  }
  res.converged = res.residual <= tol;
  return res;
}

}  // namespace maxnl
