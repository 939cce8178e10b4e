#pragma once

#include <functional>

#include <Eigen/Dense>

namespace maxnl {

using CVec = Eigen::VectorXcd;
using LinearMap = std::function<void(const CVec& in, CVec& out)>;

struct KrylovResult {
  int iterations = 0;
  double residual = 0.0;  // ||b - A x|| / ||b||
  bool converged = false;
};

// Restarted GMRES with right preconditioning: solves A M y = b, x = M y.
// `x` holds the initial guess on entry.  An empty `precond` means identity.
KrylovResult gmres(const LinearMap& A, const LinearMap& precond, const CVec& b, CVec& x, double tol, int restart,
                   int max_iter);

}  // namespace maxnl
