#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "maxnl/grid.hpp"
#include "maxnl/material.hpp"

namespace maxnl {

struct SolverOptions {
  double tol = 1e-10;           // relative residual
  int direct_max_n = 24;        // sparse LU up to this grid size, Krylov above
  double resonance_cap = 1e8;   // condition estimate above this flags a resonance
  int gmres_restart = 60;
  int max_iter = 3000;
  bool estimate_condition = true;
  double norm_p = 4.0;          // exponent used for C_obs
};

struct SolveReport {
  double residual = 0.0;
  int iterations = 0;
  double condition_estimate = 0.0;
  double C_obs = 0.0;
  std::string method;
  double omega = 0.0;
  int n = 0;
  std::string to_json() const;
};

// Time-harmonic Maxwell system on the Yee grid:
//   faces:           curl E - i w mu H = J_m
//   interior edges:  curl H + i w eps E = J_e
// with tangential E prescribed on boundary edges.  H is eliminated and the
// edge system  curl mu^-1 curl E - w^2 eps E = i w J_e + curl mu^-1 J_m  is
// solved for the interior edges.
//
// Field pairs carrying a right-hand side use the same slots as the fields:
// the E slot holds J_e (edges), the H slot holds J_m (faces).
class LinearMaxwellOperator {
 public:
  explicit LinearMaxwellOperator(const MaterialProfile& mat, SolverOptions opt = {});

  const MaterialProfile& material() const;
  const Grid& grid() const;
  double omega() const;
  const SolverOptions& options() const;
  bool direct() const;
  double condition_estimate() const;
  bool resonant() const;

  // (J_e; J_m) = L U.  J_e is zero on boundary edges.
  FieldPair apply(const FieldPair& U) const;

  // L U = 0, ttr(E) = f.
  std::pair<FieldPair, SolveReport> solve_homogeneous(const TangentialBoundaryField& f) const;
  // L U = J, ttr(E) = 0.
  std::pair<FieldPair, SolveReport> solve_inhomogeneous(const FieldPair& J) const;
  std::pair<FieldPair, SolveReport> solve_inhomogeneous(const VectorField3C& J_m, const VectorField3C& J_e) const;
  // L U = J, ttr(E) = f.
  std::pair<FieldPair, SolveReport> solve(const TangentialBoundaryField& f, const FieldPair& J) const;

  struct Impl;

 private:
  std::shared_ptr<const Impl> impl_;
};

struct ResonancePoint {
  double omega;
  double condition;
  bool flagged;
};

// Condition estimates over `count` evenly spaced frequencies in [omega_min, omega_max].
std::vector<ResonancePoint> resonance_scan(const MaterialProfile& mat, double omega_min, double omega_max, int count,
                                           SolverOptions opt = {});

// Discrete cavity frequencies of the unit-coefficient Yee grid below omega_max, sorted.
std::vector<double> discrete_cavity_frequencies(const Grid& g, double omega_max);

}  // namespace maxnl
