#pragma once

#include <string>
#include <vector>

#include "maxnl/material.hpp"
#include "maxnl/maxwell.hpp"

namespace maxnl {

// U0 + G(F(U)).
FieldPair picard_step(const LinearMaxwellOperator& op, const NonlinearLaw& law, const FieldPair& U0,
                      const FieldPair& U);

struct PicardOptions {
  double tol = 1e-10;     // stop when ||U_k - U_{k-1}||_W1p <= tol * ||U_k||_W1p
  int max_iter = 200;
  double p = 4.0;
  int max_halvings = 12;  // probes for the achievable scale on contraction failure
};

struct PicardState {
  FieldPair U;
  std::vector<double> step_norms;
  std::vector<double> ratios;   // step_k / step_{k-1}
  double ball_radius = 0.0;     // max ||U_k||_W1p over the iterates
  double norm_ratio = 0.0;      // ||U||_W1p / ||f||_boundary
  int iterations = 0;
  bool converged = false;

  double max_ratio() const;
  std::string to_json() const;
};

// Solves L U = F(U), ttr(E) = f by Picard iteration from U0 = G_hom(f).
// Throws DataTooLarge (with the largest converging scale 2^-j) when the
// contraction fails, non_convergence when max_iter is reached.
PicardState solve_nonlinear(const LinearMaxwellOperator& op, const NonlinearLaw& law,
                            const TangentialBoundaryField& f, const PicardOptions& opt = {});
// Same, with the linear solution already known.
PicardState solve_nonlinear_from(const LinearMaxwellOperator& op, const NonlinearLaw& law, const FieldPair& U0,
                                 const PicardOptions& opt = {});

struct ThresholdEstimate {
  double C_G = 0.0;        // observed ||G(J)||_W1p / ||J||_W1p
  double C_L = 0.0;        // observed Lipschitz constant of F
  double c_embed = 0.0;    // ||U||_inf <= c ||U||_W1p
  double C_hom = 0.0;      // ||U0||_W1p / ||f||_boundary for the given datum
  double m = 0.0;          // min(s0 / c, (2 C_G C_L)^(-1/2))
  double f_max = 0.0;      // m / (2 C_hom): boundary-norm threshold for f
  std::string to_json() const;
};

ThresholdEstimate estimate_threshold(const LinearMaxwellOperator& op, const NonlinearLaw& law,
                                     const TangentialBoundaryField& f, double p = 4.0, std::uint64_t seed = 1);

struct Measurement {
  double t = 0.0;
  TangentialBoundaryField ttr_E;
  TangentialBoundaryField ttr_H;  // discrete n x H trace
  int iterations = 0;
};

struct MeasurementSet {
  double omega = 0.0;
  int n = 0;
  std::string f_descriptor;
  std::string law_descriptor;
  std::vector<Measurement> items;

  // measurements.json plus one MXFLD1 file per trace, every file tagged with `config_hash`.
  void save(const std::string& dir, const std::string& config_hash) const;
  static MeasurementSet load(const std::string& dir);
};

MeasurementSet measurement_map(const LinearMaxwellOperator& op, const NonlinearLaw& law,
                               const TangentialBoundaryField& f, const std::vector<double>& t_values,
                               const PicardOptions& opt = {}, const std::string& f_descriptor = "");

}  // namespace maxnl
