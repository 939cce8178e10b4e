#pragma once

#include <string>
#include <vector>

#include "maxnl/forward.hpp"

namespace maxnl {

// U^t_0 = t U0, U^t_k = T(U^t_{k-1}) with T(U) = t U0 + G(F(U)); returns U^t_0 .. U^t_K.
std::vector<FieldPair> compute_iterates(const LinearMaxwellOperator& op, const NonlinearLaw& law, const FieldPair& U0,
                                        double t, int K);
std::vector<FieldPair> compute_iterates(const LinearMaxwellOperator& op, const NonlinearLaw& law,
                                        const TangentialBoundaryField& f, double t, int K);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // rms of log residuals
  std::vector<double> t_values;
  std::vector<double> norms;
};

// Least-squares slope of log y against log t.  Throws zero_signal if every
// y is zero and fit_rejected if the rms log residual exceeds `max_residual`.
SlopeFit fit_loglog(const std::vector<double>& t, const std::vector<double>& y, double max_residual = 0.1);

// 8 log-spaced values in [t_max / 30, t_max] (more if `min_count` asks for it).
std::vector<double> default_t_values(double t_max, int min_count = 8);

struct AsymptoticsOptions {
  double p = 4.0;
  double picard_tol = 1e-14;
  double max_fit_residual = 0.1;
};

// ||V^t_k|| = ||U^t_k - U^t_{k-1}||_W1p against t; expected slope 2k+1.
SlopeFit order_fit_V(const LinearMaxwellOperator& op, const NonlinearLaw& law, const TangentialBoundaryField& f, int k,
                     const std::vector<double>& t_values, const AsymptoticsOptions& opt = {});
// ||U^t - U^t_k||_W1p against t; expected slope 2k+3.
SlopeFit order_fit_remainder(const LinearMaxwellOperator& op, const NonlinearLaw& law,
                             const TangentialBoundaryField& f, int k, const std::vector<double>& t_values,
                             const AsymptoticsOptions& opt = {});

// Coefficient of t^{2k+1} in an odd polynomial fit of U^t_{iterate} over the
// t samples (iterate defaults to k).  Needs at least 2k+2 distinct t values.
FieldPair extract_W_k(const LinearMaxwellOperator& op, const NonlinearLaw& law, const TangentialBoundaryField& f, int k,
                      const std::vector<double>& t_values, int iterate = -1);

// W_0 = U0 and the exact expansion fields W_1 .. W_K of U^t = sum_k t^{2k+1} W_k:
// W_k = G(t^{2k+1} coefficient of F(sum_{l<k} t^{2l+1} W_l)), zero electric trace.
std::vector<FieldPair> expansion_fields(const LinearMaxwellOperator& op, const NonlinearLaw& law, const FieldPair& U0,
                                        int K);

// Relative residual of L W_1 = F_1(U0) on faces and interior edges together
// with the zero-trace condition on W_1's E component.
double wk_equation_residual(const LinearMaxwellOperator& op, const NonlinearLaw& law, const FieldPair& W1,
                            const FieldPair& U0);

struct ExpansionRecord {
  int k = 0;
  std::vector<double> t_values;
  std::vector<double> correction_norms;  // ||V^t_k||
  std::vector<double> remainder_norms;   // ||U^t - U^t_k||
  SlopeFit correction_fit, remainder_fit;
  FieldPair W_k;

  std::string to_json() const;
  void write_csv(const std::string& path, const std::string& tag) const;
};

ExpansionRecord expansion_record(const LinearMaxwellOperator& op, const NonlinearLaw& law,
                                 const TangentialBoundaryField& f, int k, const std::vector<double>& t_values,
                                 const AsymptoticsOptions& opt = {});

}  // namespace maxnl
