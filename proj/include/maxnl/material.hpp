#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "maxnl/grid.hpp"

namespace maxnl {

// Spatially varying complex coefficient c(x).
class CoefficientField {
 public:
  enum class Kind { constant, polynomial, gaussian, sampled };

  struct Monomial {
    cplx coef;
    int px = 0, py = 0, pz = 0;
  };

  CoefficientField() = default;

  static CoefficientField constant(cplx value);
  static CoefficientField polynomial(std::vector<Monomial> terms);
  // base + amplitude * exp(-|x - centre|^2 / (2 width^2))
  static CoefficientField gaussian(cplx base, cplx amplitude, const Vec3& centre, double width);
  // Trilinear interpolation of a node or half-lattice field (clamped outside).
  static CoefficientField sampled(std::shared_ptr<const ScalarFieldC> field);

  cplx operator()(const Vec3& x) const;
  Kind kind() const { return kind_; }
  bool is_zero() const;
  bool is_constant() const { return kind_ == Kind::constant; }
  std::string describe() const;

  // Pointwise transforms used when building derived coefficients.
  CoefficientField scaled(cplx s) const;

  cplx base() const { return base_; }
  cplx amplitude() const { return amplitude_; }
  const Vec3& centre() const { return centre_; }
  double width() const { return width_; }
  const std::vector<Monomial>& terms() const { return terms_; }

 private:
  Kind kind_ = Kind::constant;
  cplx base_ = 0.0;
  cplx amplitude_ = 0.0;
  Vec3 centre_{0.0, 0.0, 0.0};
  double width_ = 1.0;
  std::vector<Monomial> terms_;
  std::shared_ptr<const ScalarFieldC> field_;
};

// Samples of a coefficient at edge or face locations of a grid.
struct StaggeredSamples {
  std::array<std::vector<cplx>, 3> comp;
};
StaggeredSamples sample_staggered(const CoefficientField& c, const Grid& g, Layout layout);

struct MaterialProfile {
  Grid grid{8};
  CoefficientField epsilon = CoefficientField::constant(1.0);
  CoefficientField mu = CoefficientField::constant(1.0);
  double lambda_bound = 0.5;
  double M_bound = 10.0;
  double omega = 1.0;

  ScalarFieldC epsilon_field(Location loc = Location::half) const;
  ScalarFieldC mu_field(Location loc = Location::half) const;
};

enum class ClosedForm { none, kerr, saturable };
enum class Which { X, Y };

// One susceptibility, X (electric, coefficients a_k) or Y (magnetic, b_k).
struct Susceptibility {
  ClosedForm form = ClosedForm::none;
  CoefficientField strength;    // kerr / saturable numerator a(x)
  CoefficientField saturation;  // saturable denominator b(x)
  std::vector<CoefficientField> series;  // explicit a_1..a_K when form == none

  static Susceptibility zero() { return {}; }
  static Susceptibility kerr(CoefficientField a);
  static Susceptibility saturable(CoefficientField a, CoefficientField b);
  static Susceptibility from_series(std::vector<CoefficientField> coeffs);

  // k-th series coefficient (k >= 1) evaluated at x.
  cplx coefficient(int k, const Vec3& x) const;
  // Value at x and intensity s; closed form when available, else the truncated series.
  cplx value(const Vec3& x, double s, int k_max) const;
  bool is_zero() const;
  std::string describe() const;
};

class NonlinearLaw {
 public:
  NonlinearLaw() = default;
  NonlinearLaw(Susceptibility x, Susceptibility y, double s0, double M_bound, int k_max = 12);

  static NonlinearLaw linear();
  static NonlinearLaw kerr(CoefficientField a, CoefficientField b, double s0 = 1.0, double M_bound = 10.0);

  const Susceptibility& X() const { return x_; }
  const Susceptibility& Y() const { return y_; }
  const Susceptibility& get(Which w) const { return w == Which::X ? x_ : y_; }
  double s0() const { return s0_; }
  double M_bound() const { return M_; }
  int k_max() const { return k_max_; }
  bool is_linear() const { return x_.is_zero() && y_.is_zero(); }
  std::string describe() const;

  // Truncation bound of the series at intensity s.
  double tail_bound(double s) const;

  // Law with every coefficient multiplied by `scale` (used by scaling tests).
  NonlinearLaw scaled(cplx scale) const;
  // Series truncated to a single order: only a_k, b_k survive.
  NonlinearLaw single_order(int k) const;

  struct Sampled;
  const Sampled& on_grid(const Grid& g) const;

 private:
  Susceptibility x_, y_;
  double s0_ = 1.0;
  double M_ = 10.0;
  int k_max_ = 12;
  mutable std::shared_ptr<std::mutex> cache_mutex_ = std::make_shared<std::mutex>();
  mutable std::vector<std::shared_ptr<Sampled>> cache_;
};

// Coefficients of a law sampled on a grid: X on edges, Y on faces.
struct NonlinearLaw::Sampled {
  Grid grid;
  // For kerr/saturable: strength and saturation; for series: a_1..a_K.
  StaggeredSamples x_strength, x_saturation, y_strength, y_saturation;
  std::vector<StaggeredSamples> x_series, y_series;
};

struct EvalReport {
  bool closed_form = false;
  double tail_bound = 0.0;
  double max_intensity = 0.0;
};

// X or Y evaluated at the positions of the intensity field `s`.
ScalarFieldC eval_X(const NonlinearLaw& law, Which which, const ScalarFieldC& s, EvalReport* report = nullptr);

// F(U) = (Y(|H|^2)H ; -X(|E|^2)E).  The result's E slot holds the edge
// forcing J_e = -X E and its H slot the face forcing J_m = Y H.
FieldPair eval_F(const NonlinearLaw& law, const FieldPair& U, EvalReport* report = nullptr);
// F_k(U) = (b_k |H|^{2k} H ; -a_k |E|^{2k} E), same slot convention.
FieldPair eval_F_k(const NonlinearLaw& law, int k, const FieldPair& U);

struct AssumptionCheck {
  std::string name;
  bool pass = true;
  double measured = 0.0;
  double bound = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<AssumptionCheck> checks;
  bool all_pass() const;
  std::string to_json() const;
};

ValidationReport validate_assumptions(const MaterialProfile& mat, const NonlinearLaw& law, int s_samples = 16);

// ||F(U)-F(U')||_{W1p} / ((||U||^2 + ||U'||^2) ||U-U'||_{W1p}); 0 when U == U'.
// Throws envelope_violation if either norm exceeds `norm_cap` (pass s0/c).
double lipschitz_check(const NonlinearLaw& law, const FieldPair& U, const FieldPair& Uprime, double p,
                       double norm_cap);

// ||F(U)||_{W1p} / ||U||_{W1p}^3.
double cubic_constant(const NonlinearLaw& law, const FieldPair& U, double p);

}  // namespace maxnl
