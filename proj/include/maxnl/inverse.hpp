#pragma once

// Recovery of the nonlinear coefficients a_k, b_k from boundary data: CGO
// probe families, multilinear polarization, the boundary integral identity
// and Fourier inversion over a lattice of frequencies.

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "maxnl/cgo.hpp"
#include "maxnl/forward.hpp"

namespace maxnl {

// Four complex frequencies with zeta_j.zeta_j = omega^2 whose combination
// zeta_0 + zeta_1 + k (zeta_2 - conj zeta_3) equals xi.  Built for xi along e1
// and rotated; `frame` holds the images of e1, e2, e3.
struct ZetaFamily {
  Vec3 xi{0, 0, 0};
  double tau = 0.0, omega = 1.0;
  int k = 1;
  double decay = 0.0;  // sqrt(tau^2 + |xi|^2 / 4)
  std::array<CVec3, 4> zeta{};
  std::array<Vec3, 3> frame{};

  static ZetaFamily make(const Vec3& xi, double tau, double omega, int k = 1);
  double xi_norm() const;
  // max over the cube of side `side` centred at the origin of |e^{i zeta_j.x}|, as a log.
  double growth(int j, double side) const;
  std::string to_json() const;
};

struct ZetaIdentities {
  std::array<cplx, 4> self{};  // zeta_j.zeta_j
  std::array<double, 4> norm2{};
  cplx z0z1, z2z3c, z0z2, z1z3;
  CVec3 phase{};                // zeta_0 + zeta_1 + k (zeta_2 - conj zeta_3)
  double max_defect = 0.0;      // largest relative defect against the closed forms
  double literal_norm_gap = 0.0;  // |zeta|^2 - (2 tau^2 + omega^2 + xi^2 / 4), relative
  std::string to_json() const;
};
ZetaIdentities check_zeta_identities(const ZetaFamily& f);

// Sampling plan for the coefficient of t1 t2^k conj(t3)^k.  phases[2] == 1
// fixes t3 = r > 0 and relies on F(e^{i a} t) = e^{i a} F(t).  Radii beyond the
// first separate the target degree 2k+1 from degrees 2k+3, 2k+5, ...
struct PolarizationPlan {
  int k = 1;
  std::array<int, 3> phases{4, 4, 1};
  std::vector<double> radii{1.0};

  static PolarizationPlan for_order(int k, bool gauge = true, std::vector<double> radii = {1.0});
  bool gauge() const { return phases[2] == 1; }
  int target_degree() const { return 2 * k + 1; }
  std::size_t size() const;
  std::vector<std::array<cplx, 3>> points() const;
  // Lowest total degree of a monomial whose phase signature aliases onto the target.
  int alias_degree() const;
  // Throws invalid_argument when an alias has the target degree.
  void validate() const;
};

using VectorOracle = std::function<std::vector<cplx>(const std::array<cplx, 3>&)>;
// `values[i]` is the oracle at points()[i].
std::vector<cplx> polarization_reduce(const PolarizationPlan& plan, const std::vector<std::vector<cplx>>& values);
std::vector<cplx> polarization_extract(const VectorOracle& oracle, const PolarizationPlan& plan);
cplx polarization_extract(const std::function<cplx(const std::array<cplx, 3>&)>& oracle, const PolarizationPlan& plan);

// Boundary side of the integral identity,
//   I_k = <ttr e0, m(H_k) - m(H'_k)> - lower_order,
// which equals h^3 [sum db |H0|^{2k} H0.h0 - sum da |E0|^{2k} E0.e0] when the
// coefficients below k agree (lower_order = 0).  For k >= 2 the correction
// must be given explicitly.
cplx probe_integral_I_k(int k, const TangentialBoundaryField& ttrH_k, const TangentialBoundaryField& ttrH_k_ref,
                        const FieldPair& u0, std::optional<cplx> lower_order = std::nullopt);
// Volume side computed directly from the two laws.
cplx volume_integral_I_k(const NonlinearLaw& law, const NonlinearLaw& law_ref, int k, const FieldPair& U0,
                         const FieldPair& u0);

struct LeadingProductReport {
  double tau = 0.0;
  int k = 1;
  double main_deviation = 0.0;   // sup |e0.e1 (e2.e3*)^k e^{-i xi.(x-c)} + sigma |eps|^-k eps^-1|
  double cross_term = 0.0;       // sup |e0.e2 (e1.e3) (e2.e3*)^{k-1}|
  double full_deviation = 0.0;   // polarization coefficient against -(k+1) sigma |eps|^-k eps^-1
  double main_scale = 0.0;       // sup of the leading term
  std::string to_json() const;
};

// Evaluates the leading products from four CGO solutions at the nodes of
// `g` lying at least `margin` (fraction of the side) inside the domain.
LeadingProductReport leading_product_checks(const ZetaFamily& family, const std::array<const CGOSolution*, 4>& probes,
                                            const MaterialProfile& mat, double margin = 0.0);

enum class MeasurementMode { expansion, converged };
enum class FactorMode { kernel, diagonal, leading };

const char* to_string(MeasurementMode m);
const char* to_string(FactorMode m);

struct ReconstructionConfig {
  int k = 1;
  Which which = Which::X;        // X: a_k with electric probes, Y: b_k with magnetic probes
  double lattice_radius2 = 6.0;  // xi = 2 pi m / side with |m|^2 <= this
  bool assume_real = true;       // measure one of each +-xi pair
  std::vector<double> taus{8.0};  // caps; several values extrapolate c0 + c1 / tau in leading mode
  double growth_floor = 1e-9;    // smallest allowed product of probe normalizations
  MeasurementMode mode = MeasurementMode::expansion;
  FactorMode factor = FactorMode::kernel;
  double amplitude = 0.02;                  // max |t_j u_j| in converged mode
  std::vector<double> radii{1.0, 0.5};      // converged mode radii (times amplitude)
  double regularization = 1e-3;             // relative singular-value cutoff of the lattice solve
  double lower_order_floor = 1e-12;         // skip lower-order simulation below this
  ExtensionSpec box;
  NeumannOptions neumann;
  PicardOptions picard{1e-15, 200, 4.0, 12};

  // Lattice of integer frequency vectors (half of it when assume_real).
  std::vector<std::array<int, 3>> lattice() const;
  void validate(const Grid& g) const;
  std::string to_json() const;
};

// Probe data for one frequency: the family, its tau and the normalised
// electric traces f_0..f_3 applied at the boundary.
struct ProbeDictionary {
  std::array<int, 3> m{0, 0, 0};
  ZetaFamily family;
  std::vector<TangentialBoundaryField> traces;  // f_0..f_3
  std::array<double, 4> scale{1, 1, 1, 1};  // normalisation applied to each raw CGO trace
  bool feasible = true;                     // false when tau had to drop to 0 and the budget still failed
};

// tau is the largest value <= tau_cap whose probe normalisations keep their
// product above cfg.growth_floor.  `Q` is only used for non-vacuum media
// (assembled on demand when null).
ProbeDictionary build_dictionary(const MaterialProfile& mat, const std::array<int, 3>& m,
                                 const ReconstructionConfig& cfg, double tau_cap, int k,
                                 const PotentialQ* Q = nullptr);

// Boundary measurements of one medium for the probe data of every frequency:
// for each sample t of the polarization plan the datum sum_j t_j f_j and the
// measured magnetic trace (the order-(2k+1) expansion trace in expansion mode).
struct FrequencyMeasurements {
  std::array<int, 3> m{0, 0, 0};
  double tau = 0.0;
  int tau_slot = 0;  // index into the configured tau caps
  int k = 1;
  std::vector<std::array<cplx, 3>> t;
  std::vector<TangentialBoundaryField> ttrH;
};

struct InverseMeasurementSet {
  MeasurementMode mode = MeasurementMode::expansion;
  double omega = 1.0;
  int n = 0;
  std::string law_descriptor;
  std::vector<FrequencyMeasurements> items;

  const FrequencyMeasurements* find(const std::array<int, 3>& m, int k, int tau_slot = 0) const;
  void save(const std::string& dir, const std::string& config_hash) const;
  static InverseMeasurementSet load(const std::string& dir);
};

// The synthetic experiment: applies the dictionary to a medium with the
// given law through the forward solver.  Orders 1..K are measured.
InverseMeasurementSet synthesize_measurements(const LinearMaxwellOperator& op, const NonlinearLaw& law,
                                              const ReconstructionConfig& cfg, int K);

struct FrequencyRecord {
  std::array<int, 3> m{0, 0, 0};
  Vec3 xi{0, 0, 0};
  double tau = 0.0;
  bool feasible = true;
  cplx data = 0.0;         // I_k at this frequency
  cplx factor = 0.0;       // diagonal kernel entry (or leading factor)
  cplx fourier = 0.0;      // estimated coefficient of the lattice mode
  double lower_order = 0.0;  // |correction| removed from the data
};

struct CoefficientEstimate {
  int k = 1;
  Which which = Which::X;
  ScalarFieldC estimate;  // delta coefficient on the nodes
  std::vector<FrequencyRecord> frequencies;
  double solve_residual = 0.0;    // relative residual of the lattice system
  double condition = 0.0;         // condition number of the lattice system
  double imag_ratio = 0.0;        // ||Im est|| / ||est||
  std::optional<double> relative_error;  // against ground truth when known
  std::optional<double> truth_norm;
  std::string status = "ok";
  // The recovered expansion evaluated anywhere (empty for stages without data).
  std::function<cplx(const Vec3&)> evaluate;

  explicit CoefficientEstimate(const Grid& g) : estimate(g, Location::node) {}
  std::string to_json() const;
  void write(const std::string& dir, const std::string& config_hash) const;
};

// Recovers delta coefficient = target - reference at order k from the two
// measurement sets; `lower` holds the estimates of orders below k, which are
// fed into the simulated lower-order correction together with the reference law.
CoefficientEstimate fourier_recover(const InverseMeasurementSet& target, const InverseMeasurementSet& reference,
                                    const MaterialProfile& mat, const NonlinearLaw& reference_law,
                                    const ReconstructionConfig& cfg,
                                    const std::vector<CoefficientEstimate>& lower = {});

// Stages k = 1..K.  A stage whose data sit at rounding level is reported as
// "zero-signal" with a zero estimate and the driver moves on; it stops after a
// stage whose lattice residual exceeds `divergence` ("diverged"), one with
// non-finite values, or at the first order without measurements ("no-data").
std::vector<CoefficientEstimate> induction_driver(const InverseMeasurementSet& target,
                                                  const InverseMeasurementSet& reference, const MaterialProfile& mat,
                                                  const NonlinearLaw& reference_law, ReconstructionConfig cfg, int K,
                                                  double divergence = 0.5);

// Relative L2 distance on the nodes between an estimate and a known coefficient.
double relative_l2_error(const ScalarFieldC& estimate, const std::function<cplx(const Vec3&)>& truth,
                         double* truth_norm = nullptr);

}  // namespace maxnl
