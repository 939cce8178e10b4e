#pragma once

// Complex geometrical optics solutions of the linear Maxwell system, built in
// the 8-component rescaled form on a periodic box that contains the domain.

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "maxnl/grid.hpp"
#include "maxnl/material.hpp"

namespace maxnl {

struct ExtensionSpec {
  int n = 64;          // box points per dimension
  double scale = 2.0;  // box side / domain side
  double blend = 0.3;  // shell width over which eps, mu fall back to 1, in domain sides
};

// Collocated periodic grid of side scale*side centred on the domain cube.
class ExtensionBox {
 public:
  ExtensionBox(const Grid& domain, const ExtensionSpec& spec = {});

  const Grid& domain() const { return domain_; }
  const ExtensionSpec& spec() const { return spec_; }
  int n() const { return spec_.n; }
  double side() const { return side_; }
  double spacing() const { return side_ / spec_.n; }
  double dk() const;  // lattice spacing of the discrete frequencies
  const Vec3& origin() const { return origin_; }
  const Vec3& centre() const { return centre_; }
  std::size_t size() const { return std::size_t(spec_.n) * spec_.n * spec_.n; }
  std::size_t index(int i, int j, int k) const { return (std::size_t(i) * spec_.n + j) * spec_.n + k; }
  Vec3 position(std::size_t idx) const;
  // Signed frequency of FFT bin m (Nyquist bin reported as negative).
  double wavenumber(int m) const;
  bool inside_domain(const Vec3& x) const;
  // 1 on the domain, quintic falloff to 0 across the shell.
  double blend_weight(const Vec3& x) const;

 private:
  Grid domain_;
  ExtensionSpec spec_;
  double side_;
  Vec3 origin_, centre_;
};

// Slots of the 8-vector (h; H; e; E).
enum Slot : int { slot_h = 0, slot_H = 1, slot_e = 4, slot_E = 5 };
using Vec8 = Eigen::Matrix<cplx, 8, 1>;
using Mat8 = Eigen::Matrix<cplx, 8, 8>;

// Eight complex component arrays on the box nodes.
struct EightField {
  int n = 0;
  std::array<std::vector<cplx>, 8> comp;

  EightField() = default;
  explicit EightField(int n_points);
  std::size_t size() const { return comp[0].size(); }
  Vec8 at(std::size_t idx) const;
  void set(std::size_t idx, const Vec8& v);
  double max_abs() const;
  EightField& operator+=(const EightField& o);
  EightField& operator*=(cplx s);
};

struct CGOProbe {
  CVec3 zeta{};
  double omega = 1.0;
  bool sigma_e = true, sigma_h = false;
  double tau = 0.0;
  CVec3 a_vec{}, b_vec{};

  // Checks zeta.zeta = omega^2 and fills a, b from the polarization bits.
  static CGOProbe make(const CVec3& zeta, double omega, bool sigma_e, bool sigma_h, double tau = 0.0);
  // zeta = (sqrt(omega^2 + tau^2), 0, i tau).
  static CGOProbe simple(double omega, double tau, bool sigma_e = true, bool sigma_h = false);
  double zeta_norm() const;
  std::string to_json() const;
};

// (1/|zeta|)(zeta.a; omega b; zeta.b; omega a).
Vec8 build_L(const CGOProbe& probe);

// Coefficients extended to the box and the potential of
// (P + W)(P - W^t) = -Laplacian + Q, stored by its ingredients.
class PotentialQ {
 public:
  const ExtensionBox& box() const;
  double omega() const;
  Mat8 Q(std::size_t node) const;
  Mat8 W(std::size_t node) const;
  cplx epsilon(std::size_t node) const;
  cplx mu(std::size_t node) const;
  // out = (omega^2 I + Q) phi.
  void apply_potential(const EightField& phi, EightField& out) const;
  // max over nodes of the row-sum norm of omega^2 I + Q.
  double potential_sup() const;
  bool potential_vanishes() const;
  // Largest |Q c + P(W^t c) + W W^t c| over domain nodes and unit vectors c,
  // over the largest |Q| entry; checks the displayed Q against its definition.
  double consistency_defect() const;

  struct Data;
  explicit PotentialQ(std::shared_ptr<const Data> d) : d_(std::move(d)) {}
  const Data& data() const { return *d_; }

 private:
  std::shared_ptr<const Data> d_;
};

PotentialQ assemble_Q(const MaterialProfile& mat, const ExtensionSpec& ext = {});

// Frequency shift theta for the lattice k + theta maximising the smallest
// |k|^2 + 2 zeta.k; throws construction if the symbol still nearly vanishes.
Vec3 choose_lattice_shift(const ExtensionBox& box, const CVec3& zeta, double* min_symbol = nullptr);

// Spectral right inverse of -Laplacian - 2i zeta.grad on the box: the output
// is e^{i theta.x} times a periodic field.  `phi` should vanish near the box edge.
EightField faddeev_apply(const ExtensionBox& box, const CVec3& zeta, const Vec3& shift, const EightField& phi);
// -Laplacian - 2i zeta.grad applied spectrally to e^{i theta.x} * periodic input.
EightField faddeev_operator(const ExtensionBox& box, const CVec3& zeta, const Vec3& shift, const EightField& u);

struct NeumannOptions {
  double tol = 1e-13;
  int max_iter = 200;
  int proxy_steps = 6;  // power steps for the ||G V|| estimate; 0 to skip
};

struct NeumannReport {
  std::vector<double> updates;  // sup norm of successive corrections
  std::vector<double> ratios;
  int iterations = 0;
  bool converged = false;
  double contraction_proxy = 0.0;
  double min_symbol = 0.0;
  Vec3 shift{0, 0, 0};
  double remainder_sup = 0.0;  // ||R||_inf on the domain
  std::string to_json() const;
};

// R = e^{i theta.x} rho with R + G V R = -G V L, V = omega^2 I + Q.
struct Remainder {
  EightField rho;
  Vec3 shift{0, 0, 0};
  NeumannReport report;
};
Remainder solve_remainder(const CGOProbe& probe, const PotentialQ& Q, const Vec8& L, const NeumannOptions& opt = {});

struct CGODiagnostics {
  double tau = 0.0, zeta_norm = 0.0;
  double r_e = 0.0, r_h = 0.0;          // sup over the domain of the remainders of e^{-i zeta.x} (E, H)
  double scalar_slots = 0.0;            // sup of the h, e slots of e^{-i zeta.x} Y
  double maxwell_residual = 0.0;        // sup |curl E - i w mu H|, |curl H + i w eps E| / (|zeta| sup|(E,H)|)
  NeumannReport neumann;
  std::string to_json() const;
};

// A CGO solution stored with the exponential factored out about the domain
// centre c: field(x) = e^{i zeta.(x - c)} (Xp(x) + e^{i theta.x} Xs(x)).
class CGOSolution {
 public:
  const CGOProbe& probe() const { return probe_; }
  const CGODiagnostics& diagnostics() const { return diag_; }
  const ExtensionBox& box() const { return *box_; }

  // Factored (E, H) at x by tricubic interpolation.
  std::pair<CVec3, CVec3> factored(const Vec3& x) const;
  CVec3 E(const Vec3& x) const;
  CVec3 H(const Vec3& x) const;
  // E on edges and H on faces of `g` (domain grid or a refinement of it).
  FieldPair on_grid(const Grid& g) const;
  TangentialBoundaryField electric_trace(const Grid& g) const;
  void export_traces(const std::string& dir, const Grid& g, const std::string& tag) const;

  CGOSolution(CGOProbe probe, std::shared_ptr<const ExtensionBox> box, EightField xp, EightField xs, Vec3 shift,
              CGODiagnostics diag);

 private:
  CGOProbe probe_;
  std::shared_ptr<const ExtensionBox> box_;
  EightField xp_, xs_;  // factored X = (h; H; e; E), periodic and shifted parts
  Vec3 shift_;
  CGODiagnostics diag_;
};

CGOSolution assemble_cgo(const CGOProbe& probe, const PotentialQ& Q, const NeumannOptions& opt = {});

// Vacuum CGO fields in closed form: factored (E, H).
std::pair<CVec3, CVec3> vacuum_cgo_amplitudes(const CGOProbe& probe);

}  // namespace maxnl
