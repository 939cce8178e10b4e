#pragma once

// Run configuration read from TOML.  Every section is optional; a missing
// section means defaults.  The canonical JSON form of the parsed file (with
// command-line overrides folded in) is hashed for output provenance.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maxnl/asymptotics.hpp"
#include "maxnl/cgo.hpp"
#include "maxnl/forward.hpp"
#include "maxnl/inverse.hpp"

namespace maxnl {

struct DatumSpec {
  std::string kind = "plane_wave";  // plane_wave | zero | random
  Vec3 direction{0, 0, 1};
  CVec3 polarization{1, 0, 0};
  double amplitude = 0.1;
  // > 0: rescale the datum to this fraction of the estimated contraction threshold
  double threshold_fraction = 0.0;

  TangentialBoundaryField sample(const Grid& g, double omega, std::uint64_t seed) const;
  std::string describe() const;
};

struct AsymptoticsSpec {
  std::vector<int> orders{1};
  double t_max = 0.2;
  int t_count = 8;
  double slope_tol = 0.1;  // allowed |slope - (2k+1)|
  AsymptoticsOptions options;
};

struct CGOCheckSpec {
  std::vector<double> taus{10, 20, 40};
  ExtensionSpec box;
  NeumannOptions neumann;
  bool electric = true;      // sigma_e = 1 probes (else sigma_h = 1)
  double decay_factor = 2.0; // allowed spread of r_e * tau
  double residual_tol = 1e-10;  // Maxwell residual bound for constant coefficients
};

struct ReconstructSpec {
  ReconstructionConfig cfg;
  int K = 1;
  std::string measurements;     // stored target set; synthesized when empty
  std::string reference_measurements;
  bool save_measurements = true;
  double max_error = -1.0;      // acceptance bound on the relative L2 error (< 0: none)
  double divergence = 0.5;
};

struct RunConfig {
  std::uint64_t seed = 1;
  MaterialProfile material;
  NonlinearLaw law;
  NonlinearLaw reference_law;
  SolverOptions solver;
  PicardOptions picard;
  DatumSpec datum;
  AsymptoticsSpec asymptotics;
  CGOCheckSpec cgo;
  ReconstructSpec reconstruct;
  std::string canonical;  // sorted JSON of the effective configuration

  // Reads a TOML file; throws Error(config) on parse or range errors and
  // Error(io) when the file cannot be read.
  static RunConfig from_file(const std::string& path, std::optional<std::uint64_t> seed = {},
                             std::optional<double> tol = {});
  static RunConfig from_string(const std::string& text, std::optional<std::uint64_t> seed = {},
                               std::optional<double> tol = {});
  // 16 hex digits of FNV-1a over `canonical`.
  std::string hash() const;
};

}  // namespace maxnl
