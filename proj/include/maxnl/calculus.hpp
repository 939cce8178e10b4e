#pragma once

#include <cstdint>

#include "maxnl/grid.hpp"

namespace maxnl {

// edge -> face (exact Yee curl) or face -> edge (adjoint; the Yee curl at
// interior edges, partial at boundary edges).
VectorField3C curl_h(const VectorField3C& field);
// face -> cell, or edge -> node (negative adjoint of grad_h).
ScalarFieldC div_h(const VectorField3C& field);
// node -> edge.
VectorField3C grad_h(const ScalarFieldC& s);

// -n x (n x A) on the boundary; A must live on edges.
TangentialBoundaryField tangential_trace(const VectorField3C& field);

// Discrete n x H on boundary edges: -h (curl_h H) restricted to the boundary.
TangentialBoundaryField magnetic_trace(const VectorField3C& H);

// Bilinear surface pairing h^2 sum a_m b_m (no conjugation).
cplx boundary_pairing(const TangentialBoundaryField& a, const TangentialBoundaryField& b);
// Bilinear volume pairing h^3 sum A.B; `interior_edges_only` drops boundary edges of edge fields.
cplx volume_pairing(const VectorField3C& a, const VectorField3C& b, bool interior_edges_only = false);

double norm_Lp(const VectorField3C& field, double p);
double norm_Linf(const VectorField3C& field);
double norm_W1p(const VectorField3C& field, double p);
double norm_Lp(const FieldPair& u, double p);
double norm_Linf(const FieldPair& u);
double norm_W1p(const FieldPair& u, double p);
double norm_Linf(const ScalarFieldC& s);
double norm_L2(const ScalarFieldC& s);
// Quadrature proxy for the trace norm: values plus surface divergence.
double norm_boundary(const TangentialBoundaryField& f, double p);
double norm_Linf(const TangentialBoundaryField& f);

// Largest ||U||_inf / ||U||_{W1p} over a seeded ensemble of smooth random fields.
double estimate_embedding_constant(const Grid& g, double p, int ensemble, std::uint64_t seed);

// Random smooth field pair: a few low Fourier modes with seeded amplitudes.
FieldPair random_smooth_pair(const Grid& g, std::uint64_t seed, int modes = 4);
VectorField3C random_field(const Grid& g, Layout layout, std::uint64_t seed);
ScalarFieldC random_scalar(const Grid& g, Location loc, std::uint64_t seed);

}  // namespace maxnl
