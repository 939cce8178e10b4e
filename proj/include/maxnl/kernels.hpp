#pragma once

// Raw stencil kernels on the Yee arrays of a cubic grid with n cells.
// Two builds of the same loop bodies: `serial` (reference) and `omp`.
// Array layouts follow component_shape(): edge comp c has n along c and
// n+1 across, face comp c has n+1 along c and n across, row-major (i,j,k).

#include <complex>
#include <cstddef>

namespace maxnl::kernels {

using cplx = std::complex<double>;

struct Yee3 {
  cplx* x;
  cplx* y;
  cplx* z;
};

struct CYee3 {
  const cplx* x;
  const cplx* y;
  const cplx* z;
};

#define MAXNL_KERNEL_DECLS                                                                          \
  /* face <- curl(edge) */                                                                          \
  void curl_edge_to_face(int n, double h, CYee3 e, Yee3 f);                                         \
  /* edge <- adjoint curl(face); missing faces at the boundary count as zero */                    \
  void curl_face_to_edge(int n, double h, CYee3 f, Yee3 e);                                         \
  /* cell <- div(face) */                                                                           \
  void div_face_to_cell(int n, double h, CYee3 f, cplx* cell);                                      \
  /* node <- div(edge), the negative adjoint of grad */                                             \
  void div_edge_to_node(int n, double h, CYee3 e, cplx* node);                                      \
  /* edge <- grad(node) */                                                                          \
  void grad_node_to_edge(int n, double h, const cplx* node, Yee3 e);                                \
  /* |v|^2 at each component's own location; other components are averaged from   */              \
  /* their (up to four) neighbours. layout: 0 edge, 1 face.                         */              \
  void intensity(int n, int layout, CYee3 v, double* sx, double* sy, double* sz);                   \
  /* sum_m w_m |v_m|^p with product trapezoid weights along axes flagged in node_axes */           \
  double weighted_pow_sum(const cplx* v, int d0, int d1, int d2, const bool* node_axes, double p); \
  double max_abs(const cplx* v, std::size_t count);

namespace serial {
MAXNL_KERNEL_DECLS
}
namespace omp {
MAXNL_KERNEL_DECLS
}

#undef MAXNL_KERNEL_DECLS

}  // namespace maxnl::kernels
