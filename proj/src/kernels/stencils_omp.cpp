#include <algorithm>
#include <cmath>

#include "maxnl/kernels.hpp"

#define MAXNL_PFOR _Pragma("omp parallel for schedule(static)")
#define MAXNL_DO_PRAGMA(x) _Pragma(#x)
#define MAXNL_PFOR_SUM(v) MAXNL_DO_PRAGMA(omp parallel for schedule(static) reduction(+ : v))
#define MAXNL_PFOR_MAX(v) MAXNL_DO_PRAGMA(omp parallel for schedule(static) reduction(max : v))

namespace maxnl::kernels::omp {
#include "stencils.inc"
}  // namespace maxnl::kernels::omp
