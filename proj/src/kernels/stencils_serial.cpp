#include <algorithm>
#include <cmath>

#include "maxnl/kernels.hpp"

#define MAXNL_PFOR
#define MAXNL_PFOR_SUM(v)
#define MAXNL_PFOR_MAX(v)

namespace maxnl::kernels::serial {
#include "stencils.inc"
}  // namespace maxnl::kernels::serial
