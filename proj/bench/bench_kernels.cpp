// Serial reference kernels against their OpenMP builds, plus a few end-to-end operations.

#include <array>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "maxnl/calculus.hpp"
#include "maxnl/forward.hpp"
#include "maxnl/kernels.hpp"
#include "maxnl/maxwell.hpp"

using namespace maxnl;
namespace k = maxnl::kernels;

namespace {

struct Arrays {
  std::array<std::vector<cplx>, 3> edge, face;
  std::array<std::vector<double>, 3> s;

  explicit Arrays(int n) {
    const Grid g(n);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    for (int c = 0; c < 3; ++c) {
      edge[c].resize(component_shape(g, Layout::edge, c).size());
      face[c].resize(component_shape(g, Layout::face, c).size());
      s[c].resize(edge[c].size());
      for (auto& v : edge[c]) v = cplx(nd(rng), nd(rng));
    }
  }
  k::CYee3 ce() const { return {edge[0].data(), edge[1].data(), edge[2].data()}; }
  k::Yee3 f() { return {face[0].data(), face[1].data(), face[2].data()}; }
};

template <bool Omp>
void BM_curl(benchmark::State& st) {
  const int n = int(st.range(0));
  Arrays a(n);
  const double h = 1.0 / n;
  for (auto _ : st) {
    if constexpr (Omp)
      k::omp::curl_edge_to_face(n, h, a.ce(), a.f());
    else
      k::serial::curl_edge_to_face(n, h, a.ce(), a.f());
    benchmark::DoNotOptimize(a.face[0].data());
  }
  st.SetItemsProcessed(st.iterations() * std::int64_t(n) * n * n);
}

template <bool Omp>
void BM_intensity(benchmark::State& st) {
  const int n = int(st.range(0));
  Arrays a(n);
  for (auto _ : st) {
    if constexpr (Omp)
      k::omp::intensity(n, 0, a.ce(), a.s[0].data(), a.s[1].data(), a.s[2].data());
    else
      k::serial::intensity(n, 0, a.ce(), a.s[0].data(), a.s[1].data(), a.s[2].data());
    benchmark::DoNotOptimize(a.s[0].data());
  }
  st.SetItemsProcessed(st.iterations() * std::int64_t(n) * n * n);
}

template <bool Omp>
void BM_pow_sum(benchmark::State& st) {
  const int n = int(st.range(0));
  Arrays a(n);
  const Shape sh = component_shape(Grid(n), Layout::edge, 0);
  const bool axes[3] = {false, true, true};
  for (auto _ : st) {
    double r = Omp ? k::omp::weighted_pow_sum(a.edge[0].data(), sh.dims[0], sh.dims[1], sh.dims[2], axes, 4.0)
                   : k::serial::weighted_pow_sum(a.edge[0].data(), sh.dims[0], sh.dims[1], sh.dims[2], axes, 4.0);
    benchmark::DoNotOptimize(r);
  }
}

void BM_norm_W1p(benchmark::State& st) {
  const FieldPair u = random_smooth_pair(Grid(int(st.range(0))), 3);
  for (auto _ : st) benchmark::DoNotOptimize(norm_W1p(u, 4.0));
}

void BM_picard_step(benchmark::State& st) {
  MaterialProfile m;
  m.grid = Grid(int(st.range(0)));
  LinearMaxwellOperator op(m);
  const auto law = NonlinearLaw::kerr(CoefficientField::constant(1.0), CoefficientField::constant(0.5));
  FieldPair U0 = random_smooth_pair(op.grid(), 4);
  U0 *= 0.1 / norm_Linf(U0);
  for (auto _ : st) benchmark::DoNotOptimize(picard_step(op, law, U0, U0));
}

}  // namespace

BENCHMARK(BM_curl<false>)->Arg(32)->Arg(64);
BENCHMARK(BM_curl<true>)->Arg(32)->Arg(64);
BENCHMARK(BM_intensity<false>)->Arg(32)->Arg(64);
BENCHMARK(BM_intensity<true>)->Arg(32)->Arg(64);
BENCHMARK(BM_pow_sum<false>)->Arg(32)->Arg(64);
BENCHMARK(BM_pow_sum<true>)->Arg(32)->Arg(64);
BENCHMARK(BM_norm_W1p)->Arg(16)->Arg(32);
BENCHMARK(BM_picard_step)->Arg(16)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
