#include "gtcs/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace gtcs::kern {

namespace {

using DotFn = double (*)(const double*, const double*, std::size_t);
using ReduceFn = double (*)(const double*, std::size_t);
using AxpyFn = void (*)(double, const double*, double*, std::size_t);

struct Table {
  DotFn dot;
  ReduceFn nrm2sq;
  ReduceFn asum;
  ReduceFn max_abs;
  AxpyFn axpy;
  const char* isa;
};

constexpr Table kScalar{detail::dot_scalar, detail::nrm2sq_scalar, detail::asum_scalar,
                        detail::max_abs_scalar, detail::axpy_scalar, "scalar"};

#if defined(GTCS_BUILD_AVX2)
constexpr Table kAvx2{detail::dot_avx2, detail::nrm2sq_avx2, detail::asum_avx2,
                      detail::max_abs_avx2, detail::axpy_avx2, "avx2"};
#endif

Table pick() {
#if defined(GTCS_BUILD_AVX2)
  const char* env = std::getenv("GTCS_SIMD");
  if (env && std::strcmp(env, "scalar") == 0) return kScalar;
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return kAvx2;
#endif
  return kScalar;
}

std::atomic<const Table*> g_active{nullptr};

const Table& table() {
  const Table* t = g_active.load(std::memory_order_acquire);
  if (!t) {
    static const Table chosen = pick();
    g_active.store(&chosen, std::memory_order_release);
    t = &chosen;
  }
  return *t;
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) { return table().dot(a, b, n); }
double nrm2sq(const double* a, std::size_t n) { return table().nrm2sq(a, n); }
double asum(const double* a, std::size_t n) { return table().asum(a, n); }
double max_abs(const double* a, std::size_t n) { return table().max_abs(a, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { table().axpy(alpha, x, y, n); }

const char* active_isa() { return table().isa; }

void force_scalar(bool on) {
  if (on) {
    g_active.store(&kScalar, std::memory_order_release);
  } else {
    static const Table chosen = pick();
    g_active.store(&chosen, std::memory_order_release);
  }
}

}  // namespace gtcs::kern
