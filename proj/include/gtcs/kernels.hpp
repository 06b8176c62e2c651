#pragma once
// Dense double-precision kernels behind the solvers and debiasing code.
// Scalar reference implementations always exist; on x86-64 an AVX2/FMA
// variant is selected at runtime when the CPU supports it. Set the
// environment variable GTCS_SIMD=scalar to force the reference path.

#include <cstddef>

namespace gtcs::kern {

double dot(const double* a, const double* b, std::size_t n);
double nrm2sq(const double* a, std::size_t n);
double asum(const double* a, std::size_t n);
double max_abs(const double* a, std::size_t n);
// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

// Name of the active instruction set ("avx2" or "scalar").
const char* active_isa();

// Test hook: force the scalar reference path on/off at runtime.
void force_scalar(bool on);

namespace detail {
double dot_scalar(const double* a, const double* b, std::size_t n);
double nrm2sq_scalar(const double* a, std::size_t n);
double asum_scalar(const double* a, std::size_t n);
double max_abs_scalar(const double* a, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);

#if defined(GTCS_BUILD_AVX2)
double dot_avx2(const double* a, const double* b, std::size_t n);
double nrm2sq_avx2(const double* a, std::size_t n);
double asum_avx2(const double* a, std::size_t n);
double max_abs_avx2(const double* a, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
#endif
}  // namespace detail

}  // namespace gtcs::kern
