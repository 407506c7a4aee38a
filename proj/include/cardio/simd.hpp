#pragma once

// Runtime-dispatched double-precision vector kernels.
//
// Every kernel has a scalar reference implementation; an AVX2+FMA variant is
// compiled when the toolchain supports it and selected at startup when the
// CPU reports both features. Setting CARDIO_SIMD=scalar in the environment
// forces the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace cardio::simd {

enum class Isa { scalar, avx2 };

struct KernelTable {
    double (*dot)(const double* a, const double* b, std::size_t n);
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    double (*sum)(const double* x, std::size_t n);
    double (*sum_sq)(const double* x, std::size_t n);
    void (*mul_add)(const double* a, const double* b, double* y, std::size_t n);  // y += a*b
};

bool isa_supported(Isa isa);
Isa active_isa();
// Throws InvalidParameter when the ISA is unavailable on this machine/build.
void set_isa(Isa isa);
std::string_view isa_name(Isa isa);
const KernelTable& kernels(Isa isa);

namespace detail {
const KernelTable& active_table();
extern const KernelTable scalar_table;
#if defined(CARDIO_HAVE_AVX2)
extern const KernelTable avx2_table;
#endif
}  // namespace detail

inline double dot(std::span<const double> a, std::span<const double> b) {
    return detail::active_table().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    detail::active_table().axpy(alpha, x.data(), y.data(), x.size());
}

inline double sum(std::span<const double> x) { return detail::active_table().sum(x.data(), x.size()); }

inline double sum_sq(std::span<const double> x) {
    return detail::active_table().sum_sq(x.data(), x.size());
}

inline void mul_add(std::span<const double> a, std::span<const double> b, std::span<double> y) {
    detail::active_table().mul_add(a.data(), b.data(), y.data(), a.size());
}

}  // namespace cardio::simd
