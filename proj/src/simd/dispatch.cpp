#include <atomic>
#include <cstdlib>
#include <string>

#include "cardio/error.hpp"
#include "cardio/simd.hpp"

namespace cardio::simd {
namespace {

bool cpu_has_avx2() {
#if defined(CARDIO_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa initial_isa() {
    if (const char* env = std::getenv("CARDIO_SIMD"); env != nullptr && std::string(env) == "scalar") {
        return Isa::scalar;
    }
    return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
    static std::atomic<Isa> isa{initial_isa()};
    return isa;
}

}  // namespace

bool isa_supported(Isa isa) { return isa == Isa::scalar || cpu_has_avx2(); }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
    if (!isa_supported(isa)) throw InvalidParameter("requested SIMD ISA is not supported here");
    current().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

const KernelTable& kernels(Isa isa) {
#if defined(CARDIO_HAVE_AVX2)
    if (isa == Isa::avx2) {
        if (!cpu_has_avx2()) throw InvalidParameter("avx2 kernels unavailable on this CPU");
        return detail::avx2_table;
    }
#else
    if (isa == Isa::avx2) throw InvalidParameter("avx2 kernels not compiled in");
#endif
    return detail::scalar_table;
}

namespace detail {
const KernelTable& active_table() {
#if defined(CARDIO_HAVE_AVX2)
    if (active_isa() == Isa::avx2) return avx2_table;
#endif
    return scalar_table;
}
}  // namespace detail

}  // namespace cardio::simd
