#include <atomic>
#include <cstdlib>
#include <cstring>

#include "kernels.hpp"

namespace quapi::simd {

namespace {

Isa detect() {
    const char* env = std::getenv("QUAPI_SIMD");
    if (env && std::strcmp(env, "scalar") == 0) return Isa::Scalar;
    return avx2_supported() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& current() {
    static std::atomic<Isa> isa{detect()};
    return isa;
}

}  // namespace

const char* name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
    if (isa == Isa::Avx2 && !avx2_supported()) throw Error("AVX2 is not available on this CPU");
    current().store(isa);
}

void reset_isa() { current().store(detect()); }

WindowSums contract_window(const Complex* row, const double* qf, const double* qb,
                           std::size_t n) {
    return active_isa() == Isa::Avx2 ? avx2::contract_window(row, qf, qb, n)
                                     : scalar::contract_window(row, qf, qb, n);
}

double dot(const double* a, const double* b, std::size_t n) {
    return active_isa() == Isa::Avx2 ? avx2::dot(a, b, n) : scalar::dot(a, b, n);
}

double max_norm(const Complex* first, std::size_t stride, std::size_t n) {
    return active_isa() == Isa::Avx2 ? avx2::max_norm(first, stride, n)
                                     : scalar::max_norm(first, stride, n);
}

}  // namespace quapi::simd
