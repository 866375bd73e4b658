#pragma once

#include <cstddef>

#include "quapi/common.hpp"

// Hot inner loops with a scalar reference and an AVX2 variant. The variant is
// picked once at startup from CPUID; QUAPI_SIMD=scalar forces the reference.

namespace quapi::simd {

enum class Isa { Scalar, Avx2 };

const char* name(Isa isa);
bool avx2_supported();
Isa active_isa();
/// Overrides the dispatch (tests). Requesting Avx2 on a CPU without it throws.
void force_isa(Isa isa);
void reset_isa();

struct WindowSums {
    Complex fwd;  // sum_k row[k] * qf[k]
    Complex bwd;  // sum_k conj(row[k]) * qb[k]
};

WindowSums contract_window(const Complex* row, const double* qf, const double* qb,
                           std::size_t n);

/// sum_k a[k] * b[k]
double dot(const double* a, const double* b, std::size_t n);

/// max_k |z_k|^2 over complex values spaced `stride` bytes apart.
double max_norm(const Complex* first, std::size_t stride, std::size_t n);

}  // namespace quapi::simd
