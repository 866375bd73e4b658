#pragma once

#include "quapi/simd.hpp"

namespace quapi::simd {

namespace scalar {
WindowSums contract_window(const Complex* row, const double* qf, const double* qb,
                           std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double max_norm(const Complex* first, std::size_t stride, std::size_t n);
}  // namespace scalar

namespace avx2 {
WindowSums contract_window(const Complex* row, const double* qf, const double* qb,
                           std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double max_norm(const Complex* first, std::size_t stride, std::size_t n);
}  // namespace avx2

}  // namespace quapi::simd
