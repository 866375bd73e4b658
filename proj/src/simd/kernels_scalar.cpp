#include "kernels.hpp"

#include <algorithm>

namespace quapi::simd::scalar {

WindowSums contract_window(const Complex* row, const double* qf, const double* qb,
                           std::size_t n) {
    double fr = 0.0, fi = 0.0, br = 0.0, bi = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        fr += row[k].real() * qf[k];
        fi += row[k].imag() * qf[k];
        br += row[k].real() * qb[k];
        bi -= row[k].imag() * qb[k];
    }
    return {{fr, fi}, {br, bi}};
}

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
    return s;
}

double max_norm(const Complex* first, std::size_t stride, std::size_t n) {
    const auto* base = reinterpret_cast<const unsigned char*>(first);
    double m = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const auto* z = reinterpret_cast<const double*>(base + k * stride);
        m = std::max(m, z[0] * z[0] + z[1] * z[1]);
    }
    return m;
}

}  // namespace quapi::simd::scalar
