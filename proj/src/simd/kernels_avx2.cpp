#include "kernels.hpp"

#include <immintrin.h>

namespace quapi::simd::avx2 {

namespace {

double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

WindowSums contract_window(const Complex* row, const double* qf, const double* qb,
                           std::size_t n) {
    // Two complex numbers per register: (re0, im0, re1, im1).
    const auto* r = reinterpret_cast<const double*>(row);
    __m256d accf = _mm256_setzero_pd();
    __m256d accb = _mm256_setzero_pd();
    std::size_t k = 0;
    for (; k + 2 <= n; k += 2) {
        const __m256d z = _mm256_loadu_pd(r + 2 * k);
        const __m256d f = _mm256_set_pd(qf[k + 1], qf[k + 1], qf[k], qf[k]);
        const __m256d b = _mm256_set_pd(qb[k + 1], qb[k + 1], qb[k], qb[k]);
        accf = _mm256_fmadd_pd(z, f, accf);
        accb = _mm256_fmadd_pd(z, b, accb);
    }
    alignas(32) double lf[4];
    alignas(32) double lb[4];
    _mm256_store_pd(lf, accf);
    _mm256_store_pd(lb, accb);
    double fr = lf[0] + lf[2], fi = lf[1] + lf[3];
    double br = lb[0] + lb[2], bi = lb[1] + lb[3];
    for (; k < n; ++k) {
        fr += row[k].real() * qf[k];
        fi += row[k].imag() * qf[k];
        br += row[k].real() * qb[k];
        bi += row[k].imag() * qb[k];
    }
    return {{fr, fi}, {br, -bi}};
}

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t k = 0;
    for (; k + 8 <= n; k += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + k + 4), _mm256_loadu_pd(b + k + 4), acc1);
    }
    for (; k + 4 <= n; k += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k), acc0);
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; k < n; ++k) s += a[k] * b[k];
    return s;
}

double max_norm(const Complex* first, std::size_t stride, std::size_t n) {
    // Norms are formed with a separate multiply and add so every lane rounds
    // exactly like the scalar reference; the filters rely on that.
    const auto* base = reinterpret_cast<const unsigned char*>(first);
    auto at = [&](std::size_t k) { return reinterpret_cast<const double*>(base + k * stride); };
    __m256d best = _mm256_setzero_pd();
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        const __m256d re = _mm256_set_pd(at(k + 3)[0], at(k + 2)[0], at(k + 1)[0], at(k)[0]);
        const __m256d im = _mm256_set_pd(at(k + 3)[1], at(k + 2)[1], at(k + 1)[1], at(k)[1]);
        const __m256d nrm = _mm256_add_pd(_mm256_mul_pd(re, re), _mm256_mul_pd(im, im));
        best = _mm256_max_pd(best, nrm);
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, best);
    double m = lanes[0];
    for (int l = 1; l < 4; ++l) m = m > lanes[l] ? m : lanes[l];
    for (; k < n; ++k) {
        const double* z = at(k);
        const double v = z[0] * z[0] + z[1] * z[1];
        m = m > v ? m : v;
    }
    return m;
}

}  // namespace quapi::simd::avx2
