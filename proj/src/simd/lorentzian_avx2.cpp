#include <immintrin.h>

#include "kubocone/simd/lorentzian.hpp"

namespace kubocone::simd::avx2 {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

}  // namespace

double even_lorentzian_sum(const double* c, const double* d, std::size_t n, double eta2) {
  const __m256d e2 = _mm256_set1_pd(eta2);
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 = _mm256_loadu_pd(d + i);
    const __m256d d1 = _mm256_loadu_pd(d + i + 4);
    const __m256d den0 = _mm256_fmadd_pd(d0, d0, e2);
    const __m256d den1 = _mm256_fmadd_pd(d1, d1, e2);
    const __m256d num0 = _mm256_mul_pd(_mm256_loadu_pd(c + i), d0);
    const __m256d num1 = _mm256_mul_pd(_mm256_loadu_pd(c + i + 4), d1);
    acc0 = _mm256_add_pd(acc0, _mm256_div_pd(num0, den0));
    acc1 = _mm256_add_pd(acc1, _mm256_div_pd(num1, den1));
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d d0 = _mm256_loadu_pd(d + i);
    const __m256d den0 = _mm256_fmadd_pd(d0, d0, e2);
    acc0 = _mm256_add_pd(acc0, _mm256_div_pd(_mm256_mul_pd(_mm256_loadu_pd(c + i), d0), den0));
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += c[i] * d[i] / (eta2 + d[i] * d[i]);
  return hsum(_mm256_add_pd(acc0, acc1)) + tail;
}

double mixed_lorentzian_sum(const double* c, const double* s, const double* d, std::size_t n,
                            double eta) {
  const double eta2 = eta * eta;
  const __m256d e = _mm256_set1_pd(eta);
  const __m256d e2 = _mm256_set1_pd(eta2);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dv = _mm256_loadu_pd(d + i);
    const __m256d den = _mm256_fmadd_pd(dv, dv, e2);
    // c d - s eta
    const __m256d num = _mm256_fmsub_pd(_mm256_loadu_pd(c + i), dv, _mm256_mul_pd(_mm256_loadu_pd(s + i), e));
    acc = _mm256_add_pd(acc, _mm256_div_pd(num, den));
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += (c[i] * d[i] - s[i] * eta) / (eta2 + d[i] * d[i]);
  return hsum(acc) + tail;
}

}  // namespace kubocone::simd::avx2
