#include "kubocone/simd/lorentzian.hpp"

namespace kubocone::simd::scalar {

double even_lorentzian_sum(const double* c, const double* d, std::size_t n, double eta2) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += c[i] * d[i] / (eta2 + d[i] * d[i]);
  return acc;
}

double mixed_lorentzian_sum(const double* c, const double* s, const double* d, std::size_t n,
                            double eta) {
  const double eta2 = eta * eta;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += (c[i] * d[i] - s[i] * eta) / (eta2 + d[i] * d[i]);
  return acc;
}

}  // namespace kubocone::simd::scalar
