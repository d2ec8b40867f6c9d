#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace kubocone::simd {

/// sum_i c_i d_i / (eta2 + d_i^2)
using EvenKernel = double (*)(const double* c, const double* d, std::size_t n, double eta2);
/// sum_i (c_i d_i - s_i eta) / (eta^2 + d_i^2)
using MixedKernel = double (*)(const double* c, const double* s, const double* d, std::size_t n,
                               double eta);

namespace scalar {
double even_lorentzian_sum(const double* c, const double* d, std::size_t n, double eta2);
double mixed_lorentzian_sum(const double* c, const double* s, const double* d, std::size_t n,
                            double eta);
}  // namespace scalar

namespace avx2 {
double even_lorentzian_sum(const double* c, const double* d, std::size_t n, double eta2);
double mixed_lorentzian_sum(const double* c, const double* s, const double* d, std::size_t n,
                            double eta);
}  // namespace avx2

/// True when the AVX2 kernels were compiled in and the CPU reports AVX2 and FMA.
bool avx2_available();

/// "avx2" or "scalar". KUBOCONE_SIMD=scalar forces the reference kernels.
std::string_view active_backend();

double even_lorentzian_sum(std::span<const double> c, std::span<const double> d, double eta2);
double mixed_lorentzian_sum(std::span<const double> c, std::span<const double> s,
                            std::span<const double> d, double eta);

}  // namespace kubocone::simd
