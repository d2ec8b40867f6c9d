#include <cstdlib>
#include <cstring>

#include "kubocone/error.hpp"
#include "kubocone/simd/lorentzian.hpp"

namespace kubocone::simd {

#if !defined(KUBOCONE_HAVE_AVX2_TU)
namespace avx2 {
double even_lorentzian_sum(const double* c, const double* d, std::size_t n, double eta2) {
  return scalar::even_lorentzian_sum(c, d, n, eta2);
}
double mixed_lorentzian_sum(const double* c, const double* s, const double* d, std::size_t n,
                            double eta) {
  return scalar::mixed_lorentzian_sum(c, s, d, n, eta);
}
}  // namespace avx2
#endif

bool avx2_available() {
#if defined(KUBOCONE_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

namespace {

struct Table {
  EvenKernel even;
  MixedKernel mixed;
  std::string_view name;
};

Table select() {
  const char* forced = std::getenv("KUBOCONE_SIMD");
  const bool want_scalar = forced && std::strcmp(forced, "scalar") == 0;
  if (!want_scalar && avx2_available()) {
    return {avx2::even_lorentzian_sum, avx2::mixed_lorentzian_sum, "avx2"};
  }
  return {scalar::even_lorentzian_sum, scalar::mixed_lorentzian_sum, "scalar"};
}

const Table& table() {
  static const Table t = select();
  return t;
}

}  // namespace

std::string_view active_backend() { return table().name; }

double even_lorentzian_sum(std::span<const double> c, std::span<const double> d, double eta2) {
  if (c.size() != d.size()) throw Error(ErrorCode::InvalidArgument, "kernel input sizes differ");
  return table().even(c.data(), d.data(), c.size(), eta2);
}

double mixed_lorentzian_sum(std::span<const double> c, std::span<const double> s,
                            std::span<const double> d, double eta) {
  if (c.size() != d.size() || s.size() != d.size()) {
    throw Error(ErrorCode::InvalidArgument, "kernel input sizes differ");
  }
  return table().mixed(c.data(), s.data(), d.data(), d.size(), eta);
}

}  // namespace kubocone::simd
