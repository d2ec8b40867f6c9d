#include "kubocone/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>

namespace kubocone {

namespace {

constexpr std::size_t kBlock = 4096;

double pairwise(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise(x, half) + pairwise(x + half, n - half);
}

}  // namespace

unsigned worker_count() {
  if (const char* env = std::getenv("KUBOCONE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(worker_count(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  // One slot per worker so the reported failure is the lowest-index one.
  std::vector<std::exception_ptr> failures(workers);
  std::vector<std::thread> pool;
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    pool.emplace_back([&, w, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        failures[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
}

double tree_sum(std::span<const double> values) {
  std::vector<double> partial;
  partial.reserve(values.size() / kBlock + 1);
  for (std::size_t b = 0; b < values.size(); b += kBlock) {
    partial.push_back(pairwise(values.data() + b, std::min(kBlock, values.size() - b)));
  }
  return pairwise(partial.data(), partial.size());
}

}  // namespace kubocone
