#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace kubocone {

/// Worker count for k-point loops: KUBOCONE_THREADS if set, otherwise the
/// hardware concurrency.
unsigned worker_count();

/// Calls body(i) for i in [0, count), split into contiguous static chunks over
/// worker threads. body must only write to slots owned by i.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

/// Pairwise tree sum over fixed 4096-entry blocks. The association order
/// depends only on the length, so the result is bit-identical for any thread
/// count.
double tree_sum(std::span<const double> values);

}  // namespace kubocone
