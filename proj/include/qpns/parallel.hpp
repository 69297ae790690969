#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace qpns {

// Process-wide worker count used by ensemble loops. Defaults to QPNS_THREADS
// when set, otherwise 1.
int thread_count();
void set_thread_count(int n);

// Runs body(i) for i in [0, n). Each index is executed exactly once; callers
// write results into per-index slots so the outcome does not depend on the
// schedule. The first exception thrown by any job is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

template <class T, class F>
std::vector<T> parallel_map(std::size_t n, F&& f) {
  std::vector<T> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = f(i); });
  return out;
}

// Pairwise summation; the result depends only on the input order.
double pairwise_sum(std::span<const double> xs);

double mean(std::span<const double> xs);

}  // namespace qpns
