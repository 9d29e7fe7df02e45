#pragma once

#include <algorithm>
#include <cmath>
#include <iterator>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace speciation {

/// Runs fn(i) for i in [0, n) on up to `threads` workers using contiguous
/// blocks. Callers write results into slot i and reduce in index order, which
/// keeps every reduction independent of the worker count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t block = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * block;
    const std::size_t hi = std::min(n, lo + block);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// Neumaier-compensated sum in index order.
template <typename Range>
double compensated_sum(const Range& values) {
  double sum = 0.0;
  double carry = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      carry += (sum - t) + v;
    } else {
      carry += (v - t) + sum;
    }
    sum = t;
  }
  return sum + carry;
}

/// Mean and standard error of the mean (sample std / sqrt(n)).
struct MeanStderr {
  double mean{0.0};
  double se{0.0};
};

template <typename Range>
MeanStderr mean_stderr(const Range& values) {
  const std::size_t n = std::size(values);
  if (n == 0) return {};
  const double mean = compensated_sum(values) / double(n);
  if (n < 2) return {mean, 0.0};
  std::vector<double> sq;
  sq.reserve(n);
  for (double v : values) sq.push_back((v - mean) * (v - mean));
  const double var = compensated_sum(sq) / double(n - 1);
  return {mean, std::sqrt(var / double(n))};
}

}  // namespace speciation
