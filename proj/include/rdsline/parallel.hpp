#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace rdsline {

/// Splits [0, n) into contiguous blocks, one per worker, runs `work(begin, end)`
/// on each and folds the partial results in block order with `merge`.
/// With count-valued partials the result is independent of `workers`.
template <class Partial, class Work, class Merge>
Partial parallel_reduce(std::size_t n, unsigned workers, Partial init, Work work, Merge merge) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    merge(init, work(std::size_t{0}, n));
    return init;
  }
  std::vector<Partial> partials(workers, init);
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    std::size_t begin = n * w / workers;
    std::size_t end = n * (w + 1) / workers;
    threads.emplace_back([&, w, begin, end] {
      try {
        partials[w] = work(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (auto& p : partials) merge(init, p);
  return init;
}

}  // namespace rdsline
