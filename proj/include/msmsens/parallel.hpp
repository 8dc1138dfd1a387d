#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace msmsens {

// 0 means available hardware parallelism.
inline std::size_t resolve_workers(std::size_t workers) {
  if (workers) return workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

// Runs body(i) for i in [0, n) on up to `workers` threads. Results must be
// written by index so the outcome does not depend on scheduling. The first
// exception by index is rethrown.
template <class Body>
void parallel_for(std::size_t n, std::size_t workers, Body&& body) {
  workers = std::min(resolve_workers(workers), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace msmsens
