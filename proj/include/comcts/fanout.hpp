#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace comcts {

template <class T>
struct Attempt {
  std::optional<T> value;
  std::string error;

  bool ok() const { return value.has_value(); }
};

/// Runs job(0..n-1) and returns the results in index order. With `parallel`
/// set, at most `max_inflight` jobs run at once on worker threads; otherwise
/// jobs run inline. A throwing job records its message instead of a value.
template <class Job>
auto fan_out(std::size_t n, std::size_t max_inflight, bool parallel, Job&& job)
    -> std::vector<Attempt<std::invoke_result_t<Job&, std::size_t>>> {
  using T = std::invoke_result_t<Job&, std::size_t>;
  std::vector<Attempt<T>> results(n);
  auto run_one = [&](std::size_t i) {
    try {
      results[i].value.emplace(job(i));
    } catch (const std::exception& e) {
      results[i].error = e.what();
    } catch (...) {
      results[i].error = "unknown error";
    }
  };
  const std::size_t workers = std::min(n, std::max<std::size_t>(1, max_inflight));
  if (!parallel || workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) run_one(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run_one(i);
      });
  }
  return results;
}

}  // namespace comcts
