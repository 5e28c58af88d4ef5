#ifndef REVRANK_PARALLEL_HPP_
#define REVRANK_PARALLEL_HPP_

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace revrank {

inline std::atomic<int>& max_threads_ref() {
  static std::atomic<int> value{1};
  return value;
}

inline void set_max_threads(int n) { max_threads_ref().store(n < 1 ? 1 : n); }

inline int max_threads() { return max_threads_ref().load(); }

/*!
 * \brief Evaluate fn(k) for k in [0, n_chunks) and return the results in order.
 *
 * Work is split into fixed chunks whose boundaries do not depend on the thread
 * count, and the caller folds the returned partials in chunk order. Any
 * reduction built this way is bit-identical for 1 or N threads.
 */
template <typename T, typename Fn>
std::vector<T> map_chunks(std::size_t n_chunks, Fn&& fn) {
  std::vector<T> results(n_chunks);
  const std::size_t want = static_cast<std::size_t>(max_threads());
  const std::size_t threads = want < n_chunks ? want : n_chunks;
  if (threads <= 1) {
    for (std::size_t k = 0; k < n_chunks; ++k) results[k] = fn(k);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= n_chunks) return;
      try {
        results[k] = fn(k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
  return results;
}

/*! \brief Number of fixed-size chunks covering n items. */
inline std::size_t chunk_count(std::size_t n, std::size_t chunk_size) {
  return n == 0 ? 0 : (n + chunk_size - 1) / chunk_size;
}

}  // namespace revrank

#endif  // REVRANK_PARALLEL_HPP_
