#include "gapkit/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gapkit {

namespace {
std::atomic<unsigned> g_threads{1};

std::size_t resolve_chunk(std::size_t n, std::size_t chunk_size) {
  if (chunk_size > 0) return chunk_size;
  return std::max<std::size_t>(1, (n + 255) / 256);
}
}  // namespace

void set_thread_count(unsigned n) {
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  g_threads = n;
}

unsigned thread_count() { return g_threads; }

std::size_t chunk_count(std::size_t n, std::size_t chunk_size) {
  std::size_t c = resolve_chunk(n, chunk_size);
  return (n + c - 1) / c;
}

void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& body,
                     std::size_t chunk_size) {
  if (n == 0) return;
  const std::size_t c = resolve_chunk(n, chunk_size);
  const std::size_t chunks = (n + c - 1) / c;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), chunks));
  auto run_one = [&](std::size_t i) { body(i, i * c, std::min(n, (i + 1) * c)); };
  if (workers <= 1) {
    for (std::size_t i = 0; i < chunks; ++i) run_one(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= chunks) return;
        try {
          run_one(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = chunks;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace gapkit
