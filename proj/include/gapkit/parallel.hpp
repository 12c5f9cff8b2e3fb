#pragma once

#include <cstddef>
#include <functional>

namespace gapkit {

/// Worker count used by every parallel loop. 0 means hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Run body(begin, end) over [0, n) in contiguous chunks. Chunk boundaries depend
/// only on n, never on the worker count, so per-chunk reductions merged in chunk
/// order give identical results for any thread count.
void parallel_chunks(std::size_t n, const std::function<void(std::size_t chunk, std::size_t begin, std::size_t end)>& body,
                     std::size_t chunk_size = 0);

/// Number of chunks parallel_chunks will use for (n, chunk_size).
std::size_t chunk_count(std::size_t n, std::size_t chunk_size = 0);

}  // namespace gapkit
