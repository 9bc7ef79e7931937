#pragma once

#include <cstddef>
#include <functional>

namespace lutkan {

/// Thread count for a backend call. requested <= 0 means "use the
/// LUTKAN_THREADS environment variable, else 1"; a positive request is
/// capped by LUTKAN_THREADS when set.
int resolve_threads(int requested);

/// Splits [0, rows) into contiguous chunks and runs fn(begin, end) on up to
/// `threads` workers. threads == 1 runs inline on the caller.
void parallel_rows(std::size_t rows, int threads,
                   const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace lutkan
