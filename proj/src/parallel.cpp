#include "lutkan/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace lutkan {

namespace {

int env_thread_cap() {
  const char* raw = std::getenv("LUTKAN_THREADS");
  if (raw == nullptr || *raw == '\0') return 0;
  char* end = nullptr;
  long v = std::strtol(raw, &end, 10);
  if (end == raw || v < 1) return 0;
  return static_cast<int>(std::min<long>(v, 1024));
}

}  // namespace

int resolve_threads(int requested) {
  const int cap = env_thread_cap();
  if (requested <= 0) return cap > 0 ? cap : 1;
  return cap > 0 ? std::min(requested, cap) : requested;
}

void parallel_rows(std::size_t rows, int threads,
                   const std::function<void(std::size_t, std::size_t)>& fn) {
  if (rows == 0) return;
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || rows < 2) {
    fn(0, rows);
    return;
  }
  const std::size_t n = std::min(workers, rows);
  const std::size_t chunk = (rows + n - 1) / n;
  std::vector<std::jthread> pool;
  pool.reserve(n - 1);
  for (std::size_t t = 1; t < n; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(rows, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(0, std::min(rows, chunk));
}

}  // namespace lutkan
