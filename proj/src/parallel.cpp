#include "sandlab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace sandlab::par {

namespace {
constexpr std::int64_t kMinBlock = 2048;
constexpr int kMaxBlocks = 64;
}  // namespace

int block_count(std::int64_t n_items) {
  if (n_items <= 0) return 0;
  const std::int64_t by_size = (n_items + kMinBlock - 1) / kMinBlock;
  return static_cast<int>(std::min<std::int64_t>(by_size, kMaxBlocks));
}

void for_blocks(std::int64_t n_items, int width,
                const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
  const int blocks = block_count(n_items);
  if (blocks == 0) return;
  const std::int64_t per = n_items / blocks;
  const std::int64_t rem = n_items % blocks;
  auto bounds = [&](int b) {
    // first `rem` blocks carry one extra item
    const std::int64_t begin = b * per + std::min<std::int64_t>(b, rem);
    const std::int64_t end = begin + per + (b < rem ? 1 : 0);
    return std::pair<std::int64_t, std::int64_t>(begin, end);
  };

  width = std::max(1, width);
  if (width == 1 || blocks == 1) {
    for (int b = 0; b < blocks; ++b) {
      auto [lo, hi] = bounds(b);
      fn(b, lo, hi);
    }
    return;
  }

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int b = next.fetch_add(1);
      if (b >= blocks) return;
      auto [lo, hi] = bounds(b);
      fn(b, lo, hi);
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::min(width, blocks);
  pool.reserve(n_threads);
  for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

}  // namespace sandlab::par
