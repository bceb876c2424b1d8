#pragma once

#include <cstdint>
#include <functional>

namespace sandlab::par {

/// Runs fn(block_id, begin, end) over a fixed block partition of [0, n_items).
/// The partition depends only on n_items, never on `width`, and callers must
/// merge per-block results in block order; outputs are then identical for any
/// worker count, including width == 1.
void for_blocks(std::int64_t n_items, int width,
                const std::function<void(int block, std::int64_t begin, std::int64_t end)>& fn);

int block_count(std::int64_t n_items);

}  // namespace sandlab::par
