#pragma once

#include <cstddef>
#include <functional>

namespace spdectl {

/// Worker count used when a call passes threads = 0. Starts at 1; the CLI
/// sets it from --threads.
std::size_t default_threads();
void set_default_threads(std::size_t n);

/// Runs fn(i) for i in [0, count) on up to `threads` workers with a static
/// contiguous partition. The first exception thrown is rethrown after join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn, std::size_t threads = 0);

}  // namespace spdectl
