#pragma once

#include <cstddef>
#include <functional>

namespace counterlens {

/// Number of worker threads used by parallel_for. Defaults to the hardware
/// concurrency. Results never depend on this value.
unsigned worker_count();
void set_worker_count(unsigned workers);

/// Runs fn(i) for i in [0, n). Nested calls run inline on the calling thread.
/// If any task throws, the exception from the lowest failing index is
/// rethrown after all tasks finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace counterlens
