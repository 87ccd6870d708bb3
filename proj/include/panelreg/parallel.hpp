#pragma once

#include <cstddef>
#include <functional>

namespace panelreg {

/// Worker count from the PANEL_THREADS environment variable, falling back to
/// the hardware concurrency. Always at least 1.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to `threads` workers. Work items are
/// claimed dynamically; callers must write results to slot i only. The first
/// exception thrown by any item is rethrown after all workers join.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace panelreg
