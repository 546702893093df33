#pragma once

#include <cstddef>
#include <functional>

namespace atelier {

/// Number of workers used by `parallel_for` when none is requested.
unsigned default_concurrency();

/// Runs body(i) for i in [0, count) on up to `threads` workers (0: default).
/// The first exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body, unsigned threads = 0);

}  // namespace atelier
