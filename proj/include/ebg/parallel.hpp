#pragma once

#include <cstddef>
#include <functional>

namespace ebg {

/// Number of workers to use when the caller asks for 0 ("all available").
std::size_t resolve_workers(std::size_t requested);

/// Runs body(i) for i in [0, count) on up to `workers` threads. The first
/// exception thrown by any invocation is rethrown after all threads join.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& body);

}  // namespace ebg
