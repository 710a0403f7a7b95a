#pragma once

#include <cstddef>
#include <functional>

namespace crow {

/// Runs fn(i) for every i in [0, count) on at most `workers` threads.
/// Indices are handed out dynamically; callers write results into
/// preallocated slots so the outcome does not depend on scheduling.
/// The first exception thrown by fn is rethrown after all threads join.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// Number of logical CPUs, at least 1.
std::size_t default_workers();

}  // namespace crow
