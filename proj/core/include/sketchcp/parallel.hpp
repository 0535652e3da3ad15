// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace sketchcp {

/// Worker threads used by the compute kernels. Defaults to $SKETCHCP_WORKERS, else 1.
int worker_count();
void set_worker_count(int workers);

/// Runs body(task) for task in [0, tasks) on up to worker_count() threads.
/// Tasks must write disjoint outputs.
void parallel_for(std::size_t tasks, const std::function<void(std::size_t)>& body);

/// Splits [0, n) into `parts` contiguous ranges whose weights (prefix sums in
/// `prefix`, size n+1) are roughly equal. Returns parts+1 boundaries.
std::vector<std::size_t> balanced_boundaries(std::span<const std::size_t> prefix, std::size_t parts);

}  // namespace sketchcp
