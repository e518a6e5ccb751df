#pragma once

#include <cstddef>
#include <functional>

namespace so3denoise {

/// Worker cap from SO3_DENOISE_THREADS (0 or unset = hardware concurrency).
unsigned worker_count();

/// Runs body(i) for i in [0, n). Each index runs exactly once; callers that
/// write results into slot i get output independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace so3denoise
