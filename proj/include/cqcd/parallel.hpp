#pragma once

#include <cstddef>
#include <functional>

namespace cqcd::parallel {

/// Worker count: hardware concurrency, capped by the CQCD_THREADS environment
/// variable when set.
int worker_count();

/// Calls fn(i) for i in [0, n). Tasks must write to disjoint outputs; any
/// reduction over results is left to the caller so that its order stays fixed.
void for_each(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Keeps large training buffers on the heap instead of mmap/munmap per call.
/// No-op outside glibc. Meant for executables, call once at startup.
void tune_allocator();

}  // namespace cqcd::parallel
