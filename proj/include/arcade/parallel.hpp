#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace arcade {

// Number of workers used by path-parallel loops; 0 means hardware concurrency.
void set_worker_count(unsigned n);
unsigned worker_count();

// Runs body(begin, end) over contiguous blocks of [0, n). Results must not depend on the split.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace arcade
