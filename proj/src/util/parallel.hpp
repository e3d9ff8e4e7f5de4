#pragma once

#include <cstddef>
#include <functional>

namespace sorfgp {

// Worker cap for row-parallel loops. Results never depend on it: work is
// split into fixed-size blocks and every reduction runs in block order.
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Calls fn(begin, end) over [0, n) in blocks of `grain`, on up to
// num_threads() workers. fn must only write state owned by its block.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace sorfgp
