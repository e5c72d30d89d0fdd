#pragma once

#include <cstddef>

namespace han {

// Caps the threads used inside matrix kernels. Reads HAN_THREADS when
// `requested` is 0; the default is 1, which keeps results reproducible.
std::size_t configure_threads(std::size_t requested = 0);

}  // namespace han
