#include "han/runtime.hpp"

#include <Eigen/Core>
#include <cstdlib>
#include <string>

#include "han/errors.hpp"

namespace han {

std::size_t configure_threads(std::size_t requested) {
  std::size_t n = requested;
  if (n == 0) {
    n = 1;
    if (const char* env = std::getenv("HAN_THREADS"); env && *env) {
      try {
        std::size_t used = 0;
        const long v = std::stol(env, &used);
        if (used != std::string(env).size() || v < 1) throw std::invalid_argument(env);
        n = static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        throw UsageError(std::string("HAN_THREADS must be a positive integer, got '") + env + "'");
      }
    }
  }
  Eigen::setNbThreads(static_cast<int>(n));
  return n;
}

}  // namespace han
