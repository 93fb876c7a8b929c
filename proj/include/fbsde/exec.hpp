#pragma once

#include <cstdint>
#include <exception>
#include <mutex>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fbsde {

// Execution policy for path-parallel kernels. Every kernel writes into
// path-indexed storage and reduces in fixed path order afterwards, so the
// two policies produce bit-identical results; `serial` is kept as the
// reference implementation for tests and benchmarks.
enum class Exec { serial, openmp };

inline Exec& default_exec_slot() {
  static Exec e = Exec::openmp;
  return e;
}

inline Exec default_exec() { return default_exec_slot(); }
inline void set_default_exec(Exec e) { default_exec_slot() = e; }

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <typename Body>
void parallel_for(std::int64_t n, Exec exec, Body&& body) {
  if (exec == Exec::openmp) {
#ifdef _OPENMP
    // exceptions may not cross the parallel region; capture the first one
    std::exception_ptr error;
    std::mutex error_mutex;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
    return;
#endif
  }
  for (std::int64_t i = 0; i < n; ++i) body(i);
}

template <typename Body>
void parallel_for(std::int64_t n, Body&& body) {
  parallel_for(n, default_exec(), std::forward<Body>(body));
}

}  // namespace fbsde
