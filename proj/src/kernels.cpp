#include "rrid/kernels.hpp"

#include <cstdlib>
#include <mutex>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rrid::kernels {

void configure_threads_from_env() {
  static std::once_flag once;
  std::call_once(once, [] {
    const char* env = std::getenv("RRID_THREADS");
    if (env == nullptr) return;
    int n = 0;
    try {
      n = std::stoi(env);
    } catch (...) {
      return;
    }
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
  });
}

int thread_count() {
  configure_threads_from_env();
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace rrid::kernels
