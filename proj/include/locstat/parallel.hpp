#pragma once
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace locstat::par {

// Resolve the worker-thread request: explicit CLI value wins, then the
// LOCSTAT_THREADS environment variable, 0 means "leave the runtime default".
inline int resolve_threads(int cli_value) {
  if (cli_value > 0) return cli_value;
  if (const char* env = std::getenv("LOCSTAT_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 0;
}

inline void configure_threads(int cli_value) {
  const int n = resolve_threads(cli_value);
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

inline int active_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace locstat::par
