#pragma once

#include <algorithm>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace phydeformer {

// Thread budget: OpenMP's default, optionally capped by the
// PHYDEFORMER_THREADS environment variable (values < 1 are ignored).
inline int max_threads() {
#ifdef _OPENMP
  int n = omp_get_max_threads();
  if (const char* env = std::getenv("PHYDEFORMER_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n > 0 ? n : 1;
#else
  return 1;
#endif
}

// Data-parallel map over [0, n). The body must write only to slot i —
// reductions belong in a serial pass afterwards, so results never depend
// on the thread count.
template <class Fn>
void parallel_for(long long n, Fn&& fn) {
#ifdef _OPENMP
  const int threads = max_threads();
  if (threads > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(threads)
    for (long long i = 0; i < n; ++i) fn(i);
    return;
  }
#endif
  for (long long i = 0; i < n; ++i) fn(i);
}

}  // namespace phydeformer
