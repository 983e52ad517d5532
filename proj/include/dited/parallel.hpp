#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dited {

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Runs fn(i) for i in [0, n). Every iteration is computed by exactly one
// thread with a fixed per-iteration evaluation order, so results are
// bit-identical for any thread count. fn must not touch shared mutable
// state outside its own index.
template <typename F>
inline void parallel_for(int64_t n, F&& fn, int64_t grain = 1024) {
#ifdef _OPENMP
    if (n >= 2 * grain && omp_get_max_threads() > 1 && !omp_in_parallel()) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
#else
    (void)grain;
#endif
    for (int64_t i = 0; i < n; ++i) fn(i);
}

}  // namespace dited
