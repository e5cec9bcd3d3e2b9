#ifndef ECGI_PARALLEL_HPP
#define ECGI_PARALLEL_HPP

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ecgi {

// Resolve a worker-count request: 0 means "use all hardware threads".
inline int resolve_workers(int requested) {
#ifdef _OPENMP
    if (requested <= 0) return omp_get_max_threads();
    return requested;
#else
    (void)requested;
    return 1;
#endif
}

// Run f(i) for i in [0, n). workers <= 1 runs the plain serial loop, which is
// the reference path the tests compare against. Iterations must write to
// disjoint destinations; there is no reduction, so results are identical for
// any worker count.
template <class F>
void parallel_for(int n, int workers, F&& f) {
    workers = resolve_workers(workers);
#ifdef _OPENMP
    if (workers > 1 && n > 1) {
        #pragma omp parallel for schedule(static) num_threads(workers)
        for (int i = 0; i < n; ++i) {
            f(i);
        }
        return;
    }
#endif
    for (int i = 0; i < n; ++i) {
        f(i);
    }
}

} // namespace ecgi

#endif
