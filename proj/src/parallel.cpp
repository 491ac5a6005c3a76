#include <cginv/parallel.hpp>

#include <Eigen/Core>
#include <omp.h>

#include <cstdlib>
#include <string>

namespace cginv {

int worker_count() {
    int workers = omp_get_max_threads();
    if (const char* env = std::getenv("CG_INVERSE_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap > 0) workers = cap;
        } catch (const std::exception&) {
            // ignore malformed values and keep the OpenMP default
        }
    }
    return workers < 1 ? 1 : workers;
}

void configure_threads() { Eigen::setNbThreads(1); }

namespace detail {

void parallel_for(std::size_t count, void (*body)(std::size_t, void*), void* ctx) {
    const long n = static_cast<long>(count);
#pragma omp parallel for schedule(dynamic, 1) num_threads(worker_count())
    for (long i = 0; i < n; ++i) body(static_cast<std::size_t>(i), ctx);
}

} // namespace detail
} // namespace cginv
