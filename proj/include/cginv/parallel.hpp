#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace cginv {

enum class Execution { serial, parallel };

/// Worker cap: CG_INVERSE_THREADS when set to a positive integer, otherwise
/// the OpenMP default.
int worker_count();

/// Pins Eigen's own threading to one thread so results do not depend on the
/// worker count. Called by every entry point that runs batch kernels.
void configure_threads();

namespace detail {
void parallel_for(std::size_t count, void (*body)(std::size_t, void*), void* ctx);
}

/// Calls fn(i) for i in [0, count). In parallel mode iterations are spread
/// over OpenMP workers; the first exception (lowest index) is rethrown after
/// all workers finish. Callers write results into per-index slots and reduce
/// them afterwards in index order, which keeps output independent of the
/// schedule.
template <class Fn>
void for_each_index(std::size_t count, Fn&& fn, Execution exec = Execution::parallel) {
    if (exec == Execution::serial || count < 2) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    struct Ctx {
        Fn* fn;
        std::vector<std::exception_ptr>* errors;
    } ctx{&fn, &errors};
    detail::parallel_for(
        count,
        [](std::size_t i, void* raw) {
            auto* c = static_cast<Ctx*>(raw);
            try {
                (*c->fn)(i);
            } catch (...) {
                (*c->errors)[i] = std::current_exception();
            }
        },
        &ctx);
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace cginv
