// Serial reference vs OpenMP batch kernels. Set CG_INVERSE_THREADS to cap workers.

#include <cginv/cgnet.hpp>
#include <cginv/dataset.hpp>

#include <benchmark/benchmark.h>

using namespace cginv;

namespace {

const Dataset& dataset() {
    static const Dataset d = [] {
        GenSpec spec;
        spec.n_side = 16;
        spec.angles = 10;
        spec.count = 8;
        spec.seed = 11;
        return generate_dataset(spec);
    }();
    return d;
}

void BM_GradParams(benchmark::State& state) {
    configure_threads();
    const Dataset& d = dataset();
    const NetOperator op(d.model.a);
    const NetParams params = NetParams::initial(5, 1, d.model.n());
    std::vector<TrainSample> batch;
    for (const auto& s : d.samples) batch.push_back({s.y, s.c});
    const Execution exec = state.range(0) ? Execution::parallel : Execution::serial;
    for (auto _ : state) {
        BatchGradient g = grad_params(batch, params, op, d.model.phi, d.model.n_side, LossKind::ssim,
                                      BMode::learned, exec);
        benchmark::DoNotOptimize(g.grad.data());
    }
    state.SetLabel(exec == Execution::parallel ? "openmp x" + std::to_string(worker_count()) : "serial");
}
BENCHMARK(BM_GradParams)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ReconstructAll(benchmark::State& state) {
    configure_threads();
    const Dataset& d = dataset();
    CglsConfig cfg = CglsConfig::gradient_defaults();
    cfg.k_max = 50;
    const Execution exec = state.range(0) ? Execution::parallel : Execution::serial;
    for (auto _ : state) {
        auto r = reconstruct_all(d, cfg, exec);
        benchmark::DoNotOptimize(r.data());
    }
    state.SetLabel(exec == Execution::parallel ? "openmp x" + std::to_string(worker_count()) : "serial");
}
BENCHMARK(BM_ReconstructAll)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
