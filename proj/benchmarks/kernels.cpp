// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"
#include "rig.hpp"
#include "sketchcp/mttkrp.hpp"
#include "sketchcp/samplers.hpp"
#include "sketchcp/schedules.hpp"

#include <benchmark/benchmark.h>

using namespace sketchcp;

namespace {

const std::vector<std::uint64_t> kDims{200, 150, 100};

const SparseTensor& bench_tensor() {
    static const SparseTensor t = oracle::random_tensor(kDims, 0.01, 1);
    return t;
}

void BM_MttkrpExact(benchmark::State& state) {
    const auto rank = state.range(0);
    const auto f = oracle::random_factors(kDims, rank, 2);
    const Matricization m(bench_tensor(), 0);
    std::vector<RowSource> src;
    for (const auto& u : f) src.push_back(RowSource::whole(u));
    for (auto _ : state) benchmark::DoNotOptimize(mttkrp_exact(m, src));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m.nnz()));
}
BENCHMARK(BM_MttkrpExact)->Arg(8)->Arg(32);

void BM_MttkrpDownsampled(benchmark::State& state) {
    const auto J = static_cast<std::size_t>(state.range(0));
    const auto f = oracle::random_factors(kDims, 16, 3);
    oracle::Rig rig(bench_tensor(), {1, 1, 1}, ScheduleKind::tensor_stationary, SamplerKind::sts, J, f, 4);
    const auto batch = draw_samples(rig.ctx, 0);
    const Matricization m(bench_tensor(), 0);
    for (auto _ : state) {
        const auto csr = gather_sampled_nonzeros_to_csr(m, batch.X, batch.count);
        benchmark::DoNotOptimize(downsampled_mttkrp(csr, batch.H, batch.weights));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * J));
}
BENCHMARK(BM_MttkrpDownsampled)->Arg(1 << 12)->Arg(1 << 15);

void BM_Sample(benchmark::State& state, SamplerKind kind) {
    const auto J = static_cast<std::size_t>(state.range(0));
    const auto f = oracle::random_factors(kDims, 16, 5);
    oracle::Rig rig(bench_tensor(), {2, 2, 1}, ScheduleKind::accumulator_stationary, kind, J, f, 6);
    std::uint64_t round = 0;
    for (auto _ : state) {
        rig.comm.set_round(++round);
        benchmark::DoNotOptimize(draw_samples(rig.ctx, 2));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * J));
}
BENCHMARK_CAPTURE(BM_Sample, sts, SamplerKind::sts)->Arg(1 << 12)->Arg(1 << 15);
BENCHMARK_CAPTURE(BM_Sample, arls_lev, SamplerKind::arls_lev)->Arg(1 << 12)->Arg(1 << 15);

}  // namespace

BENCHMARK_MAIN();
