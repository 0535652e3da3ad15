// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sketchcp/grid_comm.hpp"
#include "sketchcp/samplers.hpp"
#include "sketchcp/schedules.hpp"
#include "sketchcp/tensor_io.hpp"
#include "sketchcp/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sketchcp {

struct AlsConfig {
    std::size_t rank = 10;
    std::size_t rounds = 10;
    SamplerKind sampler = SamplerKind::none;
    std::size_t samples = 0;  // J
    ScheduleKind schedule = ScheduleKind::tensor_stationary;
    std::vector<int> grid;    // empty: optimal grid for `procs`
    int procs = 1;
    std::uint64_t seed = 0;
    std::size_t fit_every = 5;  // 0: final round only
    bool permute = true;        // random index permutation for load balance
    std::size_t leaf_block_size = 0;
    bool keep_batches = false;  // retain every sample batch in the result

    /// Throws Error describing the first invalid field.
    void validate() const;
};

struct FitPoint {
    std::uint64_t round = 0;
    double fit = 0.0;
    double running_max = 0.0;
};

struct DecompResult {
    std::vector<Matrix> factors;  // unit columns, original index order
    std::vector<double> sigma;
    std::vector<FitPoint> fits;
    double final_fit = 0.0;
    ProcessorGrid grid{std::vector<int>{1}};
    bool grid_feasible = true;
    CommLedger ledger;
    PhaseTimes times;
    double fit_seconds = 0.0;
    double total_seconds = 0.0;
    std::uint64_t stored_nonzeros = 0;  // summed over ranks and copies
    std::vector<SampleBatch> batches;   // keep_batches only, in solve order
};

struct InitialFactors {
    std::vector<Matrix> factors;
    std::vector<double> sigma;
};

/// Standard normal entries from the seed's init stream, normalized columns,
/// sigma all ones.
InitialFactors init_factors(std::span<const std::uint64_t> dims, std::size_t rank, std::uint64_t seed);

DecompResult run_als(const SparseTensor& t, const AlsConfig& cfg);

/// Machine-readable run summary.
std::string summary_json(const AlsConfig& cfg, const DecompResult& r);

}  // namespace sketchcp
