// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sketchcp/grid_comm.hpp"
#include "sketchcp/linalg.hpp"
#include "sketchcp/samplers.hpp"
#include "sketchcp/tensor_io.hpp"
#include "sketchcp/types.hpp"

#include <memory>
#include <span>
#include <vector>

namespace sketchcp {

/// Seconds spent per phase, summed over solves.
struct PhaseTimes {
    double sampling = 0.0;
    double gather = 0.0;
    double mttkrp = 0.0;
    double reduction = 0.0;
    double postprocess = 0.0;
};

/// Everything one mode solve needs. Gram matrices and sampler state for a
/// mode must be refreshed (refresh_mode) after that mode's factor changes.
struct SolveContext {
    SolveContext(Communicator& comm, const LocalTensorSet& local, FactorSet& factors, ScheduleKind schedule,
                 SamplerKind sampler, std::size_t samples, std::uint64_t seed);

    Communicator* comm;
    const LocalTensorSet* local;
    FactorSet* factors;
    ScheduleKind schedule;
    SamplerKind sampler;
    std::size_t samples;
    std::uint64_t seed;
    std::size_t leaf_block_size = 0;

    std::vector<SquareMatrix> grams;
    std::vector<ArlsModeState> arls;
    std::vector<LeverageTree> trees;
    PhaseTimes times;

    // Exact tensor-stationary solves: gathered grid blocks, per mode and grid
    // coordinate, valid until the mode is updated.
    std::vector<std::vector<std::shared_ptr<const std::vector<double>>>> gathered;
};

/// Gram allreduce, sampler rebuild and cache invalidation for one mode.
void refresh_mode(SolveContext& ctx, std::size_t mode);

/// Draws the batch for a sketched solve of mode k in the current round.
SampleBatch draw_samples(SolveContext& ctx, std::size_t k);

/// Each returns the new, unnormalized U_k = MTTKRP * G^+ assembled from the
/// rank-owned blocks. `batch` overrides the sampler when given.
Matrix solve_mode_tensor_stationary(SolveContext& ctx, std::size_t k, const SampleBatch* batch = nullptr);
Matrix solve_mode_accumulator_stationary(SolveContext& ctx, std::size_t k, const SampleBatch* batch = nullptr);
Matrix solve_mode(SolveContext& ctx, std::size_t k, const SampleBatch* batch = nullptr);

/// Words one rank receives per round in the gather and reduction phases of
/// exact tensor-stationary ALS: 2 * sum_k (I_k / P_k) R (1 - 1/q_k), q_k = P / P_k.
double exact_ts_round_words_per_rank(std::span<const std::uint64_t> dims, const ProcessorGrid& grid,
                                     std::uint64_t rank);

/// Total sampled-row gather words of one accumulator-stationary round:
/// J R N (N - 1) (P - 1).
std::uint64_t sampled_as_round_gather_words(std::uint64_t J, std::uint64_t rank, std::uint64_t modes,
                                            std::uint64_t procs);

}  // namespace sketchcp
