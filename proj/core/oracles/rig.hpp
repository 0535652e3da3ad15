// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sketchcp/grid_comm.hpp"
#include "sketchcp/linalg.hpp"
#include "sketchcp/schedules.hpp"
#include "sketchcp/tensor_io.hpp"

#include <vector>

namespace sketchcp::oracle {

/// A tensor distributed over a simulated grid with a solve context around
/// it. Grams and sampler state are built for every mode on construction.
/// Not movable: the context points into it.
struct Rig {
    Rig(SparseTensor t, std::vector<int> grid_dims, ScheduleKind schedule, SamplerKind sampler, std::size_t samples,
        std::vector<Matrix> start, std::uint64_t seed, std::size_t leaf_block_size = 0)
        : tensor(std::move(t)),
          grid(std::move(grid_dims)),
          comm(grid),
          local(partition_to_grid(tensor, grid, schedule)),
          factors(grid, std::move(start)),
          ctx(comm, local, factors, schedule, sampler, samples, seed) {
        ctx.leaf_block_size = leaf_block_size;
        for (std::size_t k = 0; k < tensor.mode_count(); ++k) refresh_mode(ctx, k);
    }
    Rig(const Rig&) = delete;
    Rig& operator=(const Rig&) = delete;

    SparseTensor tensor;
    ProcessorGrid grid;
    Communicator comm;
    LocalTensorSet local;
    FactorSet factors;
    SolveContext ctx;
};

}  // namespace sketchcp::oracle
