// SPDX-License-Identifier: Apache-2.0
#include "sketchcp/schedules.hpp"

#include "sketchcp/mttkrp.hpp"
#include "sketchcp/parallel.hpp"

#include <chrono>

namespace sketchcp {
namespace {

class Stopwatch {
public:
    explicit Stopwatch(double& sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}
    ~Stopwatch() { sink_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

private:
    double& sink_;
    std::chrono::steady_clock::time_point start_;
};

std::vector<int> row_owners(const ProcessorGrid& grid, std::size_t mode, std::uint64_t extent) {
    std::vector<int> owner(extent);
    for (int p = 0; p < grid.rank_count(); ++p) {
        const RowRange r = grid.owned_rows(mode, p, extent);
        for (auto i = r.begin; i < r.end; ++i) owner[i] = p;
    }
    return owner;
}

std::vector<double> flatten_rows(const Matrix& m, RowRange rows) {
    const auto* begin = m.data() + static_cast<Eigen::Index>(rows.begin) * m.cols();
    return {begin, begin + static_cast<std::ptrdiff_t>(rows.size()) * m.cols()};
}

// Sampled rows of one mode after a gather: the row for sample s starts at
// buffer->data() + slot[s] * R.
struct SampledRows {
    std::vector<std::shared_ptr<const std::vector<double>>> buffers;  // per gather group
    std::vector<std::size_t> group;                                   // per sample
    std::vector<std::size_t> slot;                                    // per sample

    const double* row(std::size_t s, std::size_t r) const { return buffers[group[s]]->data() + slot[s] * r; }
};

// Owners supply the rows of the samples they own; the gather runs within
// each of `groups` (every group lists its members in rank order).
SampledRows gather_sampled_rows(Communicator& comm, const FactorSet& factors, const SampleBatch& batch,
                                std::size_t mode, const std::vector<std::vector<int>>& groups,
                                const std::vector<std::size_t>& group_of_sample) {
    const ProcessorGrid& grid = comm.grid();
    const Matrix& u = factors.matrix(mode);
    const auto R = static_cast<std::size_t>(u.cols());
    const auto owner = row_owners(grid, mode, factors.extent(mode));

    SampledRows out;
    out.group = group_of_sample;
    out.slot.assign(batch.count, 0);
    out.buffers.resize(groups.size());
    std::vector<int> member_index(static_cast<std::size_t>(grid.rank_count()), -1);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& members = groups[g];
        for (std::size_t m = 0; m < members.size(); ++m) member_index[static_cast<std::size_t>(members[m])] = static_cast<int>(m);
        std::vector<std::vector<double>> payloads(members.size());
        std::vector<std::vector<std::size_t>> ids(members.size());
        for (std::size_t s = 0; s < batch.count; ++s) {
            if (group_of_sample[s] != g) continue;
            const index_t x = batch.X[s * batch.mode_count + mode];
            const int m = member_index[static_cast<std::size_t>(owner[x])];
            if (m < 0) throw Error("sampled row owner is outside its gather group");
            auto& pay = payloads[static_cast<std::size_t>(m)];
            const auto row = u.row(static_cast<Eigen::Index>(x));
            pay.insert(pay.end(), row.data(), row.data() + R);
            ids[static_cast<std::size_t>(m)].push_back(s);
        }
        out.buffers[g] = comm.allgather<double>(members, payloads);
        std::size_t next = 0;
        for (const auto& list : ids)
            for (std::size_t s : list) out.slot[s] = next++;
        for (int member : members) member_index[static_cast<std::size_t>(member)] = -1;
    }
    return out;
}

void check_layout(const SolveContext& ctx, ScheduleKind expected) {
    if (ctx.local->schedule != expected)
        throw Error(std::string("local tensor layout is not ") + to_string(expected));
}

// Reduce-scatter of per-rank accumulators (grid-block rows of mode k) within
// each mode-k slice, then multiply each owned block by G^+.
Matrix reduce_and_finish(SolveContext& ctx, std::size_t k, std::vector<Matrix>& partial, const SquareMatrix& pinv) {
    Communicator& comm = *ctx.comm;
    const ProcessorGrid& grid = comm.grid();
    const FactorSet& f = *ctx.factors;
    const Eigen::Index R = f.rank();
    Matrix out(static_cast<Eigen::Index>(f.extent(k)), R);
    std::vector<std::vector<Matrix>> owned(static_cast<std::size_t>(grid.dims()[k]));
    {
        Stopwatch sw(ctx.times.reduction);
        comm.set_phase(Phase::reduction);
        for (int c = 0; c < grid.dims()[k]; ++c) {
            const auto members = grid.slice(k, c);
            std::vector<std::vector<double>> payloads;
            std::vector<std::size_t> blocks;
            for (int p : members) {
                Matrix& m = partial[static_cast<std::size_t>(p)];
                payloads.emplace_back(m.data(), m.data() + m.size());
                m.resize(0, 0);
                blocks.push_back(static_cast<std::size_t>(f.owned_rows(k, p).size()) * static_cast<std::size_t>(R));
            }
            auto parts = comm.reduce_scatter<double>(members, payloads, blocks);
            for (std::size_t t = 0; t < members.size(); ++t) {
                const RowRange rows = f.owned_rows(k, members[t]);
                owned[static_cast<std::size_t>(c)].push_back(
                    MatrixMap(parts[t].data(), static_cast<Eigen::Index>(rows.size()), R));
            }
        }
    }
    Stopwatch sw(ctx.times.postprocess);
    for (int c = 0; c < grid.dims()[k]; ++c) {
        const auto members = grid.slice(k, c);
        for (std::size_t t = 0; t < members.size(); ++t) {
            const RowRange rows = f.owned_rows(k, members[t]);
            out.middleRows(static_cast<Eigen::Index>(rows.begin), static_cast<Eigen::Index>(rows.size())) =
                owned[static_cast<std::size_t>(c)][t] * pinv;
        }
    }
    return out;
}

SquareMatrix solve_pinv(const SolveContext& ctx, std::size_t k) {
    return pseudo_inverse(hadamard_gram_chain(ctx.grams, k));
}

}  // namespace

SolveContext::SolveContext(Communicator& comm_, const LocalTensorSet& local_, FactorSet& factors_,
                           ScheduleKind schedule_, SamplerKind sampler_, std::size_t samples_, std::uint64_t seed_)
    : comm(&comm_), local(&local_), factors(&factors_), schedule(schedule_), sampler(sampler_), samples(samples_),
      seed(seed_) {
    const std::size_t n = factors->mode_count();
    if (schedule == ScheduleKind::accumulator_stationary && sampler == SamplerKind::none)
        throw Error("the accumulator-stationary schedule requires a sampler");
    if (sampler != SamplerKind::none && samples == 0) throw Error("sketched solves need at least one sample");
    if (!(comm->grid() == factors->grid())) throw ShapeError("communicator and factors use different grids");
    if (local->local.size() != static_cast<std::size_t>(comm->grid().rank_count()))
        throw ShapeError("local tensor set does not match the grid");
    grams.assign(n, SquareMatrix());
    arls.resize(n);
    trees.resize(n);
    gathered.resize(n);
}

void refresh_mode(SolveContext& ctx, std::size_t mode) {
    Communicator& comm = *ctx.comm;
    comm.set_phase(Phase::gram);
    const auto blocks = ctx.factors->blocks(mode);
    ctx.grams[mode] = gram_allreduce(comm, blocks);
    ctx.gathered[mode].clear();
    Stopwatch sw(ctx.times.sampling);
    switch (ctx.sampler) {
        case SamplerKind::arls_lev: ctx.arls[mode] = arls_lev_build(comm, *ctx.factors, mode, ctx.grams[mode]); break;
        case SamplerKind::sts: ctx.trees[mode] = sts_build(comm, *ctx.factors, mode, ctx.leaf_block_size); break;
        case SamplerKind::none: break;
    }
}

SampleBatch draw_samples(SolveContext& ctx, std::size_t k) {
    Stopwatch sw(ctx.times.sampling);
    const std::uint64_t round = ctx.comm->round();
    switch (ctx.sampler) {
        case SamplerKind::arls_lev:
            return arls_lev_sample(*ctx.comm, ctx.arls, *ctx.factors, k, ctx.samples, ctx.seed, round);
        case SamplerKind::sts:
            return sts_sample(*ctx.comm, ctx.trees, *ctx.factors, ctx.grams, solve_pinv(ctx, k), k, ctx.samples,
                              ctx.seed, round);
        case SamplerKind::none: break;
    }
    throw Error("draw_samples: no sampler configured");
}

Matrix solve_mode_tensor_stationary(SolveContext& ctx, std::size_t k, const SampleBatch* batch) {
    check_layout(ctx, ScheduleKind::tensor_stationary);
    Communicator& comm = *ctx.comm;
    const ProcessorGrid& grid = comm.grid();
    const FactorSet& f = *ctx.factors;
    const std::size_t n = f.mode_count();
    const Eigen::Index R = f.rank();
    const auto pcount = static_cast<std::size_t>(grid.rank_count());
    const SquareMatrix pinv = solve_pinv(ctx, k);
    std::vector<Matrix> partial(pcount);

    const bool sketched = batch != nullptr || ctx.sampler != SamplerKind::none;
    if (!sketched) {
        {
            Stopwatch sw(ctx.times.gather);
            comm.set_phase(Phase::gather);
            for (std::size_t i = 0; i < n; ++i) {
                if (i == k || !ctx.gathered[i].empty()) continue;
                for (int c = 0; c < grid.dims()[i]; ++c) {
                    const auto members = grid.slice(i, c);
                    std::vector<std::vector<double>> payloads;
                    for (int p : members) payloads.push_back(flatten_rows(f.matrix(i), f.owned_rows(i, p)));
                    ctx.gathered[i].push_back(comm.allgather<double>(members, payloads));
                }
            }
        }
        Stopwatch sw(ctx.times.mttkrp);
        for (std::size_t p = 0; p < pcount; ++p) {
            std::vector<RowSource> sources;
            for (std::size_t i = 0; i < n; ++i) {
                if (i == k) {
                    sources.emplace_back();
                    continue;
                }
                const int c = grid.coord(static_cast<int>(p), i);
                const RowRange block = grid.grid_block(i, c, f.extent(i));
                sources.push_back({block.begin, ConstMatrixMap(ctx.gathered[i][static_cast<std::size_t>(c)]->data(),
                                                               static_cast<Eigen::Index>(block.size()), R)});
            }
            partial[p] = mttkrp_exact(ctx.local->local[p][k], sources);
        }
        return reduce_and_finish(ctx, k, partial, pinv);
    }

    SampleBatch drawn;
    if (batch == nullptr) {
        drawn = draw_samples(ctx, k);
        batch = &drawn;
    }
    if (batch->skip != k || batch->mode_count != n) throw ShapeError("sample batch was drawn for another mode");
    const std::size_t J = batch->count;

    // Sampled rows of mode i travel within the mode-i slice owning them.
    std::vector<SampledRows> rows(n);
    std::vector<std::vector<int>> coord_of(n, std::vector<int>(J, 0));
    {
        Stopwatch sw(ctx.times.gather);
        comm.set_phase(Phase::gather);
        for (std::size_t i = 0; i < n; ++i) {
            if (i == k) continue;
            std::vector<std::vector<int>> groups;
            for (int c = 0; c < grid.dims()[i]; ++c) groups.push_back(grid.slice(i, c));
            std::vector<int> block_of(f.extent(i));
            for (int c = 0; c < grid.dims()[i]; ++c) {
                const RowRange b = grid.grid_block(i, c, f.extent(i));
                for (auto x = b.begin; x < b.end; ++x) block_of[x] = c;
            }
            std::vector<std::size_t> group_of(J);
            for (std::size_t s = 0; s < J; ++s) {
                coord_of[i][s] = block_of[batch->X[s * n + i]];
                group_of[s] = static_cast<std::size_t>(coord_of[i][s]);
            }
            rows[i] = gather_sampled_rows(comm, f, *batch, i, groups, group_of);
        }
    }

    Stopwatch sw(ctx.times.mttkrp);
    for (std::size_t p = 0; p < pcount; ++p) {
        const auto coords = grid.coords(static_cast<int>(p));
        std::vector<std::size_t> mine;
        for (std::size_t s = 0; s < J; ++s) {
            bool inside = true;
            for (std::size_t i = 0; i < n && inside; ++i)
                if (i != k && coord_of[i][s] != coords[i]) inside = false;
            if (inside) mine.push_back(s);
        }
        std::vector<index_t> x(mine.size() * n);
        std::vector<double> w(mine.size());
        Matrix h = Matrix::Ones(static_cast<Eigen::Index>(mine.size()), R);
        for (std::size_t t = 0; t < mine.size(); ++t) {
            const std::size_t s = mine[t];
            std::copy_n(batch->X.begin() + static_cast<std::ptrdiff_t>(s * n), n, x.begin() + static_cast<std::ptrdiff_t>(t * n));
            w[t] = batch->weights[s];
            for (std::size_t i = 0; i < n; ++i)
                if (i != k)
                    h.row(static_cast<Eigen::Index>(t)).array() *=
                        Eigen::Map<const RowVector>(rows[i].row(s, static_cast<std::size_t>(R)), R).array();
        }
        const SampledCsr csr = gather_sampled_nonzeros_to_csr(ctx.local->local[p][k], x, mine.size());
        partial[p] = downsampled_mttkrp(csr, h, w);
    }
    return reduce_and_finish(ctx, k, partial, pinv);
}

Matrix solve_mode_accumulator_stationary(SolveContext& ctx, std::size_t k, const SampleBatch* batch) {
    check_layout(ctx, ScheduleKind::accumulator_stationary);
    if (ctx.sampler == SamplerKind::none && batch == nullptr)
        throw Error("the accumulator-stationary schedule requires a sampler");
    Communicator& comm = *ctx.comm;
    const ProcessorGrid& grid = comm.grid();
    const FactorSet& f = *ctx.factors;
    const std::size_t n = f.mode_count();
    const Eigen::Index R = f.rank();
    const auto pcount = static_cast<std::size_t>(grid.rank_count());
    const SquareMatrix pinv = solve_pinv(ctx, k);

    SampleBatch drawn;
    if (batch == nullptr) {
        drawn = draw_samples(ctx, k);
        batch = &drawn;
    }
    if (batch->skip != k || batch->mode_count != n) throw ShapeError("sample batch was drawn for another mode");
    const std::size_t J = batch->count;

    Matrix h = Matrix::Ones(static_cast<Eigen::Index>(J), R);
    {
        Stopwatch sw(ctx.times.gather);
        comm.set_phase(Phase::gather);
        const std::vector<std::vector<int>> everyone{comm.world()};
        const std::vector<std::size_t> one_group(J, 0);
        for (std::size_t i = 0; i < n; ++i) {
            if (i == k) continue;
            const SampledRows rows = gather_sampled_rows(comm, f, *batch, i, everyone, one_group);
            for (std::size_t s = 0; s < J; ++s)
                h.row(static_cast<Eigen::Index>(s)).array() *=
                    Eigen::Map<const RowVector>(rows.row(s, static_cast<std::size_t>(R)), R).array();
        }
    }

    Matrix out(static_cast<Eigen::Index>(f.extent(k)), R);
    std::vector<Matrix> acc(pcount);
    {
        Stopwatch sw(ctx.times.mttkrp);
        for (std::size_t p = 0; p < pcount; ++p) {
            const SampledCsr csr = gather_sampled_nonzeros_to_csr(ctx.local->local[p][k], batch->X, J);
            acc[p] = downsampled_mttkrp(csr, h, batch->weights);
        }
    }
    Stopwatch sw(ctx.times.postprocess);
    for (std::size_t p = 0; p < pcount; ++p) {
        const RowRange rows = f.owned_rows(k, static_cast<int>(p));
        out.middleRows(static_cast<Eigen::Index>(rows.begin), static_cast<Eigen::Index>(rows.size())) = acc[p] * pinv;
    }
    return out;
}

Matrix solve_mode(SolveContext& ctx, std::size_t k, const SampleBatch* batch) {
    return ctx.schedule == ScheduleKind::tensor_stationary ? solve_mode_tensor_stationary(ctx, k, batch)
                                                           : solve_mode_accumulator_stationary(ctx, k, batch);
}

double exact_ts_round_words_per_rank(std::span<const std::uint64_t> dims, const ProcessorGrid& grid,
                                     std::uint64_t rank) {
    if (dims.size() != grid.mode_count()) throw ShapeError("grid and tensor mode counts differ");
    double words = 0.0;
    for (std::size_t k = 0; k < dims.size(); ++k) {
        const double pk = grid.dims()[k];
        const double qk = grid.slice_size(k);
        words += static_cast<double>(dims[k]) / pk * static_cast<double>(rank) * (1.0 - 1.0 / qk);
    }
    return 2.0 * words;
}

std::uint64_t sampled_as_round_gather_words(std::uint64_t J, std::uint64_t rank, std::uint64_t modes,
                                            std::uint64_t procs) {
    return J * rank * modes * (modes - 1) * (procs - 1);
}

}  // namespace sketchcp
