// SPDX-License-Identifier: Apache-2.0
#include "sketchcp/als.hpp"

#include "sketchcp/linalg.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <tuple>

namespace sketchcp {
namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void AlsConfig::validate() const {
    if (rank < 1) throw Error("rank must be at least 1");
    if (rounds < 1) throw Error("rounds must be at least 1");
    if (sampler != SamplerKind::none && samples < 1) throw Error("sketched solves need at least one sample");
    if (schedule == ScheduleKind::accumulator_stationary && sampler == SamplerKind::none)
        throw Error("the accumulator-stationary schedule requires a sampler");
    if (grid.empty() && procs < 1) throw Error("procs must be at least 1");
    for (int d : grid)
        if (d < 1) throw Error("grid dimensions must be positive");
}

InitialFactors init_factors(std::span<const std::uint64_t> dims, std::size_t rank, std::uint64_t seed) {
    InitialFactors out;
    for (std::size_t k = 0; k < dims.size(); ++k) {
        Engine g = make_stream({seed, StreamPurpose::init_factors, 0, k, kSharedRank});
        out.factors.push_back(gaussian_matrix(static_cast<Eigen::Index>(dims[k]), static_cast<Eigen::Index>(rank), g));
        normalize_columns(out.factors.back());
    }
    out.sigma.assign(rank, 1.0);
    return out;
}

DecompResult run_als(const SparseTensor& input, const AlsConfig& cfg) {
    const auto started = std::chrono::steady_clock::now();
    cfg.validate();
    input.validate();
    const std::size_t n = input.mode_count();

    DecompResult result;
    if (!cfg.grid.empty()) {
        if (cfg.grid.size() != n) throw Error("grid has " + std::to_string(cfg.grid.size()) + " dimensions, tensor has " +
                                              std::to_string(n) + " modes");
        result.grid = ProcessorGrid(cfg.grid);
    } else {
        GridChoice choice = optimal_grid(input.dims, cfg.procs);
        result.grid = choice.grid;
        result.grid_feasible = choice.feasible;
    }

    ModePermutations perms = ModePermutations::identity(input.dims);
    SparseTensor permuted;
    const SparseTensor* t = &input;
    if (cfg.permute) {
        std::tie(permuted, perms) = permute_modes(input, cfg.seed);
        t = &permuted;
    }

    Communicator comm(result.grid);
    comm.set_round(0);
    const LocalTensorSet local = partition_to_grid(*t, result.grid, cfg.schedule);
    for (const auto& per_rank : local.local)
        for (std::size_t j = 0; j < per_rank.size(); ++j)
            if (cfg.schedule == ScheduleKind::accumulator_stationary || j == 0) result.stored_nonzeros += per_rank[j].nnz();

    InitialFactors init = init_factors(t->dims, cfg.rank, cfg.seed);
    FactorSet factors(result.grid, std::move(init.factors));
    std::vector<double> sigma = std::move(init.sigma);

    SolveContext ctx(comm, local, factors, cfg.schedule, cfg.sampler, cfg.samples, cfg.seed);
    ctx.leaf_block_size = cfg.leaf_block_size;
    for (std::size_t k = 0; k < n; ++k) refresh_mode(ctx, k);

    const Matricization last_mode(*t, n - 1);
    const double norm_sq = t->norm_squared();

    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t round = 1; round <= cfg.rounds; ++round) {
        comm.set_round(round);
        for (std::size_t k = 0; k < n; ++k) {
            Matrix u;
            if (cfg.sampler != SamplerKind::none) {
                SampleBatch batch = draw_samples(ctx, k);
                u = solve_mode(ctx, k, &batch);
                if (cfg.keep_batches) result.batches.push_back(std::move(batch));
            } else {
                u = solve_mode(ctx, k);
            }
            if (!u.allFinite())
                throw Error("non-finite entries in factor " + std::to_string(k) + " during round " +
                            std::to_string(round));
            sigma = normalize_columns(u);
            factors.matrix(k) = std::move(u);
            refresh_mode(ctx, k);
        }
        const bool due = round == cfg.rounds || (cfg.fit_every > 0 && round % cfg.fit_every == 0);
        if (due) {
            const auto fit_start = std::chrono::steady_clock::now();
            const double fit = compute_fit(last_mode, norm_sq, factors.matrices(), sigma);
            result.fit_seconds += seconds_since(fit_start);
            best = std::max(best, fit);
            result.fits.push_back({round, fit, best});
        }
    }

    result.final_fit = result.fits.back().fit;
    result.sigma = sigma;
    for (std::size_t k = 0; k < n; ++k) result.factors.push_back(unpermute_rows(factors.matrix(k), perms.forward[k]));
    result.ledger = comm.ledger();
    result.times = ctx.times;
    result.total_seconds = seconds_since(started);
    return result;
}

std::string summary_json(const AlsConfig& cfg, const DecompResult& r) {
    nlohmann::json j;
    j["config"] = {{"rank", cfg.rank},
                   {"rounds", cfg.rounds},
                   {"sampler", to_string(cfg.sampler)},
                   {"samples", cfg.samples},
                   {"schedule", to_string(cfg.schedule)},
                   {"grid", r.grid.to_string()},
                   {"grid_feasible", r.grid_feasible},
                   {"procs", r.grid.rank_count()},
                   {"seed", cfg.seed},
                   {"fit_every", cfg.fit_every},
                   {"permute", cfg.permute}};
    nlohmann::json fits = nlohmann::json::array();
    for (const auto& f : r.fits) fits.push_back({{"round", f.round}, {"fit", f.fit}, {"running_max", f.running_max}});
    j["fit_history"] = fits;
    j["final_fit"] = r.final_fit;
    j["sigma"] = r.sigma;

    nlohmann::json ledger;
    for (int kind = 0; kind < kCollectiveKinds; ++kind) {
        const auto ck = static_cast<CollectiveKind>(kind);
        ledger[to_string(ck)] = {{"words", r.ledger.total_words({}, ck)}, {"messages", r.ledger.total_messages({}, ck)}};
    }
    nlohmann::json phases;
    for (int phase = 0; phase < kPhases; ++phase) {
        const auto ph = static_cast<Phase>(phase);
        phases[to_string(ph)] = {{"words", r.ledger.total_words({}, {}, ph)},
                                 {"messages", r.ledger.total_messages({}, {}, ph)}};
    }
    j["ledger_totals"] = {{"by_collective", ledger}, {"by_phase", phases}, {"words", r.ledger.total_words()},
                          {"messages", r.ledger.total_messages()}};
    j["timings_seconds"] = {{"sampling", r.times.sampling},   {"gather", r.times.gather},
                            {"mttkrp", r.times.mttkrp},       {"reduction", r.times.reduction},
                            {"postprocess", r.times.postprocess}, {"fit", r.fit_seconds},
                            {"total", r.total_seconds}};
    j["stored_nonzeros"] = r.stored_nonzeros;
    return j.dump(2);
}

}  // namespace sketchcp
