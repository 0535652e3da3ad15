// SPDX-License-Identifier: Apache-2.0
#include "verify.hpp"

#include "oracles.hpp"
#include "rig.hpp"
#include "sketchcp/als.hpp"
#include "sketchcp/mttkrp.hpp"
#include "sketchcp/parallel.hpp"
#include "sketchcp/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace sketchcp::cli {
namespace {

struct Reporter {
    std::ostream& out;
    int failures = 0;

    void check(const std::string& name, const std::function<std::string(bool&)>& body) {
        bool ok = false;
        std::string detail;
        try {
            detail = body(ok);
        } catch (const std::exception& e) {
            ok = false;
            detail = std::string("exception: ") + e.what();
        }
        out << (ok ? "PASS " : "FAIL ") << name << "  " << detail << '\n';
        if (!ok) ++failures;
    }
};

std::string fmt(const char* label, double v) {
    std::ostringstream s;
    s << label << '=' << v;
    return s.str();
}

double rel_err(const Matrix& a, const Matrix& b) {
    const double denom = std::max(b.norm(), 1e-300);
    return (a - b).norm() / denom;
}

void samplers(Reporter& r, std::uint64_t seed) {
    const std::vector<std::uint64_t> dims{4, 4, 3};
    const auto factors = oracle::random_factors(dims, 2, seed);
    const auto t = oracle::random_tensor(dims, 0.5, seed + 1);
    const auto exact = oracle::krp_leverage(factors, 2);
    const std::size_t J = 200000;

    for (const auto& grid : {std::vector<int>{1, 1, 1}, std::vector<int>{2, 2, 1}}) {
        const std::string tag = std::to_string(grid[0] * grid[1] * grid[2]);
        r.check("sts-tv-P" + tag, [&](bool& ok) {
            oracle::Rig rig(t, grid, ScheduleKind::tensor_stationary, SamplerKind::sts, J, factors, seed);
            const auto batch = draw_samples(rig.ctx, 2);
            const double tv = oracle::tv_distance(oracle::empirical(batch, dims), exact);
            ok = tv < 0.01;
            return fmt("tv", tv);
        });
    }
    r.check("arls-tv-P4", [&](bool& ok) {
        oracle::Rig rig(t, {2, 2, 1}, ScheduleKind::tensor_stationary, SamplerKind::arls_lev, J, factors, seed);
        const auto batch = draw_samples(rig.ctx, 2);
        const double tv = oracle::tv_distance(oracle::empirical(batch, dims), oracle::product_leverage(factors, 2));
        ok = tv < 0.01;
        return fmt("tv", tv);
    });
    r.check("sts-path-probability", [&](bool& ok) {
        const std::vector<std::uint64_t> d4{4, 4, 4, 4};
        const auto f4 = oracle::random_factors(d4, 3, seed + 2);
        oracle::Rig rig(oracle::random_tensor(d4, 0.3, seed), {2, 1, 2, 1}, ScheduleKind::tensor_stationary,
                        SamplerKind::sts, 1, f4, seed, 2);
        const auto lev = oracle::krp_leverage(f4, 3);
        const SquareMatrix pinv = pseudo_inverse(hadamard_gram_chain(rig.ctx.grams, 3));
        double worst = 0.0;
        for (std::uint64_t c = 0; c < lev.size(); ++c) {
            const auto tuple = oracle::unfolding_tuple(d4, 3, c);
            const double p = sts_path_probability(rig.ctx.trees, rig.factors, rig.ctx.grams, pinv, 3, tuple);
            worst = std::max(worst, std::abs(p - lev[c]));
        }
        ok = worst <= 1e-10;
        return fmt("max_abs_err", worst);
    });
    r.check("tree-consistency", [&](bool& ok) {
        const std::vector<std::uint64_t> d{37, 5, 6};
        const auto f = oracle::random_factors(d, 3, seed + 3);
        oracle::Rig rig(oracle::random_tensor(d, 0.1, seed), {8, 1, 1}, ScheduleKind::tensor_stationary,
                        SamplerKind::sts, 1, f, seed, 2);
        const auto& tree = rig.ctx.trees[0];
        double worst = (tree.root() - rig.ctx.grams[0]).cwiseAbs().maxCoeff() / rig.ctx.grams[0].cwiseAbs().maxCoeff();
        for (std::size_t v = 1; v < tree.leaf_count(); ++v)
            worst = std::max(worst, (tree.shared[v] - tree.shared[2 * v] - tree.shared[2 * v + 1]).cwiseAbs().maxCoeff());
        ok = worst <= 1e-12;
        return fmt("max_err", worst);
    });
}

void mttkrp(Reporter& r, std::uint64_t seed) {
    const std::vector<std::uint64_t> dims{5, 6, 7};
    const auto t = oracle::random_tensor(dims, 0.3, seed);
    const auto f = oracle::random_factors(dims, 3, seed + 1);
    r.check("exact-vs-dense", [&](bool& ok) {
        double worst = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            std::vector<RowSource> src;
            for (const auto& m : f) src.push_back(RowSource::whole(m));
            worst = std::max(worst, rel_err(mttkrp_exact(Matricization(t, k), src), oracle::dense_mttkrp(t, f, k)));
        }
        ok = worst <= 1e-10;
        return fmt("rel_err", worst);
    });
    const std::vector<std::uint64_t> d8{8, 8, 8};
    const auto t8 = oracle::random_tensor(d8, 0.2, seed + 2);
    const auto f8 = oracle::random_factors(d8, 3, seed + 3);
    SampleBatch batch;
    batch.mode_count = 3;
    batch.skip = 1;
    batch.count = 60;
    std::mt19937_64 g(seed);
    for (std::size_t s = 0; s < batch.count; ++s) {
        batch.X.push_back(static_cast<index_t>(g() % 8));
        batch.X.push_back(0);
        batch.X.push_back(static_cast<index_t>(g() % 8));
        batch.prob.push_back(1.0 / 64.0);
    }
    batch.weights = sample_weights(batch.prob, batch.count);
    fill_design_rows(batch, f8);
    const Matricization m(t8, 1);
    r.check("csr-vs-filter-scan", [&](bool& ok) {
        const SampledCsr csr = gather_sampled_nonzeros_to_csr(m, batch.X, batch.count);
        std::vector<std::tuple<std::size_t, std::size_t, double>> got, want;
        for (std::size_t i = 0; i < csr.rows; ++i)
            for (std::size_t p = csr.row_ptr[i]; p < csr.row_ptr[i + 1]; ++p) got.emplace_back(i, csr.col_idx[p], csr.vals[p]);
        for (std::size_t s = 0; s < batch.count; ++s)
            for (const auto& [row, v] : oracle::filter_scan(t8, 1, batch.row(s))) want.emplace_back(row, s, v);
        std::sort(got.begin(), got.end());
        std::sort(want.begin(), want.end());
        ok = got == want;
        return "nnz=" + std::to_string(got.size());
    });
    r.check("downsampled-vs-explicit", [&](bool& ok) {
        const SampledCsr csr = gather_sampled_nonzeros_to_csr(m, batch.X, batch.count);
        const double e = rel_err(downsampled_mttkrp(csr, batch.H, batch.weights), oracle::explicit_sketch_mttkrp(t8, f8, batch));
        ok = e <= 1e-10;
        return fmt("rel_err", e);
    });
    r.check("worker-invariance", [&](bool& ok) {
        const int before = worker_count();
        const SampledCsr csr = gather_sampled_nonzeros_to_csr(m, batch.X, batch.count);
        set_worker_count(1);
        const Matrix one = downsampled_mttkrp(csr, batch.H, batch.weights);
        set_worker_count(4);
        const Matrix four = downsampled_mttkrp(csr, batch.H, batch.weights);
        set_worker_count(before);
        ok = one == four;
        return std::string(ok ? "bit-identical" : "differs");
    });
}

void fit(Reporter& r, std::uint64_t seed) {
    const std::vector<std::uint64_t> dims{6, 6, 6};
    r.check("fit-vs-dense", [&](bool& ok) {
        const auto t = oracle::random_tensor(dims, 0.4, seed);
        auto f = oracle::random_factors(dims, 3, seed + 1);
        for (auto& m : f) normalize_columns(m);
        const std::vector<double> sigma{1.5, 0.7, 0.2};
        const double e = std::abs(compute_fit(t, f, sigma) - oracle::dense_fit(t, f, sigma));
        ok = e <= 1e-10;
        return fmt("abs_err", e);
    });
    r.check("fit-perfect", [&](bool& ok) {
        auto f = oracle::random_factors(dims, 2, seed + 2);
        for (auto& m : f) normalize_columns(m);
        const std::vector<double> sigma{2.0, 1.0};
        const auto t = oracle::synthesize(f, sigma);
        const double e = std::abs(compute_fit(t, f, sigma) - 1.0);
        ok = e <= 1e-10;
        return fmt("abs_err", e);
    });
    r.check("exact-als-monotone", [&](bool& ok) {
        AlsConfig cfg;
        cfg.rank = 3;
        cfg.rounds = 20;
        cfg.fit_every = 1;
        cfg.seed = seed;
        const auto res = run_als(oracle::random_tensor(dims, 0.4, seed + 3), cfg);
        double worst = 0.0;
        for (std::size_t i = 1; i < res.fits.size(); ++i) worst = std::max(worst, res.fits[i - 1].fit - res.fits[i].fit);
        ok = worst <= 1e-8;
        return fmt("max_drop", worst);
    });
}

void schedules(Reporter& r, std::uint64_t seed) {
    const std::vector<std::uint64_t> dims{6, 6, 6};
    const auto t = oracle::random_tensor(dims, 0.4, seed);
    const auto f = oracle::random_factors(dims, 3, seed + 1);
    r.check("schedule-equivalence", [&](bool& ok) {
        oracle::Rig ts(t, {2, 2, 1}, ScheduleKind::tensor_stationary, SamplerKind::sts, 500, f, seed);
        oracle::Rig as(t, {2, 2, 1}, ScheduleKind::accumulator_stationary, SamplerKind::sts, 500, f, seed);
        const auto batch = draw_samples(ts.ctx, 0);
        const double e = rel_err(solve_mode(ts.ctx, 0, &batch), solve_mode(as.ctx, 0, &batch));
        ok = e <= 1e-12;
        return fmt("rel_err", e);
    });
    r.check("exact-rank-invariance", [&](bool& ok) {
        oracle::Rig base(t, {1, 1, 1}, ScheduleKind::tensor_stationary, SamplerKind::none, 0, f, seed);
        const Matrix ref = solve_mode(base.ctx, 1);
        double worst = 0.0;
        for (const auto& g : {std::vector<int>{2, 1, 1}, std::vector<int>{2, 2, 1}, std::vector<int>{2, 2, 2}}) {
            oracle::Rig rig(t, g, ScheduleKind::tensor_stationary, SamplerKind::none, 0, f, seed);
            worst = std::max(worst, rel_err(solve_mode(rig.ctx, 1), ref));
        }
        ok = worst <= 1e-10;
        return fmt("rel_err", worst);
    });
    r.check("accumulator-no-reduction", [&](bool& ok) {
        oracle::Rig as(t, {2, 2, 1}, ScheduleKind::accumulator_stationary, SamplerKind::arls_lev, 300, f, seed);
        as.comm.set_round(1);
        solve_mode(as.ctx, 2);
        const auto w = as.comm.ledger().total_words({}, CollectiveKind::reduce_scatter);
        ok = w == 0;
        return "reduce_scatter_words=" + std::to_string(w);
    });
}

void comm(Reporter& r, std::uint64_t seed) {
    r.check("allgather-cost", [&](bool& ok) {
        Communicator c(ProcessorGrid({4}));
        std::vector<std::vector<double>> pay(4, std::vector<double>(10, 1.0));
        const auto world = c.world();
        auto out = c.allgather<double>(world, pay);
        ok = out->size() == 40 && c.ledger().rank_words(2) == 30 && c.ledger().total_messages() == 12;
        return "words_rank2=" + std::to_string(c.ledger().rank_words(2));
    });
    r.check("all-to-allv-conservation", [&](bool& ok) {
        std::mt19937_64 g(seed);
        Communicator c(ProcessorGrid({2, 3}));
        const auto world = c.world();
        std::vector<std::vector<std::vector<double>>> send(6, std::vector<std::vector<double>>(6));
        std::uint64_t sent = 0;
        for (std::size_t a = 0; a < 6; ++a)
            for (std::size_t b = 0; b < 6; ++b) {
                send[a][b].assign(g() % 5, 1.0);
                if (a != b) sent += send[a][b].size();
            }
        c.all_to_allv<double>(world, send);
        ok = c.ledger().total_words() == sent;
        return "words=" + std::to_string(sent);
    });
    const std::vector<std::uint64_t> dims{8, 8, 8};
    const auto t = oracle::random_tensor(dims, 0.3, seed);
    const auto f = oracle::random_factors(dims, 4, seed + 1);
    auto sketched_round = [&](ScheduleKind schedule, std::size_t J) {
        oracle::Rig rig(t, {2, 2, 1}, schedule, SamplerKind::sts, J, f, seed);
        rig.comm.set_round(1);
        for (std::size_t k = 0; k < 3; ++k) solve_mode(rig.ctx, k);
        return rig.comm.ledger();
    };
    r.check("ts-reduction-independent-of-J", [&](bool& ok) {
        const auto a = sketched_round(ScheduleKind::tensor_stationary, 1024).total_words(1, CollectiveKind::reduce_scatter);
        const auto b = sketched_round(ScheduleKind::tensor_stationary, 4096).total_words(1, CollectiveKind::reduce_scatter);
        ok = a == b && a > 0;
        return "words=" + std::to_string(a) + "/" + std::to_string(b);
    });
    r.check("as-gather-linear-in-J", [&](bool& ok) {
        const auto a = sketched_round(ScheduleKind::accumulator_stationary, 1024).total_words(1, {}, Phase::gather);
        const auto b = sketched_round(ScheduleKind::accumulator_stationary, 4096).total_words(1, {}, Phase::gather);
        ok = b == 4 * a && a == sampled_as_round_gather_words(1024, 4, 3, 4);
        return "words=" + std::to_string(a) + "/" + std::to_string(b);
    });
    r.check("exact-ts-closed-form", [&](bool& ok) {
        oracle::Rig rig(t, {2, 2, 2}, ScheduleKind::tensor_stationary, SamplerKind::none, 0, f, seed);
        for (std::uint64_t round = 1; round <= 2; ++round) {
            rig.comm.set_round(round);
            for (std::size_t k = 0; k < 3; ++k) {
                Matrix u = solve_mode(rig.ctx, k);
                normalize_columns(u);
                rig.factors.matrix(k) = u;
                refresh_mode(rig.ctx, k);
            }
        }
        const double expect = exact_ts_round_words_per_rank(dims, rig.grid, 4);
        bool all = true;
        for (int p = 0; p < 8; ++p) {
            const auto w = rig.comm.ledger().rank_words(p, 2, {}, Phase::gather) +
                           rig.comm.ledger().rank_words(p, 2, {}, Phase::reduction);
            all = all && static_cast<double>(w) == expect;
        }
        ok = all;
        return fmt("expected_per_rank", expect);
    });
}

}  // namespace

int run_suite(const std::string& suite, std::uint64_t seed, std::ostream& out) {
    Reporter r{out};
    out << "# suite " << suite << " seed " << seed << '\n';
    if (suite == "samplers") samplers(r, seed);
    else if (suite == "mttkrp") mttkrp(r, seed);
    else if (suite == "fit") fit(r, seed);
    else if (suite == "schedules") schedules(r, seed);
    else if (suite == "comm") comm(r, seed);
    else throw std::invalid_argument("unknown suite: " + suite);
    return r.failures;
}

}  // namespace sketchcp::cli
