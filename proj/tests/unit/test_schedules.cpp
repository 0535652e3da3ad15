// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "oracles.hpp"
#include "rig.hpp"
#include "sketchcp/schedules.hpp"

using namespace sketchcp;

namespace {

double rel(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff(); }

Matrix serial_update(const SparseTensor& t, const std::vector<Matrix>& f, std::size_t k) {
    SquareMatrix g = SquareMatrix::Ones(f[0].cols(), f[0].cols());
    for (std::size_t i = 0; i < f.size(); ++i)
        if (i != k) g = g.cwiseProduct(f[i].transpose() * f[i]);
    return oracle::dense_mttkrp(t, f, k) * g.completeOrthogonalDecomposition().pseudoInverse();
}

}  // namespace

TEST_SUITE("schedules") {

TEST_CASE("single-rank exact solve is the normal-equation update") {
    const std::vector<std::uint64_t> dims{6, 6, 6};
    const auto t = oracle::random_tensor(dims, 0.3, 1);
    const auto f = oracle::random_factors(dims, 3, 2);
    oracle::Rig rig(t, {1, 1, 1}, ScheduleKind::tensor_stationary, SamplerKind::none, 0, f, 3);
    for (std::size_t k = 0; k < 3; ++k) CHECK(rel(solve_mode(rig.ctx, k), serial_update(t, f, k)) < 1e-10);
    CHECK(rig.comm.ledger().total_words({}, {}, Phase::gather) == 0);
}

TEST_CASE("exact solve on a 2x2x1 grid equals the single-rank solve") {
    const std::vector<std::uint64_t> dims{6, 6, 6};
    const auto t = oracle::random_tensor(dims, 0.3, 4);
    const auto f = oracle::random_factors(dims, 3, 5);
    oracle::Rig one(t, {1, 1, 1}, ScheduleKind::tensor_stationary, SamplerKind::none, 0, f, 6);
    oracle::Rig four(t, {2, 2, 1}, ScheduleKind::tensor_stationary, SamplerKind::none, 0, f, 6);
    for (std::size_t k = 0; k < 3; ++k) CHECK(rel(solve_mode(four.ctx, k), solve_mode(one.ctx, k)) < 1e-10);
}

TEST_CASE("sampling does not shrink the tensor-stationary reduction") {
    const std::vector<std::uint64_t> dims{8, 6, 6};
    const auto t = oracle::random_tensor(dims, 0.3, 7);
    const auto f = oracle::random_factors(dims, 3, 8);
    oracle::Rig exact(t, {2, 2, 1}, ScheduleKind::tensor_stationary, SamplerKind::none, 0, f, 9);
    oracle::Rig sketched(t, {2, 2, 1}, ScheduleKind::tensor_stationary, SamplerKind::sts, 100, f, 9);
    for (std::size_t k = 0; k < 3; ++k) {
        solve_mode(exact.ctx, k);
        solve_mode(sketched.ctx, k);
    }
    const auto rs = exact.comm.ledger().total_words({}, CollectiveKind::reduce_scatter);
    CHECK(rs > 0);
    CHECK(sketched.comm.ledger().total_words({}, CollectiveKind::reduce_scatter) == rs);
}

TEST_CASE("single-rank accumulator-stationary equals tensor-stationary bit for bit") {
    const std::vector<std::uint64_t> dims{7, 5, 6};
    const auto t = oracle::random_tensor(dims, 0.3, 10);
    const auto f = oracle::random_factors(dims, 2, 11);
    for (auto kind : {SamplerKind::sts, SamplerKind::arls_lev}) {
        oracle::Rig ts(t, {1, 1, 1}, ScheduleKind::tensor_stationary, kind, 200, f, 12);
        oracle::Rig as(t, {1, 1, 1}, ScheduleKind::accumulator_stationary, kind, 200, f, 12);
        for (std::size_t k = 0; k < 3; ++k) {
            const auto b = draw_samples(ts.ctx, k);
            CHECK(solve_mode(ts.ctx, k, &b) == solve_mode(as.ctx, k, &b));
        }
    }
}

TEST_CASE("accumulator-stationary needs a sampler") {
    const std::vector<std::uint64_t> dims{4, 4, 4};
    CHECK_THROWS_AS(oracle::Rig(oracle::random_tensor(dims, 0.3, 13), {1, 1, 1}, ScheduleKind::accumulator_stationary,
                                SamplerKind::none, 0, oracle::random_factors(dims, 2, 14), 15),
                    Error);
}

TEST_CASE("schedules agree on a shared batch over several grids") {
    const std::vector<std::uint64_t> dims{9, 8, 7};
    const auto t = oracle::random_tensor(dims, 0.3, 16);
    const auto f = oracle::random_factors(dims, 3, 17);
    for (const auto& grid : {std::vector<int>{2, 1, 1}, std::vector<int>{2, 2, 2}, std::vector<int>{3, 1, 2}}) {
        oracle::Rig ts(t, grid, ScheduleKind::tensor_stationary, SamplerKind::sts, 400, f, 18);
        oracle::Rig as(t, grid, ScheduleKind::accumulator_stationary, SamplerKind::sts, 400, f, 18);
        for (std::size_t k = 0; k < 3; ++k) {
            const auto b = draw_samples(ts.ctx, k);
            CHECK(rel(solve_mode(ts.ctx, k, &b), solve_mode(as.ctx, k, &b)) < 1e-12);
        }
    }
}

TEST_CASE("doubling the samples doubles the accumulator-stationary gather") {
    const std::vector<std::uint64_t> dims{10, 8, 6};
    const auto t = oracle::random_tensor(dims, 0.2, 19);
    const auto f = oracle::random_factors(dims, 3, 20);
    std::uint64_t words[2];
    for (int i = 0; i < 2; ++i) {
        const std::size_t J = 250u << i;
        oracle::Rig rig(t, {2, 2, 1}, ScheduleKind::accumulator_stationary, SamplerKind::arls_lev, J, f, 21);
        for (std::size_t k = 0; k < 3; ++k) solve_mode(rig.ctx, k);
        words[i] = rig.comm.ledger().total_words({}, {}, Phase::gather);
        CHECK(words[i] == sampled_as_round_gather_words(J, 3, 3, 4));
        CHECK(rig.comm.ledger().total_words({}, CollectiveKind::reduce_scatter) == 0);
    }
    CHECK(words[1] == 2 * words[0]);
}

TEST_CASE("cost model closed forms") {
    CHECK(sampled_as_round_gather_words(100, 4, 3, 5) == 100u * 4 * 3 * 2 * 4);
    const std::vector<std::uint64_t> dims{8, 8, 8};
    // 2 * 3 * (8/2) * 4 * (1 - 1/4)
    CHECK(exact_ts_round_words_per_rank(dims, ProcessorGrid({2, 2, 2}), 4) == doctest::Approx(72.0));
    CHECK(exact_ts_round_words_per_rank(dims, ProcessorGrid({1, 1, 1}), 4) == 0.0);
}

}
