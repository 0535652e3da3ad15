// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "oracles.hpp"
#include "rig.hpp"
#include "sketchcp/samplers.hpp"

#include <cmath>
#include <numeric>

using namespace sketchcp;

namespace {

double max_abs(const SquareMatrix& m) { return m.cwiseAbs().maxCoeff(); }

// Factors whose only nonzero row is `row`.
std::vector<Matrix> spike_factors(std::span<const std::uint64_t> dims, Eigen::Index rank, Eigen::Index row) {
    std::vector<Matrix> f;
    for (auto d : dims) {
        Matrix m = Matrix::Zero(static_cast<Eigen::Index>(d), rank);
        m.row(row).setLinSpaced(rank, 1.0, 2.0);
        f.push_back(m);
    }
    return f;
}

LeverageTree::Local single_block(const Matrix& u, std::size_t block_rows) {
    LeverageTree::Local loc;
    loc.rows = {0, static_cast<std::uint64_t>(u.rows())};
    loc.block_rows = block_rows;
    const std::size_t blocks = (u.rows() + block_rows - 1) / block_rows;
    loc.leaves = std::bit_ceil(blocks);
    loc.nodes.assign(2 * loc.leaves, SquareMatrix::Zero(u.cols(), u.cols()));
    for (std::size_t b = 0; b < blocks; ++b) {
        const auto begin = static_cast<Eigen::Index>(b * block_rows);
        const auto n = std::min<Eigen::Index>(static_cast<Eigen::Index>(block_rows), u.rows() - begin);
        loc.nodes[loc.leaves + b] = u.middleRows(begin, n).transpose() * u.middleRows(begin, n);
    }
    for (std::size_t v = loc.leaves; v-- > 1;) loc.nodes[v] = loc.nodes[2 * v] + loc.nodes[2 * v + 1];
    return loc;
}

std::vector<SquareMatrix> weighted(const LeverageTree::Local& loc, const SquareMatrix& cond) {
    std::vector<SquareMatrix> out(loc.nodes.size());
    for (std::size_t v = 1; v < out.size(); ++v) out[v] = loc.nodes[v].cwiseProduct(cond);
    return out;
}

}  // namespace

TEST_SUITE("samplers") {

TEST_CASE("leverage of identity factors") {
    const std::vector<Matrix> f{Matrix::Identity(2, 2), Matrix::Identity(2, 2), Matrix::Identity(3, 2)};
    const auto lev = oracle::krp_leverage(f, 2);
    const std::vector<double> want{0.5, 0.0, 0.0, 0.5};
    REQUIRE(lev.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(lev[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("leverage scores sum to the rank and match the projection diagonal") {
    const std::vector<std::uint64_t> dims{4, 5, 2};
    const auto f = oracle::random_factors(dims, 3, 1);
    const Matrix a = oracle::khatri_rao(f, 2);
    const auto hat = oracle::hat_diagonal(a);
    CHECK(std::accumulate(hat.begin(), hat.end(), 0.0) == doctest::Approx(3.0));
    const Matrix proj = a * (a.transpose() * a).inverse() * a.transpose();
    const auto lev = oracle::krp_leverage(f, 2);
    for (Eigen::Index i = 0; i < a.rows(); ++i) CHECK(std::abs(lev[i] - proj(i, i) / 3.0) < 1e-12);
}

TEST_CASE("approximate leverage state of an identity block") {
    FactorSet fs(ProcessorGrid({1, 1}), {Matrix::Identity(2, 2), Matrix::Identity(2, 2)});
    Communicator comm(fs.grid());
    const auto st = arls_lev_build(comm, fs, 0, gram(fs.blocks(0)));
    CHECK(st.dist[0] == std::vector<double>{0.5, 0.5});
    CHECK(st.total_mass == doctest::Approx(2.0));
}

TEST_CASE("duplicate rows get equal scores") {
    Matrix u(4, 2);
    u << 1, 2, 1, 2, 3, -1, 0.5, 0.5;
    FactorSet fs(ProcessorGrid({1, 1}), {u, u});
    Communicator comm(fs.grid());
    const auto st = arls_lev_build(comm, fs, 0, gram(fs.blocks(0)));
    CHECK(st.dist[0][0] == doctest::Approx(st.dist[0][1]));
}

TEST_CASE("distributed approximate leverage equals single-factor leverage") {
    const auto f = oracle::random_factors(std::vector<std::uint64_t>{16, 5}, 3, 2);
    FactorSet fs(ProcessorGrid({4, 1}), f);
    Communicator comm(fs.grid());
    const auto st = arls_lev_build(comm, fs, 0, gram(fs.blocks(0)));
    const auto hat = oracle::hat_diagonal(f[0]);
    std::vector<double> joined;
    for (int p = 0; p < 4; ++p)
        for (double d : st.dist[p]) joined.push_back(d * st.mass[p] / st.total_mass);
    REQUIRE(joined.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(joined[i] - hat[i] / 3.0) < 1e-12);
    CHECK(comm.ledger().total_words({}, CollectiveKind::allgather, Phase::sampler_build) == 4 * 3);
}

TEST_CASE("all mass on one row draws that row") {
    const std::vector<std::uint64_t> dims{10, 9, 8};
    const auto f = spike_factors(dims, 2, 7);
    const auto t = oracle::random_tensor(dims, 0.1, 3);
    for (auto kind : {SamplerKind::arls_lev, SamplerKind::sts}) {
        oracle::Rig rig(t, {2, 1, 2}, ScheduleKind::tensor_stationary, kind, 50, f, 4);
        const auto batch = draw_samples(rig.ctx, 1);
        for (std::size_t s = 0; s < batch.count; ++s) {
            CHECK(batch.row(s)[0] == 7);
            CHECK(batch.row(s)[2] == 7);
            CHECK(batch.prob[s] == doctest::Approx(1.0));
        }
    }
}

TEST_CASE("consistent multinomial split") {
    const std::vector<double> masses{0.5, 2.0, 0.0, 1.5};
    Engine a = make_stream({11, StreamPurpose::multinomial, 3, 1, kSharedRank});
    Engine b = make_stream({11, StreamPurpose::multinomial, 3, 1, kSharedRank});
    const auto qa = consistent_multinomial(masses, 1000, a);
    const auto qb = consistent_multinomial(masses, 1000, b);
    CHECK(qa == qb);
    CHECK(std::accumulate(qa.begin(), qa.end(), std::size_t{0}) == 1000);
    CHECK(qa[2] == 0);
    const std::vector<double> none{0.0, 0.0};
    CHECK_THROWS_AS(consistent_multinomial(none, 5, a), Error);
}

TEST_CASE("zero draws give an empty batch") {
    const std::vector<std::uint64_t> dims{4, 4, 4};
    oracle::Rig rig(oracle::random_tensor(dims, 0.3, 5), {1, 1, 1}, ScheduleKind::tensor_stationary,
                    SamplerKind::arls_lev, 10, oracle::random_factors(dims, 2, 6), 7);
    const auto batch = arls_lev_sample(rig.comm, rig.ctx.arls, rig.factors, 0, 0, 7, 1);
    CHECK(batch.count == 0);
    CHECK(batch.H.rows() == 0);
}

TEST_CASE("unit extents sample index zero with the product row") {
    const std::vector<std::uint64_t> dims{1, 1, 1};
    SparseTensor t;
    t.dims = dims;
    t.indices = {0, 0, 0};
    t.values = {2.0};
    const auto f = oracle::random_factors(dims, 2, 8);
    for (auto kind : {SamplerKind::arls_lev, SamplerKind::sts}) {
        oracle::Rig rig(t, {1, 1, 1}, ScheduleKind::tensor_stationary, kind, 20, f, 9);
        const auto batch = draw_samples(rig.ctx, 0);
        const RowVector product = f[1].row(0).cwiseProduct(f[2].row(0));
        for (std::size_t s = 0; s < batch.count; ++s) {
            CHECK(batch.row(s)[1] == 0);
            CHECK(batch.row(s)[2] == 0);
            CHECK((batch.H.row(s) - product).cwiseAbs().maxCoeff() < 1e-15);
        }
    }
}

TEST_CASE("tree over a single leaf holds the gram") {
    const auto f = oracle::random_factors(std::vector<std::uint64_t>{6, 3}, 2, 10);
    FactorSet fs(ProcessorGrid({1, 1}), f);
    Communicator comm(fs.grid());
    const auto tree = sts_build(comm, fs, 0, 8);
    CHECK(tree.leaf_count() == 1);
    CHECK(max_abs(tree.root() - SquareMatrix(f[0].transpose() * f[0])) < 1e-12);
    CHECK(comm.ledger().total_words() == 0);
}

TEST_CASE("two-rank tree sums both blocks") {
    const auto f = oracle::random_factors(std::vector<std::uint64_t>{6, 3}, 2, 11);
    FactorSet fs(ProcessorGrid({2, 1}), f);
    Communicator comm(fs.grid());
    const auto tree = sts_build(comm, fs, 0);
    const Matrix b1 = f[0].topRows(3), b2 = f[0].bottomRows(3);
    CHECK(max_abs(tree.shared[2] - SquareMatrix(b1.transpose() * b1)) < 1e-12);
    CHECK(max_abs(tree.root() - SquareMatrix(b1.transpose() * b1 + b2.transpose() * b2)) < 1e-12);
    CHECK(comm.ledger().total_words({}, CollectiveKind::allreduce, Phase::sampler_build) == 2 * 4);
}

TEST_CASE("every internal node is the sum of its leaves") {
    const auto f = oracle::random_factors(std::vector<std::uint64_t>{37, 3}, 3, 12);
    FactorSet fs(ProcessorGrid({1, 1}), f);
    Communicator comm(fs.grid());
    const auto tree = sts_build(comm, fs, 0, 5);
    const auto& loc = tree.local[0];
    CHECK(loc.leaves == 8);
    for (std::size_t v = 1; v < loc.leaves; ++v) {
        std::size_t lo = v, hi = v;
        while (lo < loc.leaves) lo = 2 * lo, hi = 2 * hi + 1;
        const auto first = static_cast<Eigen::Index>(std::min<std::size_t>(37, (lo - loc.leaves) * 5));
        const auto last = static_cast<Eigen::Index>(std::min<std::size_t>(37, (hi - loc.leaves + 1) * 5));
        const Matrix rows = f[0].middleRows(first, last - first);
        CHECK(max_abs(loc.nodes[v] - SquareMatrix(rows.transpose() * rows)) < 1e-12);
    }
}

TEST_CASE("leaf search on a one-row block") {
    Matrix u(1, 2);
    u << 0.3, -0.7;
    const auto loc = single_block(u, 1);
    const SquareMatrix cond = SquareMatrix::Identity(2, 2);
    for (double r : {0.0, 0.4, 0.999}) {
        const auto pick = local_sts_leaf_search(loc, weighted(loc, cond), u, RowVector::Ones(2), cond, r);
        CHECK(pick.row == 0);
        CHECK(pick.prob == doctest::Approx(1.0));
    }
}

TEST_CASE("leaf search with all mass on row zero") {
    Matrix u = Matrix::Zero(2, 2);
    u.row(0) << 1.0, 2.0;
    const SquareMatrix cond = SquareMatrix::Identity(2, 2);
    for (std::size_t block : {1, 2}) {
        const auto loc = single_block(u, block);
        for (double r : {0.0, 0.5, 0.999999})
            CHECK(local_sts_leaf_search(loc, weighted(loc, cond), u, RowVector::Ones(2), cond, r).row == 0);
    }
}

TEST_CASE("sweeping r partitions the unit interval by row mass") {
    Engine g(13);
    const Matrix u = gaussian_matrix(8, 3, g);
    const Matrix c = gaussian_matrix(3, 3, g);
    const SquareMatrix cond = c * c.transpose();
    const RowVector h = gaussian_matrix(1, 3, g);
    std::vector<double> mass(8);
    for (int i = 0; i < 8; ++i) {
        const RowVector v = u.row(i).cwiseProduct(h);
        mass[i] = v * cond * v.transpose();
    }
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    for (std::size_t block : {8, 2, 1}) {
        const auto loc = single_block(u, block);
        const auto w = weighted(loc, cond);
        const int steps = 100000;
        std::vector<int> hits(8, 0);
        std::uint64_t previous = 0;
        for (int s = 0; s < steps; ++s) {
            const auto pick = local_sts_leaf_search(loc, w, u, h, cond, (s + 0.5) / steps);
            CHECK(pick.row >= previous);  // contiguous segments in row order
            previous = pick.row;
            CHECK(std::abs(pick.prob - mass[pick.row] / total) < 1e-12);
            ++hits[pick.row];
        }
        for (int i = 0; i < 8; ++i) CHECK(std::abs(hits[i] / double(steps) - mass[i] / total) < 2.0 / steps);
    }
}

TEST_CASE("sample weights") {
    const std::vector<double> uniform(5, 0.25);
    for (double w : sample_weights(uniform, 5)) CHECK(w == doctest::Approx(std::sqrt(4.0 / 5.0)));
    CHECK(sample_weights(std::vector<double>{1.0}, 1)[0] == 1.0);
    CHECK_THROWS_AS(sample_weights(std::vector<double>{0.5, 0.0}, 2), Error);
}

TEST_CASE("sketch is unbiased: E[S^T S] = I") {
    const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
    const std::size_t J = 1000000;
    Engine g(14);
    std::discrete_distribution<int> pick(p.begin(), p.end());
    std::vector<double> prob(J);
    std::vector<int> row(J);
    for (std::size_t s = 0; s < J; ++s) {
        row[s] = pick(g);
        prob[s] = p[row[s]];
    }
    const auto w = sample_weights(prob, J);
    SquareMatrix sts = SquareMatrix::Zero(4, 4);
    for (std::size_t s = 0; s < J; ++s) sts(row[s], row[s]) += w[s] * w[s];
    CHECK(max_abs(sts - SquareMatrix::Identity(4, 4)) < 0.02);
}

TEST_CASE("same seed and round give the same batch") {
    const std::vector<std::uint64_t> dims{6, 5, 7};
    const auto t = oracle::random_tensor(dims, 0.2, 15);
    const auto f = oracle::random_factors(dims, 3, 16);
    for (auto kind : {SamplerKind::arls_lev, SamplerKind::sts}) {
        oracle::Rig a(t, {2, 1, 2}, ScheduleKind::tensor_stationary, kind, 300, f, 17);
        oracle::Rig b(t, {2, 1, 2}, ScheduleKind::tensor_stationary, kind, 300, f, 17);
        const auto ba = draw_samples(a.ctx, 1);
        CHECK(ba == draw_samples(b.ctx, 1));
        a.comm.set_round(2);
        CHECK_FALSE(ba == draw_samples(a.ctx, 1));
    }
}

TEST_CASE("recorded probabilities and design rows") {
    const std::vector<std::uint64_t> dims{5, 6, 4};
    const auto f = oracle::random_factors(dims, 2, 18);
    oracle::Rig rig(oracle::random_tensor(dims, 0.2, 19), {2, 2, 1}, ScheduleKind::tensor_stationary,
                    SamplerKind::arls_lev, 400, f, 20);
    const auto batch = draw_samples(rig.ctx, 2);
    const auto approx = oracle::product_leverage(f, 2);
    for (std::size_t s = 0; s < batch.count; ++s) {
        const auto col = oracle::unfolding_column(dims, 2, batch.row(s));
        CHECK(std::abs(batch.prob[s] - approx[col]) < 1e-12);
        CHECK(batch.weights[s] == doctest::Approx(1.0 / std::sqrt(400 * batch.prob[s])));
        const RowVector h = f[0].row(batch.row(s)[0]).cwiseProduct(f[1].row(batch.row(s)[1]));
        CHECK(batch.H.row(s) == h);
    }
}

TEST_CASE("zero-mass walk is reported") {
    const std::vector<std::uint64_t> dims{4, 4, 4};
    auto f = oracle::random_factors(dims, 2, 21);
    const auto t = oracle::random_tensor(dims, 0.3, 22);
    oracle::Rig rig(t, {1, 1, 1}, ScheduleKind::tensor_stationary, SamplerKind::sts, 10, f, 23);
    const auto loc = single_block(Matrix::Zero(4, 2), 2);
    const SquareMatrix cond = SquareMatrix::Identity(2, 2);
    CHECK_THROWS_AS(local_sts_leaf_search(loc, weighted(loc, cond), Matrix::Zero(4, 2), RowVector::Ones(2), cond, 0.5),
                    DegenerateWalkError);
}

}
