// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "sketchcp/grid_comm.hpp"

#include <limits>
#include <numeric>
#include <sstream>

using namespace sketchcp;

namespace {

std::vector<int> first_ranks(int q) {
    std::vector<int> g(static_cast<std::size_t>(q));
    std::iota(g.begin(), g.end(), 0);
    return g;
}

}  // namespace

TEST_SUITE("grid_comm") {

TEST_CASE("ownership splits every mode exactly") {
    const ProcessorGrid grid({3, 2, 2});
    const std::vector<std::uint64_t> dims{10, 7, 5};
    for (std::size_t k = 0; k < 3; ++k) {
        std::vector<int> count(dims[k], 0);
        for (int p = 0; p < grid.rank_count(); ++p) {
            const RowRange r = grid.owned_rows(k, p, dims[k]);
            CHECK(grid.grid_block(k, grid.coord(p, k), dims[k]).contains(r.begin));
            for (auto i = r.begin; i < r.end; ++i) {
                ++count[i];
                CHECK(grid.owner_of_row(k, i, dims[k]) == p);
            }
        }
        for (int c : count) CHECK(c == 1);
    }
    CHECK(grid.rank_of(grid.coords(7)) == 7);
    CHECK(parse_grid("3x2x2") == grid);
    CHECK(grid.to_string() == "3x2x2");
}

TEST_CASE("optimal grid examples") {
    CHECK(optimal_grid(std::vector<std::uint64_t>{8, 8, 8}, 8).grid.dims() == std::vector<int>{2, 2, 2});
    CHECK(optimal_grid(std::vector<std::uint64_t>{8, 8, 8}, 1).grid.dims() == std::vector<int>{1, 1, 1});
}

TEST_CASE("optimal grid equals exhaustive enumeration") {
    const std::vector<std::uint64_t> dims{4, 2, 2};
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> arg;
    for (int a = 1; a <= 4; ++a)
        for (int b = 1; b <= 4; ++b)
            for (int c = 1; c <= 4; ++c) {
                if (a * b * c != 4) continue;
                const double cost = 4.0 / a + 2.0 / b + 2.0 / c;
                if (cost < best - 1e-12) best = cost, arg = {a, b, c};
            }
    const auto choice = optimal_grid(dims, 4);
    CHECK(choice.feasible);
    CHECK(choice.grid.dims() == arg);
}

TEST_CASE("infeasible process count is flagged") {
    const auto choice = optimal_grid(std::vector<std::uint64_t>{2, 2}, 16);
    CHECK_FALSE(choice.feasible);
    CHECK(choice.grid.rank_count() == 16);
}

TEST_CASE("single-member collectives cost nothing") {
    Communicator comm(ProcessorGrid({1}));
    const std::vector<int> g{0};
    const std::vector<std::vector<double>> one{{1.0, 2.0}};
    CHECK(*comm.allgather<double>(g, one) == one[0]);
    const std::vector<std::size_t> blocks{2};
    CHECK(comm.reduce_scatter<double>(g, one, blocks)[0] == one[0]);
    CHECK(comm.allreduce<double>(g, one) == one[0]);
    CHECK(comm.all_to_allv<double>(g, {{{3.0}}})[0] == std::vector<double>{3.0});
    CHECK(comm.ledger().total_words() == 0);
    CHECK(comm.ledger().total_messages() == 0);
}

TEST_CASE("allgather of ten words over four ranks") {
    Communicator comm(ProcessorGrid({4}));
    const auto g = first_ranks(4);
    std::vector<std::vector<double>> payloads(4);
    for (int p = 0; p < 4; ++p) payloads[p].assign(10, p);
    const auto out = comm.allgather<double>(g, payloads);
    CHECK(out->size() == 40);
    CHECK((*out)[35] == 3.0);
    for (int p = 0; p < 4; ++p) {
        CHECK(comm.ledger().rank_words(p) == 30);
    }
    CHECK(comm.ledger().total_messages() == 12);
    const auto rep = ledger_report(comm.ledger(), 0, 4);
    CHECK(rep.kinds[0].kind == CollectiveKind::allgather);
    CHECK(rep.kinds[0].per_rank[2].words == 30);
    CHECK(rep.kinds[0].max_messages == 3);
}

TEST_CASE("reduce-scatter of ones") {
    Communicator comm(ProcessorGrid({4}));
    const auto g = first_ranks(4);
    const std::vector<std::vector<double>> ones(4, std::vector<double>(8, 1.0));
    const std::vector<std::size_t> blocks(4, 2);
    const auto out = comm.reduce_scatter<double>(g, ones, blocks);
    for (const auto& b : out) CHECK(b == std::vector<double>{4.0, 4.0});
    CHECK(comm.ledger().rank_words(1) == 6);
}

TEST_CASE("collectives across group sizes") {
    for (int q = 1; q <= 16; ++q) {
        Communicator comm(ProcessorGrid({q}));
        const auto g = first_ranks(q);
        std::vector<std::vector<double>> payloads(q);
        for (int p = 0; p < q; ++p) payloads[p] = {1.0 * p, 2.0 * p, 3.0};
        const auto sum = comm.allreduce<double>(g, payloads);
        const double tri = q * (q - 1) / 2.0;
        CHECK(sum == std::vector<double>{tri, 2 * tri, 3.0 * q});
        std::uint64_t total = 0;
        for (int p = 0; p < q; ++p) total += comm.ledger().rank_words(p);
        CHECK(total == static_cast<std::uint64_t>(2 * 3 * (q - 1)));

        std::vector<std::vector<std::vector<int>>> send(q, std::vector<std::vector<int>>(q));
        for (int a = 0; a < q; ++a)
            for (int b = 0; b < q; ++b) send[a][b] = std::vector<int>(static_cast<std::size_t>(a + b), a);
        const auto recv = comm.all_to_allv<int>(g, send);
        for (int b = 0; b < q; ++b) {
            std::size_t expect = 0;
            for (int a = 0; a < q; ++a) expect += static_cast<std::size_t>(a + b);
            CHECK(recv[b].size() == expect);
        }
    }
}

TEST_CASE("a rank listed twice is rejected") {
    Communicator comm(ProcessorGrid({4}));
    const std::vector<int> g{0, 1, 1};
    const std::vector<std::vector<double>> p(3, std::vector<double>{1.0});
    CHECK_THROWS_AS(comm.allgather<double>(g, p), Error);
}

TEST_CASE("empty round reports zeros") {
    CommLedger ledger;
    const auto rep = ledger_report(ledger, 3, 2);
    CHECK(rep.kinds.size() == static_cast<std::size_t>(kCollectiveKinds));
    for (const auto& k : rep.kinds) {
        CHECK(k.total_words == 0);
        CHECK(k.total_messages == 0);
    }
}

TEST_CASE("ledger text round trip") {
    CommLedger ledger;
    ledger.record(0, 1, CollectiveKind::allreduce, Phase::gram, 9, 2);
    ledger.record(2, 0, CollectiveKind::all_to_allv, Phase::sampling, 123, 1);
    ledger.record(2, 0, CollectiveKind::all_to_allv, Phase::sampling, 1, 1);
    CHECK(ledger.total_words(2) == 124);
    std::istringstream in(ledger_to_tsv(ledger));
    CHECK(ledger_from_tsv(in) == ledger);
    std::istringstream bad("round\trank\tkind\tphase\twords\tmessages\n1\t0\tnope\tgram\t1\t1\n");
    CHECK_THROWS_AS(ledger_from_tsv(bad), ParseError);
    CHECK(to_json(ledger_report(ledger, 2, 2)).find("all_to_allv") != std::string::npos);
}

}
