// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "oracles.hpp"
#include "sketchcp/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace sketchcp;

namespace {

SparseTensor parse(const std::string& text, LoadOptions opts = {}) {
    std::istringstream in(text);
    return parse_frostt(in, opts);
}

}  // namespace

TEST_SUITE("tensor_io") {

TEST_CASE("parse two entries with declared dims") {
    LoadOptions opts;
    opts.dims = {2, 1, 1};
    const auto t = parse("1 1 1 2.0\n2 1 1 3.0", opts);
    CHECK(t.dims == std::vector<std::uint64_t>{2, 1, 1});
    REQUIRE(t.nnz() == 2);
    CHECK(t.indices == std::vector<index_t>{0, 0, 0, 1, 0, 0});
    CHECK(t.values == std::vector<double>{2.0, 3.0});
}

TEST_CASE("explicit zero value is kept") {
    const auto t = parse("1 1 1 0.0\n2 2 2 1.5\n");
    REQUIRE(t.nnz() == 2);
    CHECK(t.values[0] == 0.0);
}

TEST_CASE("comments and blank lines are skipped, dims inferred") {
    const auto t = parse("# header\n\n3 1 2 1.0\n  \n1 4 1 2.0\n");
    CHECK(t.dims == std::vector<std::uint64_t>{3, 4, 2});
    CHECK(t.nnz() == 2);
}

TEST_CASE("malformed line reports its line number") {
    try {
        parse("1 1 1 1.0\n# c\n1 x 1 2.0\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(parse("1 1 1 1.0\n1 1 2.0\n"), ParseError);
    CHECK_THROWS_AS(parse("0 1 1 1.0\n"), ParseError);
    CHECK_THROWS_AS(parse("1 1 1 abc\n"), ParseError);
}

TEST_CASE("index beyond declared extent") {
    LoadOptions opts;
    opts.dims = {2, 2, 2};
    CHECK_THROWS_AS(parse("1 3 1 1.0\n", opts), BoundsError);
}

TEST_CASE("empty input") {
    CHECK_THROWS_AS(parse(""), Error);
    CHECK_THROWS_AS(parse("# only a comment\n"), Error);
}

TEST_CASE("duplicates are summed, or kept when dedup is off") {
    const auto t = parse("1 1 1 1.0\n2 2 2 5.0\n1 1 1 2.5\n");
    REQUIRE(t.nnz() == 2);
    CHECK(t.values[0] == doctest::Approx(3.5));
    LoadOptions opts;
    opts.dedup = false;
    CHECK(parse("1 1 1 1.0\n1 1 1 2.5\n", opts).nnz() == 2);
}

TEST_CASE("log transform") {
    LoadOptions opts;
    opts.log_transform = true;
    const auto t = parse("1 1 1 3.0\n", opts);
    CHECK(t.values[0] == doctest::Approx(std::log(4.0)));
}

TEST_CASE("write then parse round trip") {
    const auto t = oracle::random_tensor(std::vector<std::uint64_t>{5, 4, 3}, 0.4, 3);
    std::ostringstream out;
    write_frostt(out, t);
    LoadOptions opts;
    opts.dims = t.dims;
    const auto back = parse(out.str(), opts);
    CHECK(back.indices == t.indices);
    CHECK(back.values == t.values);
}

TEST_CASE("identity permutations leave the tensor unchanged") {
    const auto t = oracle::random_tensor(std::vector<std::uint64_t>{6, 5, 4}, 0.3, 4);
    const auto same = apply_permutations(t, ModePermutations::identity(t.dims));
    CHECK(same.indices == t.indices);
    CHECK(same.values == t.values);
}

TEST_CASE("permutation keeps values and inverts") {
    const auto t = oracle::random_tensor(std::vector<std::uint64_t>{6, 5, 4}, 0.3, 5);
    const auto [p, perms] = permute_modes(t, 99);
    CHECK(p.nnz() == t.nnz());
    auto a = p.values, b = t.values;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
    auto back = apply_permutations(p, perms.inverse());
    sum_duplicates(back);
    auto orig = t;
    sum_duplicates(orig);
    CHECK(back.indices == orig.indices);
    CHECK(back.values == orig.values);
    CHECK(permute_modes(t, 99).second.forward == perms.forward);
}

TEST_CASE("unpermute_rows restores row order") {
    const auto perms = ModePermutations::random(std::vector<std::uint64_t>{5}, 8);
    Matrix original(5, 2);
    for (int i = 0; i < 5; ++i) original.row(i) << i, 10 * i;
    Matrix permuted(5, 2);
    for (int i = 0; i < 5; ++i) permuted.row(perms.forward[0][i]) = original.row(i);
    CHECK(unpermute_rows(permuted, perms.forward[0]) == original);
}

TEST_CASE("single nonzero matricized along the last mode") {
    SparseTensor t;
    t.dims = {2, 2, 2};
    t.indices = {1, 0, 1};
    t.values = {5.0};
    const Matricization m(t, 2);
    REQUIRE(m.nnz() == 1);
    CHECK(m.row(0) == 1);
    const std::vector<index_t> hit{1, 0, 0}, miss{0, 0, 0};
    const auto [b, e] = m.lookup(hit);
    CHECK(e - b == 1);
    CHECK(m.value(b) == 5.0);
    const auto [b2, e2] = m.lookup(miss);
    CHECK(b2 == e2);
}

TEST_CASE("column lookups agree with a full scan") {
    const std::vector<std::uint64_t> dims{5, 6, 4, 3};
    const auto t = oracle::random_tensor(dims, 0.2, 6);
    for (std::size_t k = 0; k < dims.size(); ++k) {
        const Matricization m(t, k);
        CHECK(m.packed_keys());
        for (std::uint64_t col = 0; col < oracle::unfolding_columns(dims, k); ++col) {
            const auto tuple = oracle::unfolding_tuple(dims, k, col);
            const auto [b, e] = m.lookup(tuple);
            std::vector<std::pair<index_t, double>> got;
            for (auto p = b; p < e; ++p) got.emplace_back(static_cast<index_t>(m.row(p)), m.value(p));
            auto want = oracle::filter_scan(t, k, tuple);
            std::sort(got.begin(), got.end());
            std::sort(want.begin(), want.end());
            CHECK(got == want);
        }
    }
}

TEST_CASE("row grouping covers every entry once") {
    const auto t = oracle::random_tensor(std::vector<std::uint64_t>{7, 3, 5}, 0.3, 7);
    const Matricization m(t, 0);
    CHECK(m.row_ptr().size() == 8);
    CHECK(m.row_ptr().back() == m.nnz());
    for (std::size_t r = 0; r < 7; ++r)
        for (auto i = m.row_ptr()[r]; i < m.row_ptr()[r + 1]; ++i) CHECK(m.row(m.row_order()[i]) == r);
}

TEST_CASE("single rank holds everything") {
    const auto t = oracle::random_tensor(std::vector<std::uint64_t>{4, 4, 4}, 0.3, 8);
    for (auto s : {ScheduleKind::tensor_stationary, ScheduleKind::accumulator_stationary}) {
        const auto set = partition_to_grid(t, ProcessorGrid({1, 1, 1}), s);
        for (std::size_t k = 0; k < 3; ++k) CHECK(set.local[0][k].nnz() == t.nnz());
    }
}

TEST_CASE("two grid blocks along mode 0 split rows 0-1 and 2-3") {
    const ProcessorGrid grid({2, 1});
    CHECK(grid.grid_block(0, 0, 4) == RowRange{0, 2});
    CHECK(grid.grid_block(0, 1, 4) == RowRange{2, 4});
    SparseTensor t;
    t.dims = {4, 4};
    for (index_t i = 0; i < 4; ++i)
        for (index_t j = 0; j < 4; ++j) {
            t.indices.insert(t.indices.end(), {i, j});
            t.values.push_back(1.0 + i);
        }
    const auto set = partition_to_grid(t, grid, ScheduleKind::tensor_stationary);
    for (int p = 0; p < 2; ++p) {
        const auto& m = set.local[p][0];
        CHECK(m.nnz() == 8);
        for (std::size_t e = 0; e < m.nnz(); ++e) CHECK(grid.grid_block(0, p, 4).contains(m.row(e)));
    }
}

TEST_CASE("partitions are complete and disjoint") {
    const std::vector<std::uint64_t> dims{9, 7, 5};
    const auto t = oracle::random_tensor(dims, 0.3, 9);
    const ProcessorGrid grid({3, 2, 1});
    const auto ts = partition_to_grid(t, grid, ScheduleKind::tensor_stationary);
    std::size_t total = 0;
    for (int p = 0; p < grid.rank_count(); ++p) {
        const auto c = grid.coords(p);
        const auto& m = ts.local[p][0];
        total += m.nnz();
        for (std::size_t e = 0; e < m.nnz(); ++e)
            for (std::size_t k = 0; k < 3; ++k) CHECK(grid.grid_block(k, c[k], dims[k]).contains(m.coords(e)[k]));
        for (std::size_t k = 1; k < 3; ++k) CHECK(ts.local[p][k].nnz() == m.nnz());
    }
    CHECK(total == t.nnz());

    const auto as = partition_to_grid(t, grid, ScheduleKind::accumulator_stationary);
    for (std::size_t k = 0; k < 3; ++k) {
        std::size_t sum = 0;
        for (int p = 0; p < grid.rank_count(); ++p) {
            const auto& m = as.local[p][k];
            sum += m.nnz();
            const RowRange own = grid.owned_rows(k, p, dims[k]);
            for (std::size_t e = 0; e < m.nnz(); ++e) CHECK(own.contains(m.row(e)));
        }
        CHECK(sum == t.nnz());
    }
}

TEST_CASE("matrix files round trip") {
    Matrix m(3, 2);
    m << 1.5, -2, 0.125, 1e-300, 7, 8;
    const auto dir = std::filesystem::temp_directory_path();
    write_matrix_text(dir / "sketchcp_m.txt", m);
    write_matrix_binary(dir / "sketchcp_m.bin", m);
    CHECK(read_matrix(dir / "sketchcp_m.txt") == m);
    CHECK(read_matrix(dir / "sketchcp_m.bin") == m);
}

}
