// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "oracles.hpp"
#include "sketchcp/linalg.hpp"

#include <cmath>

using namespace sketchcp;

namespace {

double max_abs(const SquareMatrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_SUITE("linalg") {

TEST_CASE("gram of a diagonal factor") {
    Matrix u(2, 2);
    u << 1, 0, 0, 2;
    FactorSet fs(ProcessorGrid({1, 1}), {u, u});
    const auto blocks = fs.blocks(0);
    SquareMatrix want(2, 2);
    want << 1, 0, 0, 4;
    CHECK(gram(blocks) == want);
}

TEST_CASE("gram of orthonormal columns is the identity") {
    Engine g(1);
    const Matrix a = gaussian_matrix(6, 3, g);
    const Matrix q = Eigen::HouseholderQR<Matrix>(a).householderQ() * Matrix::Identity(6, 3);
    FactorSet fs(ProcessorGrid({1, 1}), {q, q});
    CHECK(max_abs(gram(fs.blocks(0)) - SquareMatrix::Identity(3, 3)) < 1e-12);
}

TEST_CASE("gram split over two ranks equals the single-block gram") {
    Engine g(2);
    const Matrix u = gaussian_matrix(7, 3, g);
    FactorSet split(ProcessorGrid({2, 1}), {u, u});
    Communicator comm(split.grid());
    const auto blocks = split.blocks(0);
    CHECK(blocks.size() == 2);
    const SquareMatrix whole = u.transpose() * u;
    CHECK(max_abs(gram(blocks) - whole) < 1e-12);
    CHECK(max_abs(gram_allreduce(comm, blocks) - whole) < 1e-12);
    CHECK(comm.ledger().total_words({}, CollectiveKind::allreduce) > 0);
}

TEST_CASE("hadamard chain examples") {
    SquareMatrix g1(2, 2), id = SquareMatrix::Identity(2, 2), ones = SquareMatrix::Ones(2, 2);
    g1 << 2, 1, 1, 2;
    SquareMatrix g3(2, 2);
    g3 << 5, 6, 7, 8;
    const std::vector<SquareMatrix> chain{g1, id, g3};
    SquareMatrix want(2, 2);
    want << 2, 0, 0, 2;
    CHECK(hadamard_gram_chain(chain, 2) == want);

    const std::vector<SquareMatrix> with_ones{g1, ones, g3};
    CHECK(hadamard_gram_chain(with_ones) == SquareMatrix(g1.cwiseProduct(g3)));
    const std::vector<SquareMatrix> reversed{g3, ones, g1};
    CHECK(hadamard_gram_chain(reversed) == hadamard_gram_chain(with_ones));

    const std::vector<SquareMatrix> single{g1};
    CHECK_THROWS_AS(hadamard_gram_chain(single, 0), Error);
}

TEST_CASE("pseudo-inverse examples") {
    CHECK(max_abs(pseudo_inverse(SquareMatrix::Identity(3, 3)) - SquareMatrix::Identity(3, 3)) < 1e-15);
    SquareMatrix d = SquareMatrix::Zero(2, 2);
    d(0, 0) = 4;
    SquareMatrix want = SquareMatrix::Zero(2, 2);
    want(0, 0) = 0.25;
    CHECK(max_abs(pseudo_inverse(d) - want) < 1e-15);
    SquareMatrix skew(2, 2);
    skew << 1, 2, 0, 1;
    CHECK_THROWS_AS(pseudo_inverse(skew), Error);
}

TEST_CASE("pseudo-inverse of a rank-deficient PSD matrix") {
    Engine g(3);
    const Matrix b = gaussian_matrix(5, 3, g);
    const SquareMatrix a = b * b.transpose();
    const SquareMatrix p = pseudo_inverse(a);
    const double scale = max_abs(a);
    CHECK(max_abs(a * p * a - a) < 1e-10 * scale);
    CHECK(max_abs(p * a * p - p) < 1e-10 * max_abs(p));
    CHECK(max_abs((a * p).transpose() - a * p) < 1e-10);
}

TEST_CASE("normalize columns") {
    Matrix u(2, 2);
    u << 3, 0, 4, 0;
    const auto norms = normalize_columns(u);
    CHECK(norms[0] == doctest::Approx(5.0));
    CHECK(norms[1] == 0.0);
    CHECK(u(0, 0) == doctest::Approx(0.6));
    CHECK(u(1, 0) == doctest::Approx(0.8));
    CHECK(u.col(1).isZero());

    Engine g(4);
    const Matrix orig = gaussian_matrix(9, 4, g);
    Matrix v = orig;
    const auto n = normalize_columns(v);
    for (Eigen::Index c = 0; c < 4; ++c) {
        CHECK(std::abs(v.col(c).norm() - 1.0) < 1e-12);
        CHECK((v.col(c) * n[c] - orig.col(c)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("fit of an exactly synthesized tensor is one") {
    const std::vector<std::uint64_t> dims{4, 5, 3};
    const auto f = oracle::random_factors(dims, 2, 5);
    const std::vector<double> sigma{1.5, 0.5};
    const auto t = oracle::synthesize(f, sigma);
    CHECK(std::abs(compute_fit(t, f, sigma) - 1.0) < 1e-10);
}

TEST_CASE("fit with zero sigma is zero") {
    const std::vector<std::uint64_t> dims{4, 4, 4};
    const auto t = oracle::random_tensor(dims, 0.3, 6);
    const auto f = oracle::random_factors(dims, 2, 7);
    CHECK(compute_fit(t, f, std::vector<double>{0.0, 0.0}) == doctest::Approx(0.0));
}

TEST_CASE("fit matches the dense reconstruction") {
    const std::vector<std::uint64_t> dims{6, 6, 6};
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto t = oracle::random_tensor(dims, 0.3, 10 + seed);
        const auto f = oracle::random_factors(dims, 3, 20 + seed);
        const std::vector<double> sigma{0.3, 0.2, 0.1};
        CHECK(std::abs(compute_fit(t, f, sigma) - oracle::dense_fit(t, f, sigma)) < 1e-10);
    }
}

TEST_CASE("fit of an all-zero tensor is an error") {
    SparseTensor t;
    t.dims = {2, 2};
    t.indices = {0, 0};
    t.values = {0.0};
    const auto f = oracle::random_factors(t.dims, 1, 1);
    CHECK_THROWS_AS(compute_fit(t, f, std::vector<double>{1.0}), Error);
}

}
