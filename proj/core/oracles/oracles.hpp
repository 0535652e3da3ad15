// SPDX-License-Identifier: Apache-2.0
#pragma once

// Brute-force reference computations. Everything here materializes dense
// objects and is only meant for small instances.

#include "sketchcp/samplers.hpp"
#include "sketchcp/tensor_io.hpp"
#include "sketchcp/types.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace sketchcp::oracle {

/// Column of the mode-`skip` unfolding holding `tuple`; the lowest off-mode
/// index varies fastest.
std::uint64_t unfolding_column(std::span<const std::uint64_t> dims, std::size_t skip, std::span<const index_t> tuple);
std::vector<index_t> unfolding_tuple(std::span<const std::uint64_t> dims, std::size_t skip, std::uint64_t column);
std::uint64_t unfolding_columns(std::span<const std::uint64_t> dims, std::size_t skip);

/// Khatri-Rao product of all factors but `skip`, rows ordered as unfolding columns.
Matrix khatri_rao(std::span<const Matrix> factors, std::size_t skip);

/// Dense I_k x prod_{i != k} I_i unfolding.
Matrix dense_unfolding(const SparseTensor& t, std::size_t k);

Matrix dense_mttkrp(const SparseTensor& t, std::span<const Matrix> factors, std::size_t k);

/// Leverage scores of A (rows of A (A^T A)^+ A^T on the diagonal), via an
/// orthogonal decomposition.
std::vector<double> hat_diagonal(const Matrix& a);

/// Exact leverage distribution over the rows of the Khatri-Rao product.
std::vector<double> krp_leverage(std::span<const Matrix> factors, std::size_t skip);

/// Product over modes != skip of each factor's normalized leverage scores.
std::vector<double> product_leverage(std::span<const Matrix> factors, std::size_t skip);

/// 1 - ||T - model||_F / ||T||_F with the model built entry by entry.
double dense_fit(const SparseTensor& t, std::span<const Matrix> factors, std::span<const double> sigma);

/// mat(T, k) S^T S U_{!=k} with S (J x columns) built explicitly, one
/// weighted unit row per sample.
Matrix explicit_sketch_mttkrp(const SparseTensor& t, std::span<const Matrix> factors, const SampleBatch& batch);

/// (row, value) of every entry whose off-mode indices match `tuple`, by a
/// scan over all entries.
std::vector<std::pair<index_t, double>> filter_scan(const SparseTensor& t, std::size_t k,
                                                    std::span<const index_t> tuple);

double tv_distance(std::span<const double> p, std::span<const double> q);

/// Empirical distribution of the sampled tuples over unfolding columns.
std::vector<double> empirical(const SampleBatch& batch, std::span<const std::uint64_t> dims);

/// Tensor with entries sum_r sigma_r prod_k U_k[i_k, r] at every index.
SparseTensor synthesize(std::span<const Matrix> factors, std::span<const double> sigma);

/// Random sparse tensor: each index present with probability `density`,
/// values uniform in (0, 1]. Nonempty.
SparseTensor random_tensor(std::span<const std::uint64_t> dims, double density, std::uint64_t seed);

std::vector<Matrix> random_factors(std::span<const std::uint64_t> dims, Eigen::Index rank, std::uint64_t seed);

}  // namespace sketchcp::oracle
