// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sketchcp/grid_comm.hpp"
#include "sketchcp/random.hpp"
#include "sketchcp/tensor_io.hpp"
#include "sketchcp/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace sketchcp {

/// Block row of one factor matrix owned by one simulated rank.
struct FactorBlock {
    std::size_t mode = 0;
    int owner = 0;
    std::uint64_t row_offset = 0;
    ConstMatrixMap rows{nullptr, 0, 0};
};

/// All factor matrices of a CP model, block-row distributed over a processor
/// grid. The matrices are stored whole; FactorBlock views expose what each
/// simulated rank owns.
class FactorSet {
public:
    FactorSet(ProcessorGrid grid, std::vector<Matrix> factors);

    const ProcessorGrid& grid() const { return grid_; }
    std::size_t mode_count() const { return factors_.size(); }
    Eigen::Index rank() const { return factors_.front().cols(); }
    std::uint64_t extent(std::size_t mode) const { return static_cast<std::uint64_t>(factors_[mode].rows()); }

    const Matrix& matrix(std::size_t mode) const { return factors_[mode]; }
    Matrix& matrix(std::size_t mode) { return factors_[mode]; }
    const std::vector<Matrix>& matrices() const { return factors_; }

    RowRange owned_rows(std::size_t mode, int rank) const { return grid_.owned_rows(mode, rank, extent(mode)); }
    FactorBlock block(std::size_t mode, int rank) const;
    std::vector<FactorBlock> blocks(std::size_t mode) const;

private:
    ProcessorGrid grid_;
    std::vector<Matrix> factors_;
};

SquareMatrix local_gram(const ConstMatrixMap& rows);

/// U^T U summed over the given blocks, serially.
SquareMatrix gram(std::span<const FactorBlock> blocks);
/// Same quantity through an allreduce over all ranks (ledger-metered).
SquareMatrix gram_allreduce(Communicator& comm, std::span<const FactorBlock> blocks);

/// Elementwise product of all grams except `skip`.
SquareMatrix hadamard_gram_chain(std::span<const SquareMatrix> grams, std::optional<std::size_t> skip = {});

inline constexpr double kPinvCutoff = 1e-10;

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix through its
/// eigendecomposition; eigenvalues below cutoff * lambda_max are dropped.
SquareMatrix pseudo_inverse(const SquareMatrix& g, double cutoff = kPinvCutoff);

/// Scales every nonzero column to unit 2-norm in place; returns the norms.
std::vector<double> normalize_columns(Matrix& u);

/// Entries i.i.d. standard normal.
Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Engine& g);

/// 1 - ||model - T||_F / ||T||_F evaluated exactly. `last_mode` must be the
/// full-tensor matricization along the final mode.
double compute_fit(const Matricization& last_mode, double tensor_norm_sq, std::span<const Matrix> factors,
                   std::span<const double> sigma);
double compute_fit(const SparseTensor& t, std::span<const Matrix> factors, std::span<const double> sigma);

}  // namespace sketchcp
