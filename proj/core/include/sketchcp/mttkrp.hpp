// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sketchcp/tensor_io.hpp"
#include "sketchcp/types.hpp"

#include <span>
#include <vector>

namespace sketchcp {

/// Rows [row_offset, row_offset + rows.rows()) of one factor matrix, as held by
/// a rank after gathering.
struct RowSource {
    std::uint64_t row_offset = 0;
    ConstMatrixMap rows{nullptr, 0, 0};

    static RowSource whole(const Matrix& m) { return {0, ConstMatrixMap(m.data(), m.rows(), m.cols())}; }
    bool covers(RowRange r) const {
        return r.begin >= row_offset && r.end <= row_offset + static_cast<std::uint64_t>(rows.rows());
    }
};

/// result[i - rows().begin, :] += v * (Hadamard product over modes != j of
/// the indexed factor rows), for every local nonzero. `sources` has one entry
/// per mode; the entry for the matricized mode is ignored.
Matrix mttkrp_exact(const Matricization& m, std::span<const RowSource> sources);

/// Selected columns of a matricization, row-compressed. Row r is local row r
/// of the matricization; column ids are sample ids.
struct SampledCsr {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<std::size_t> col_idx;
    std::vector<double> vals;

    std::size_t nnz() const { return vals.size(); }
};

/// For every sample s (row s of `samples`, a J x N row-major index matrix),
/// pulls the nonzeros of column samples[s, !=mode] and emits (row, s, value);
/// the triples are then sparse-transposed into row order with a counting
/// sort. Repeated samples produce repeated columns.
SampledCsr gather_sampled_nonzeros_to_csr(const Matricization& m, std::span<const index_t> samples,
                                          std::size_t sample_count);

/// result[i, :] = sum_s (w_s * csr[i, s]) * (w_s * design_rows[s, :]).
/// Output rows are split into nnz-balanced blocks, one worker each.
Matrix downsampled_mttkrp(const SampledCsr& csr, const Matrix& design_rows, std::span<const double> weights);

}  // namespace sketchcp
