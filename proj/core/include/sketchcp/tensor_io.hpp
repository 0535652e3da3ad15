// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sketchcp/grid_comm.hpp"
#include "sketchcp/types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace sketchcp {

/// N-mode sparse tensor in coordinate form. Indices are 0-based and stored
/// row-major: entry e occupies indices[e*N .. e*N+N).
struct SparseTensor {
    std::vector<std::uint64_t> dims;
    std::vector<index_t> indices;
    std::vector<double> values;

    std::size_t mode_count() const { return dims.size(); }
    std::size_t nnz() const { return values.size(); }
    std::span<const index_t> coords(std::size_t e) const {
        return {indices.data() + e * dims.size(), dims.size()};
    }

    /// Throws BoundsError / ShapeError when any invariant is broken.
    void validate() const;
    double norm_squared() const;
};

struct LoadOptions {
    bool log_transform = false;  // v -> ln(1 + v)
    bool dedup = true;           // sum repeated coordinates
    std::vector<std::uint64_t> dims;  // declared extents; empty means infer from the data
};

/// FROSTT text: per line N 1-based indices then a value; '#' lines and blank
/// lines are skipped.
SparseTensor parse_frostt(std::istream& in, const LoadOptions& opts = {});
SparseTensor load_frostt(const std::filesystem::path& path, const LoadOptions& opts = {});
void write_frostt(std::ostream& out, const SparseTensor& t);

/// Sorts entries lexicographically and merges repeated coordinates by summation.
void sum_duplicates(SparseTensor& t);

/// One bijection per mode: new index = forward[mode][old index].
struct ModePermutations {
    std::vector<std::vector<index_t>> forward;
    std::uint64_t seed = 0;

    static ModePermutations identity(std::span<const std::uint64_t> dims);
    static ModePermutations random(std::span<const std::uint64_t> dims, std::uint64_t seed);
    ModePermutations inverse() const;
};

SparseTensor apply_permutations(const SparseTensor& t, const ModePermutations& perms);
std::pair<SparseTensor, ModePermutations> permute_modes(const SparseTensor& t, std::uint64_t seed);

/// Maps a factor computed on the permuted tensor back to original row order:
/// result[i] = factor[perm[i]].
Matrix unpermute_rows(const Matrix& factor, std::span<const index_t> perm);

/// Mode-j matricization in a column-sorted ("CSC-like") order: nonzeros sorted
/// by their off-mode indices (ascending mode order, lexicographic), then by the
/// mode-j index. Looking up a column (an off-mode tuple, i.e. one row of the
/// Khatri-Rao design matrix) is a binary search.
///
/// The column key is a mixed-radix packing of the off-mode indices into 128
/// bits when the column count fits; otherwise lookups compare tuples.
class Matricization {
public:
    Matricization() = default;
    Matricization(const SparseTensor& t, std::size_t mode);
    /// Subset of a tensor (entries listed by `entries`) whose output rows lie in `rows`.
    Matricization(const SparseTensor& t, std::size_t mode, std::span<const std::size_t> entries, RowRange rows);

    std::size_t mode() const { return mode_; }
    std::size_t mode_count() const { return dims_.size(); }
    const std::vector<std::uint64_t>& dims() const { return dims_; }
    std::size_t nnz() const { return values_.size(); }
    RowRange rows() const { return rows_; }

    std::span<const index_t> coords(std::size_t e) const {
        return {indices_.data() + e * dims_.size(), dims_.size()};
    }
    index_t row(std::size_t e) const { return indices_[e * dims_.size() + mode_]; }
    double value(std::size_t e) const { return values_[e]; }

    /// Half-open range of sorted positions whose off-mode indices equal those
    /// of `tuple` (a full N-tuple; its mode-j entry is ignored).
    std::pair<std::size_t, std::size_t> lookup(std::span<const index_t> tuple) const;

    bool packed_keys() const { return !radix_.empty(); }

    /// Entries grouped by output row: positions row_order()[row_ptr()[r] ..
    /// row_ptr()[r+1]) hold local row r (global row rows().begin + r).
    const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
    const std::vector<std::size_t>& row_order() const { return row_order_; }

    /// Smallest / one-past-largest index present along `mode` (0,0 when empty).
    RowRange index_span(std::size_t mode) const { return spans_[mode]; }

private:
    void build(const SparseTensor& t, std::span<const std::size_t> entries);
    bool column_less(std::span<const index_t> a, std::span<const index_t> b) const;

    std::size_t mode_ = 0;
    std::vector<std::uint64_t> dims_;
    RowRange rows_;
    std::vector<index_t> indices_;
    std::vector<double> values_;
    std::vector<unsigned __int128> keys_;
    std::vector<unsigned __int128> radix_;  // per mode; 0 for the row mode
    std::vector<std::size_t> row_ptr_;
    std::vector<std::size_t> row_order_;
    std::vector<RowRange> spans_;
};

/// Per-rank, per-mode local tensor storage.
///  - tensor-stationary: rank p holds the nonzeros inside its grid cell's
///    index hyper-rectangle; local[p][j] is that set matricized along j with
///    output rows spanning the mode-j grid block.
///  - accumulator-stationary: local[p][j] holds the nonzeros whose mode-j index
///    falls in rank p's owned block of U_j (N mode-aligned copies).
struct LocalTensorSet {
    ScheduleKind schedule = ScheduleKind::tensor_stationary;
    std::vector<std::vector<Matricization>> local;  // [rank][mode]
};

LocalTensorSet partition_to_grid(const SparseTensor& t, const ProcessorGrid& grid, ScheduleKind schedule);

/// Dense factor files. Text: a "# rows cols" header then one row per line.
/// Binary: little-endian int64 rows, int64 cols, then rows*cols doubles row-major.
void write_matrix_text(const std::filesystem::path& path, const Matrix& m);
void write_matrix_binary(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);
void write_vector_text(const std::filesystem::path& path, std::span<const double> v);

}  // namespace sketchcp
