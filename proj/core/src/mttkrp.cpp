// SPDX-License-Identifier: Apache-2.0
#include "sketchcp/mttkrp.hpp"

#include "sketchcp/parallel.hpp"

#include <numeric>

namespace sketchcp {
namespace {

// Row blocks with roughly equal nonzero counts; a few per worker.
std::vector<std::size_t> row_blocks(std::span<const std::size_t> row_ptr) {
    const std::size_t parts = static_cast<std::size_t>(worker_count()) * 4;
    return balanced_boundaries(row_ptr, parts);
}

}  // namespace

Matrix mttkrp_exact(const Matricization& m, std::span<const RowSource> sources) {
    const std::size_t n = m.mode_count();
    const std::size_t mode = m.mode();
    if (sources.size() != n) throw ShapeError("mttkrp_exact: one row source per mode required");
    Eigen::Index r = -1;
    for (std::size_t k = 0; k < n; ++k) {
        if (k == mode) continue;
        if (r < 0) r = sources[k].rows.cols();
        if (sources[k].rows.cols() != r) throw ShapeError("mttkrp_exact: factors disagree on rank");
        if (m.nnz() > 0 && !sources[k].covers(m.index_span(k)))
            throw BoundsError("mttkrp_exact: factor rows for mode " + std::to_string(k) + " were not gathered");
    }

    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(m.rows().size()), r);
    const auto& ptr = m.row_ptr();
    const auto& order = m.row_order();
    const auto bounds = row_blocks(ptr);
    parallel_for(bounds.size() - 1, [&](std::size_t b) {
        RowVector tmp(r);
        for (std::size_t row = bounds[b]; row < bounds[b + 1]; ++row) {
            auto acc = out.row(static_cast<Eigen::Index>(row));
            for (std::size_t p = ptr[row]; p < ptr[row + 1]; ++p) {
                const std::size_t e = order[p];
                auto tuple = m.coords(e);
                tmp.setConstant(m.value(e));
                for (std::size_t k = 0; k < n; ++k) {
                    if (k == mode) continue;
                    tmp.array() *= sources[k].rows.row(static_cast<Eigen::Index>(tuple[k] - sources[k].row_offset)).array();
                }
                acc += tmp;
            }
        }
    });
    return out;
}

SampledCsr gather_sampled_nonzeros_to_csr(const Matricization& m, std::span<const index_t> samples,
                                          std::size_t sample_count) {
    const std::size_t n = m.mode_count();
    if (samples.size() != sample_count * n) throw ShapeError("sample matrix shape differs from J x N");

    std::vector<std::pair<std::size_t, std::size_t>> hits(sample_count);
    parallel_for(sample_count, [&](std::size_t s) { hits[s] = m.lookup(samples.subspan(s * n, n)); });

    SampledCsr csr;
    csr.rows = m.rows().size();
    csr.cols = sample_count;
    csr.row_ptr.assign(csr.rows + 1, 0);
    const auto base = m.rows().begin;
    for (const auto& [lo, hi] : hits)
        for (std::size_t p = lo; p < hi; ++p) ++csr.row_ptr[m.row(p) - base + 1];
    std::partial_sum(csr.row_ptr.begin(), csr.row_ptr.end(), csr.row_ptr.begin());

    const std::size_t nnz = csr.row_ptr.back();
    csr.col_idx.resize(nnz);
    csr.vals.resize(nnz);
    std::vector<std::size_t> cursor(csr.row_ptr.begin(), csr.row_ptr.end() - 1);
    for (std::size_t s = 0; s < sample_count; ++s) {
        for (std::size_t p = hits[s].first; p < hits[s].second; ++p) {
            const std::size_t slot = cursor[m.row(p) - base]++;
            csr.col_idx[slot] = s;
            csr.vals[slot] = m.value(p);
        }
    }
    return csr;
}

Matrix downsampled_mttkrp(const SampledCsr& csr, const Matrix& design_rows, std::span<const double> weights) {
    if (static_cast<std::size_t>(design_rows.rows()) != csr.cols || weights.size() != csr.cols)
        throw ShapeError("downsampled_mttkrp: design rows / weights do not match the sample count");
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(csr.rows), design_rows.cols());
    const auto bounds = row_blocks(csr.row_ptr);
    parallel_for(bounds.size() - 1, [&](std::size_t b) {
        for (std::size_t row = bounds[b]; row < bounds[b + 1]; ++row) {
            auto acc = out.row(static_cast<Eigen::Index>(row));
            for (std::size_t p = csr.row_ptr[row]; p < csr.row_ptr[row + 1]; ++p) {
                const std::size_t s = csr.col_idx[p];
                const double coeff = (weights[s] * csr.vals[p]) * weights[s];
                acc += coeff * design_rows.row(static_cast<Eigen::Index>(s));
            }
        }
    });
    return out;
}

}  // namespace sketchcp
