// SPDX-License-Identifier: Apache-2.0
#include "sketchcp/tensor_io.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace sketchcp {

Matricization::Matricization(const SparseTensor& t, std::size_t mode) : mode_(mode), dims_(t.dims) {
    if (mode >= t.mode_count()) throw ShapeError("matricize: mode out of range");
    rows_ = {0, t.dims[mode]};
    std::vector<std::size_t> all(t.nnz());
    std::iota(all.begin(), all.end(), std::size_t{0});
    build(t, all);
}

Matricization::Matricization(const SparseTensor& t, std::size_t mode, std::span<const std::size_t> entries,
                             RowRange rows)
    : mode_(mode), dims_(t.dims), rows_(rows) {
    if (mode >= t.mode_count()) throw ShapeError("matricize: mode out of range");
    if (rows.end > t.dims[mode] || rows.begin > rows.end) throw ShapeError("matricize: row range outside mode");
    build(t, entries);
}

void Matricization::build(const SparseTensor& t, std::span<const std::size_t> entries) {
    const std::size_t n = dims_.size();
    for (std::size_t e : entries) {
        const index_t r = t.indices[e * n + mode_];
        if (!rows_.contains(r)) throw BoundsError("matricize: entry row outside the local row range");
    }

    // Mixed-radix packing over the off-mode indices, first off-mode most significant.
    radix_.assign(n, 0);
    bool fits = true;
    unsigned __int128 weight = 1;
    constexpr auto kMax = std::numeric_limits<unsigned __int128>::max();
    for (std::size_t k = n; k-- > 0;) {
        if (k == mode_) continue;
        radix_[k] = weight;
        if (weight > kMax / dims_[k]) {
            fits = false;
            break;
        }
        weight *= dims_[k];
    }
    if (!fits) radix_.clear();

    auto packed = [&](const index_t* tuple) {
        unsigned __int128 key = 0;
        for (std::size_t k = 0; k < n; ++k)
            if (k != mode_) key += radix_[k] * tuple[k];
        return key;
    };

    std::vector<std::size_t> order(entries.begin(), entries.end());
    if (fits) {
        std::vector<unsigned __int128> raw(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) raw[i] = packed(t.indices.data() + order[i] * n);
        std::vector<std::size_t> perm(order.size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
            if (raw[a] != raw[b]) return raw[a] < raw[b];
            const index_t ra = t.indices[order[a] * n + mode_];
            const index_t rb = t.indices[order[b] * n + mode_];
            if (ra != rb) return ra < rb;
            return order[a] < order[b];
        });
        keys_.resize(order.size());
        std::vector<std::size_t> sorted(order.size());
        for (std::size_t i = 0; i < perm.size(); ++i) {
            keys_[i] = raw[perm[i]];
            sorted[i] = order[perm[i]];
        }
        order = std::move(sorted);
    } else {
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            std::span<const index_t> ta{t.indices.data() + a * n, n};
            std::span<const index_t> tb{t.indices.data() + b * n, n};
            if (column_less(ta, tb)) return true;
            if (column_less(tb, ta)) return false;
            if (ta[mode_] != tb[mode_]) return ta[mode_] < tb[mode_];
            return a < b;
        });
    }

    indices_.resize(order.size() * n);
    values_.resize(order.size());
    spans_.assign(n, RowRange{});
    std::vector<std::uint64_t> lo(n, std::numeric_limits<std::uint64_t>::max()), hi(n, 0);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::size_t e = order[i];
        std::copy_n(t.indices.begin() + e * n, n, indices_.begin() + i * n);
        values_[i] = t.values[e];
        for (std::size_t k = 0; k < n; ++k) {
            lo[k] = std::min<std::uint64_t>(lo[k], indices_[i * n + k]);
            hi[k] = std::max<std::uint64_t>(hi[k], indices_[i * n + k] + 1);
        }
    }
    if (!order.empty())
        for (std::size_t k = 0; k < n; ++k) spans_[k] = {lo[k], hi[k]};

    // Counting sort by output row (stable, so each row keeps column order).
    const std::size_t local_rows = rows_.size();
    row_ptr_.assign(local_rows + 1, 0);
    for (std::size_t i = 0; i < values_.size(); ++i) ++row_ptr_[row(i) - rows_.begin + 1];
    std::partial_sum(row_ptr_.begin(), row_ptr_.end(), row_ptr_.begin());
    row_order_.resize(values_.size());
    std::vector<std::size_t> cursor(row_ptr_.begin(), row_ptr_.end() - 1);
    for (std::size_t i = 0; i < values_.size(); ++i) row_order_[cursor[row(i) - rows_.begin]++] = i;
}

bool Matricization::column_less(std::span<const index_t> a, std::span<const index_t> b) const {
    for (std::size_t k = 0; k < dims_.size(); ++k) {
        if (k == mode_) continue;
        if (a[k] != b[k]) return a[k] < b[k];
    }
    return false;
}

std::pair<std::size_t, std::size_t> Matricization::lookup(std::span<const index_t> tuple) const {
    const std::size_t n = dims_.size();
    if (tuple.size() != n) throw ShapeError("lookup: tuple arity differs from mode count");
    if (values_.empty()) return {0, 0};
    if (!keys_.empty()) {
        unsigned __int128 key = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == mode_) continue;
            if (tuple[k] >= dims_[k]) return {0, 0};
            key += radix_[k] * tuple[k];
        }
        auto [lo, hi] = std::equal_range(keys_.begin(), keys_.end(), key);
        return {static_cast<std::size_t>(lo - keys_.begin()), static_cast<std::size_t>(hi - keys_.begin())};
    }
    // Binary search on positions with tuple comparison.
    std::size_t lo = 0, hi = values_.size();
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (column_less(coords(mid), tuple)) lo = mid + 1;
        else hi = mid;
    }
    std::size_t first = lo;
    hi = values_.size();
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (!column_less(tuple, coords(mid))) lo = mid + 1;
        else hi = mid;
    }
    return {first, lo};
}

}  // namespace sketchcp
