// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sketchcp/types.hpp"

#include <algorithm>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace sketchcp {

struct RowRange {
    std::uint64_t begin = 0;
    std::uint64_t end = 0;

    std::uint64_t size() const { return end - begin; }
    bool contains(std::uint64_t i) const { return i >= begin && i < end; }
    bool operator==(const RowRange&) const = default;
};

/// Block `part` of [0, extent) split into `parts` near-equal contiguous pieces.
RowRange split_range(std::uint64_t extent, std::uint64_t parts, std::uint64_t part);

/// N-dimensional Cartesian arrangement of P simulated ranks. Ranks are
/// numbered row-major over their coordinates (last mode fastest).
///
/// Row ownership: rows of mode i are first split into P_i grid blocks, one
/// per grid coordinate; the ranks sharing that coordinate (the mode-i slice)
/// then split the grid block among themselves in rank order. Every rank
/// therefore owns one contiguous block row of every factor matrix.
class ProcessorGrid {
public:
    explicit ProcessorGrid(std::vector<int> dims);

    const std::vector<int>& dims() const { return dims_; }
    std::size_t mode_count() const { return dims_.size(); }
    int rank_count() const { return rank_count_; }

    std::vector<int> coords(int rank) const;
    int coord(int rank, std::size_t mode) const;
    int rank_of(std::span<const int> coords) const;

    /// Ranks whose coordinate along `mode` equals `coord`, ascending.
    std::vector<int> slice(std::size_t mode, int coord) const;
    /// Number of ranks in every mode-`mode` slice (P / P_mode).
    int slice_size(std::size_t mode) const { return rank_count_ / dims_[mode]; }

    RowRange grid_block(std::size_t mode, int coord, std::uint64_t extent) const;
    RowRange owned_rows(std::size_t mode, int rank, std::uint64_t extent) const;
    /// Ranks ordered by the position of their owned block along `mode`.
    std::vector<int> owner_order(std::size_t mode) const;
    /// Rank owning global row `row` of mode `mode`.
    int owner_of_row(std::size_t mode, std::uint64_t row, std::uint64_t extent) const;

    std::string to_string() const;
    bool operator==(const ProcessorGrid& other) const { return dims_ == other.dims_; }

private:
    std::vector<int> dims_;
    std::vector<int> strides_;
    int rank_count_ = 1;
};

/// Parses "2x2x1".
ProcessorGrid parse_grid(const std::string& text);

struct GridChoice {
    ProcessorGrid grid;
    bool feasible = true;  // false when no factorization has P_k <= I_k for all k
};

/// Integer grid minimizing sum_k I_k / P_k over all ordered factorizations of
/// P into dims.size() factors. Ties go to the lexicographically smallest dims.
GridChoice optimal_grid(std::span<const std::uint64_t> dims, int procs);

enum class CollectiveKind { allgather = 0, reduce_scatter = 1, allreduce = 2, all_to_allv = 3 };
inline constexpr int kCollectiveKinds = 4;
const char* to_string(CollectiveKind kind);

/// What the traffic was for. Used to separate e.g. sampler traffic from the
/// factor-row gathers of a schedule.
enum class Phase { setup = 0, gram = 1, sampler_build = 2, sampling = 3, gather = 4, reduction = 5 };
inline constexpr int kPhases = 6;
const char* to_string(Phase phase);

struct CommCounts {
    std::uint64_t words = 0;
    std::uint64_t messages = 0;
    bool operator==(const CommCounts&) const = default;
};

struct LedgerRecord {
    std::uint64_t round = 0;
    int rank = 0;
    CollectiveKind kind = CollectiveKind::allgather;
    Phase phase = Phase::setup;
    CommCounts counts;
};

/// Per-rank tally of words (64-bit units) and messages received, keyed by
/// round, collective kind and phase.
class CommLedger {
public:
    void record(std::uint64_t round, int rank, CollectiveKind kind, Phase phase, std::uint64_t words,
                std::uint64_t messages);

    std::vector<LedgerRecord> records() const;
    std::vector<std::uint64_t> rounds() const;

    /// Sum over ranks. Empty filters match everything.
    std::uint64_t total_words(std::optional<std::uint64_t> round = {}, std::optional<CollectiveKind> kind = {},
                              std::optional<Phase> phase = {}) const;
    std::uint64_t total_messages(std::optional<std::uint64_t> round = {}, std::optional<CollectiveKind> kind = {},
                                 std::optional<Phase> phase = {}) const;
    /// Words received by one rank.
    std::uint64_t rank_words(int rank, std::optional<std::uint64_t> round = {},
                             std::optional<CollectiveKind> kind = {}, std::optional<Phase> phase = {}) const;

    bool empty() const { return entries_.empty(); }
    bool operator==(const CommLedger&) const = default;

private:
    using Key = std::tuple<std::uint64_t, int, int, int>;  // round, rank, kind, phase
    std::map<Key, CommCounts> entries_;
};

struct KindSummary {
    CollectiveKind kind = CollectiveKind::allgather;
    std::vector<CommCounts> per_rank;
    std::uint64_t total_words = 0;
    std::uint64_t total_messages = 0;
    std::uint64_t max_words = 0;
    std::uint64_t max_messages = 0;
    double mean_words = 0.0;
    double mean_messages = 0.0;
};

struct CostSummary {
    std::uint64_t round = 0;
    int ranks = 0;
    std::vector<KindSummary> kinds;  // one per CollectiveKind, in enum order
};

CostSummary ledger_report(const CommLedger& ledger, std::uint64_t round, int ranks);
std::string to_json(const CostSummary& summary);
/// One line per (round, rank, kind, phase): tab separated, with a header.
std::string ledger_to_tsv(const CommLedger& ledger);
/// Inverse of ledger_to_tsv. Throws ParseError on malformed lines.
CommLedger ledger_from_tsv(std::istream& in);

/// Simulated collectives over groups of ranks. Every call receives the
/// contribution of each group member (indexed by position in `group`) and
/// returns what each member ends up holding; the ledger is charged per member
/// for what it receives. Ranks execute bulk-synchronously: a collective is the
/// barrier between the compute phases surrounding it.
class Communicator {
public:
    explicit Communicator(ProcessorGrid grid) : grid_(std::move(grid)) {}

    const ProcessorGrid& grid() const { return grid_; }
    const CommLedger& ledger() const { return ledger_; }
    CommLedger& ledger() { return ledger_; }

    void set_round(std::uint64_t round) { round_ = round; }
    std::uint64_t round() const { return round_; }
    void set_phase(Phase phase) { phase_ = phase; }
    Phase phase() const { return phase_; }

    /// All ranks, ascending.
    std::vector<int> world() const;

    /// Concatenation in group order. Every member receives the same buffer,
    /// so one shared copy is returned.
    template <class T>
    std::shared_ptr<const std::vector<T>> allgather(std::span<const int> group,
                                                    const std::vector<std::vector<T>>& payloads);

    /// Elementwise sum of equal-length payloads, then member t receives block t
    /// (block_sizes[t] elements, in order).
    template <class T>
    std::vector<std::vector<T>> reduce_scatter(std::span<const int> group,
                                               const std::vector<std::vector<T>>& payloads,
                                               std::span<const std::size_t> block_sizes);

    /// Elementwise sum replicated on every member.
    template <class T>
    std::vector<T> allreduce(std::span<const int> group, const std::vector<std::vector<T>>& payloads);

    /// send[a][b] is what member a sends to member b. Returns recv[b], the
    /// concatenation over a (in group order) of send[a][b].
    template <class T>
    std::vector<std::vector<T>> all_to_allv(std::span<const int> group,
                                            const std::vector<std::vector<std::vector<T>>>& send);

    /// Pairwise exchange step of a bidirectional-exchange reduction: `rank`
    /// receives one message of `words` words.
    void record_exchange(int rank, std::uint64_t words);

private:
    void check_group(std::span<const int> group, std::size_t payload_count) const;
    void charge(int rank, CollectiveKind kind, std::uint64_t words, std::uint64_t messages);

    ProcessorGrid grid_;
    CommLedger ledger_;
    std::uint64_t round_ = 0;
    Phase phase_ = Phase::setup;
};

template <class T>
std::shared_ptr<const std::vector<T>> Communicator::allgather(std::span<const int> group,
                                                              const std::vector<std::vector<T>>& payloads) {
    check_group(group, payloads.size());
    auto out = std::make_shared<std::vector<T>>();
    std::size_t total = 0;
    for (const auto& p : payloads) total += p.size();
    out->reserve(total);
    for (const auto& p : payloads) out->insert(out->end(), p.begin(), p.end());
    const std::uint64_t q = group.size();
    for (std::size_t t = 0; t < group.size(); ++t)
        charge(group[t], CollectiveKind::allgather, total - payloads[t].size(), q - 1);
    return out;
}

template <class T>
std::vector<std::vector<T>> Communicator::reduce_scatter(std::span<const int> group,
                                                         const std::vector<std::vector<T>>& payloads,
                                                         std::span<const std::size_t> block_sizes) {
    check_group(group, payloads.size());
    if (block_sizes.size() != group.size()) throw ShapeError("reduce_scatter: one block size per member required");
    const std::size_t length = std::accumulate(block_sizes.begin(), block_sizes.end(), std::size_t{0});
    for (const auto& p : payloads)
        if (p.size() != length) throw ShapeError("reduce_scatter: payload length differs from sum of blocks");
    std::vector<std::vector<T>> out(group.size());
    std::size_t offset = 0;
    const std::uint64_t q = group.size();
    for (std::size_t t = 0; t < group.size(); ++t) {
        auto& block = out[t];
        block.assign(block_sizes[t], T{});
        for (const auto& p : payloads)
            for (std::size_t e = 0; e < block_sizes[t]; ++e) block[e] += p[offset + e];
        offset += block_sizes[t];
        charge(group[t], CollectiveKind::reduce_scatter, (q - 1) * block_sizes[t], q - 1);
    }
    return out;
}

template <class T>
std::vector<T> Communicator::allreduce(std::span<const int> group, const std::vector<std::vector<T>>& payloads) {
    check_group(group, payloads.size());
    const std::size_t m = payloads.front().size();
    for (const auto& p : payloads)
        if (p.size() != m) throw ShapeError("allreduce: payload lengths differ across group");
    std::vector<T> sum(m, T{});
    for (const auto& p : payloads)
        for (std::size_t e = 0; e < m; ++e) sum[e] += p[e];
    // Reduce-scatter then allgather over integer blocks: 2m(q-1)/q words per
    // rank on average, 2(q-1) messages.
    const std::uint64_t q = group.size();
    for (std::size_t t = 0; t < group.size(); ++t) {
        const std::uint64_t b = split_range(m, q, t).size();
        charge(group[t], CollectiveKind::allreduce, (q - 1) * b + (m - b), 2 * (q - 1));
    }
    return sum;
}

template <class T>
std::vector<std::vector<T>> Communicator::all_to_allv(std::span<const int> group,
                                                      const std::vector<std::vector<std::vector<T>>>& send) {
    check_group(group, send.size());
    const std::size_t q = group.size();
    for (const auto& row : send)
        if (row.size() != q) throw ShapeError("all_to_allv: each member must address every member");
    std::vector<std::vector<T>> recv(q);
    for (std::size_t b = 0; b < q; ++b) {
        std::uint64_t words = 0, messages = 0;
        for (std::size_t a = 0; a < q; ++a) {
            const auto& chunk = send[a][b];
            recv[b].insert(recv[b].end(), chunk.begin(), chunk.end());
            if (a != b && !chunk.empty()) {
                words += chunk.size();
                ++messages;
            }
        }
        charge(group[b], CollectiveKind::all_to_allv, words, messages);
    }
    return recv;
}

}  // namespace sketchcp
