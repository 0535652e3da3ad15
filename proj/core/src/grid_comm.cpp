// SPDX-License-Identifier: Apache-2.0
#include "sketchcp/grid_comm.hpp"

#include "json.hpp"

#include <limits>
#include <set>
#include <sstream>

namespace sketchcp {

RowRange split_range(std::uint64_t extent, std::uint64_t parts, std::uint64_t part) {
    if (parts == 0 || part >= parts) throw ShapeError("split_range: part out of range");
    const auto lo = static_cast<std::uint64_t>((static_cast<unsigned __int128>(extent) * part) / parts);
    const auto hi = static_cast<std::uint64_t>((static_cast<unsigned __int128>(extent) * (part + 1)) / parts);
    return {lo, hi};
}

ProcessorGrid::ProcessorGrid(std::vector<int> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw ShapeError("processor grid needs at least one mode");
    strides_.assign(dims_.size(), 1);
    rank_count_ = 1;
    for (std::size_t k = dims_.size(); k-- > 0;) {
        if (dims_[k] < 1) throw ShapeError("processor grid dimensions must be positive");
        strides_[k] = rank_count_;
        rank_count_ *= dims_[k];
    }
}

std::vector<int> ProcessorGrid::coords(int rank) const {
    std::vector<int> c(dims_.size());
    for (std::size_t k = 0; k < dims_.size(); ++k) c[k] = coord(rank, k);
    return c;
}

int ProcessorGrid::coord(int rank, std::size_t mode) const {
    if (rank < 0 || rank >= rank_count_) throw ShapeError("rank out of range");
    return (rank / strides_[mode]) % dims_[mode];
}

int ProcessorGrid::rank_of(std::span<const int> c) const {
    if (c.size() != dims_.size()) throw ShapeError("coordinate arity mismatch");
    int r = 0;
    for (std::size_t k = 0; k < dims_.size(); ++k) {
        if (c[k] < 0 || c[k] >= dims_[k]) throw ShapeError("coordinate out of range");
        r += c[k] * strides_[k];
    }
    return r;
}

std::vector<int> ProcessorGrid::slice(std::size_t mode, int c) const {
    std::vector<int> ranks;
    ranks.reserve(static_cast<std::size_t>(slice_size(mode)));
    for (int r = 0; r < rank_count_; ++r)
        if (coord(r, mode) == c) ranks.push_back(r);
    return ranks;
}

RowRange ProcessorGrid::grid_block(std::size_t mode, int c, std::uint64_t extent) const {
    return split_range(extent, static_cast<std::uint64_t>(dims_[mode]), static_cast<std::uint64_t>(c));
}

RowRange ProcessorGrid::owned_rows(std::size_t mode, int rank, std::uint64_t extent) const {
    const int c = coord(rank, mode);
    const RowRange block = grid_block(mode, c, extent);
    // Position of `rank` among its slice members: the slice enumerates all
    // ranks with coordinate c in ascending order, i.e. the mixed-radix number
    // formed by the remaining coordinates.
    int position = 0;
    int radix = 1;
    for (std::size_t k = dims_.size(); k-- > 0;) {
        if (k == mode) continue;
        position += coord(rank, k) * radix;
        radix *= dims_[k];
    }
    const RowRange sub = split_range(block.size(), static_cast<std::uint64_t>(slice_size(mode)),
                                     static_cast<std::uint64_t>(position));
    return {block.begin + sub.begin, block.begin + sub.end};
}

std::vector<int> ProcessorGrid::owner_order(std::size_t mode) const {
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(rank_count_));
    for (int c = 0; c < dims_[mode]; ++c)
        for (int r : slice(mode, c)) order.push_back(r);
    return order;
}

int ProcessorGrid::owner_of_row(std::size_t mode, std::uint64_t row, std::uint64_t extent) const {
    if (row >= extent) throw BoundsError("row outside mode extent");
    for (int c = 0; c < dims_[mode]; ++c) {
        if (!grid_block(mode, c, extent).contains(row)) continue;
        for (int r : slice(mode, c))
            if (owned_rows(mode, r, extent).contains(row)) return r;
    }
    throw BoundsError("row has no owner");
}

std::string ProcessorGrid::to_string() const {
    std::string s;
    for (std::size_t k = 0; k < dims_.size(); ++k) {
        if (k) s += 'x';
        s += std::to_string(dims_[k]);
    }
    return s;
}

ProcessorGrid parse_grid(const std::string& text) {
    std::vector<int> dims;
    std::stringstream in(text);
    std::string part;
    while (std::getline(in, part, 'x')) {
        try {
            std::size_t used = 0;
            int v = std::stoi(part, &used);
            if (used != part.size() || v < 1) throw Error("");
            dims.push_back(v);
        } catch (...) {
            throw Error("invalid grid specification '" + text + "'");
        }
    }
    if (dims.empty()) throw Error("invalid grid specification '" + text + "'");
    return ProcessorGrid(std::move(dims));
}

namespace {

void enumerate_factorizations(int remaining, std::size_t slot, std::vector<int>& current,
                              std::vector<std::vector<int>>& out) {
    if (slot + 1 == current.size()) {
        current[slot] = remaining;
        out.push_back(current);
        return;
    }
    for (int f = 1; f <= remaining; ++f) {
        if (remaining % f) continue;
        current[slot] = f;
        enumerate_factorizations(remaining / f, slot + 1, current, out);
    }
}

}  // namespace

GridChoice optimal_grid(std::span<const std::uint64_t> dims, int procs) {
    if (procs < 1) throw Error("processor count must be at least 1");
    if (dims.empty()) throw ShapeError("optimal_grid: no modes");
    std::vector<std::vector<int>> candidates;
    std::vector<int> current(dims.size(), 1);
    enumerate_factorizations(procs, 0, current, candidates);

    auto cost = [&](const std::vector<int>& g) {
        double c = 0.0;
        for (std::size_t k = 0; k < dims.size(); ++k) c += static_cast<double>(dims[k]) / g[k];
        return c;
    };
    auto feasible = [&](const std::vector<int>& g) {
        for (std::size_t k = 0; k < dims.size(); ++k)
            if (static_cast<std::uint64_t>(g[k]) > dims[k]) return false;
        return true;
    };

    const std::vector<int>* best = nullptr;
    double best_cost = std::numeric_limits<double>::infinity();
    bool best_feasible = false;
    // Candidates are generated in lexicographic order, so strict improvement
    // keeps the smallest dims on ties.
    for (const auto& g : candidates) {
        const bool ok = feasible(g);
        const double c = cost(g);
        if (best == nullptr || (ok && !best_feasible) || (ok == best_feasible && c < best_cost)) {
            best = &g;
            best_cost = c;
            best_feasible = ok;
        }
    }
    return {ProcessorGrid(*best), best_feasible};
}

const char* to_string(CollectiveKind kind) {
    switch (kind) {
        case CollectiveKind::allgather: return "allgather";
        case CollectiveKind::reduce_scatter: return "reduce_scatter";
        case CollectiveKind::allreduce: return "allreduce";
        case CollectiveKind::all_to_allv: return "all_to_allv";
    }
    return "?";
}

const char* to_string(Phase phase) {
    switch (phase) {
        case Phase::setup: return "setup";
        case Phase::gram: return "gram";
        case Phase::sampler_build: return "sampler_build";
        case Phase::sampling: return "sampling";
        case Phase::gather: return "gather";
        case Phase::reduction: return "reduction";
    }
    return "?";
}

void CommLedger::record(std::uint64_t round, int rank, CollectiveKind kind, Phase phase, std::uint64_t words,
                        std::uint64_t messages) {
    if (words == 0 && messages == 0) return;
    auto& c = entries_[Key{round, rank, static_cast<int>(kind), static_cast<int>(phase)}];
    c.words += words;
    c.messages += messages;
}

std::vector<LedgerRecord> CommLedger::records() const {
    std::vector<LedgerRecord> out;
    out.reserve(entries_.size());
    for (const auto& [key, counts] : entries_) {
        const auto& [round, rank, kind, phase] = key;
        out.push_back({round, rank, static_cast<CollectiveKind>(kind), static_cast<Phase>(phase), counts});
    }
    return out;
}

std::vector<std::uint64_t> CommLedger::rounds() const {
    std::set<std::uint64_t> r;
    for (const auto& [key, counts] : entries_) r.insert(std::get<0>(key));
    return {r.begin(), r.end()};
}

namespace {

template <class F>
std::uint64_t sum_matching(const std::map<std::tuple<std::uint64_t, int, int, int>, CommCounts>& entries,
                           std::optional<int> rank, std::optional<std::uint64_t> round,
                           std::optional<CollectiveKind> kind, std::optional<Phase> phase, F field) {
    std::uint64_t total = 0;
    for (const auto& [key, counts] : entries) {
        const auto& [r, p, k, ph] = key;
        if (rank && p != *rank) continue;
        if (round && r != *round) continue;
        if (kind && k != static_cast<int>(*kind)) continue;
        if (phase && ph != static_cast<int>(*phase)) continue;
        total += field(counts);
    }
    return total;
}

}  // namespace

std::uint64_t CommLedger::total_words(std::optional<std::uint64_t> round, std::optional<CollectiveKind> kind,
                                      std::optional<Phase> phase) const {
    return sum_matching(entries_, {}, round, kind, phase, [](const CommCounts& c) { return c.words; });
}

std::uint64_t CommLedger::total_messages(std::optional<std::uint64_t> round, std::optional<CollectiveKind> kind,
                                         std::optional<Phase> phase) const {
    return sum_matching(entries_, {}, round, kind, phase, [](const CommCounts& c) { return c.messages; });
}

std::uint64_t CommLedger::rank_words(int rank, std::optional<std::uint64_t> round,
                                     std::optional<CollectiveKind> kind, std::optional<Phase> phase) const {
    return sum_matching(entries_, rank, round, kind, phase, [](const CommCounts& c) { return c.words; });
}

CostSummary ledger_report(const CommLedger& ledger, std::uint64_t round, int ranks) {
    CostSummary summary;
    summary.round = round;
    summary.ranks = ranks;
    summary.kinds.resize(kCollectiveKinds);
    for (int k = 0; k < kCollectiveKinds; ++k) {
        summary.kinds[k].kind = static_cast<CollectiveKind>(k);
        summary.kinds[k].per_rank.assign(static_cast<std::size_t>(ranks), {});
    }
    for (const auto& rec : ledger.records()) {
        if (rec.round != round || rec.rank < 0 || rec.rank >= ranks) continue;
        auto& c = summary.kinds[static_cast<int>(rec.kind)].per_rank[static_cast<std::size_t>(rec.rank)];
        c.words += rec.counts.words;
        c.messages += rec.counts.messages;
    }
    for (auto& ks : summary.kinds) {
        for (const auto& c : ks.per_rank) {
            ks.total_words += c.words;
            ks.total_messages += c.messages;
            ks.max_words = std::max(ks.max_words, c.words);
            ks.max_messages = std::max(ks.max_messages, c.messages);
        }
        if (ranks > 0) {
            ks.mean_words = static_cast<double>(ks.total_words) / ranks;
            ks.mean_messages = static_cast<double>(ks.total_messages) / ranks;
        }
    }
    return summary;
}

std::string to_json(const CostSummary& summary) {
    nlohmann::json doc;
    doc["round"] = summary.round;
    doc["ranks"] = summary.ranks;
    for (const auto& ks : summary.kinds) {
        nlohmann::json entry;
        entry["total_words"] = ks.total_words;
        entry["total_messages"] = ks.total_messages;
        entry["max_words"] = ks.max_words;
        entry["max_messages"] = ks.max_messages;
        entry["mean_words"] = ks.mean_words;
        entry["mean_messages"] = ks.mean_messages;
        auto& per_rank = entry["per_rank"] = nlohmann::json::array();
        for (const auto& c : ks.per_rank) per_rank.push_back({{"words", c.words}, {"messages", c.messages}});
        doc["collectives"][to_string(ks.kind)] = std::move(entry);
    }
    return doc.dump(2);
}

std::string ledger_to_tsv(const CommLedger& ledger) {
    std::ostringstream out;
    out << "round\trank\tkind\tphase\twords\tmessages\n";
    for (const auto& rec : ledger.records())
        out << rec.round << '\t' << rec.rank << '\t' << to_string(rec.kind) << '\t' << to_string(rec.phase) << '\t'
            << rec.counts.words << '\t' << rec.counts.messages << '\n';
    return out.str();
}

CommLedger ledger_from_tsv(std::istream& in) {
    auto kind_of = [](const std::string& s) -> std::optional<CollectiveKind> {
        for (int k = 0; k < kCollectiveKinds; ++k)
            if (s == to_string(static_cast<CollectiveKind>(k))) return static_cast<CollectiveKind>(k);
        return std::nullopt;
    };
    auto phase_of = [](const std::string& s) -> std::optional<Phase> {
        for (int p = 0; p < kPhases; ++p)
            if (s == to_string(static_cast<Phase>(p))) return static_cast<Phase>(p);
        return std::nullopt;
    };
    CommLedger ledger;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty() || line.rfind("round", 0) == 0) continue;
        std::istringstream fields(line);
        std::uint64_t round = 0, words = 0, messages = 0;
        int rank = 0;
        std::string kind, phase;
        if (!(fields >> round >> rank >> kind >> phase >> words >> messages)) throw ParseError(number, "malformed ledger line");
        const auto k = kind_of(kind);
        const auto p = phase_of(phase);
        if (!k || !p) throw ParseError(number, "unknown collective or phase");
        ledger.record(round, rank, *k, *p, words, messages);
    }
    return ledger;
}

std::vector<int> Communicator::world() const {
    std::vector<int> all(static_cast<std::size_t>(grid_.rank_count()));
    std::iota(all.begin(), all.end(), 0);
    return all;
}

void Communicator::check_group(std::span<const int> group, std::size_t payload_count) const {
    if (group.empty()) throw ShapeError("collective over empty group");
    if (group.size() != payload_count) throw ShapeError("collective: one payload per group member required");
    std::set<int> seen;
    for (int r : group) {
        if (r < 0 || r >= grid_.rank_count()) throw ShapeError("collective: rank outside grid");
        if (!seen.insert(r).second) throw Error("collective: rank " + std::to_string(r) + " invoked twice");
    }
}

void Communicator::charge(int rank, CollectiveKind kind, std::uint64_t words, std::uint64_t messages) {
    ledger_.record(round_, rank, kind, phase_, words, messages);
}

void Communicator::record_exchange(int rank, std::uint64_t words) {
    ledger_.record(round_, rank, CollectiveKind::allreduce, phase_, words, 1);
}

}  // namespace sketchcp
