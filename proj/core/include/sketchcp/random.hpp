// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace sketchcp {

using Engine = std::mt19937_64;

enum class StreamPurpose : std::uint32_t {
    init_factors = 1,
    permutation = 2,
    multinomial = 3,
    arls_local = 4,
    arls_permute = 5,
    sts_uniform = 6,
    trial = 7,
};

/// Ranks that share a stream (consistent draws) use this sentinel.
inline constexpr std::int64_t kSharedRank = -1;

/// Identifies one independent stream. Equal keys give equal sequences; any
/// differing field gives an unrelated sequence.
struct StreamKey {
    std::uint64_t seed = 0;
    StreamPurpose purpose = StreamPurpose::init_factors;
    std::uint64_t round = 0;
    std::uint64_t mode = 0;
    std::int64_t rank = kSharedRank;
};

std::uint64_t splitmix64(std::uint64_t x);
/// 64-bit digest of a key; make_stream seeds from it.
std::uint64_t stream_id(const StreamKey& key);
Engine make_stream(const StreamKey& key);

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Engine& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

/// Counter-based uniform in [0, 1): draw number `counter` of stream `id`.
/// Independent of how draws are split across ranks.
inline double counter_uniform(std::uint64_t id, std::uint64_t counter) {
    return static_cast<double>(splitmix64(id ^ splitmix64(counter)) >> 11) * 0x1.0p-53;
}

}  // namespace sketchcp
