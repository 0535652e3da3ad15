// SPDX-License-Identifier: Apache-2.0
#include "sketchcp/random.hpp"
#include "sketchcp/types.hpp"

namespace sketchcp {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t stream_id(const StreamKey& key) {
    std::uint64_t h = splitmix64(key.seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(key.purpose));
    h = splitmix64(h ^ key.round);
    h = splitmix64(h ^ key.mode);
    return splitmix64(h ^ static_cast<std::uint64_t>(key.rank));
}

Engine make_stream(const StreamKey& key) {
    const std::uint64_t h = stream_id(key);
    std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return Engine(seq);
}

const char* to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::tensor_stationary: return "tensor-stationary";
        case ScheduleKind::accumulator_stationary: return "accumulator-stationary";
    }
    return "?";
}

const char* to_string(SamplerKind kind) {
    switch (kind) {
        case SamplerKind::none: return "exact";
        case SamplerKind::arls_lev: return "arls-lev";
        case SamplerKind::sts: return "sts";
    }
    return "?";
}

}  // namespace sketchcp
