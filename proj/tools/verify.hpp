// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace sketchcp::cli {

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"samplers", "mttkrp", "fit", "schedules", "comm"};
    return names;
}

/// Runs one desk-scale oracle suite, printing a PASS/FAIL line per property.
/// Returns the number of failed properties.
int run_suite(const std::string& suite, std::uint64_t seed, std::ostream& out);

}  // namespace sketchcp::cli
