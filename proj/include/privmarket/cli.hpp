#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "privmarket/core.hpp"

namespace privmarket {

/// Parses `"2:4,3:8"` into {2: 4.0, 3: 8.0}. Duplicate users are rejected.
std::map<UserId, double> parse_privacy_map(const std::string& text);

/// Parses `"2,3"` into a sorted unique member list.
std::vector<UserId> parse_member_list(const std::string& text);

/// Entry point behind the `privmarket` binary. Exit codes: 0 success,
/// 1 runtime failure, 2 usage or configuration error.
int run_cli(int argc, const char* const* argv);

}  // namespace privmarket
