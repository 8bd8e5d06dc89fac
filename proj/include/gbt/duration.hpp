// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace gbt {

/// All engine and simulation time is kept in integral milliseconds.
using Duration = std::chrono::milliseconds;

/// Offset from the clock epoch. The simulated clock starts at zero; the wall
/// clock measures from its construction.
using TimePoint = std::chrono::milliseconds;

/// Parses "30s" or "250ms". Returns nullopt on anything else, including
/// negative values, fractions and overflow.
std::optional<Duration> parse_duration(std::string_view text);

/// Inverse of parse_duration: whole seconds print as "Ns", the rest as "Nms".
std::string format_duration(Duration d);

} // namespace gbt
