// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "gbt/duration.hpp"

#include <charconv>
#include <limits>

namespace gbt {

std::optional<Duration> parse_duration(std::string_view text)
{
    std::int64_t scale = 0;
    std::string_view digits;
    if (text.size() > 2 && text.ends_with("ms")) {
        scale = 1;
        digits = text.substr(0, text.size() - 2);
    } else if (text.size() > 1 && text.ends_with("s")) {
        scale = 1000;
        digits = text.substr(0, text.size() - 1);
    } else {
        return std::nullopt;
    }
    if (digits.empty() || digits.front() < '0' || digits.front() > '9') {
        return std::nullopt;
    }
    std::int64_t value = 0;
    const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc{} || end != digits.data() + digits.size()) {
        return std::nullopt;
    }
    if (value > std::numeric_limits<std::int64_t>::max() / scale) {
        return std::nullopt;
    }
    return Duration{value * scale};
}

std::string format_duration(Duration d)
{
    const auto ms = d.count();
    if (ms != 0 && ms % 1000 == 0) {
        return std::to_string(ms / 1000) + "s";
    }
    return std::to_string(ms) + "ms";
}

} // namespace gbt
