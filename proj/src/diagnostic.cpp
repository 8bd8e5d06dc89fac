// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "gbt/diagnostic.hpp"

#include <algorithm>

namespace gbt {

const char* to_string(Severity s)
{
    return s == Severity::Error ? "error" : "warning";
}

bool has_errors(const Diagnostics& diags)
{
    return std::any_of(diags.begin(), diags.end(), [](const auto& d) { return d.severity == Severity::Error; });
}

std::string format_diagnostic(const Diagnostic& d)
{
    return std::string(to_string(d.severity)) + " " + (d.path.empty() ? "/" : d.path) + " " + d.message;
}

std::ostream& operator<<(std::ostream& os, const Diagnostic& d)
{
    return os << format_diagnostic(d);
}

} // namespace gbt
