// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gbt {

enum class Severity { Error, Warning };

/// A finding about a source document. `path` is slash-delimited from the
/// document root ("part_processes/1/id"); the root itself is "/".
struct Diagnostic {
    Severity severity = Severity::Error;
    std::string path;
    std::string message;

    bool operator==(const Diagnostic&) const = default;
};

using Diagnostics = std::vector<Diagnostic>;

const char* to_string(Severity s);

bool has_errors(const Diagnostics& diags);

/// Formats as `severity path message`, the CLI line format.
std::string format_diagnostic(const Diagnostic& d);

std::ostream& operator<<(std::ostream& os, const Diagnostic& d);

/// Raised when a capability id does not belong to the active vocabulary or a
/// value otherwise breaks a domain invariant at call time.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for lookups of ids that are not present (persona ids, node ids).
class LookupError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Carries the diagnostics that made an operation refuse its input.
class RejectedInput : public std::runtime_error {
public:
    RejectedInput(const std::string& what, Diagnostics diags)
        : std::runtime_error(what), diagnostics_(std::move(diags)) {}

    [[nodiscard]] const Diagnostics& diagnostics() const noexcept { return diagnostics_; }

private:
    Diagnostics diagnostics_;
};

} // namespace gbt
