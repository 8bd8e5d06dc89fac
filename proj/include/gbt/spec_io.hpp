// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gbt/diagnostic.hpp"
#include "gbt/domain.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gbt {

/// Outcome of parsing a document. `value` is set iff `diagnostics` holds no
/// error; warnings may accompany a value.
template <class T>
struct Parsed {
    std::optional<T> value;
    Diagnostics diagnostics;

    [[nodiscard]] bool ok() const noexcept { return value.has_value(); }
};

/// Parses process.json. Structural rule violations are reported as
/// diagnostics; the parser never throws on malformed input.
Parsed<ProcessSpec> parse_process(std::string_view text);

/// Parses personas.json, resolving capability ids against `vocabulary`.
Parsed<std::vector<Persona>> parse_personas(std::string_view text, Vocabulary vocabulary);

/// Canonical text: keys in schema order, two-space indent, trailing newline.
std::string serialize_process(const ProcessSpec& spec);
std::string serialize_personas(std::span<const Persona> personas);

/// 64-bit FNV-1a over the canonical serialization, as 16 hex digits.
std::string content_digest(const ProcessSpec& spec);

/// Reads a whole file. Returns nullopt if it cannot be opened.
std::optional<std::string> read_text_file(const std::filesystem::path& path);

/// A process and persona set loaded together, as the CLI and service use them.
struct LoadedDefinitions {
    ProcessSpec process;
    std::vector<Persona> personas;
    Diagnostics diagnostics; ///< parse warnings plus validate_process findings
};

/// Loads and validates both files. Throws RejectedInput when either file
/// fails to parse; validation errors are left in `diagnostics`.
LoadedDefinitions load_definitions(std::string_view process_text, std::string_view personas_text);

} // namespace gbt
