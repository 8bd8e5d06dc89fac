// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gbt/diagnostic.hpp"
#include "gbt/duration.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace gbt {

/// Free-form payload of the extensible "meta" and "notes" sections. Kept as
/// ordered JSON so unknown keys survive a round trip in document order.
using Extension = nlohmann::ordered_json;

using PersonaId = std::int64_t;

inline constexpr unsigned kDefaultMaxAttempts = 3;

struct CapabilityCategory {
    std::string id;
    std::string label;

    bool operator==(const CapabilityCategory&) const = default;
};

using Vocabulary = std::span<const CapabilityCategory>;

/// The six impairment categories used for the box-folding workplace.
std::vector<CapabilityCategory> default_vocabulary();

struct CapabilityProfile {
    std::set<std::string> impaired;

    [[nodiscard]] bool unimpaired() const noexcept { return impaired.empty(); }

    bool operator==(const CapabilityProfile&) const = default;
};

struct Persona {
    PersonaId id = 0;
    std::string name;
    CapabilityProfile profile;
    Extension notes;

    bool operator==(const Persona&) const = default;
};

enum class Actor { Human, Robot, Shared };

const char* to_string(Actor a);
std::optional<Actor> parse_actor(std::string_view s);

/// Robot sub-actions bracketing the human part of a shared action.
struct Companion {
    std::string hold;
    std::string release;

    bool operator==(const Companion&) const = default;
};

struct ActionSpec {
    std::string id;
    std::string label;
    Actor actor = Actor::Human;
    std::set<std::string> required_capabilities;
    std::string goal_id;
    std::set<std::string> skip_if;
    std::set<std::string> sets_flags;
    Duration nominal_duration{0};
    std::optional<Duration> timeout; ///< nullopt inherits the process default
    std::optional<unsigned> max_attempts; ///< nullopt means kDefaultMaxAttempts
    std::optional<Companion> companion; ///< shared actions only
    Extension meta;

    [[nodiscard]] bool involves_human() const noexcept { return actor != Actor::Robot; }
    [[nodiscard]] bool involves_robot() const noexcept { return actor != Actor::Human; }
    [[nodiscard]] unsigned attempts() const noexcept { return max_attempts.value_or(kDefaultMaxAttempts); }

    bool operator==(const ActionSpec&) const = default;
};

enum class AllowlistMode { Manual, Derived, Universal };

const char* to_string(AllowlistMode m);
std::optional<AllowlistMode> parse_allowlist_mode(std::string_view s);

struct Strategy {
    std::string id;
    unsigned assistance_level = 0;
    AllowlistMode allowlist_mode = AllowlistMode::Derived;
    std::set<PersonaId> persona_ids;
    std::vector<ActionSpec> actions;
    std::optional<Duration> budget; ///< overrides the summed leaf timeouts
    Extension meta;

    bool operator==(const Strategy&) const = default;
};

/// Rough involvement class, read off the actors of a strategy.
enum class StrategyKind { Manual, Collaborative, Automated };

StrategyKind classify(const Strategy& s);
const char* to_string(StrategyKind k);

struct PartProcess {
    std::string id;
    std::string name;
    bool may_fail = false;
    std::vector<std::string> goal_ids;
    std::vector<Strategy> strategies;
    Extension meta;

    bool operator==(const PartProcess&) const = default;
};

struct ProcessSpec {
    std::string format_version = "1";
    std::string id;
    std::string name;
    Duration default_timeout{30000};
    std::vector<CapabilityCategory> vocabulary;
    std::vector<PartProcess> part_processes;
    Extension meta;

    bool operator==(const ProcessSpec&) const = default;
};

/// Persona ids admitted by a strategy. `universal` admits everyone.
struct Allowlist {
    bool universal = false;
    std::set<PersonaId> ids;

    [[nodiscard]] bool admits(PersonaId id) const { return universal || ids.contains(id); }

    bool operator==(const Allowlist&) const = default;
};

// ---------------------------------------------------------------------------
// Accessibility reasoning

/// True iff none of the action's required capabilities is impaired. Robot
/// actions are always performable. Throws ValidationError when the action or
/// the profile names a capability outside `vocabulary`.
bool can_perform(const CapabilityProfile& profile, const ActionSpec& action, Vocabulary vocabulary);

/// True iff every human or shared action of the strategy is performable.
/// Universal strategies admit every profile.
bool strategy_accessible(const CapabilityProfile& profile, const Strategy& strategy, Vocabulary vocabulary);

std::set<PersonaId> derive_allowlist(const Strategy& strategy, std::span<const Persona> personas,
                                     Vocabulary vocabulary);

/// Manual lists are taken verbatim; derived lists are computed from the
/// persona set; universal strategies admit everyone.
Allowlist effective_allowlist(const Strategy& strategy, std::span<const Persona> personas, Vocabulary vocabulary);

/// Throws LookupError for an unknown id.
const Persona& find_persona(std::span<const Persona> personas, PersonaId id);

/// The part's strategies admitting `persona_id`, in spec order. The first
/// entry is the persona's entry point into the part process.
std::vector<const Strategy*> eligible_strategies(const PartProcess& part, PersonaId persona_id,
                                                 std::span<const Persona> personas, Vocabulary vocabulary);

/// Per-action wait budget after inheritance.
Duration effective_timeout(const ActionSpec& action, const ProcessSpec& spec);

// ---------------------------------------------------------------------------
// Validation

/// Checks that need no persona set: ids, ordering of levels, goal coverage,
/// actor/capability consistency. Paths follow the process.json layout.
Diagnostics validate_structure(const ProcessSpec& spec);

/// Persona-file checks against a vocabulary: unique ids, known capabilities,
/// presence of an unimpaired reference persona (warning).
Diagnostics validate_personas(std::span<const Persona> personas, Vocabulary vocabulary);

/// Everything above plus per-persona coverage: each part process must offer
/// every persona an eligible strategy unless flagged `may_fail`, in which
/// case a single advisory is emitted for it instead.
Diagnostics validate_process(const ProcessSpec& spec, std::span<const Persona> personas);

/// Identifier rule shared by spec ids: non-empty, no whitespace, no '/' or '#'
/// (both are reserved for compiled node ids).
bool is_valid_identifier(std::string_view id);

} // namespace gbt
