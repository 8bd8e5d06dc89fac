// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "gbt/domain.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace gbt {

namespace {

bool in_vocabulary(Vocabulary vocabulary, const std::string& id)
{
    return std::any_of(vocabulary.begin(), vocabulary.end(), [&](const auto& c) { return c.id == id; });
}

void require_known(Vocabulary vocabulary, const std::set<std::string>& ids, std::string_view what)
{
    for (const auto& id : ids) {
        if (!in_vocabulary(vocabulary, id)) {
            throw ValidationError("unknown capability '" + id + "' in " + std::string(what));
        }
    }
}

std::string join_path(const std::string& base, std::string_view leaf)
{
    return base + "/" + std::string(leaf);
}

std::string join_path(const std::string& base, std::size_t index)
{
    return base + "/" + std::to_string(index);
}

/// Collector that keeps scan order stable.
class Findings {
public:
    void error(std::string path, std::string message)
    {
        out_.push_back({Severity::Error, std::move(path), std::move(message)});
    }
    void warning(std::string path, std::string message)
    {
        out_.push_back({Severity::Warning, std::move(path), std::move(message)});
    }
    void append(const Diagnostics& more) { out_.insert(out_.end(), more.begin(), more.end()); }
    Diagnostics take() && { return std::move(out_); }

private:
    Diagnostics out_;
};

void check_identifier(Findings& f, const std::string& path, const std::string& id, std::string_view what)
{
    if (!is_valid_identifier(id)) {
        f.error(path, std::string(what) + " '" + id + "' is not a valid identifier");
    }
}

// Sets lose document order, so findings point at the array itself.
void check_flag_set(Findings& f, const std::string& path, const std::set<std::string>& flags)
{
    for (const auto& flag : flags) {
        check_identifier(f, path, flag, "flag");
    }
}

void check_action(Findings& f, const std::string& path, const ActionSpec& a, Vocabulary vocabulary)
{
    check_identifier(f, join_path(path, "id"), a.id, "action id");
    if (a.actor == Actor::Robot && !a.required_capabilities.empty()) {
        f.error(join_path(path, "required_capabilities"), "robot action '" + a.id + "' cannot require human capabilities");
    }
    for (const auto& cap : a.required_capabilities) {
        if (!in_vocabulary(vocabulary, cap)) {
            f.error(join_path(path, "required_capabilities"), "unknown capability '" + cap + "'");
        }
    }
    if (a.goal_id.empty()) {
        f.error(join_path(path, "goal_id"), "action '" + a.id + "' has no goal");
    } else {
        check_identifier(f, join_path(path, "goal_id"), a.goal_id, "goal id");
    }
    check_flag_set(f, join_path(path, "skip_if"), a.skip_if);
    check_flag_set(f, join_path(path, "sets_flags"), a.sets_flags);
    if (a.nominal_duration < Duration::zero()) {
        f.error(join_path(path, "nominal_duration"), "nominal duration must not be negative");
    }
    if (a.timeout && *a.timeout <= Duration::zero()) {
        f.error(join_path(path, "timeout"), "timeout must be positive");
    }
    if (a.max_attempts && *a.max_attempts == 0) {
        f.error(join_path(path, "max_attempts"), "max_attempts must be at least 1");
    }
    if (a.companion) {
        if (a.actor != Actor::Shared) {
            f.error(join_path(path, "companion"), "only shared actions take companion robot sub-actions");
        }
        if (a.companion->hold.empty() || a.companion->release.empty()) {
            f.error(join_path(path, "companion"), "companion needs both hold and release labels");
        }
    }
}

void check_strategy(Findings& f, const std::string& path, const Strategy& s, const PartProcess& part,
                    Vocabulary vocabulary)
{
    check_identifier(f, join_path(path, "id"), s.id, "strategy id");
    if (s.allowlist_mode == AllowlistMode::Universal && !s.persona_ids.empty()) {
        f.error(join_path(path, "allowlist/persona_ids"), "universal allowlist must not list persona ids");
    }
    if (s.allowlist_mode == AllowlistMode::Manual && s.persona_ids.empty()) {
        f.warning(join_path(path, "allowlist/persona_ids"), "manual allowlist admits no persona");
    }
    if (s.allowlist_mode == AllowlistMode::Derived && !s.persona_ids.empty()) {
        f.warning(join_path(path, "allowlist/persona_ids"), "persona ids are ignored for a derived allowlist");
    }
    if (s.budget && *s.budget <= Duration::zero()) {
        f.error(join_path(path, "budget"), "strategy budget must be positive");
    }
    if (s.actions.empty()) {
        f.error(join_path(path, "actions"), "strategy '" + s.id + "' has no actions");
        return;
    }
    std::map<std::string, std::size_t> goal_first;
    for (std::size_t i = 0; i < s.actions.size(); ++i) {
        const auto apath = join_path(join_path(path, "actions"), i);
        check_action(f, apath, s.actions[i], vocabulary);
        const auto& goal = s.actions[i].goal_id;
        if (goal.empty()) {
            continue;
        }
        if (auto [it, fresh] = goal_first.emplace(goal, i); !fresh) {
            f.error(join_path(apath, "goal_id"),
                    "goal '" + goal + "' already reached by action " + std::to_string(it->second) + " of this strategy");
        }
    }
    for (const auto& goal : part.goal_ids) {
        if (!goal_first.contains(goal)) {
            f.error(join_path(path, "actions"), "strategy '" + s.id + "' does not reach goal '" + goal + "'");
        }
    }
}

void check_part(Findings& f, const std::string& path, const PartProcess& part, Vocabulary vocabulary)
{
    check_identifier(f, join_path(path, "id"), part.id, "part process id");
    std::set<std::string> goals;
    for (std::size_t i = 0; i < part.goal_ids.size(); ++i) {
        const auto gpath = join_path(join_path(path, "goal_ids"), i);
        check_identifier(f, gpath, part.goal_ids[i], "goal id");
        if (!goals.insert(part.goal_ids[i]).second) {
            f.error(gpath, "duplicate goal id '" + part.goal_ids[i] + "'");
        }
    }
    if (part.strategies.empty()) {
        f.error(join_path(path, "strategies"), "part process '" + part.id + "' has no strategies");
        return;
    }

    std::set<std::string> strategy_ids;
    std::map<std::string, std::string> action_owner;
    std::optional<unsigned> max_human_level;
    for (const auto& s : part.strategies) {
        if (classify(s) != StrategyKind::Automated) {
            max_human_level = std::max(max_human_level.value_or(0), s.assistance_level);
        }
    }

    for (std::size_t j = 0; j < part.strategies.size(); ++j) {
        const auto& s = part.strategies[j];
        const auto spath = join_path(join_path(path, "strategies"), j);
        if (!strategy_ids.insert(s.id).second) {
            f.error(join_path(spath, "id"), "duplicate strategy id '" + s.id + "'");
        }
        if (j > 0 && s.assistance_level < part.strategies[j - 1].assistance_level) {
            f.error(join_path(spath, "assistance_level"),
                    "assistance level " + std::to_string(s.assistance_level) + " is lower than the preceding level " +
                        std::to_string(part.strategies[j - 1].assistance_level));
        }
        if (!s.actions.empty() && classify(s) == StrategyKind::Automated && max_human_level &&
            s.assistance_level <= *max_human_level) {
            f.error(join_path(spath, "assistance_level"),
                    "automated strategy '" + s.id + "' must sit above every strategy with human actions");
        }
        for (std::size_t i = 0; i < s.actions.size(); ++i) {
            const auto& a = s.actions[i];
            if (auto [it, fresh] = action_owner.emplace(a.id, s.id); !fresh) {
                f.error(join_path(join_path(join_path(spath, "actions"), i), "id"),
                        "action id '" + a.id + "' already used in strategy '" + it->second + "'");
            }
        }
        check_strategy(f, spath, s, part, vocabulary);
    }
}

} // namespace

std::vector<CapabilityCategory> default_vocabulary()
{
    return {
        {"reaching", "Reaching"},
        {"forearm_rotation", "Turning of lower arm and/or hand"},
        {"grip", "Fist and/or pinch grip"},
        {"pressure", "Applying pressure with finger and/or hand"},
        {"dexterity", "Finger and/or hand dexterity"},
        {"trunk_rotation", "Neck and/or trunk rotation"},
    };
}

const char* to_string(Actor a)
{
    switch (a) {
        case Actor::Human: return "human";
        case Actor::Robot: return "robot";
        case Actor::Shared: return "shared";
    }
    return "human";
}

std::optional<Actor> parse_actor(std::string_view s)
{
    if (s == "human") return Actor::Human;
    if (s == "robot") return Actor::Robot;
    if (s == "shared") return Actor::Shared;
    return std::nullopt;
}

const char* to_string(AllowlistMode m)
{
    switch (m) {
        case AllowlistMode::Manual: return "manual";
        case AllowlistMode::Derived: return "derived";
        case AllowlistMode::Universal: return "universal";
    }
    return "derived";
}

std::optional<AllowlistMode> parse_allowlist_mode(std::string_view s)
{
    if (s == "manual") return AllowlistMode::Manual;
    if (s == "derived") return AllowlistMode::Derived;
    if (s == "universal") return AllowlistMode::Universal;
    return std::nullopt;
}

StrategyKind classify(const Strategy& s)
{
    const bool any_robot = std::any_of(s.actions.begin(), s.actions.end(), [](const auto& a) { return a.involves_robot(); });
    const bool any_human = std::any_of(s.actions.begin(), s.actions.end(), [](const auto& a) { return a.involves_human(); });
    if (!any_robot) return StrategyKind::Manual;
    if (!any_human) return StrategyKind::Automated;
    return StrategyKind::Collaborative;
}

const char* to_string(StrategyKind k)
{
    switch (k) {
        case StrategyKind::Manual: return "manual";
        case StrategyKind::Collaborative: return "collaborative";
        case StrategyKind::Automated: return "automated";
    }
    return "manual";
}

bool can_perform(const CapabilityProfile& profile, const ActionSpec& action, Vocabulary vocabulary)
{
    require_known(vocabulary, action.required_capabilities, "action '" + action.id + "'");
    require_known(vocabulary, profile.impaired, "capability profile");
    if (action.actor == Actor::Robot) {
        return true;
    }
    return std::none_of(action.required_capabilities.begin(), action.required_capabilities.end(),
                        [&](const auto& cap) { return profile.impaired.contains(cap); });
}

bool strategy_accessible(const CapabilityProfile& profile, const Strategy& strategy, Vocabulary vocabulary)
{
    bool ok = true;
    // Every action is checked so unknown capabilities surface even after a miss.
    for (const auto& action : strategy.actions) {
        ok = can_perform(profile, action, vocabulary) && ok;
    }
    return strategy.allowlist_mode == AllowlistMode::Universal || ok;
}

std::set<PersonaId> derive_allowlist(const Strategy& strategy, std::span<const Persona> personas, Vocabulary vocabulary)
{
    std::set<PersonaId> ids;
    for (const auto& p : personas) {
        if (strategy_accessible(p.profile, strategy, vocabulary)) {
            ids.insert(p.id);
        }
    }
    return ids;
}

Allowlist effective_allowlist(const Strategy& strategy, std::span<const Persona> personas, Vocabulary vocabulary)
{
    switch (strategy.allowlist_mode) {
        case AllowlistMode::Universal: return {true, {}};
        case AllowlistMode::Manual: return {false, strategy.persona_ids};
        case AllowlistMode::Derived: return {false, derive_allowlist(strategy, personas, vocabulary)};
    }
    return {};
}

const Persona& find_persona(std::span<const Persona> personas, PersonaId id)
{
    auto it = std::find_if(personas.begin(), personas.end(), [&](const auto& p) { return p.id == id; });
    if (it == personas.end()) {
        throw LookupError("unknown persona id " + std::to_string(id));
    }
    return *it;
}

std::vector<const Strategy*> eligible_strategies(const PartProcess& part, PersonaId persona_id,
                                                 std::span<const Persona> personas, Vocabulary vocabulary)
{
    find_persona(personas, persona_id);
    std::vector<const Strategy*> out;
    for (const auto& s : part.strategies) {
        if (effective_allowlist(s, personas, vocabulary).admits(persona_id)) {
            out.push_back(&s);
        }
    }
    return out;
}

Duration effective_timeout(const ActionSpec& action, const ProcessSpec& spec)
{
    return action.timeout.value_or(spec.default_timeout);
}

bool is_valid_identifier(std::string_view id)
{
    if (id.empty()) {
        return false;
    }
    return std::none_of(id.begin(), id.end(), [](char c) {
        return std::isspace(static_cast<unsigned char>(c)) || c == '/' || c == '#' ||
               static_cast<unsigned char>(c) < 0x20;
    });
}

Diagnostics validate_structure(const ProcessSpec& spec)
{
    Findings f;
    if (spec.format_version != "1") {
        f.error("format_version", "unsupported format version '" + spec.format_version + "'");
    }
    check_identifier(f, "id", spec.id, "process id");
    if (spec.default_timeout <= Duration::zero()) {
        f.error("default_timeout", "default timeout must be positive");
    }

    std::set<std::string> vocab_ids;
    for (std::size_t i = 0; i < spec.vocabulary.size(); ++i) {
        const auto path = join_path(join_path("vocabulary", i), "id");
        check_identifier(f, path, spec.vocabulary[i].id, "capability id");
        if (!vocab_ids.insert(spec.vocabulary[i].id).second) {
            f.error(path, "duplicate capability id '" + spec.vocabulary[i].id + "'");
        }
    }

    if (spec.part_processes.empty()) {
        f.error("part_processes", "process has no part processes");
    }
    std::set<std::string> part_ids;
    for (std::size_t i = 0; i < spec.part_processes.size(); ++i) {
        const auto& part = spec.part_processes[i];
        const auto path = join_path("part_processes", i);
        if (!part_ids.insert(part.id).second) {
            f.error(join_path(path, "id"), "duplicate part process id '" + part.id + "'");
        }
        check_part(f, path, part, spec.vocabulary);
    }
    return std::move(f).take();
}

Diagnostics validate_personas(std::span<const Persona> personas, Vocabulary vocabulary)
{
    Findings f;
    std::set<PersonaId> ids;
    bool reference = false;
    for (std::size_t i = 0; i < personas.size(); ++i) {
        const auto& p = personas[i];
        const auto path = join_path("personas", i);
        if (p.id <= 0) {
            f.error(join_path(path, "id"), "persona id must be a positive integer");
        }
        if (!ids.insert(p.id).second) {
            f.error(join_path(path, "id"), "duplicate persona id " + std::to_string(p.id));
        }
        for (const auto& cap : p.profile.impaired) {
            if (!in_vocabulary(vocabulary, cap)) {
                f.error(join_path(path, "impaired"), "unknown capability '" + cap + "'");
            }
        }
        reference = reference || p.profile.unimpaired();
    }
    if (!personas.empty() && !reference) {
        f.warning("personas", "no reference persona: every persona is impaired");
    }
    return std::move(f).take();
}

Diagnostics validate_process(const ProcessSpec& spec, std::span<const Persona> personas)
{
    Findings f;
    const auto structural = validate_structure(spec);
    f.append(structural);
    const auto persona_diags = validate_personas(personas, spec.vocabulary);
    f.append(persona_diags);
    if (has_errors(structural) || has_errors(persona_diags)) {
        // Coverage needs a consistent vocabulary to evaluate capabilities.
        return std::move(f).take();
    }

    std::set<PersonaId> known;
    for (const auto& p : personas) {
        known.insert(p.id);
    }

    for (std::size_t i = 0; i < spec.part_processes.size(); ++i) {
        const auto& part = spec.part_processes[i];
        const auto path = join_path("part_processes", i);
        for (std::size_t j = 0; j < part.strategies.size(); ++j) {
            const auto& s = part.strategies[j];
            if (s.allowlist_mode != AllowlistMode::Manual) {
                continue;
            }
            for (auto id : s.persona_ids) {
                if (!known.contains(id)) {
                    f.warning(join_path(join_path(join_path(path, "strategies"), j), "allowlist/persona_ids"),
                              "persona " + std::to_string(id) + " is not in the persona set");
                }
            }
        }

        std::vector<PersonaId> stranded;
        for (const auto& p : personas) {
            if (eligible_strategies(part, p.id, personas, spec.vocabulary).empty()) {
                stranded.push_back(p.id);
            }
        }
        const bool universal = std::any_of(part.strategies.begin(), part.strategies.end(),
                                           [](const auto& s) { return s.allowlist_mode == AllowlistMode::Universal; });
        std::ostringstream who;
        for (std::size_t k = 0; k < stranded.size(); ++k) {
            who << (k ? ", " : "") << stranded[k];
        }
        if (part.may_fail) {
            std::string msg = "part process '" + part.id + "' may fail";
            msg += universal ? "" : ": no universal automated strategy";
            if (!stranded.empty()) {
                msg += "; no eligible strategy for persona(s) " + who.str();
            }
            f.warning(join_path(path, "may_fail"), msg);
        } else if (!stranded.empty()) {
            f.error(join_path(path, "strategies"),
                    "no eligible strategy for persona(s) " + who.str() + " and part process is not flagged may_fail");
        }
    }
    return std::move(f).take();
}

} // namespace gbt
