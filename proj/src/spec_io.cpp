// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "gbt/spec_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>

namespace gbt {

namespace {

using Json = nlohmann::ordered_json;

std::string child(const std::string& path, std::string_view key)
{
    return path.empty() ? std::string(key) : path + "/" + std::string(key);
}

std::string child(const std::string& path, std::size_t index)
{
    return child(path, std::to_string(index));
}

/// Walks a JSON document and records diagnostics with their source paths.
class Reader {
public:
    explicit Reader(Diagnostics& out) : out_(out) {}

    void error(const std::string& path, std::string message)
    {
        out_.push_back({Severity::Error, path.empty() ? "/" : path, std::move(message)});
    }

    void warning(const std::string& path, std::string message)
    {
        out_.push_back({Severity::Warning, path.empty() ? "/" : path, std::move(message)});
    }

    bool expect_object(const Json& j, const std::string& path)
    {
        if (!j.is_object()) {
            error(path, "expected an object");
            return false;
        }
        return true;
    }

    void reject_unknown_keys(const Json& obj, const std::string& path, std::initializer_list<std::string_view> allowed)
    {
        for (const auto& [key, value] : obj.items()) {
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
                error(child(path, key), "unknown key '" + key + "'");
            }
        }
    }

    const Json* field(const Json& obj, const std::string& path, std::string_view key, bool required)
    {
        auto it = obj.find(key);
        if (it == obj.end()) {
            if (required) {
                error(path, "missing required key '" + std::string(key) + "'");
            }
            return nullptr;
        }
        return &*it;
    }

    std::optional<std::string> string(const Json& obj, const std::string& path, std::string_view key, bool required)
    {
        const Json* v = field(obj, path, key, required);
        if (!v) return std::nullopt;
        if (!v->is_string()) {
            error(child(path, key), "expected a string");
            return std::nullopt;
        }
        return v->get<std::string>();
    }

    std::optional<bool> boolean(const Json& obj, const std::string& path, std::string_view key)
    {
        const Json* v = field(obj, path, key, false);
        if (!v) return std::nullopt;
        if (!v->is_boolean()) {
            error(child(path, key), "expected a boolean");
            return std::nullopt;
        }
        return v->get<bool>();
    }

    std::optional<std::int64_t> integer(const Json& v, const std::string& path, std::int64_t min, std::int64_t max)
    {
        std::int64_t value = 0;
        if (v.is_number_unsigned()) {
            const auto u = v.get<std::uint64_t>();
            if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
                error(path, "integer out of range");
                return std::nullopt;
            }
            value = static_cast<std::int64_t>(u);
        } else if (v.is_number_integer()) {
            value = v.get<std::int64_t>();
        } else {
            error(path, "expected an integer");
            return std::nullopt;
        }
        if (value < min || value > max) {
            error(path, "integer out of range [" + std::to_string(min) + ", " + std::to_string(max) + "]");
            return std::nullopt;
        }
        return value;
    }

    std::optional<std::int64_t> integer(const Json& obj, const std::string& path, std::string_view key, bool required,
                                        std::int64_t min, std::int64_t max)
    {
        const Json* v = field(obj, path, key, required);
        if (!v) return std::nullopt;
        return integer(*v, child(path, key), min, max);
    }

    std::optional<Duration> duration(const Json& obj, const std::string& path, std::string_view key, bool required)
    {
        const Json* v = field(obj, path, key, required);
        if (!v) return std::nullopt;
        if (!v->is_string()) {
            error(child(path, key), "expected a duration string such as \"30s\" or \"250ms\"");
            return std::nullopt;
        }
        auto d = parse_duration(v->get_ref<const std::string&>());
        if (!d) {
            error(child(path, key), "malformed duration '" + v->get<std::string>() + "'");
        }
        return d;
    }

    /// Array of strings read as a set; duplicates draw a warning.
    std::set<std::string> string_set(const Json& obj, const std::string& path, std::string_view key)
    {
        std::set<std::string> out;
        const Json* v = field(obj, path, key, false);
        if (!v) return out;
        const auto apath = child(path, key);
        if (!v->is_array()) {
            error(apath, "expected an array of strings");
            return out;
        }
        for (std::size_t i = 0; i < v->size(); ++i) {
            const auto& e = (*v)[i];
            if (!e.is_string()) {
                error(child(apath, i), "expected a string");
                continue;
            }
            if (!out.insert(e.get<std::string>()).second) {
                warning(child(apath, i), "duplicate entry '" + e.get<std::string>() + "' ignored");
            }
        }
        return out;
    }

    const Json* array(const Json& obj, const std::string& path, std::string_view key, bool required)
    {
        const Json* v = field(obj, path, key, required);
        if (!v) return nullptr;
        if (!v->is_array()) {
            error(child(path, key), "expected an array");
            return nullptr;
        }
        return v;
    }

private:
    Diagnostics& out_;
};

std::optional<Json> parse_json(std::string_view text, Reader& r)
{
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const Json::exception& e) {
        r.error("/", std::string("malformed JSON: ") + e.what());
        return std::nullopt;
    }
}

ActionSpec read_action(Reader& r, const Json& j, const std::string& path)
{
    ActionSpec a;
    if (!r.expect_object(j, path)) return a;
    r.reject_unknown_keys(j, path,
                          {"id", "label", "actor", "required_capabilities", "goal_id", "skip_if", "sets_flags",
                           "nominal_duration", "timeout", "max_attempts", "companion", "meta"});
    a.id = r.string(j, path, "id", true).value_or("");
    a.label = r.string(j, path, "label", false).value_or("");
    if (auto actor = r.string(j, path, "actor", true)) {
        if (auto parsed = parse_actor(*actor)) {
            a.actor = *parsed;
        } else {
            r.error(child(path, "actor"), "actor must be one of human, robot, shared");
        }
    }
    a.required_capabilities = r.string_set(j, path, "required_capabilities");
    a.goal_id = r.string(j, path, "goal_id", true).value_or("");
    a.skip_if = r.string_set(j, path, "skip_if");
    a.sets_flags = r.string_set(j, path, "sets_flags");
    a.nominal_duration = r.duration(j, path, "nominal_duration", false).value_or(Duration::zero());
    if (const Json* t = r.field(j, path, "timeout", false)) {
        if (!(t->is_string() && t->get_ref<const std::string&>() == "inherit")) {
            a.timeout = r.duration(j, path, "timeout", false);
        }
    }
    if (auto n = r.integer(j, path, "max_attempts", false, 1, 1000)) {
        a.max_attempts = static_cast<unsigned>(*n);
    }
    if (const Json* c = r.field(j, path, "companion", false)) {
        const auto cpath = child(path, "companion");
        if (r.expect_object(*c, cpath)) {
            r.reject_unknown_keys(*c, cpath, {"hold", "release"});
            Companion comp;
            comp.hold = r.string(*c, cpath, "hold", true).value_or("");
            comp.release = r.string(*c, cpath, "release", true).value_or("");
            a.companion = comp;
        }
    }
    if (const Json* m = r.field(j, path, "meta", false)) {
        a.meta = *m;
    }
    return a;
}

Strategy read_strategy(Reader& r, const Json& j, const std::string& path)
{
    Strategy s;
    if (!r.expect_object(j, path)) return s;
    r.reject_unknown_keys(j, path, {"id", "assistance_level", "allowlist", "actions", "budget", "meta"});
    s.id = r.string(j, path, "id", true).value_or("");
    s.assistance_level = static_cast<unsigned>(
        r.integer(j, path, "assistance_level", false, 0, std::numeric_limits<std::int32_t>::max()).value_or(0));
    if (const Json* al = r.field(j, path, "allowlist", false)) {
        const auto apath = child(path, "allowlist");
        if (r.expect_object(*al, apath)) {
            r.reject_unknown_keys(*al, apath, {"mode", "persona_ids"});
            if (auto mode = r.string(*al, apath, "mode", true)) {
                if (auto m = parse_allowlist_mode(*mode)) {
                    s.allowlist_mode = *m;
                } else {
                    r.error(child(apath, "mode"), "allowlist mode must be one of manual, derived, universal");
                }
            }
            if (const Json* ids = r.array(*al, apath, "persona_ids", false)) {
                const auto ipath = child(apath, "persona_ids");
                for (std::size_t i = 0; i < ids->size(); ++i) {
                    if (auto id = r.integer((*ids)[i], child(ipath, i), 1, std::numeric_limits<std::int64_t>::max())) {
                        if (!s.persona_ids.insert(*id).second) {
                            r.warning(child(ipath, i), "duplicate persona id ignored");
                        }
                    }
                }
            }
        }
    }
    if (const Json* actions = r.array(j, path, "actions", true)) {
        for (std::size_t i = 0; i < actions->size(); ++i) {
            s.actions.push_back(read_action(r, (*actions)[i], child(child(path, "actions"), i)));
        }
    }
    s.budget = r.duration(j, path, "budget", false);
    if (const Json* m = r.field(j, path, "meta", false)) {
        s.meta = *m;
    }
    return s;
}

/// Goals every strategy reaches, in the order of the first strategy.
std::vector<std::string> common_goals(const std::vector<Strategy>& strategies)
{
    std::vector<std::string> out;
    if (strategies.empty()) return out;
    for (const auto& a : strategies.front().actions) {
        const bool everywhere = std::all_of(strategies.begin(), strategies.end(), [&](const Strategy& s) {
            return std::any_of(s.actions.begin(), s.actions.end(), [&](const auto& b) { return b.goal_id == a.goal_id; });
        });
        if (everywhere && !a.goal_id.empty() && std::find(out.begin(), out.end(), a.goal_id) == out.end()) {
            out.push_back(a.goal_id);
        }
    }
    return out;
}

PartProcess read_part(Reader& r, const Json& j, const std::string& path)
{
    PartProcess p;
    if (!r.expect_object(j, path)) return p;
    r.reject_unknown_keys(j, path, {"id", "name", "may_fail", "goal_ids", "strategies", "meta"});
    p.id = r.string(j, path, "id", true).value_or("");
    p.name = r.string(j, path, "name", false).value_or("");
    p.may_fail = r.boolean(j, path, "may_fail").value_or(false);
    const Json* goals = r.array(j, path, "goal_ids", false);
    if (goals) {
        for (std::size_t i = 0; i < goals->size(); ++i) {
            const auto& g = (*goals)[i];
            if (g.is_string()) {
                p.goal_ids.push_back(g.get<std::string>());
            } else {
                r.error(child(child(path, "goal_ids"), i), "expected a string");
            }
        }
    }
    if (const Json* strategies = r.array(j, path, "strategies", true)) {
        for (std::size_t i = 0; i < strategies->size(); ++i) {
            p.strategies.push_back(read_strategy(r, (*strategies)[i], child(child(path, "strategies"), i)));
        }
    }
    if (!j.contains("goal_ids")) {
        p.goal_ids = common_goals(p.strategies);
    }
    if (const Json* m = r.field(j, path, "meta", false)) {
        p.meta = *m;
    }
    return p;
}

/// Re-anchors a diagnostic path to the deepest prefix present in the source
/// document; validation may name keys that were defaulted.
std::string anchor(const std::string& path, const Json& doc)
{
    if (path == "/" || path.empty()) return "/";
    std::string best = "/";
    const Json* node = &doc;
    std::size_t start = 0;
    while (start <= path.size()) {
        auto end = path.find('/', start);
        if (end == std::string::npos) end = path.size();
        const std::string token = path.substr(start, end - start);
        const Json* next = nullptr;
        if (node->is_object()) {
            auto it = node->find(token);
            if (it != node->end()) next = &*it;
        } else if (node->is_array() && !token.empty() &&
                   std::all_of(token.begin(), token.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            const auto idx = std::stoull(token);
            if (idx < node->size()) next = &(*node)[idx];
        }
        if (!next) break;
        node = next;
        best = path.substr(0, end);
        start = end + 1;
    }
    return best;
}

void check_format_version(Reader& r, const Json& j)
{
    if (auto v = r.string(j, "", "format_version", true); v && *v != "1") {
        r.error("format_version", "unsupported format version '" + *v + "'");
    }
}

Json dump_action(const ActionSpec& a)
{
    Json j;
    j["id"] = a.id;
    j["label"] = a.label;
    j["actor"] = to_string(a.actor);
    j["required_capabilities"] = a.required_capabilities;
    j["goal_id"] = a.goal_id;
    j["skip_if"] = a.skip_if;
    j["sets_flags"] = a.sets_flags;
    j["nominal_duration"] = format_duration(a.nominal_duration);
    j["timeout"] = a.timeout ? format_duration(*a.timeout) : std::string("inherit");
    if (a.max_attempts) j["max_attempts"] = *a.max_attempts;
    if (a.companion) j["companion"] = Json{{"hold", a.companion->hold}, {"release", a.companion->release}};
    if (!a.meta.is_null()) j["meta"] = a.meta;
    return j;
}

Json dump_strategy(const Strategy& s)
{
    Json j;
    j["id"] = s.id;
    j["assistance_level"] = s.assistance_level;
    Json allow;
    allow["mode"] = to_string(s.allowlist_mode);
    allow["persona_ids"] = s.persona_ids;
    j["allowlist"] = allow;
    j["actions"] = Json::array();
    for (const auto& a : s.actions) j["actions"].push_back(dump_action(a));
    if (s.budget) j["budget"] = format_duration(*s.budget);
    if (!s.meta.is_null()) j["meta"] = s.meta;
    return j;
}

Json dump_process(const ProcessSpec& spec)
{
    Json j;
    j["format_version"] = spec.format_version;
    j["id"] = spec.id;
    j["name"] = spec.name;
    j["default_timeout"] = format_duration(spec.default_timeout);
    j["vocabulary"] = Json::array();
    for (const auto& c : spec.vocabulary) j["vocabulary"].push_back(Json{{"id", c.id}, {"label", c.label}});
    j["part_processes"] = Json::array();
    for (const auto& p : spec.part_processes) {
        Json pj;
        pj["id"] = p.id;
        pj["name"] = p.name;
        pj["may_fail"] = p.may_fail;
        pj["goal_ids"] = p.goal_ids;
        pj["strategies"] = Json::array();
        for (const auto& s : p.strategies) pj["strategies"].push_back(dump_strategy(s));
        if (!p.meta.is_null()) pj["meta"] = p.meta;
        j["part_processes"].push_back(std::move(pj));
    }
    if (!spec.meta.is_null()) j["meta"] = spec.meta;
    return j;
}

} // namespace

Parsed<ProcessSpec> parse_process(std::string_view text)
{
    Parsed<ProcessSpec> result;
    Reader r(result.diagnostics);
    auto doc = parse_json(text, r);
    if (!doc) return result;
    if (!r.expect_object(*doc, "")) return result;

    const Json& j = *doc;
    r.reject_unknown_keys(j, "",
                          {"format_version", "id", "name", "default_timeout", "vocabulary", "part_processes", "meta"});
    check_format_version(r, j);

    ProcessSpec spec;
    spec.id = r.string(j, "", "id", true).value_or("");
    spec.name = r.string(j, "", "name", false).value_or("");
    spec.default_timeout = r.duration(j, "", "default_timeout", false).value_or(Duration{30000});
    if (const Json* vocab = r.array(j, "", "vocabulary", false)) {
        for (std::size_t i = 0; i < vocab->size(); ++i) {
            const auto path = child("vocabulary", i);
            const auto& v = (*vocab)[i];
            if (!r.expect_object(v, path)) continue;
            r.reject_unknown_keys(v, path, {"id", "label"});
            spec.vocabulary.push_back(
                {r.string(v, path, "id", true).value_or(""), r.string(v, path, "label", false).value_or("")});
        }
    } else if (!j.contains("vocabulary")) {
        spec.vocabulary = default_vocabulary();
    }
    if (const Json* parts = r.array(j, "", "part_processes", true)) {
        for (std::size_t i = 0; i < parts->size(); ++i) {
            spec.part_processes.push_back(read_part(r, (*parts)[i], child("part_processes", i)));
        }
    }
    if (const Json* m = r.field(j, "", "meta", false)) {
        spec.meta = *m;
    }

    if (has_errors(result.diagnostics)) {
        return result;
    }
    for (auto d : validate_structure(spec)) {
        d.path = anchor(d.path, j);
        result.diagnostics.push_back(std::move(d));
    }
    if (!has_errors(result.diagnostics)) {
        result.value = std::move(spec);
    }
    return result;
}

Parsed<std::vector<Persona>> parse_personas(std::string_view text, Vocabulary vocabulary)
{
    Parsed<std::vector<Persona>> result;
    Reader r(result.diagnostics);
    auto doc = parse_json(text, r);
    if (!doc) return result;
    if (!r.expect_object(*doc, "")) return result;

    const Json& j = *doc;
    r.reject_unknown_keys(j, "", {"format_version", "personas", "meta"});
    check_format_version(r, j);

    std::vector<Persona> personas;
    std::set<PersonaId> seen;
    bool reference = false;
    if (const Json* list = r.array(j, "", "personas", true)) {
        for (std::size_t i = 0; i < list->size(); ++i) {
            const auto path = child("personas", i);
            const auto& pj = (*list)[i];
            if (!r.expect_object(pj, path)) continue;
            r.reject_unknown_keys(pj, path, {"id", "name", "impaired", "notes"});
            Persona p;
            if (auto id = r.integer(pj, path, "id", true, 1, std::numeric_limits<std::int64_t>::max())) {
                p.id = *id;
                if (!seen.insert(p.id).second) {
                    r.error(child(path, "id"), "duplicate persona id " + std::to_string(p.id));
                }
            }
            p.name = r.string(pj, path, "name", false).value_or("");
            if (const Json* imp = r.array(pj, path, "impaired", false)) {
                const auto ipath = child(path, "impaired");
                for (std::size_t k = 0; k < imp->size(); ++k) {
                    const auto& e = (*imp)[k];
                    if (!e.is_string()) {
                        r.error(child(ipath, k), "expected a string");
                        continue;
                    }
                    const auto cap = e.get<std::string>();
                    const bool known = std::any_of(vocabulary.begin(), vocabulary.end(),
                                                   [&](const auto& c) { return c.id == cap; });
                    if (!known) {
                        r.error(child(ipath, k), "unknown capability '" + cap + "'");
                    } else if (!p.profile.impaired.insert(cap).second) {
                        r.warning(child(ipath, k), "duplicate entry '" + cap + "' ignored");
                    }
                }
            }
            if (const Json* notes = r.field(pj, path, "notes", false)) {
                p.notes = *notes;
            }
            reference = reference || p.profile.unimpaired();
            personas.push_back(std::move(p));
        }
    }
    if (!personas.empty() && !reference) {
        r.warning("personas", "no reference persona: every persona is impaired");
    }
    if (!has_errors(result.diagnostics)) {
        result.value = std::move(personas);
    }
    return result;
}

std::string serialize_process(const ProcessSpec& spec)
{
    return dump_process(spec).dump(2) + "\n";
}

std::string serialize_personas(std::span<const Persona> personas)
{
    Json j;
    j["format_version"] = "1";
    j["personas"] = Json::array();
    for (const auto& p : personas) {
        Json pj;
        pj["id"] = p.id;
        pj["name"] = p.name;
        pj["impaired"] = p.profile.impaired;
        if (!p.notes.is_null()) pj["notes"] = p.notes;
        j["personas"].push_back(std::move(pj));
    }
    return j.dump(2) + "\n";
}

std::string content_digest(const ProcessSpec& spec)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : serialize_process(spec)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::optional<std::string> read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

LoadedDefinitions load_definitions(std::string_view process_text, std::string_view personas_text)
{
    auto process = parse_process(process_text);
    if (!process.ok()) {
        throw RejectedInput("process definition rejected", process.diagnostics);
    }
    auto personas = parse_personas(personas_text, process.value->vocabulary);
    if (!personas.ok()) {
        throw RejectedInput("persona definition rejected", personas.diagnostics);
    }
    LoadedDefinitions out{std::move(*process.value), std::move(*personas.value), {}};
    out.diagnostics = process.diagnostics;
    out.diagnostics.insert(out.diagnostics.end(), personas.diagnostics.begin(), personas.diagnostics.end());
    // validate_process leads with the structural findings the parser already
    // reported (with anchored paths); keep only what follows them.
    auto all = validate_process(out.process, out.personas);
    const auto structural = validate_structure(out.process).size();
    for (std::size_t i = structural; i < all.size(); ++i) {
        if (std::find(out.diagnostics.begin(), out.diagnostics.end(), all[i]) == out.diagnostics.end()) {
            out.diagnostics.push_back(std::move(all[i]));
        }
    }
    return out;
}

} // namespace gbt
