// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gbt/domain.hpp"
#include "spec_gen.hpp"

#include <algorithm>

using namespace gbt;
using namespace std::chrono_literals;

namespace {

ActionSpec human(std::string id, std::set<std::string> caps, std::string goal)
{
    ActionSpec a;
    a.id = std::move(id);
    a.label = a.id;
    a.actor = Actor::Human;
    a.required_capabilities = std::move(caps);
    a.goal_id = std::move(goal);
    return a;
}

ActionSpec robot(std::string id, std::string goal)
{
    ActionSpec a;
    a.id = std::move(id);
    a.label = a.id;
    a.actor = Actor::Robot;
    a.goal_id = std::move(goal);
    a.nominal_duration = 1s;
    return a;
}

Strategy strategy(std::string id, unsigned level, std::vector<ActionSpec> actions)
{
    Strategy s;
    s.id = std::move(id);
    s.assistance_level = level;
    s.actions = std::move(actions);
    return s;
}

ProcessSpec single_part(std::vector<Strategy> strategies, std::vector<std::string> goals = {"g"})
{
    ProcessSpec spec;
    spec.id = "p";
    spec.name = "p";
    spec.vocabulary = default_vocabulary();
    PartProcess part;
    part.id = "part";
    part.name = "part";
    part.goal_ids = std::move(goals);
    part.strategies = std::move(strategies);
    spec.part_processes.push_back(std::move(part));
    return spec;
}

Persona persona(PersonaId id, std::set<std::string> impaired)
{
    Persona p;
    p.id = id;
    p.name = "P" + std::to_string(id);
    p.profile.impaired = std::move(impaired);
    return p;
}

bool has_message(const Diagnostics& d, std::string_view needle, Severity sev = Severity::Error)
{
    return std::any_of(d.begin(), d.end(), [&](const Diagnostic& x) {
        return x.severity == sev && x.message.find(needle) != std::string::npos;
    });
}

// Brute-force reference: a persona is admitted iff no human-involving action
// asks for an impaired capability.
std::set<PersonaId> brute_force_allowlist(const Strategy& s, const std::vector<Persona>& personas)
{
    std::set<PersonaId> out;
    for (const auto& p : personas) {
        bool ok = true;
        for (const auto& a : s.actions) {
            if (a.actor == Actor::Robot) continue;
            for (const auto& c : a.required_capabilities) ok = ok && !p.profile.impaired.contains(c);
        }
        if (ok) out.insert(p.id);
    }
    return out;
}

const PartProcess& part_named(const ProcessSpec& spec, std::string_view id)
{
    for (const auto& p : spec.part_processes) {
        if (p.id == id) return p;
    }
    throw std::out_of_range(std::string(id));
}

} // namespace

TEST_CASE("durations parse and format")
{
    CHECK(parse_duration("30s") == Duration{30000});
    CHECK(parse_duration("250ms") == Duration{250});
    CHECK(parse_duration("0s") == Duration{0});
    CHECK_FALSE(parse_duration("").has_value());
    CHECK_FALSE(parse_duration("5").has_value());
    CHECK_FALSE(parse_duration("-1s").has_value());
    CHECK_FALSE(parse_duration("1.5s").has_value());
    CHECK_FALSE(parse_duration("s").has_value());
    CHECK(format_duration(Duration{30000}) == "30s");
    CHECK(format_duration(Duration{1500}) == "1500ms");
    for (long ms : {0L, 1L, 999L, 1000L, 61000L, 123456L}) {
        CHECK(parse_duration(format_duration(Duration{ms})) == Duration{ms});
    }
}

TEST_CASE("identifiers")
{
    CHECK(is_valid_identifier("fold_main"));
    CHECK_FALSE(is_valid_identifier(""));
    CHECK_FALSE(is_valid_identifier("a b"));
    CHECK_FALSE(is_valid_identifier("a/b"));
    CHECK_FALSE(is_valid_identifier("a#b"));
}

TEST_CASE("can_perform")
{
    const auto vocab = default_vocabulary();
    const auto grip_action = human("take", {"grip"}, "g");

    SUBCASE("unimpaired profile performs any action")
    {
        CHECK(can_perform({}, grip_action, vocab));
        CHECK(can_perform({}, human("x", {"grip", "reaching", "pressure"}, "g"), vocab));
    }
    SUBCASE("impaired grip cannot perform a grip action")
    {
        CHECK_FALSE(can_perform({{"grip"}}, grip_action, vocab));
    }
    SUBCASE("unrelated impairment does not matter")
    {
        CHECK(can_perform({{"reaching"}}, grip_action, vocab));
    }
    SUBCASE("robot actions are always performable")
    {
        auto r = robot("lift", "g");
        r.required_capabilities = {"grip"};
        CHECK(can_perform({{"grip"}}, r, vocab));
    }
    SUBCASE("unknown capability is a validation error")
    {
        CHECK_THROWS_AS(can_perform({}, human("x", {"telekinesis"}, "g"), vocab), ValidationError);
        CHECK_THROWS_AS(can_perform({{"telekinesis"}}, grip_action, vocab), ValidationError);
    }
}

TEST_CASE("can_perform is monotone in impairments")
{
    const auto vocab = default_vocabulary();
    std::vector<std::string> ids;
    for (const auto& c : vocab) ids.push_back(c.id);
    const auto n = ids.size();
    // All subset pairs of the vocabulary for a handful of actions.
    const std::vector<ActionSpec> actions = {
        human("a", {}, "g"), human("b", {"grip"}, "g"), human("c", {"reaching", "pressure"}, "g"),
        human("d", {"forearm_rotation", "dexterity", "trunk_rotation"}, "g"), robot("r", "g")};
    for (const auto& action : actions) {
        for (unsigned small = 0; small < (1u << n); ++small) {
            CapabilityProfile p;
            for (std::size_t i = 0; i < n; ++i) {
                if (small & (1u << i)) p.impaired.insert(ids[i]);
            }
            const bool before = can_perform(p, action, vocab);
            for (std::size_t i = 0; i < n; ++i) {
                auto q = p;
                q.impaired.insert(ids[i]);
                if (!before) CHECK_FALSE(can_perform(q, action, vocab));
            }
        }
    }
}

TEST_CASE("strategy_accessible")
{
    const auto vocab = default_vocabulary();
    auto automated = strategy("auto", 3, {robot("r1", "g"), robot("r2", "h")});
    automated.allowlist_mode = AllowlistMode::Universal;

    CHECK(strategy_accessible({{"grip", "reaching"}}, automated, vocab));
    CHECK(strategy_accessible({{"grip"}}, strategy("bots", 1, {robot("r", "g")}), vocab));
    CHECK_FALSE(strategy_accessible({{"reaching"}}, strategy("s", 0, {human("h", {"reaching"}, "g")}), vocab));

    const auto two = strategy("s", 0, {human("a", {"reaching"}, "g"), human("b", {"trunk_rotation"}, "h")});
    CHECK_FALSE(strategy_accessible({{"trunk_rotation"}}, two, vocab));
    CHECK_FALSE(strategy_accessible({{"reaching"}}, two, vocab));
    CHECK(strategy_accessible({{"grip"}}, two, vocab));

    ActionSpec shared = human("press", {"pressure"}, "g");
    shared.actor = Actor::Shared;
    CHECK_FALSE(strategy_accessible({{"pressure"}}, strategy("s", 1, {shared}), vocab));

    SUBCASE("unimpaired admitted by every non-empty-manual strategy")
    {
        for (std::uint64_t seed = 0; seed < 60; ++seed) {
            const auto d = testkit::random_definitions(seed);
            for (const auto& part : d.spec.part_processes) {
                for (const auto& s : part.strategies) {
                    if (s.allowlist_mode == AllowlistMode::Manual) continue;
                    CHECK(strategy_accessible({}, s, d.spec.vocabulary));
                }
            }
        }
    }
}

TEST_CASE("derive_allowlist")
{
    const auto vocab = default_vocabulary();
    const auto s = strategy("s", 0, {human("a", {"reaching"}, "g"), human("b", {"grip"}, "h")});

    CHECK(derive_allowlist(s, std::vector<Persona>{persona(1, {})}, vocab) == std::set<PersonaId>{1});
    CHECK(derive_allowlist(s, std::vector<Persona>{}, vocab).empty());
    CHECK(derive_allowlist(s, std::vector<Persona>{persona(2, {"reaching"}), persona(3, {"grip"})}, vocab).empty());
    CHECK(derive_allowlist(s, std::vector<Persona>{persona(2, {"reaching"}), persona(4, {"pressure"})}, vocab) ==
          std::set<PersonaId>{4});

    SUBCASE("equals brute force on generated and bundled definitions")
    {
        std::vector<testkit::Definitions> all;
        all.push_back(testkit::bundled_definitions());
        for (std::uint64_t seed = 0; seed < 150; ++seed) all.push_back(testkit::random_definitions(seed));
        for (const auto& d : all) {
            for (const auto& part : d.spec.part_processes) {
                for (const auto& st : part.strategies) {
                    CHECK(derive_allowlist(st, d.personas, d.spec.vocabulary) ==
                          brute_force_allowlist(st, d.personas));
                }
            }
        }
    }
}

TEST_CASE("effective_allowlist honours the mode")
{
    const auto vocab = default_vocabulary();
    const std::vector<Persona> ps = {persona(1, {}), persona(2, {"grip"})};
    auto s = strategy("s", 0, {human("a", {"grip"}, "g")});

    CHECK(effective_allowlist(s, ps, vocab) == Allowlist{false, {1}});
    s.allowlist_mode = AllowlistMode::Manual;
    s.persona_ids = {2};
    CHECK(effective_allowlist(s, ps, vocab) == Allowlist{false, {2}});
    s.allowlist_mode = AllowlistMode::Universal;
    CHECK(effective_allowlist(s, ps, vocab).universal);
    CHECK(effective_allowlist(s, ps, vocab).admits(99));
}

TEST_CASE("bundled manual unfold excludes personas 2, 5, 6 and 7")
{
    const auto d = testkit::bundled_definitions();
    const auto& unfold = part_named(d.spec, "unfold_blank");
    const auto& manual = unfold.strategies.front();
    REQUIRE(manual.assistance_level == 0);

    for (const auto& p : d.personas) {
        const bool expected_ok = !(p.id == 2 || p.id == 5 || p.id == 6 || p.id == 7);
        CHECK_MESSAGE(strategy_accessible(p.profile, manual, d.spec.vocabulary) == expected_ok, "persona " << p.id);
        bool all_actions = true;
        for (const auto& a : manual.actions) all_actions = all_actions && can_perform(p.profile, a, d.spec.vocabulary);
        CHECK(all_actions == expected_ok);
    }
    const auto allowed = derive_allowlist(manual, d.personas, d.spec.vocabulary);
    CHECK(allowed == std::set<PersonaId>{1, 3, 4});
}

TEST_CASE("eligible_strategies")
{
    const auto vocab = default_vocabulary();

    SUBCASE("unimpaired persona sees all four flap folding strategies, manual first")
    {
        const auto d = testkit::bundled_definitions();
        const auto& part = part_named(d.spec, "fold_flaps_bottom");
        const auto list = eligible_strategies(part, 1, d.personas, d.spec.vocabulary);
        REQUIRE(list.size() == 4);
        CHECK(list.front()->assistance_level == 0);
        CHECK(classify(*list.front()) == StrategyKind::Manual);
        CHECK(classify(*list[2]) == StrategyKind::Collaborative);
        CHECK(classify(*list.back()) == StrategyKind::Automated);
    }

    SUBCASE("persona excluded everywhere else gets only the universal strategy")
    {
        auto automated = strategy("auto", 2, {robot("r", "g")});
        automated.allowlist_mode = AllowlistMode::Universal;
        const auto spec = single_part({strategy("m", 0, {human("a", {"grip"}, "g")}),
                                       strategy("c", 1, {human("b", {"grip", "reaching"}, "g")}), automated});
        const std::vector<Persona> ps = {persona(1, {}), persona(2, {"grip"})};
        const auto list = eligible_strategies(spec.part_processes[0], 2, ps, vocab);
        REQUIRE(list.size() == 1);
        CHECK(list[0]->id == "auto");
    }

    SUBCASE("levels 0 and 2 of 0,1,2,3-universal yield 0, 2, 3")
    {
        auto automated = strategy("auto", 3, {robot("r", "g")});
        automated.allowlist_mode = AllowlistMode::Universal;
        const auto spec = single_part({strategy("l0", 0, {human("a", {"grip"}, "g")}),
                                       strategy("l1", 1, {human("b", {"reaching"}, "g")}),
                                       strategy("l2", 2, {human("c", {"pressure"}, "g")}), automated});
        const std::vector<Persona> ps = {persona(1, {}), persona(5, {"reaching"})};
        const auto list = eligible_strategies(spec.part_processes[0], 5, ps, vocab);
        std::vector<unsigned> levels;
        for (const auto* s : list) levels.push_back(s->assistance_level);
        CHECK(levels == std::vector<unsigned>{0, 2, 3});
    }

    SUBCASE("unknown persona is a lookup error")
    {
        const auto spec = single_part({strategy("m", 0, {human("a", {}, "g")})});
        CHECK_THROWS_AS(eligible_strategies(spec.part_processes[0], 42, std::vector<Persona>{persona(1, {})}, vocab),
                        LookupError);
    }

    SUBCASE("output is an order-preserving subsequence, non-decreasing in level")
    {
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            const auto d = testkit::random_definitions(seed);
            for (const auto& part : d.spec.part_processes) {
                for (const auto& p : d.personas) {
                    const auto list = eligible_strategies(part, p.id, d.personas, d.spec.vocabulary);
                    std::size_t cursor = 0;
                    for (std::size_t k = 0; k < list.size(); ++k) {
                        while (cursor < part.strategies.size() && &part.strategies[cursor] != list[k]) ++cursor;
                        CHECK(cursor < part.strategies.size());
                        ++cursor;
                        if (k > 0) CHECK(list[k - 1]->assistance_level <= list[k]->assistance_level);
                    }
                }
            }
        }
    }
}

TEST_CASE("validate_process")
{
    const std::vector<Persona> ps = {persona(1, {}), persona(2, {"grip"})};

    SUBCASE("bundled definitions: one may-fail advisory on unfold, no errors")
    {
        const auto d = testkit::bundled_definitions();
        const auto diags = validate_process(d.spec, d.personas);
        CHECK_FALSE(has_errors(diags));
        REQUIRE(diags.size() == 1);
        CHECK(diags[0].severity == Severity::Warning);
        CHECK(diags[0].path == "part_processes/0/may_fail");
        CHECK(diags[0].message.find("unfold_blank") != std::string::npos);
    }

    SUBCASE("levels ordered 2, 1 is an ordering violation")
    {
        const auto spec = single_part({strategy("a", 2, {human("x", {}, "g")}), strategy("b", 1, {robot("y", "g")})});
        const auto diags = validate_process(spec, ps);
        CHECK(has_errors(diags));
        CHECK(std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) {
            return d.severity == Severity::Error && d.path.find("assistance_level") != std::string::npos;
        }));
    }

    SUBCASE("missing goal is a coverage violation")
    {
        const auto spec = single_part({strategy("a", 0, {robot("x", "g")})}, {"g", "h"});
        const auto diags = validate_process(spec, ps);
        CHECK(has_errors(diags));
        CHECK(has_message(diags, "'h'"));
    }

    SUBCASE("stranded persona without may_fail is an error")
    {
        const auto spec = single_part({strategy("a", 0, {human("x", {"grip"}, "g")})});
        CHECK(has_errors(validate_process(spec, ps)));
        auto flagged = spec;
        flagged.part_processes[0].may_fail = true;
        const auto diags = validate_process(flagged, ps);
        CHECK_FALSE(has_errors(diags));
        CHECK(diags.size() == 1);
    }

    SUBCASE("structural rules")
    {
        auto spec = single_part({strategy("a", 0, {robot("x", "g")})});
        CHECK(validate_process(spec, ps).empty());

        auto dup = spec;
        dup.part_processes.push_back(dup.part_processes[0]);
        CHECK(has_errors(validate_process(dup, ps)));

        auto no_strategies = spec;
        no_strategies.part_processes[0].strategies.clear();
        CHECK(has_errors(validate_process(no_strategies, ps)));

        auto unknown_cap = single_part({strategy("a", 0, {human("x", {"telekinesis"}, "g")})});
        CHECK(has_errors(validate_process(unknown_cap, ps)));

        auto bad_timeout = spec;
        bad_timeout.default_timeout = Duration{0};
        CHECK(has_errors(validate_process(bad_timeout, ps)));

        auto robot_with_caps = spec;
        robot_with_caps.part_processes[0].strategies[0].actions[0].companion = Companion{"h", "r"};
        CHECK(has_errors(validate_process(robot_with_caps, ps)));

        auto dup_action = single_part({strategy("a", 0, {robot("x", "g")}), strategy("b", 1, {robot("x", "g")})});
        CHECK(has_errors(validate_process(dup_action, ps)));
    }

    SUBCASE("idempotent and order-stable")
    {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            auto d = testkit::random_definitions(seed);
            // Perturb some specs so there is something to report.
            if (seed % 3 == 0 && !d.spec.part_processes.empty()) {
                auto& st = d.spec.part_processes[0].strategies;
                std::reverse(st.begin(), st.end());
            }
            if (seed % 5 == 0) d.spec.part_processes[0].goal_ids.push_back("missing_goal");
            const auto first = validate_process(d.spec, d.personas);
            const auto second = validate_process(d.spec, d.personas);
            CHECK(first == second);
        }
    }
}

TEST_CASE("validate_personas")
{
    const auto vocab = default_vocabulary();
    CHECK(validate_personas(std::vector<Persona>{persona(1, {}), persona(2, {"grip"})}, vocab).empty());
    CHECK(has_errors(validate_personas(std::vector<Persona>{persona(1, {}), persona(1, {"grip"})}, vocab)));
    CHECK(has_errors(validate_personas(std::vector<Persona>{persona(1, {"telekinesis"})}, vocab)));
    const auto all_impaired = validate_personas(std::vector<Persona>{persona(2, {"grip"})}, vocab);
    CHECK_FALSE(has_errors(all_impaired));
    CHECK(has_message(all_impaired, "no reference persona", Severity::Warning));
}

TEST_CASE("effective_timeout inherits the default")
{
    auto spec = single_part({strategy("a", 0, {robot("x", "g")})});
    spec.default_timeout = 12s;
    auto a = spec.part_processes[0].strategies[0].actions[0];
    CHECK(effective_timeout(a, spec) == 12s);
    a.timeout = 3s;
    CHECK(effective_timeout(a, spec) == 3s);
}

TEST_CASE("find_persona")
{
    const std::vector<Persona> ps = {persona(1, {}), persona(7, {"grip"})};
    CHECK(find_persona(ps, 7).profile.impaired.contains("grip"));
    CHECK_THROWS_AS(find_persona(ps, 3), LookupError);
}
