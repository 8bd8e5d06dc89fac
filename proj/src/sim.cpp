// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "gbt/sim.hpp"

#include "gbt/diagnostic.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

namespace gbt {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t CounterRng::next_u64()
{
    return splitmix64(splitmix64(seed_) ^ (counter_++ * 0xd1b54a32d192ed03ULL));
}

double CounterRng::next_unit()
{
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::int64_t CounterRng::next_int(std::int64_t lo, std::int64_t hi)
{
    if (hi <= lo) return lo;
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
}

const char* to_string(HumanPolicy::Mode m)
{
    switch (m) {
        case HumanPolicy::Mode::Responsive: return "responsive";
        case HumanPolicy::Mode::Silent: return "silent";
        case HumanPolicy::Mode::Faulty: return "faulty";
        case HumanPolicy::Mode::Scripted: return "scripted";
    }
    return "?";
}

std::optional<HumanPolicy::Mode> parse_policy_mode(std::string_view s)
{
    for (auto m : {HumanPolicy::Mode::Responsive, HumanPolicy::Mode::Silent, HumanPolicy::Mode::Faulty,
                   HumanPolicy::Mode::Scripted}) {
        if (s == to_string(m)) return m;
    }
    return std::nullopt;
}

std::string HumanPolicy::label() const
{
    std::string out = to_string(mode);
    if (mode == Mode::Faulty) {
        std::ostringstream p;
        p << fail_probability;
        out += ":" + p.str();
    }
    return out;
}

void validate_agents(const HumanPolicy& policy, const RobotModel& robot, const ProcessSpec& spec)
{
    const auto unit = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!unit(policy.fail_probability)) throw ValidationError("human fail_probability must lie in [0,1]");
    if (!unit(robot.fail_probability)) throw ValidationError("robot fail_probability must lie in [0,1]");
    if (!(robot.duration_scale > 0.0) || !std::isfinite(robot.duration_scale)) {
        throw ValidationError("robot duration_scale must be positive");
    }
    if (policy.ack_latency.min < Duration{0} || policy.ack_latency.max < policy.ack_latency.min) {
        throw ValidationError("ack latency range must satisfy 0 <= min <= max");
    }
    for (const auto& step : policy.script) {
        bool found = false;
        for (const auto& part : spec.part_processes) {
            for (const auto& s : part.strategies) {
                for (const auto& a : s.actions) found = found || a.id == step.action_id;
            }
        }
        if (!found) throw ValidationError("script step names unknown action '" + step.action_id + "'");
    }
}

SimulatedWorkcell::SimulatedWorkcell(const ProcessSpec& spec, const Persona& persona, HumanPolicy policy,
                                     RobotModel robot, std::uint64_t seed)
    : spec_(spec), persona_(persona), policy_(std::move(policy)), robot_(robot), rng_(seed),
      script_used_(policy_.script.size(), false)
{
}

HumanPolicy::Response SimulatedWorkcell::human_response(const ActionSpec& action)
{
    using R = HumanPolicy::Response;
    if (policy_.mode == HumanPolicy::Mode::Silent) return R::Silent;
    if (policy_.respects_capabilities && !can_perform(persona_.profile, action, spec_.vocabulary)) return R::Silent;
    if (policy_.mode == HumanPolicy::Mode::Scripted) {
        for (std::size_t i = 0; i < policy_.script.size(); ++i) {
            if (!script_used_[i] && policy_.script[i].action_id == action.id) {
                script_used_[i] = true;
                return policy_.script[i].response;
            }
        }
        return R::Ack;
    }
    if (policy_.mode == HumanPolicy::Mode::Faulty && rng_.bernoulli(policy_.fail_probability)) return R::Fail;
    return R::Ack;
}

void SimulatedWorkcell::on_leaf_started(const TreeNode& leaf, TimePoint now)
{
    const auto& p = std::get<LeafParams>(leaf.params);
    const auto& action = spec_.part_processes.at(p.action.part).strategies.at(p.action.strategy).actions.at(p.action.action);
    EngineEvent ev;
    ev.target = leaf.id;
    if (leaf.kind == NodeKind::RobotAction) {
        const auto scaled = std::llround(static_cast<double>(p.nominal_duration.count()) * robot_.duration_scale);
        ev.time = now + Duration{scaled};
        ev.kind = rng_.bernoulli(robot_.fail_probability) ? EventKind::RobotFail : EventKind::RobotDone;
        agenda_.schedule(ev);
        return;
    }
    const auto r = human_response(action);
    if (r == HumanPolicy::Response::Silent) return;
    ev.time = now + Duration{rng_.next_int(policy_.ack_latency.min.count(), policy_.ack_latency.max.count())};
    ev.kind = r == HumanPolicy::Response::Ack ? EventKind::HumanAck : EventKind::HumanFail;
    agenda_.schedule(ev);
}

EpisodeTrace simulate(const BehaviorTree& tree, const ProcessSpec& spec, std::span<const Persona> personas,
                      PersonaId persona_id, const HumanPolicy& policy, const RobotModel& robot, std::uint64_t seed)
{
    validate_agents(policy, robot, spec);
    const auto& persona = find_persona(personas, persona_id);
    SimulatedWorkcell cell(spec, persona, policy, robot, seed);
    return run_episode(tree, persona_id, cell, cell.clock());
}

EpisodeTrace simulate(const ProcessSpec& spec, std::span<const Persona> personas, PersonaId persona_id,
                      const HumanPolicy& policy, const RobotModel& robot, std::uint64_t seed)
{
    const auto tree = compile(spec, personas);
    return simulate(tree, spec, personas, persona_id, policy, robot, seed);
}

EpisodeStats summarize(const EpisodeTrace& trace)
{
    if (!trace.outcome) throw ValidationError("trace is incomplete: no outcome");
    EpisodeStats s;
    s.persona_id = trace.persona;
    s.outcome = *trace.outcome;
    if (!trace.entries.empty()) s.makespan = trace.entries.back().time - trace.entries.front().time;
    for (const auto& [part, use] : trace.strategies_used) {
        s.levels[part] = use.assistance_level;
        s.max_level = std::max(s.max_level, use.assistance_level);
    }
    for (const auto& e : trace.entries) {
        if (e.kind == "timeout") ++s.timeouts;
        if (e.kind == "retry") ++s.retries;
        if (e.kind == "fallthrough" && e.detail.find("next=none") == std::string::npos) ++s.fallthroughs;
    }
    return s;
}

std::vector<EpisodeStats> sweep(const ProcessSpec& spec, std::span<const Persona> personas,
                                std::span<const HumanPolicy> policies, std::span<const std::uint64_t> seeds,
                                const RobotModel& robot, unsigned threads)
{
    if (policies.empty()) throw ValidationError("sweep needs at least one policy");
    for (const auto& p : policies) validate_agents(p, robot, spec);
    const auto tree = compile(spec, personas);

    struct Job {
        PersonaId persona;
        const HumanPolicy* policy;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const auto& persona : personas) {
        for (const auto& policy : policies) {
            for (auto seed : seeds) jobs.push_back({persona.id, &policy, seed});
        }
    }
    std::vector<EpisodeStats> rows(jobs.size());

    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
            const auto& j = jobs[i];
            auto st = summarize(simulate(tree, spec, personas, j.persona, *j.policy, robot, j.seed));
            st.policy = j.policy->label();
            st.seed = j.seed;
            rows[i] = std::move(st);
        }
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(jobs.size(), 1)));
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
        work();
    }
    return rows;
}

std::string outcome_text(const Outcome& o)
{
    return o.completed ? "completed" : "failed:" + o.failed_part;
}

std::string to_csv_row(const EpisodeStats& s)
{
    std::ostringstream out;
    out << s.persona_id << ',' << s.policy << ',' << s.seed << ',' << outcome_text(s.outcome) << ','
        << s.makespan.count() << ',' << s.max_level << ',' << s.timeouts << ',' << s.retries << ',' << s.fallthroughs;
    return out.str();
}

std::string to_csv(std::span<const EpisodeStats> rows)
{
    std::string out = kStatsCsvHeader;
    out += '\n';
    for (const auto& r : rows) out += to_csv_row(r) + '\n';
    return out;
}

} // namespace gbt
