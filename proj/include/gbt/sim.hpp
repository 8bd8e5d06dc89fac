// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gbt/engine.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace gbt {

/// Counter-based generator: draw k of stream `seed` is a pure function of
/// (seed, k).
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double next_unit();
    /// Uniform in [lo, hi], inclusive.
    std::int64_t next_int(std::int64_t lo, std::int64_t hi);
    bool bernoulli(double p) { return p > 0.0 && next_unit() < p; }

    [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Constant when min == max, otherwise uniform over [min, max] in ms.
struct Latency {
    Duration min{2000};
    Duration max{2000};

    static Latency constant(Duration d) { return {d, d}; }
    static Latency uniform(Duration lo, Duration hi) { return {lo, hi}; }
    bool operator==(const Latency&) const = default;
};

struct HumanPolicy {
    enum class Mode { Responsive, Silent, Faulty, Scripted };
    enum class Response { Ack, Fail, Silent };

    struct Step {
        std::string action_id;
        Response response = Response::Ack;
        bool operator==(const Step&) const = default;
    };

    Mode mode = Mode::Responsive;
    Latency ack_latency;
    double fail_probability = 0.0;
    /// Scripted mode: each human instruction consumes the first unused step
    /// naming its action; instructions without a step are answered as in
    /// responsive mode.
    std::vector<Step> script;
    bool respects_capabilities = true;

    /// Mode name, with the fail probability appended for faulty policies.
    [[nodiscard]] std::string label() const;

    static HumanPolicy responsive() { return {}; }
    static HumanPolicy silent()
    {
        HumanPolicy h;
        h.mode = Mode::Silent;
        return h;
    }
    static HumanPolicy faulty(double p)
    {
        HumanPolicy h;
        h.mode = Mode::Faulty;
        h.fail_probability = p;
        return h;
    }

    bool operator==(const HumanPolicy&) const = default;
};

const char* to_string(HumanPolicy::Mode m);
std::optional<HumanPolicy::Mode> parse_policy_mode(std::string_view s);

struct RobotModel {
    double duration_scale = 1.0;
    double fail_probability = 0.0;
    bool operator==(const RobotModel&) const = default;
};

/// Throws ValidationError when a probability is outside [0,1], the latency
/// range is inverted or negative, the duration scale is not positive, or a
/// script step names an action absent from `spec`.
void validate_agents(const HumanPolicy& policy, const RobotModel& robot, const ProcessSpec& spec);

/// Simulated worker and robot on a discrete-event clock. Reacts to leaf
/// starts by scheduling the matching response.
class SimulatedWorkcell final : public EventSource {
public:
    SimulatedWorkcell(const ProcessSpec& spec, const Persona& persona, HumanPolicy policy, RobotModel robot,
                      std::uint64_t seed);

    void on_leaf_started(const TreeNode& leaf, TimePoint now) override;
    Wakeup wait_next(std::optional<TimePoint> deadline) override { return agenda_.wait_next(deadline); }

    [[nodiscard]] const SimulatedClock& clock() const noexcept { return clock_; }

private:
    HumanPolicy::Response human_response(const ActionSpec& action);

    const ProcessSpec& spec_;
    Persona persona_;
    HumanPolicy policy_;
    RobotModel robot_;
    CounterRng rng_;
    std::vector<bool> script_used_;
    SimulatedClock clock_;
    ScheduledEventSource agenda_{clock_};
};

/// Compiles `spec` and runs one simulated episode.
EpisodeTrace simulate(const ProcessSpec& spec, std::span<const Persona> personas, PersonaId persona_id,
                      const HumanPolicy& policy, const RobotModel& robot, std::uint64_t seed);

/// Same, reusing an already compiled tree of `spec`.
EpisodeTrace simulate(const BehaviorTree& tree, const ProcessSpec& spec, std::span<const Persona> personas,
                      PersonaId persona_id, const HumanPolicy& policy, const RobotModel& robot, std::uint64_t seed);

struct EpisodeStats {
    PersonaId persona_id = 0;
    std::string policy;
    std::uint64_t seed = 0;
    Outcome outcome;
    Duration makespan{0};
    std::map<std::string, unsigned> levels; ///< part process id -> level used
    unsigned max_level = 0;
    unsigned timeouts = 0;
    unsigned retries = 0;
    unsigned fallthroughs = 0;

    bool operator==(const EpisodeStats&) const = default;
};

/// Throws ValidationError for a trace without an outcome.
EpisodeStats summarize(const EpisodeTrace& trace);

/// One row per (persona, policy, seed), personas in input order, then
/// policies, then seeds. Jobs run on up to `threads` workers (0: hardware
/// concurrency). Throws ValidationError for an empty policy grid.
std::vector<EpisodeStats> sweep(const ProcessSpec& spec, std::span<const Persona> personas,
                                std::span<const HumanPolicy> policies, std::span<const std::uint64_t> seeds,
                                const RobotModel& robot = {}, unsigned threads = 0);

inline constexpr const char* kStatsCsvHeader =
    "persona_id,policy,seed,outcome,makespan_ms,max_level,timeouts,retries,fallthroughs";

std::string outcome_text(const Outcome& o);
std::string to_csv_row(const EpisodeStats& s);
/// Header line plus one line per row.
std::string to_csv(std::span<const EpisodeStats> rows);

} // namespace gbt
