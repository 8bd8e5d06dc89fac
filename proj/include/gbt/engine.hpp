// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gbt/tree.hpp"

#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gbt {

enum class NodeStatus { Success, Failure, Running };

const char* to_string(NodeStatus s);

enum class EventKind { HumanAck, HumanFail, RobotDone, RobotFail, SetPersona, Reset };

const char* to_string(EventKind k);
std::optional<EventKind> parse_event_kind(std::string_view s);

struct EngineEvent {
    EventKind kind = EventKind::HumanAck;
    std::string target; ///< leaf node id for the four action kinds
    TimePoint time{0};
    PersonaId persona = 0; ///< SetPersona only

    bool operator==(const EngineEvent&) const = default;
};

struct TraceEntry {
    TimePoint time{0};
    std::string node;
    std::string kind;
    std::string detail;

    bool operator==(const TraceEntry&) const = default;
};

struct Outcome {
    bool completed = false;
    std::string failed_part; ///< empty when completed
    std::string note;        ///< e.g. "operator disconnected"

    bool operator==(const Outcome&) const = default;
};

struct StrategyUse {
    std::string strategy_id;
    unsigned assistance_level = 0;

    bool operator==(const StrategyUse&) const = default;
};

/// Log of one episode. Entry kinds:
///   status       node status transition (detail: running|success|failure)
///   event        an inbound event (detail: event kind)
///   stale        an event that matched no running leaf
///   enter        a strategy sequence was entered (detail: level=N)
///   command      robot command issued
///   instruction  instruction shown to the human
///   skip         goal gate skipped its action (detail: goal_reached|skip_if)
///   goal, flag   blackboard goal flag / world flag set
///   retry        explicit failure retried (detail: attempt=K/N)
///   timeout      leaf wait or strategy budget elapsed
///   halt         running leaf abandoned by an enclosing timeout
///   fallthrough  strategy failed; selector moves on (detail: from=..,next=..,level=..)
///   persona, reset, rejected, abort, outcome
struct EpisodeTrace {
    PersonaId persona = 0;
    std::vector<TraceEntry> entries;
    std::optional<Outcome> outcome;
    /// Last strategy entered per part process.
    std::map<std::string, StrategyUse> strategies_used;

    bool operator==(const EpisodeTrace&) const = default;
};

/// One JSON object per line: {"time","node","kind","detail"}.
std::string to_jsonl(const EpisodeTrace& trace);
std::string to_json_line(const TraceEntry& entry);

/// Recovers the inbound events ("event" lines) of a JSONL trace, in order.
std::vector<EngineEvent> events_from_jsonl(std::string_view jsonl);

/// Per-node runtime memory.
struct NodeState {
    enum class Activity { Idle, Running, Success, Failure };
    enum class Response { None, Done, Failed };
    enum class Cause { None, Explicit, Timeout };

    Activity activity = Activity::Idle;
    std::size_t child = 0;  ///< sequences and selectors: current child
    unsigned failures = 0;  ///< retry decorators: explicit failures so far
    TimePoint started{0};   ///< timeouts and leaves: entry time
    Response response = Response::None;
    Cause cause = Cause::None;
    bool skipped = false;   ///< goal gates
    bool entered = false;   ///< timeout decorators: child ticked at least once

    bool operator==(const NodeState&) const = default;
};

using GoalFlag = std::pair<std::string, std::string>; ///< (part process id, goal id)

struct Blackboard {
    PersonaId active_persona = 0;
    std::set<GoalFlag> goal_flags;
    std::set<std::string> world_flags;
    std::vector<NodeState> node_state;

    bool operator==(const Blackboard&) const = default;
};

/// Goal flags, world flags and node memory cleared; persona retained.
Blackboard reset(const Blackboard& bb);

/// Hooks for agents that react to the engine (simulated workers, the robot
/// stub, the service's event stream).
class EngineObserver {
public:
    virtual ~EngineObserver() = default;
    virtual void on_leaf_started(const TreeNode& /*leaf*/, TimePoint /*now*/) {}
    virtual void on_trace(const TraceEntry& /*entry*/) {}
};

/// Executes a compiled tree. Single-threaded: all mutation happens through
/// deliver/tick/start/abort on the caller's thread.
class Engine {
public:
    Engine(const BehaviorTree& tree, PersonaId persona);

    void set_observer(EngineObserver* observer) noexcept { observer_ = observer; }

    /// First tick of the episode.
    NodeStatus start(TimePoint now);

    /// Applies one inbound event to the blackboard. Events that match no
    /// running leaf are logged as stale and otherwise ignored.
    void deliver(const EngineEvent& event);

    /// Ticks the root once at `now`.
    NodeStatus tick(TimePoint now);

    /// Delivers every inbox event stamped at or before `now`, ticking after
    /// each one, then ticks once more at `now`.
    NodeStatus tick(TimePoint now, std::deque<EngineEvent>& inbox);

    /// Earliest timer among the running chain (leaf wait, strategy budget).
    [[nodiscard]] std::optional<TimePoint> next_deadline() const;

    /// Ends an unfinished episode as failed at the current part process.
    void abort(std::string_view reason, TimePoint now);

    [[nodiscard]] bool started() const noexcept { return started_; }
    [[nodiscard]] bool finished() const noexcept { return trace_.outcome.has_value(); }
    [[nodiscard]] const Blackboard& blackboard() const noexcept { return bb_; }
    [[nodiscard]] const EpisodeTrace& trace() const noexcept { return trace_; }
    [[nodiscard]] const BehaviorTree& tree() const noexcept { return *tree_; }
    [[nodiscard]] TimePoint last_tick() const noexcept { return now_; }

    /// The WaitForHuman leaf currently shown, if any.
    [[nodiscard]] std::optional<NodeIndex> pending_instruction() const;
    /// The StrategySequence currently running, if any.
    [[nodiscard]] std::optional<NodeIndex> current_strategy() const;
    /// The StrategySelector currently running, if any.
    [[nodiscard]] std::optional<NodeIndex> current_part() const;

private:
    using Activity = NodeState::Activity;

    NodeStatus tick_node(NodeIndex i);
    NodeStatus tick_children_in_sequence(NodeIndex i);
    NodeStatus tick_selector(NodeIndex i);
    NodeStatus tick_leaf(NodeIndex i);
    void note_status(NodeIndex i, NodeStatus s);
    void reset_subtree(NodeIndex i);
    void halt_subtree(NodeIndex i);
    void finish(NodeStatus root_status);
    void log(const std::string& node, std::string kind, std::string detail = {});
    std::vector<NodeIndex> running_chain() const;

    const BehaviorTree* tree_;
    EngineObserver* observer_ = nullptr;
    Blackboard bb_;
    EpisodeTrace trace_;
    TimePoint now_{0};
    bool started_ = false;
};

// ---------------------------------------------------------------------------
// Clocks and event sources

class Clock {
public:
    virtual ~Clock() = default;
    [[nodiscard]] virtual TimePoint now() const = 0;
};

/// Discrete-event clock: jumps straight to the next event or deadline.
class SimulatedClock final : public Clock {
public:
    explicit SimulatedClock(TimePoint start = TimePoint{0}) : now_(start) {}
    [[nodiscard]] TimePoint now() const override { return now_; }
    void advance_to(TimePoint t) { now_ = std::max(now_, t); }

private:
    TimePoint now_;
};

/// Milliseconds since construction on the steady clock.
class WallClock final : public Clock {
public:
    WallClock() : origin_(std::chrono::steady_clock::now()) {}
    [[nodiscard]] TimePoint now() const override;
    [[nodiscard]] std::chrono::steady_clock::time_point to_steady(TimePoint t) const { return origin_ + t; }

private:
    std::chrono::steady_clock::time_point origin_;
};

/// What the run loop should do next.
struct Wakeup {
    enum class Kind { Event, Deadline, Exhausted } kind = Kind::Exhausted;
    EngineEvent event;
};

class EventSource : public EngineObserver {
public:
    /// Blocks (or, when simulated, advances the clock) until the next event
    /// stamped at or before `deadline`, or until the deadline. Events tied with
    /// the deadline come first.
    virtual Wakeup wait_next(std::optional<TimePoint> deadline) = 0;
};

/// Time-ordered agenda on a simulated clock. Ties keep scheduling order.
class ScheduledEventSource : public EventSource {
public:
    explicit ScheduledEventSource(SimulatedClock& clock) : clock_(clock) {}

    void schedule(EngineEvent event);
    [[nodiscard]] bool empty() const noexcept { return agenda_.empty(); }
    [[nodiscard]] SimulatedClock& clock() noexcept { return clock_; }

    Wakeup wait_next(std::optional<TimePoint> deadline) override;

private:
    struct Item {
        EngineEvent event;
        std::uint64_t seq;
        bool operator>(const Item& o) const
        {
            return event.time != o.event.time ? event.time > o.event.time : seq > o.seq;
        }
    };
    SimulatedClock& clock_;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> agenda_;
    std::uint64_t seq_ = 0;
};

/// Thread-safe inbox fed by request handlers. Events are stamped with the
/// wall clock under the lock, so stamps never decrease.
class EventInbox {
public:
    explicit EventInbox(const WallClock& clock) : clock_(clock) {}

    /// Returns the stamped event, or nullopt once closed.
    std::optional<EngineEvent> post(EngineEvent event);
    void close();
    [[nodiscard]] bool closed() const;

private:
    friend class RealtimeEventSource;
    const WallClock& clock_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<EngineEvent> queue_;
    TimePoint floor_{0}; ///< stamps stay after the last deadline handed out
    bool closed_ = false;
};

/// Wall-clock source: merges inbox events with self-scheduled ones (the
/// robot stub) and sleeps until the earliest of those or the deadline.
/// Deadlines are reported at their nominal time, which is what makes a
/// recorded session replayable on the simulated clock.
class RealtimeEventSource : public EventSource {
public:
    RealtimeEventSource(EventInbox& inbox, const WallClock& clock) : inbox_(inbox), clock_(clock) {}

    /// Internal event delivered once the wall clock reaches its time.
    void schedule(EngineEvent event);

    Wakeup wait_next(std::optional<TimePoint> deadline) override;

private:
    struct Item {
        EngineEvent event;
        std::uint64_t seq;
        bool operator>(const Item& o) const
        {
            return event.time != o.event.time ? event.time > o.event.time : seq > o.seq;
        }
    };
    EventInbox& inbox_;
    const WallClock& clock_;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> scheduled_; // guarded by inbox_.mutex_
    std::uint64_t seq_ = 0;
};

/// Ticks until the root finishes: start at clock.now(), then alternate
/// wait_next/deliver/tick. A source that runs dry before the end aborts the
/// episode with "operator disconnected".
EpisodeTrace run_episode(const BehaviorTree& tree, PersonaId persona, EventSource& source, const Clock& clock,
                         EngineObserver* extra_observer = nullptr);

/// Analytic bound on episode length: sum over all leaves of timeout times
/// max attempts.
Duration episode_time_bound(const BehaviorTree& tree);

} // namespace gbt
