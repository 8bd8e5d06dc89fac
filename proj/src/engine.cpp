// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "gbt/engine.hpp"

#include <json.hpp>

#include <algorithm>
#include <sstream>

namespace gbt {

namespace {

NodeState::Activity activity_of(NodeStatus s)
{
    switch (s) {
        case NodeStatus::Success: return NodeState::Activity::Success;
        case NodeStatus::Failure: return NodeState::Activity::Failure;
        case NodeStatus::Running: return NodeState::Activity::Running;
    }
    return NodeState::Activity::Idle;
}

bool is_human_event(EventKind k)
{
    return k == EventKind::HumanAck || k == EventKind::HumanFail;
}

bool is_robot_event(EventKind k)
{
    return k == EventKind::RobotDone || k == EventKind::RobotFail;
}

class Fanout final : public EngineObserver {
public:
    Fanout(EngineObserver* a, EngineObserver* b) : a_(a), b_(b) {}
    void on_leaf_started(const TreeNode& leaf, TimePoint now) override
    {
        if (a_) a_->on_leaf_started(leaf, now);
        if (b_) b_->on_leaf_started(leaf, now);
    }
    void on_trace(const TraceEntry& e) override
    {
        if (a_) a_->on_trace(e);
        if (b_) b_->on_trace(e);
    }

private:
    EngineObserver* a_;
    EngineObserver* b_;
};

} // namespace

const char* to_string(NodeStatus s)
{
    switch (s) {
        case NodeStatus::Success: return "success";
        case NodeStatus::Failure: return "failure";
        case NodeStatus::Running: return "running";
    }
    return "?";
}

const char* to_string(EventKind k)
{
    switch (k) {
        case EventKind::HumanAck: return "human_ack";
        case EventKind::HumanFail: return "human_fail";
        case EventKind::RobotDone: return "robot_done";
        case EventKind::RobotFail: return "robot_fail";
        case EventKind::SetPersona: return "set_persona";
        case EventKind::Reset: return "reset";
    }
    return "?";
}

std::optional<EventKind> parse_event_kind(std::string_view s)
{
    for (auto k : {EventKind::HumanAck, EventKind::HumanFail, EventKind::RobotDone, EventKind::RobotFail,
                   EventKind::SetPersona, EventKind::Reset}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

std::string to_json_line(const TraceEntry& e)
{
    nlohmann::ordered_json j;
    j["time"] = e.time.count();
    j["node"] = e.node;
    j["kind"] = e.kind;
    j["detail"] = e.detail;
    return j.dump();
}

std::string to_jsonl(const EpisodeTrace& trace)
{
    std::string out;
    for (const auto& e : trace.entries) {
        out += to_json_line(e);
        out += '\n';
    }
    return out;
}

std::vector<EngineEvent> events_from_jsonl(std::string_view jsonl)
{
    std::vector<EngineEvent> out;
    std::istringstream in{std::string(jsonl)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || j.value("kind", "") != "event") continue;
        const auto detail = j.value("detail", "");
        EngineEvent ev;
        ev.time = TimePoint{j.value("time", std::int64_t{0})};
        ev.target = j.value("node", "");
        const auto colon = detail.find(':');
        const auto kind = parse_event_kind(detail.substr(0, colon));
        if (!kind) continue;
        ev.kind = *kind;
        if (ev.kind == EventKind::SetPersona && colon != std::string::npos) {
            ev.persona = std::stoll(detail.substr(colon + 1));
        }
        out.push_back(std::move(ev));
    }
    return out;
}

Blackboard reset(const Blackboard& bb)
{
    Blackboard fresh;
    fresh.active_persona = bb.active_persona;
    fresh.node_state.assign(bb.node_state.size(), NodeState{});
    return fresh;
}

// ---------------------------------------------------------------------------
// Engine

Engine::Engine(const BehaviorTree& tree, PersonaId persona) : tree_(&tree)
{
    bb_.active_persona = persona;
    bb_.node_state.assign(tree.size(), NodeState{});
    trace_.persona = persona;
}

void Engine::log(const std::string& node, std::string kind, std::string detail)
{
    trace_.entries.push_back({now_, node, std::move(kind), std::move(detail)});
    if (observer_) observer_->on_trace(trace_.entries.back());
}

NodeStatus Engine::start(TimePoint now)
{
    started_ = true;
    now_ = std::max(now_, now);
    return tick(now_);
}

void Engine::deliver(const EngineEvent& ev)
{
    now_ = std::max(now_, ev.time);
    std::string detail = to_string(ev.kind);
    if (ev.kind == EventKind::SetPersona) detail += ":" + std::to_string(ev.persona);
    log(ev.target, "event", detail);

    if (ev.kind == EventKind::SetPersona) {
        if (started_) {
            log(ev.target, "rejected", "persona switch mid-episode");
        } else {
            bb_.active_persona = ev.persona;
            trace_.persona = ev.persona;
            log("root", "persona", std::to_string(ev.persona));
        }
        return;
    }
    if (ev.kind == EventKind::Reset) {
        bb_ = reset(bb_);
        trace_.outcome.reset();
        trace_.strategies_used.clear();
        started_ = false;
        log("root", "reset");
        return;
    }

    if (finished()) {
        log(ev.target, "stale", "episode finished");
        return;
    }
    const auto idx = tree_->find(ev.target);
    if (!idx) {
        log(ev.target, "stale", "unknown node");
        return;
    }
    const auto& n = tree_->node(*idx);
    auto& st = bb_.node_state[*idx];
    const bool kind_ok = (n.kind == NodeKind::WaitForHuman && is_human_event(ev.kind)) ||
                         (n.kind == NodeKind::RobotAction && is_robot_event(ev.kind));
    if (!kind_ok) {
        log(ev.target, "stale", "event kind does not match node");
    } else if (st.activity != Activity::Running) {
        log(ev.target, "stale", "node not running");
    } else if (st.response != NodeState::Response::None) {
        log(ev.target, "stale", "response already pending");
    } else {
        const bool ok = ev.kind == EventKind::HumanAck || ev.kind == EventKind::RobotDone;
        st.response = ok ? NodeState::Response::Done : NodeState::Response::Failed;
    }
}

NodeStatus Engine::tick(TimePoint now)
{
    if (!started_) {
        started_ = true;
    }
    if (finished()) {
        return trace_.outcome->completed ? NodeStatus::Success : NodeStatus::Failure;
    }
    now_ = std::max(now_, now);
    const auto s = tick_node(0);
    if (s != NodeStatus::Running) {
        finish(s);
    }
    return s;
}

NodeStatus Engine::tick(TimePoint now, std::deque<EngineEvent>& inbox)
{
    while (!inbox.empty() && inbox.front().time <= now) {
        const auto ev = std::move(inbox.front());
        inbox.pop_front();
        deliver(ev);
        tick(ev.time);
    }
    return tick(now);
}

void Engine::note_status(NodeIndex i, NodeStatus s)
{
    auto& st = bb_.node_state[i];
    const auto a = activity_of(s);
    if (st.activity != a) {
        st.activity = a;
        log(tree_->node(i).id, "status", to_string(s));
    }
}

NodeStatus Engine::tick_children_in_sequence(NodeIndex i)
{
    const auto& n = tree_->node(i);
    auto& st = bb_.node_state[i];
    while (st.child < n.children.size()) {
        const auto cs = tick_node(n.children[st.child]);
        if (cs != NodeStatus::Success) return cs;
        ++st.child;
    }
    return NodeStatus::Success;
}

NodeStatus Engine::tick_selector(NodeIndex i)
{
    const auto& n = tree_->node(i);
    auto& st = bb_.node_state[i];
    while (st.child < n.children.size()) {
        const NodeIndex cond = n.children[st.child];
        const auto cs = tick_node(cond);
        if (cs != NodeStatus::Failure) return cs;
        ++st.child;

        const NodeIndex timeout = tree_->node(cond).children.front();
        if (!bb_.node_state[timeout].entered) {
            continue; // excluded by its persona condition, never entered
        }
        const auto& from = std::get<StrategyParams>(tree_->node(tree_->node(timeout).children.front()).params);
        std::string detail = "from=" + from.strategy_id;
        std::size_t k = st.child;
        for (; k < n.children.size(); ++k) {
            const auto& allow = std::get<ConditionParams>(tree_->node(n.children[k]).params).allowlist;
            if (allow.admits(bb_.active_persona)) break;
        }
        if (k < n.children.size()) {
            const auto& to = std::get<StrategyParams>(
                tree_->node(tree_->node(tree_->node(n.children[k]).children.front()).children.front()).params);
            detail += ",next=" + to.strategy_id + ",level=" + std::to_string(to.assistance_level);
        } else {
            detail += ",next=none";
        }
        log(n.id, "fallthrough", detail);
    }
    return NodeStatus::Failure;
}

NodeStatus Engine::tick_leaf(NodeIndex i)
{
    const auto& n = tree_->node(i);
    const auto& p = std::get<LeafParams>(n.params);
    auto& st = bb_.node_state[i];
    if (st.activity == Activity::Idle) {
        st.started = now_;
        st.response = NodeState::Response::None;
        st.cause = NodeState::Cause::None;
        log(n.id, n.kind == NodeKind::RobotAction ? "command" : "instruction", n.label);
        if (observer_) observer_->on_leaf_started(n, now_);
    }
    if (st.response == NodeState::Response::Done) {
        return NodeStatus::Success;
    }
    if (st.response == NodeState::Response::Failed) {
        st.cause = NodeState::Cause::Explicit;
        return NodeStatus::Failure;
    }
    if (now_ - st.started >= p.timeout) {
        st.cause = NodeState::Cause::Timeout;
        log(n.id, "timeout", "wait " + format_duration(p.timeout));
        return NodeStatus::Failure;
    }
    return NodeStatus::Running;
}

NodeStatus Engine::tick_node(NodeIndex i)
{
    const auto& n = tree_->node(i);
    auto& st = bb_.node_state[i];
    const bool fresh = st.activity == Activity::Idle;
    NodeStatus s = NodeStatus::Failure;

    switch (n.kind) {
        case NodeKind::RootSequence: s = tick_children_in_sequence(i); break;

        case NodeKind::StrategySequence:
            if (fresh) {
                const auto& sp = std::get<StrategyParams>(n.params);
                log(n.id, "enter", "level=" + std::to_string(sp.assistance_level));
                trace_.strategies_used[sp.part_process_id] = {sp.strategy_id, sp.assistance_level};
            }
            s = tick_children_in_sequence(i);
            break;

        case NodeKind::StrategySelector: s = tick_selector(i); break;

        case NodeKind::PersonaCondition: {
            const auto& allow = std::get<ConditionParams>(n.params).allowlist;
            s = allow.admits(bb_.active_persona) ? tick_node(n.children.front()) : NodeStatus::Failure;
            break;
        }

        case NodeKind::TimeoutDecorator: {
            if (fresh) {
                st.started = now_;
                st.entered = true;
            }
            s = tick_node(n.children.front());
            const auto budget = std::get<TimeoutParams>(n.params).budget;
            if (s == NodeStatus::Running && now_ - st.started >= budget) {
                log(n.id, "timeout", "budget " + format_duration(budget));
                halt_subtree(n.children.front());
                s = NodeStatus::Failure;
            }
            break;
        }

        case NodeKind::GoalGate: {
            const auto& g = std::get<GateParams>(n.params);
            if (fresh) {
                if (bb_.goal_flags.contains({g.part_process_id, g.goal_id})) {
                    st.skipped = true;
                    log(n.id, "skip", "goal_reached");
                } else if (!g.skip_if.empty() &&
                           std::all_of(g.skip_if.begin(), g.skip_if.end(),
                                       [&](const auto& f) { return bb_.world_flags.contains(f); })) {
                    st.skipped = true;
                    log(n.id, "skip", "skip_if");
                }
            }
            if (st.skipped) {
                s = NodeStatus::Success;
                break;
            }
            s = tick_node(n.children.front());
            if (s == NodeStatus::Success && g.completes_action) {
                if (bb_.goal_flags.insert({g.part_process_id, g.goal_id}).second) {
                    log(n.id, "goal", g.part_process_id + "/" + g.goal_id);
                }
                for (const auto& f : g.sets_flags) {
                    if (bb_.world_flags.insert(f).second) log(n.id, "flag", f);
                }
            }
            break;
        }

        case NodeKind::RetryDecorator: {
            const auto max = std::get<RetryParams>(n.params).max_attempts;
            const NodeIndex c = n.children.front();
            for (;;) {
                s = tick_node(c);
                if (s != NodeStatus::Failure || bb_.node_state[c].cause != NodeState::Cause::Explicit) break;
                if (++st.failures >= max) break;
                log(n.id, "retry", "attempt=" + std::to_string(st.failures + 1) + "/" + std::to_string(max));
                reset_subtree(c);
            }
            break;
        }

        case NodeKind::RobotAction:
        case NodeKind::WaitForHuman: s = tick_leaf(i); break;
    }

    note_status(i, s);
    return s;
}

void Engine::reset_subtree(NodeIndex i)
{
    bb_.node_state[i] = NodeState{};
    for (auto c : tree_->node(i).children) reset_subtree(c);
}

void Engine::halt_subtree(NodeIndex i)
{
    auto& st = bb_.node_state[i];
    if (st.activity != Activity::Running) return;
    for (auto c : tree_->node(i).children) halt_subtree(c);
    const auto& n = tree_->node(i);
    if (n.is_leaf()) log(n.id, "halt");
    note_status(i, NodeStatus::Failure);
}

void Engine::finish(NodeStatus root_status)
{
    Outcome o;
    o.completed = root_status == NodeStatus::Success;
    if (!o.completed) {
        const auto& root = tree_->root();
        const auto k = std::min(bb_.node_state[0].child, root.children.size() - 1);
        o.failed_part = std::get<SelectorParams>(tree_->node(root.children[k]).params).part_process_id;
    }
    trace_.outcome = o;
    log("root", "outcome", o.completed ? "completed" : "failed:" + o.failed_part);
}

void Engine::abort(std::string_view reason, TimePoint now)
{
    if (finished()) return;
    now_ = std::max(now_, now);
    log("root", "abort", std::string(reason));
    halt_subtree(0);
    finish(NodeStatus::Failure);
    trace_.outcome->note = std::string(reason);
}

std::vector<NodeIndex> Engine::running_chain() const
{
    std::vector<NodeIndex> chain;
    NodeIndex i = 0;
    for (;;) {
        if (bb_.node_state[i].activity != Activity::Running) break;
        chain.push_back(i);
        const auto& n = tree_->node(i);
        if (n.children.empty()) break;
        const bool indexed = n.kind == NodeKind::RootSequence || n.kind == NodeKind::StrategySequence ||
                             n.kind == NodeKind::StrategySelector;
        const auto k = indexed ? bb_.node_state[i].child : 0;
        if (k >= n.children.size()) break;
        i = n.children[k];
    }
    return chain;
}

std::optional<TimePoint> Engine::next_deadline() const
{
    if (finished()) return std::nullopt;
    std::optional<TimePoint> best;
    for (auto i : running_chain()) {
        const auto& n = tree_->node(i);
        std::optional<TimePoint> d;
        if (n.kind == NodeKind::TimeoutDecorator) {
            d = bb_.node_state[i].started + std::get<TimeoutParams>(n.params).budget;
        } else if (n.is_leaf()) {
            d = bb_.node_state[i].started + std::get<LeafParams>(n.params).timeout;
        }
        if (d && (!best || *d < *best)) best = d;
    }
    return best;
}

std::optional<NodeIndex> Engine::pending_instruction() const
{
    const auto chain = running_chain();
    if (!chain.empty() && tree_->node(chain.back()).kind == NodeKind::WaitForHuman) return chain.back();
    return std::nullopt;
}

std::optional<NodeIndex> Engine::current_strategy() const
{
    for (auto i : running_chain()) {
        if (tree_->node(i).kind == NodeKind::StrategySequence) return i;
    }
    return std::nullopt;
}

std::optional<NodeIndex> Engine::current_part() const
{
    for (auto i : running_chain()) {
        if (tree_->node(i).kind == NodeKind::StrategySelector) return i;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Clocks and sources

TimePoint WallClock::now() const
{
    return std::chrono::duration_cast<TimePoint>(std::chrono::steady_clock::now() - origin_);
}

void ScheduledEventSource::schedule(EngineEvent event)
{
    agenda_.push({std::move(event), seq_++});
}

Wakeup ScheduledEventSource::wait_next(std::optional<TimePoint> deadline)
{
    if (!agenda_.empty() && (!deadline || agenda_.top().event.time <= *deadline)) {
        Wakeup w{Wakeup::Kind::Event, agenda_.top().event};
        agenda_.pop();
        clock_.advance_to(w.event.time);
        return w;
    }
    if (deadline) {
        clock_.advance_to(*deadline);
        return {Wakeup::Kind::Deadline, {}};
    }
    return {Wakeup::Kind::Exhausted, {}};
}

std::optional<EngineEvent> EventInbox::post(EngineEvent event)
{
    {
        std::lock_guard lk(mutex_);
        if (closed_) return std::nullopt;
        event.time = std::max(clock_.now(), floor_);
        queue_.push_back(event);
    }
    cv_.notify_all();
    return event;
}

void EventInbox::close()
{
    {
        std::lock_guard lk(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool EventInbox::closed() const
{
    std::lock_guard lk(mutex_);
    return closed_;
}

void RealtimeEventSource::schedule(EngineEvent event)
{
    {
        std::lock_guard lk(inbox_.mutex_);
        scheduled_.push({std::move(event), seq_++});
    }
    inbox_.cv_.notify_all();
}

Wakeup RealtimeEventSource::wait_next(std::optional<TimePoint> deadline)
{
    std::unique_lock lk(inbox_.mutex_);
    for (;;) {
        const auto now = clock_.now();
        // Earliest due event: scheduled ones once their time has come, inbox
        // ones immediately (they are stamped on arrival). Ties favour the
        // scheduled event, matching agenda order on replay.
        const EngineEvent* pick = nullptr;
        bool from_schedule = false;
        if (!scheduled_.empty() && scheduled_.top().event.time <= now) {
            pick = &scheduled_.top().event;
            from_schedule = true;
        }
        if (!inbox_.queue_.empty() && (!pick || inbox_.queue_.front().time < pick->time)) {
            pick = &inbox_.queue_.front();
            from_schedule = false;
        }
        if (pick && (!deadline || pick->time <= *deadline)) {
            Wakeup w{Wakeup::Kind::Event, *pick};
            if (from_schedule) {
                scheduled_.pop();
            } else {
                inbox_.queue_.pop_front();
            }
            return w;
        }
        if (deadline && *deadline <= now) {
            inbox_.floor_ = std::max(inbox_.floor_, *deadline + Duration{1});
            return {Wakeup::Kind::Deadline, {}};
        }
        if (inbox_.closed_) {
            return {Wakeup::Kind::Exhausted, {}};
        }
        std::optional<TimePoint> wake = deadline;
        if (!scheduled_.empty() && (!wake || scheduled_.top().event.time < *wake)) {
            wake = scheduled_.top().event.time;
        }
        if (wake) {
            inbox_.cv_.wait_until(lk, clock_.to_steady(*wake));
        } else {
            inbox_.cv_.wait(lk);
        }
    }
}

EpisodeTrace run_episode(const BehaviorTree& tree, PersonaId persona, EventSource& source, const Clock& clock,
                         EngineObserver* extra_observer)
{
    Engine engine(tree, persona);
    Fanout fan(&source, extra_observer);
    engine.set_observer(&fan);
    engine.start(clock.now());
    while (!engine.finished()) {
        const auto deadline = engine.next_deadline();
        const auto w = source.wait_next(deadline);
        switch (w.kind) {
            case Wakeup::Kind::Event:
                engine.deliver(w.event);
                engine.tick(std::max(w.event.time, engine.last_tick()));
                break;
            case Wakeup::Kind::Deadline: engine.tick(*deadline); break;
            case Wakeup::Kind::Exhausted: engine.abort("operator disconnected", clock.now()); break;
        }
    }
    return engine.trace();
}

Duration episode_time_bound(const BehaviorTree& tree)
{
    Duration total{0};
    for (const auto& n : tree.nodes()) {
        if (n.kind != NodeKind::RetryDecorator) continue;
        const auto& leaf = tree.node(n.children.front());
        total += std::get<LeafParams>(leaf.params).timeout *
                 static_cast<Duration::rep>(std::get<RetryParams>(n.params).max_attempts);
    }
    return total;
}

} // namespace gbt
