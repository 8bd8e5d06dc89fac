// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gbt/engine.hpp"
#include "gbt/spec_io.hpp"

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace gbt {

/// One frame on the event stream: a trace line plus its sequence number.
/// Fall-through frames additionally carry a `notice` object
/// {part_process_id, from, next, level}.
struct StreamFrame {
    std::uint64_t seq = 0;
    std::string session_id;
    TraceEntry entry;

    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

/// Bounded per-subscriber queue. A full queue drops its oldest frame and
/// counts the loss; the count is reported once with the next batch.
class Subscription {
public:
    explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

    struct Batch {
        std::vector<StreamFrame> frames;
        std::uint64_t dropped = 0;
        bool closed = false;
    };

    void push(const StreamFrame& frame);
    void close();
    /// Waits up to `timeout` for frames, then takes everything queued.
    Batch take(std::chrono::milliseconds timeout);

private:
    std::size_t capacity_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<StreamFrame> queue_;
    std::uint64_t dropped_ = 0;
    bool closed_ = false;
};

/// Published view of the running session. Folded from stream frames under
/// the same lock that assigns their sequence numbers, so a snapshot always
/// matches the last frame sent.
struct SessionState {
    enum class Phase { Idle, Running, Completed, Failed };

    struct Instruction {
        std::string node_id;
        std::string action_id;
        std::string label;
        bool operator==(const Instruction&) const = default;
    };

    std::string session_id;
    std::string spec_digest;
    PersonaId active_persona = 0;
    Phase phase = Phase::Idle;
    std::optional<Instruction> instruction;
    std::string part_process_id;
    std::string strategy_id;
    std::optional<unsigned> level;
    std::map<std::string, unsigned> levels; ///< last level entered per part process
    std::string note;
    std::uint64_t last_seq = 0;
    std::deque<StreamFrame> recent; ///< last kRecentEvents frames

    static constexpr std::size_t kRecentEvents = 100;

    /// Applies one frame. `tree` resolves node ids to strategies and actions.
    void apply(const StreamFrame& frame, const BehaviorTree& tree);

    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

const char* to_string(SessionState::Phase p);

struct ServiceOptions {
    std::size_t subscriber_capacity = 256;
    /// Scale applied to nominal robot durations by the robot stub.
    double robot_duration_scale = 1.0;
    std::chrono::milliseconds keepalive{1000};
};

/// Single-session orchestration service. Request handlers turn into inbox
/// events; one executor thread owns the engine.
///
///   POST   /session  {persona_id}        -> 201 {session_id}
///   DELETE /session                      -> 200 final state
///   GET    /state                        -> SessionState
///   GET    /tree | /personas | /process  -> loaded definitions
///   GET    /trace                        -> JSONL of the current session
///   POST   /event {kind, action_id?}     -> 202
///   GET    /events                       -> text/event-stream of frames
class Service {
public:
    Service(LoadedDefinitions defs, ServiceOptions options = {});
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds the listening socket. Port 0 picks a free port. Returns the bound
    /// port, or nullopt on failure.
    std::optional<int> bind(const std::string& host, int port);
    /// Serves until stop(). Requires a successful bind().
    void listen();
    /// listen() on a background thread.
    void start();
    void stop();

    // Operations behind the HTTP routes; also usable in-process.
    struct Reply {
        int status = 200;
        std::string body;
        std::string content_type = "application/json";
    };
    Reply create_session(const std::string& body);
    Reply end_session();
    Reply post_event(const std::string& body);
    Reply state() const;
    Reply trace() const;

    [[nodiscard]] SessionState snapshot() const;
    std::shared_ptr<Subscription> subscribe();
    void unsubscribe(const std::shared_ptr<Subscription>& sub);
    /// Blocks until the current session's episode has finished or `timeout`
    /// elapses. Returns true if finished.
    bool wait_finished(std::chrono::milliseconds timeout) const;

    [[nodiscard]] const BehaviorTree& tree() const noexcept { return tree_; }

private:
    struct Session;
    class Observer;

    void publish(const std::string& session_id, const TraceEntry& entry);
    void close_session();
    void install_routes();

    LoadedDefinitions defs_;
    ServiceOptions options_;
    BehaviorTree tree_;
    std::string tree_json_;
    std::string personas_text_;
    std::string process_text_;

    std::unique_ptr<httplib::Server> server_;
    std::thread listener_;

    std::mutex session_mutex_; // serializes session lifecycle requests
    std::unique_ptr<Session> session_;
    std::uint64_t session_counter_ = 0;

    mutable std::mutex state_mutex_;
    mutable std::condition_variable state_cv_;
    SessionState state_;
    std::vector<TraceEntry> entries_;
    std::vector<std::shared_ptr<Subscription>> subscribers_;
    std::uint64_t seq_ = 0;
};

/// Splits "host:port". Throws ValidationError on malformed input.
std::pair<std::string, int> parse_bind_address(const std::string& text);

} // namespace gbt
