// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "gbt/service.hpp"

#include "gbt/diagnostic.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <cmath>

namespace gbt {

namespace {

using Json = nlohmann::ordered_json;

std::string error_body(const std::string& path, const std::string& message)
{
    Json d;
    d["severity"] = "error";
    d["path"] = path;
    d["message"] = message;
    Json j;
    j["diagnostics"] = Json::array({d});
    return j.dump();
}

Service::Reply error_reply(int status, const std::string& path, const std::string& message)
{
    return {status, error_body(path, message)};
}

std::map<std::string, std::string> split_detail(const std::string& detail)
{
    std::map<std::string, std::string> out;
    std::size_t pos = 0;
    while (pos <= detail.size()) {
        auto end = detail.find(',', pos);
        if (end == std::string::npos) end = detail.size();
        const auto item = detail.substr(pos, end - pos);
        const auto eq = item.find('=');
        if (eq != std::string::npos) out[item.substr(0, eq)] = item.substr(eq + 1);
        pos = end + 1;
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Frames, subscriptions, state

Json StreamFrame::to_json() const
{
    Json j;
    j["seq"] = seq;
    j["session_id"] = session_id;
    j["time"] = entry.time.count();
    j["node"] = entry.node;
    j["kind"] = entry.kind;
    j["detail"] = entry.detail;
    if (entry.kind == "fallthrough") {
        const auto kv = split_detail(entry.detail);
        Json n;
        n["part_process_id"] = entry.node;
        n["from"] = kv.count("from") ? kv.at("from") : "";
        if (kv.count("next") && kv.at("next") != "none") {
            n["next"] = kv.at("next");
            n["level"] = std::stoul(kv.at("level"));
        } else {
            n["next"] = nullptr;
            n["level"] = nullptr;
        }
        j["notice"] = std::move(n);
    }
    return j;
}

void Subscription::push(const StreamFrame& frame)
{
    {
        std::lock_guard lk(mutex_);
        if (closed_) return;
        if (queue_.size() >= capacity_) {
            queue_.pop_front();
            ++dropped_;
        }
        queue_.push_back(frame);
    }
    cv_.notify_all();
}

void Subscription::close()
{
    {
        std::lock_guard lk(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

Subscription::Batch Subscription::take(std::chrono::milliseconds timeout)
{
    std::unique_lock lk(mutex_);
    cv_.wait_for(lk, timeout, [&] { return closed_ || !queue_.empty(); });
    Batch b;
    b.frames.assign(queue_.begin(), queue_.end());
    queue_.clear();
    b.dropped = std::exchange(dropped_, 0);
    b.closed = closed_;
    return b;
}

const char* to_string(SessionState::Phase p)
{
    switch (p) {
        case SessionState::Phase::Idle: return "idle";
        case SessionState::Phase::Running: return "running";
        case SessionState::Phase::Completed: return "completed";
        case SessionState::Phase::Failed: return "failed";
    }
    return "?";
}

void SessionState::apply(const StreamFrame& frame, const BehaviorTree& tree)
{
    recent.push_back(frame);
    while (recent.size() > kRecentEvents) recent.pop_front();
    last_seq = frame.seq;

    const auto& e = frame.entry;
    const auto idx = tree.find(e.node);
    const auto clears_instruction = [&] { return instruction && instruction->node_id == e.node; };

    if (e.kind == "instruction" && idx) {
        const auto& p = std::get<LeafParams>(tree.node(*idx).params);
        instruction = Instruction{e.node, p.action_id, e.detail};
    } else if (e.kind == "status" && e.detail != "running" && clears_instruction()) {
        instruction.reset();
    } else if (e.kind == "halt" && clears_instruction()) {
        instruction.reset();
    } else if (e.kind == "enter" && idx) {
        const auto& p = std::get<StrategyParams>(tree.node(*idx).params);
        part_process_id = p.part_process_id;
        strategy_id = p.strategy_id;
        level = p.assistance_level;
        levels[p.part_process_id] = p.assistance_level;
    } else if (e.kind == "abort") {
        note = e.detail;
    } else if (e.kind == "outcome") {
        phase = e.detail == "completed" ? Phase::Completed : Phase::Failed;
        instruction.reset();
    } else if (e.kind == "reset") {
        phase = Phase::Running;
        instruction.reset();
        part_process_id.clear();
        strategy_id.clear();
        level.reset();
        levels.clear();
    } else if (e.kind == "persona") {
        active_persona = std::stoll(e.detail);
    }
}

Json SessionState::to_json() const
{
    Json j;
    j["session_id"] = session_id.empty() ? Json(nullptr) : Json(session_id);
    j["spec_digest"] = spec_digest;
    j["active_persona"] = session_id.empty() ? Json(nullptr) : Json(active_persona);
    j["phase"] = to_string(phase);
    if (instruction) {
        Json i;
        i["node_id"] = instruction->node_id;
        i["action_id"] = instruction->action_id;
        i["label"] = instruction->label;
        j["instruction"] = std::move(i);
    } else {
        j["instruction"] = nullptr;
    }
    j["part_process_id"] = part_process_id.empty() ? Json(nullptr) : Json(part_process_id);
    j["strategy_id"] = strategy_id.empty() ? Json(nullptr) : Json(strategy_id);
    j["level"] = level ? Json(*level) : Json(nullptr);
    j["levels"] = levels;
    j["note"] = note;
    j["last_seq"] = last_seq;
    j["recent_events"] = Json::array();
    for (const auto& f : recent) j["recent_events"].push_back(f.to_json());
    return j;
}

std::pair<std::string, int> parse_bind_address(const std::string& text)
{
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
        throw ValidationError("bind address must look like host:port, got '" + text + "'");
    }
    const auto port_text = text.substr(colon + 1);
    int port = 0;
    for (char c : port_text) {
        if (c < '0' || c > '9' || port > 65535) throw ValidationError("invalid port '" + port_text + "'");
        port = port * 10 + (c - '0');
    }
    if (port > 65535) throw ValidationError("invalid port '" + port_text + "'");
    return {text.substr(0, colon), port};
}

// ---------------------------------------------------------------------------
// Service

struct Service::Session {
    explicit Session(std::string session_id, PersonaId p) : id(std::move(session_id)), persona(p) {}

    std::string id;
    PersonaId persona;
    WallClock clock;
    EventInbox inbox{clock};
    RealtimeEventSource source{inbox, clock};
    std::unique_ptr<Observer> observer;
    std::thread executor;
};

class Service::Observer final : public EngineObserver {
public:
    Observer(Service& svc, Session& session) : svc_(svc), session_(session) {}

    void on_leaf_started(const TreeNode& leaf, TimePoint now) override
    {
        if (leaf.kind != NodeKind::RobotAction) return;
        const auto& p = std::get<LeafParams>(leaf.params);
        const auto ms = std::llround(static_cast<double>(p.nominal_duration.count()) * svc_.options_.robot_duration_scale);
        session_.source.schedule({EventKind::RobotDone, leaf.id, now + Duration{ms}, 0});
    }

    void on_trace(const TraceEntry& entry) override { svc_.publish(session_.id, entry); }

private:
    Service& svc_;
    Session& session_;
};

Service::Service(LoadedDefinitions defs, ServiceOptions options)
    : defs_(std::move(defs)), options_(options), tree_(compile(defs_.process, defs_.personas)),
      tree_json_(export_tree_json(tree_)), personas_text_(serialize_personas(defs_.personas)),
      process_text_(serialize_process(defs_.process)), server_(std::make_unique<httplib::Server>())
{
    state_.spec_digest = tree_.digest();
    install_routes();
}

Service::~Service()
{
    stop();
}

std::optional<int> Service::bind(const std::string& host, int port)
{
    if (port == 0) {
        const int p = server_->bind_to_any_port(host);
        if (p <= 0) return std::nullopt;
        return p;
    }
    if (!server_->bind_to_port(host, port)) return std::nullopt;
    return port;
}

void Service::listen()
{
    server_->listen_after_bind();
}

void Service::start()
{
    listener_ = std::thread([this] { listen(); });
    server_->wait_until_ready();
}

void Service::stop()
{
    {
        std::lock_guard lk(session_mutex_);
        close_session();
    }
    {
        std::lock_guard lk(state_mutex_);
        for (auto& s : subscribers_) s->close();
        subscribers_.clear();
    }
    if (server_) server_->stop();
    if (listener_.joinable()) listener_.join();
}

void Service::publish(const std::string& session_id, const TraceEntry& entry)
{
    {
        std::lock_guard lk(state_mutex_);
        const StreamFrame frame{++seq_, session_id, entry};
        state_.apply(frame, tree_);
        entries_.push_back(entry);
        for (auto& s : subscribers_) s->push(frame);
    }
    state_cv_.notify_all();
    spdlog::debug("{} {} {} {}", entry.time.count(), entry.node, entry.kind, entry.detail);
}

void Service::close_session()
{
    if (!session_) return;
    session_->inbox.close();
    if (session_->executor.joinable()) session_->executor.join();
    spdlog::info("session {} closed", session_->id);
    session_.reset();
}

Service::Reply Service::create_session(const std::string& body)
{
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return error_reply(400, "/", "request body must be a JSON object");
    if (!j.contains("persona_id") || !j["persona_id"].is_number_integer()) {
        return error_reply(400, "/persona_id", "persona_id must be an integer");
    }
    const PersonaId persona = j["persona_id"].get<PersonaId>();
    bool known = false;
    for (const auto& p : defs_.personas) known = known || p.id == persona;
    if (!known) return error_reply(404, "/persona_id", "unknown persona " + std::to_string(persona));

    std::lock_guard lk(session_mutex_);
    {
        std::lock_guard sl(state_mutex_);
        if (session_ && state_.phase == SessionState::Phase::Running) {
            return error_reply(409, "/", "session " + session_->id + " is still running");
        }
    }
    close_session();

    auto session = std::make_unique<Session>("session-" + std::to_string(++session_counter_), persona);
    {
        std::lock_guard sl(state_mutex_);
        SessionState fresh;
        fresh.session_id = session->id;
        fresh.spec_digest = tree_.digest();
        fresh.active_persona = persona;
        fresh.phase = SessionState::Phase::Running;
        state_ = std::move(fresh);
        entries_.clear();
    }
    session->observer = std::make_unique<Observer>(*this, *session);
    Session* raw = session.get();
    session->executor = std::thread([this, raw] {
        run_episode(tree_, raw->persona, raw->source, raw->clock, raw->observer.get());
    });
    spdlog::info("session {} started for persona {}", raw->id, persona);
    session_ = std::move(session);

    Json out;
    out["session_id"] = raw->id;
    return {201, out.dump()};
}

Service::Reply Service::end_session()
{
    std::lock_guard lk(session_mutex_);
    if (!session_) return error_reply(404, "/", "no active session");
    close_session();
    return state();
}

Service::Reply Service::post_event(const std::string& body)
{
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return error_reply(400, "/", "request body must be a JSON object");
    if (!j.contains("kind") || !j["kind"].is_string()) return error_reply(400, "/kind", "kind must be a string");
    const auto kind_text = j["kind"].get<std::string>();
    const auto kind = parse_event_kind(kind_text);
    if (!kind || (*kind != EventKind::HumanAck && *kind != EventKind::HumanFail)) {
        return error_reply(400, "/kind", "kind must be human_ack or human_fail");
    }
    std::optional<std::string> action_id;
    if (j.contains("action_id") && !j["action_id"].is_null()) {
        if (!j["action_id"].is_string()) return error_reply(400, "/action_id", "action_id must be a string");
        action_id = j["action_id"].get<std::string>();
    }

    std::lock_guard lk(session_mutex_);
    if (!session_) return error_reply(409, "/", "no active session");

    std::string target;
    {
        std::lock_guard sl(state_mutex_);
        const auto& pending = state_.instruction;
        if (!action_id) {
            if (pending) target = pending->node_id;
        } else if (pending && (*action_id == pending->action_id || *action_id == pending->node_id)) {
            target = pending->node_id;
        } else {
            target = *action_id;
        }
    }
    const auto posted = session_->inbox.post({*kind, target, TimePoint{0}, 0});
    if (!posted) return error_reply(409, "/", "session is closed");

    Json out;
    out["accepted"] = true;
    out["target"] = target;
    out["time"] = posted->time.count();
    return {202, out.dump()};
}

SessionState Service::snapshot() const
{
    std::lock_guard lk(state_mutex_);
    return state_;
}

Service::Reply Service::state() const
{
    return {200, snapshot().to_json().dump()};
}

Service::Reply Service::trace() const
{
    std::lock_guard lk(state_mutex_);
    std::string out;
    for (const auto& e : entries_) out += to_json_line(e) + "\n";
    return {200, out, "application/x-ndjson"};
}

std::shared_ptr<Subscription> Service::subscribe()
{
    auto sub = std::make_shared<Subscription>(options_.subscriber_capacity);
    std::lock_guard lk(state_mutex_);
    subscribers_.push_back(sub);
    return sub;
}

void Service::unsubscribe(const std::shared_ptr<Subscription>& sub)
{
    std::lock_guard lk(state_mutex_);
    std::erase(subscribers_, sub);
}

bool Service::wait_finished(std::chrono::milliseconds timeout) const
{
    std::unique_lock lk(state_mutex_);
    return state_cv_.wait_for(lk, timeout, [&] {
        return state_.phase == SessionState::Phase::Completed || state_.phase == SessionState::Phase::Failed;
    });
}

void Service::install_routes()
{
    auto& s = *server_;
    s.set_default_headers({{"Access-Control-Allow-Origin", "*"}});

    const auto send = [](httplib::Response& res, const Reply& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    const auto text = [](const std::string& body, const char* type) {
        return [body, type](const httplib::Request&, httplib::Response& res) { res.set_content(body, type); };
    };

    s.Options(".*", [](const httplib::Request&, httplib::Response& res) {
        res.status = 204;
        res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });
    s.Post("/session", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, create_session(req.body));
    });
    s.Delete("/session", [this, send](const httplib::Request&, httplib::Response& res) { send(res, end_session()); });
    s.Get("/state", [this, send](const httplib::Request&, httplib::Response& res) { send(res, state()); });
    s.Get("/trace", [this, send](const httplib::Request&, httplib::Response& res) { send(res, trace()); });
    s.Post("/event", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, post_event(req.body));
    });
    s.Get("/tree", text(tree_json_, "application/json"));
    s.Get("/personas", text(personas_text_, "application/json"));
    s.Get("/process", text(process_text_, "application/json"));

    s.Get("/events", [this](const httplib::Request&, httplib::Response& res) {
        auto sub = subscribe();
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [this, sub](std::size_t, httplib::DataSink& sink) {
                const auto batch = sub->take(options_.keepalive);
                std::string out;
                if (batch.dropped > 0) {
                    out += "event: dropped\ndata: {\"dropped\":" + std::to_string(batch.dropped) + "}\n\n";
                }
                for (const auto& f : batch.frames) out += "data: " + f.to_json().dump() + "\n\n";
                if (out.empty()) out = ": keepalive\n\n";
                if (!sink.write(out.data(), out.size())) return false;
                if (batch.closed) sink.done();
                return true;
            },
            [this, sub](bool) { unsubscribe(sub); });
    });

    s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(error_body("/", what), "application/json");
    });
}

} // namespace gbt
