// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "gbt/tree.hpp"

#include "gbt/spec_io.hpp"

#include <json.hpp>

#include <sstream>

namespace gbt {

namespace {

struct LeafPlan {
    NodeKind kind;
    LeafRole role;
    std::string label;
};

std::vector<LeafPlan> expand(const ActionSpec& a)
{
    switch (a.actor) {
        case Actor::Robot: return {{NodeKind::RobotAction, LeafRole::Main, a.label}};
        case Actor::Human: return {{NodeKind::WaitForHuman, LeafRole::Main, a.label}};
        case Actor::Shared:
            if (a.companion) {
                return {{NodeKind::RobotAction, LeafRole::Hold, a.companion->hold},
                        {NodeKind::WaitForHuman, LeafRole::Ack, a.label},
                        {NodeKind::RobotAction, LeafRole::Release, a.companion->release}};
            }
            return {{NodeKind::RobotAction, LeafRole::Hold, a.label}, {NodeKind::WaitForHuman, LeafRole::Ack, a.label}};
    }
    return {};
}

std::string leaf_id(const std::string& strategy_node, const ActionSpec& a, LeafRole role)
{
    std::string id = strategy_node + "/" + a.id;
    if (role != LeafRole::Main) {
        id += "/";
        id += to_string(role);
    }
    return id;
}

std::string allowlist_text(const Allowlist& a)
{
    if (a.universal) return "all personas";
    if (a.ids.empty()) return "no persona";
    std::string out = "personas ";
    bool first = true;
    for (auto id : a.ids) {
        out += (first ? "" : ",") + std::to_string(id);
        first = false;
    }
    return out;
}

class Builder {
public:
    NodeIndex add(TreeNode n, std::optional<NodeIndex> parent)
    {
        nodes_.push_back(std::move(n));
        const NodeIndex i = nodes_.size() - 1;
        if (parent) nodes_[*parent].children.push_back(i);
        return i;
    }
    std::vector<TreeNode> take() && { return std::move(nodes_); }

private:
    std::vector<TreeNode> nodes_;
};

std::string dot_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            default: out += c;
        }
    }
    return out;
}

std::string quoted(const std::string& s)
{
    return "\"" + dot_escape(s) + "\"";
}

} // namespace

const char* to_string(NodeKind k)
{
    switch (k) {
        case NodeKind::RootSequence: return "RootSequence";
        case NodeKind::StrategySelector: return "StrategySelector";
        case NodeKind::StrategySequence: return "StrategySequence";
        case NodeKind::PersonaCondition: return "PersonaCondition";
        case NodeKind::TimeoutDecorator: return "TimeoutDecorator";
        case NodeKind::RetryDecorator: return "RetryDecorator";
        case NodeKind::GoalGate: return "GoalGate";
        case NodeKind::RobotAction: return "RobotAction";
        case NodeKind::WaitForHuman: return "WaitForHuman";
    }
    return "?";
}

const char* to_string(LeafRole r)
{
    switch (r) {
        case LeafRole::Main: return "main";
        case LeafRole::Hold: return "hold";
        case LeafRole::Ack: return "ack";
        case LeafRole::Release: return "release";
    }
    return "main";
}

BehaviorTree::BehaviorTree(std::vector<TreeNode> nodes, std::string process_id, std::string digest)
    : nodes_(std::move(nodes)), process_id_(std::move(process_id)), digest_(std::move(digest))
{
    for (NodeIndex i = 0; i < nodes_.size(); ++i) {
        if (!index_.emplace(nodes_[i].id, i).second) {
            throw ValidationError("duplicate node id '" + nodes_[i].id + "'");
        }
    }
}

NodeIndex BehaviorTree::index_of(const std::string& id) const
{
    if (auto i = find(id)) return *i;
    throw LookupError("unknown node id '" + id + "'");
}

std::optional<NodeIndex> BehaviorTree::find(const std::string& id) const
{
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Duration strategy_budget(const Strategy& strategy, const ProcessSpec& spec)
{
    if (strategy.budget) return *strategy.budget;
    Duration total{0};
    for (const auto& a : strategy.actions) {
        total += effective_timeout(a, spec) * static_cast<Duration::rep>(expand(a).size());
    }
    return total;
}

BehaviorTree compile(const ProcessSpec& spec, std::span<const Persona> personas)
{
    auto diags = validate_process(spec, personas);
    if (has_errors(diags)) {
        throw RejectedInput("process '" + spec.id + "' failed validation", std::move(diags));
    }

    Builder b;
    const NodeIndex root = b.add({"root", NodeKind::RootSequence, spec.name, {}, NoParams{}}, std::nullopt);

    for (std::size_t pi = 0; pi < spec.part_processes.size(); ++pi) {
        const auto& part = spec.part_processes[pi];
        const NodeIndex sel = b.add({part.id, NodeKind::StrategySelector, part.name.empty() ? part.id : part.name, {},
                                     SelectorParams{part.id, pi}},
                                    root);

        for (std::size_t si = 0; si < part.strategies.size(); ++si) {
            const auto& s = part.strategies[si];
            const std::string sid = part.id + "/" + s.id;
            const auto allow = effective_allowlist(s, personas, spec.vocabulary);
            const auto budget = strategy_budget(s, spec);

            const NodeIndex cond =
                b.add({sid + "#condition", NodeKind::PersonaCondition, allowlist_text(allow), {}, ConditionParams{allow}},
                      sel);
            const NodeIndex timeout = b.add(
                {sid + "#timeout", NodeKind::TimeoutDecorator, "budget " + format_duration(budget), {}, TimeoutParams{budget}},
                cond);
            const NodeIndex seq = b.add({sid, NodeKind::StrategySequence,
                                         s.id + " (level " + std::to_string(s.assistance_level) + ")", {},
                                         StrategyParams{part.id, s.id, pi, si, s.assistance_level}},
                                        timeout);

            for (std::size_t ai = 0; ai < s.actions.size(); ++ai) {
                const auto& a = s.actions[ai];
                const auto plan = expand(a);
                for (std::size_t li = 0; li < plan.size(); ++li) {
                    const auto lid = leaf_id(sid, a, plan[li].role);
                    const bool last = li + 1 == plan.size();
                    const NodeIndex gate = b.add({lid + "#gate", NodeKind::GoalGate, a.goal_id, {},
                                                  GateParams{part.id, a.goal_id, a.skip_if, a.sets_flags, last}},
                                                 seq);
                    const NodeIndex retry = b.add({lid + "#retry", NodeKind::RetryDecorator,
                                                   "max " + std::to_string(a.attempts()) + " attempts", {},
                                                   RetryParams{a.attempts()}},
                                                  gate);
                    b.add({lid, plan[li].kind, plan[li].label, {},
                           LeafParams{{pi, si, ai}, plan[li].role, a.id, effective_timeout(a, spec), a.nominal_duration}},
                          retry);
                }
            }
        }
    }
    return BehaviorTree(std::move(b).take(), spec.id, content_digest(spec));
}

std::string export_dot(const BehaviorTree& tree)
{
    std::ostringstream out;
    out << "digraph " << quoted(tree.process_id()) << " {\n";
    out << "  rankdir=TB;\n";
    out << "  node [shape=box, fontname=\"Helvetica\"];\n";
    const auto& root = tree.root();
    out << "  " << quoted(root.id) << " [label=" << quoted("Sequence\n" + root.label) << ", shape=box3d];\n";

    std::vector<std::pair<std::string, std::string>> edges;
    for (NodeIndex sel : root.children) {
        const auto& selector = tree.node(sel);
        out << "  subgraph " << quoted("cluster_" + selector.id) << " {\n";
        out << "    label=" << quoted(selector.label) << ";\n";
        out << "    " << quoted(selector.id) << " [label=" << quoted("?\n" + selector.label) << ", shape=diamond];\n";
        edges.emplace_back(root.id, selector.id);

        for (NodeIndex cond_i : selector.children) {
            const auto& cond = tree.node(cond_i);
            const auto& timeout = tree.node(cond.children.front());
            const auto& seq = tree.node(timeout.children.front());
            const auto& sp = std::get<StrategyParams>(seq.params);
            out << "    " << quoted(seq.id) << " [label="
                << quoted("-> " + sp.strategy_id + "\nlevel " + std::to_string(sp.assistance_level) + "\n" + cond.label +
                          "\n" + timeout.label)
                << "];\n";
            edges.emplace_back(selector.id, seq.id);

            for (NodeIndex gate_i : seq.children) {
                const auto& gate = tree.node(gate_i);
                const auto& leaf = tree.node(tree.node(gate.children.front()).children.front());
                const auto& gp = std::get<GateParams>(gate.params);
                const char* kind = leaf.kind == NodeKind::RobotAction ? "robot" : "wait for human";
                out << "    " << quoted(leaf.id) << " [label=" << quoted(std::string(kind) + "\n" + leaf.label)
                    << (gp.skip_if.empty() ? "" : ", style=dashed") << "];\n";
                edges.emplace_back(seq.id, leaf.id);
            }
        }
        out << "  }\n";
    }
    for (const auto& [from, to] : edges) {
        out << "  " << quoted(from) << " -> " << quoted(to) << ";\n";
    }
    out << "}\n";
    return out.str();
}

std::string export_tree_json(const BehaviorTree& tree)
{
    nlohmann::ordered_json j;
    j["process_id"] = tree.process_id();
    j["digest"] = tree.digest();
    j["root"] = tree.root().id;
    j["nodes"] = nlohmann::ordered_json::array();
    for (const auto& n : tree.nodes()) {
        nlohmann::ordered_json nj;
        nj["id"] = n.id;
        nj["kind"] = to_string(n.kind);
        nj["label"] = n.label;
        nj["children"] = nlohmann::ordered_json::array();
        for (auto c : n.children) nj["children"].push_back(tree.node(c).id);
        std::visit(
            [&](const auto& p) {
                using P = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<P, SelectorParams>) {
                    nj["part_process_id"] = p.part_process_id;
                } else if constexpr (std::is_same_v<P, StrategyParams>) {
                    nj["part_process_id"] = p.part_process_id;
                    nj["strategy_id"] = p.strategy_id;
                    nj["level"] = p.assistance_level;
                } else if constexpr (std::is_same_v<P, ConditionParams>) {
                    nj["universal"] = p.allowlist.universal;
                    nj["persona_ids"] = p.allowlist.ids;
                } else if constexpr (std::is_same_v<P, TimeoutParams>) {
                    nj["budget_ms"] = p.budget.count();
                } else if constexpr (std::is_same_v<P, RetryParams>) {
                    nj["max_attempts"] = p.max_attempts;
                } else if constexpr (std::is_same_v<P, GateParams>) {
                    nj["goal_id"] = p.goal_id;
                    nj["skip_if"] = p.skip_if;
                    nj["sets_flags"] = p.sets_flags;
                    nj["completes_action"] = p.completes_action;
                } else if constexpr (std::is_same_v<P, LeafParams>) {
                    nj["action_id"] = p.action_id;
                    nj["role"] = to_string(p.role);
                    nj["timeout_ms"] = p.timeout.count();
                }
            },
            n.params);
        j["nodes"].push_back(std::move(nj));
    }
    return j.dump(2) + "\n";
}

} // namespace gbt
