// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gbt/domain.hpp"

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace gbt {

enum class NodeKind {
    RootSequence,
    StrategySelector,
    StrategySequence,
    PersonaCondition,
    TimeoutDecorator,
    RetryDecorator,
    GoalGate,
    RobotAction,
    WaitForHuman,
};

const char* to_string(NodeKind k);

using NodeIndex = std::size_t;

/// Which part of a spec action a leaf carries out. Shared actions expand to
/// Hold, Ack, Release when companions are given, else to Hold, Ack.
enum class LeafRole { Main, Hold, Ack, Release };

const char* to_string(LeafRole r);

/// Position of an ActionSpec inside its ProcessSpec.
struct ActionRef {
    std::size_t part = 0;
    std::size_t strategy = 0;
    std::size_t action = 0;

    bool operator==(const ActionRef&) const = default;
    auto operator<=>(const ActionRef&) const = default;
};

struct NoParams {
    bool operator==(const NoParams&) const = default;
};

struct SelectorParams {
    std::string part_process_id;
    std::size_t part = 0;
    bool operator==(const SelectorParams&) const = default;
};

struct StrategyParams {
    std::string part_process_id;
    std::string strategy_id;
    std::size_t part = 0;
    std::size_t strategy = 0;
    unsigned assistance_level = 0;
    bool operator==(const StrategyParams&) const = default;
};

struct ConditionParams {
    Allowlist allowlist;
    bool operator==(const ConditionParams&) const = default;
};

struct TimeoutParams {
    Duration budget{0};
    bool operator==(const TimeoutParams&) const = default;
};

struct RetryParams {
    unsigned max_attempts = kDefaultMaxAttempts;
    bool operator==(const RetryParams&) const = default;
};

struct GateParams {
    std::string part_process_id;
    std::string goal_id;
    std::set<std::string> skip_if;
    std::set<std::string> sets_flags;
    /// Only the last leaf of an expanded action marks the goal reached.
    bool completes_action = true;
    bool operator==(const GateParams&) const = default;
};

struct LeafParams {
    ActionRef action;
    LeafRole role = LeafRole::Main;
    std::string action_id;
    Duration timeout{0};
    Duration nominal_duration{0};
    bool operator==(const LeafParams&) const = default;
};

using NodeParams =
    std::variant<NoParams, SelectorParams, StrategyParams, ConditionParams, TimeoutParams, RetryParams, GateParams,
                 LeafParams>;

struct TreeNode {
    std::string id;
    NodeKind kind = NodeKind::RootSequence;
    std::string label;
    std::vector<NodeIndex> children;
    NodeParams params;

    [[nodiscard]] bool is_leaf() const noexcept
    {
        return kind == NodeKind::RobotAction || kind == NodeKind::WaitForHuman;
    }

    bool operator==(const TreeNode&) const = default;
};

/// Immutable compiled tree. Nodes are stored in pre-order; the root is node 0.
class BehaviorTree {
public:
    BehaviorTree() = default;
    BehaviorTree(std::vector<TreeNode> nodes, std::string process_id, std::string digest);

    [[nodiscard]] const TreeNode& root() const { return nodes_.front(); }
    [[nodiscard]] const TreeNode& node(NodeIndex i) const { return nodes_.at(i); }
    [[nodiscard]] std::span<const TreeNode> nodes() const noexcept { return nodes_; }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

    /// Throws LookupError for an unknown id.
    [[nodiscard]] NodeIndex index_of(const std::string& id) const;
    [[nodiscard]] std::optional<NodeIndex> find(const std::string& id) const;

    [[nodiscard]] const std::string& process_id() const noexcept { return process_id_; }
    [[nodiscard]] const std::string& digest() const noexcept { return digest_; }

    bool operator==(const BehaviorTree& other) const
    {
        return nodes_ == other.nodes_ && process_id_ == other.process_id_ && digest_ == other.digest_;
    }

private:
    std::vector<TreeNode> nodes_;
    std::map<std::string, NodeIndex> index_;
    std::string process_id_;
    std::string digest_;
};

/// Builds the tree:
///
///   RootSequence
///     StrategySelector            one per part process, in spec order
///       PersonaCondition          effective allowlist of the strategy
///         TimeoutDecorator        strategy budget
///           StrategySequence
///             GoalGate            one per compiled leaf
///               RetryDecorator
///                 RobotAction | WaitForHuman
///
/// Throws RejectedInput carrying the validator's diagnostics when
/// validate_process reports errors.
BehaviorTree compile(const ProcessSpec& spec, std::span<const Persona> personas);

/// Graphviz diagram: one box per part process, strategy and action; decorator
/// chains are folded into the box labels. Actions that can be skipped by a
/// goal gate are dashed.
std::string export_dot(const BehaviorTree& tree);

/// Flat node list for the console: id, kind, label, children, persona ids,
/// assistance level and leaf details.
std::string export_tree_json(const BehaviorTree& tree);

/// Strategy budget: override if present, else the sum of the compiled leaf
/// timeouts.
Duration strategy_budget(const Strategy& strategy, const ProcessSpec& spec);

} // namespace gbt
