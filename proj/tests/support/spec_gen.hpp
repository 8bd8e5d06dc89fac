// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gbt/domain.hpp"
#include "gbt/sim.hpp"

#include <cstdint>
#include <vector>

namespace gbt::testkit {

struct Definitions {
    ProcessSpec spec;
    std::vector<Persona> personas;
};

struct GenOptions {
    std::size_t max_parts = 4;
    std::size_t max_strategies = 4; ///< strategies with human involvement
    std::size_t max_goals = 3;
    double automated_probability = 0.75;
    /// Every part gets a universal automated strategy.
    bool always_automated = false;
    /// Exercise optional fields (meta, companions, budgets, manual allowlists).
    bool rich = true;
};

/// Random definitions that pass validate_process without errors. Levels are
/// distinct within each part process.
Definitions random_definitions(std::uint64_t seed, const GenOptions& options = {});

/// Bundled box-folding definitions from the source tree.
Definitions bundled_definitions();

} // namespace gbt::testkit
