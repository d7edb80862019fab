// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hetrain/instrumentation.hpp"
#include "hetrain/packed_linalg.hpp"

namespace hetrain {

    /// Published per-step counts (mult, rot) for the 6-3-1 example network.
    struct PublishedCount {
        std::optional<int> mults;
        std::optional<int> rotations;
    };

    struct OpcountRow {
        Phase phase;
        int layer;
        std::string step;
        std::string label;
        OpCounters measured;
        std::optional<CostEstimate> predicted;
        std::optional<PublishedCount> published;
    };

    struct OpcountReport {
        std::vector<int> dims;
        Layout layout = Layout::Diagonal;
        std::vector<OpcountRow> rows;
        OpCounters total;
        /// Feedforward, transition and backprop only (no gradient or update).
        OpCounters core_total;
        int levels_used = 0;

        std::uint64_t cost() const {
            return total.mults() + total.rotations;
        }
        std::uint64_t core_cost() const {
            return core_total.mults() + core_total.rotations;
        }
    };

    /// One instrumented batch-1 training iteration on random data.
    OpcountReport run_opcount(const std::vector<int> &dims, Layout layout, std::uint64_t seed);

    /// Aligned plain-text table. With a row-layout reference the totals are
    /// followed by the ratio against it.
    std::string format_opcount(const OpcountReport &report, const OpcountReport *row_reference = nullptr);

    /// The published table for the 6-3-1 network, by layout, or empty.
    std::optional<PublishedCount> published_count(const std::vector<int> &dims, Layout layout, Phase phase,
                                                  int layer, const std::string &step);

}  // namespace hetrain
