// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <mutex>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "hetrain/slot_engine.hpp"

namespace hetrain {

    enum class Phase { Feedforward, Transition, Backprop, Gradient, Update };

    inline const char *to_string(Phase p) {
        switch (p) {
            case Phase::Feedforward:
                return "FF";
            case Phase::Transition:
                return "Transition";
            case Phase::Backprop:
                return "BP";
            case Phase::Gradient:
                return "Gradient";
            case Phase::Update:
                return "Update";
        }
        return "?";
    }

    struct PhaseEntry {
        Phase phase;
        int layer;  // -1 when the step is not tied to one layer
        std::string step;
        OpCounters ops;
    };

    /// Collects counter deltas per training step. A delta is taken from the
    /// context the step ran under, so steps must not overlap on one context.
    class PhaseRecorder {
    public:
        template <typename F>
        decltype(auto) measure(Phase phase, int layer, std::string step, EngineContext &ctx, F &&body) {
            const OpCounters before = ctx.counters();
            if constexpr (std::is_void_v<decltype(body())>) {
                body();
                record(phase, layer, std::move(step), ctx.counters() - before);
            } else {
                decltype(auto) result = body();
                record(phase, layer, std::move(step), ctx.counters() - before);
                return result;
            }
        }

        void record(Phase phase, int layer, std::string step, const OpCounters &ops) {
            std::lock_guard<std::mutex> lock(mutex_);
            entries_.push_back({phase, layer, std::move(step), ops});
        }

        std::vector<PhaseEntry> entries() const {
            std::lock_guard<std::mutex> lock(mutex_);
            return entries_;
        }

    private:
        mutable std::mutex mutex_;
        std::vector<PhaseEntry> entries_;
    };

    /// Runs body under rec when one is attached.
    template <typename F>
    decltype(auto) measured(PhaseRecorder *rec, Phase phase, int layer, const char *step, EngineContext &ctx,
                            F &&body) {
        if (rec == nullptr) {
            return body();
        }
        return rec->measure(phase, layer, step, ctx, std::forward<F>(body));
    }

}  // namespace hetrain
