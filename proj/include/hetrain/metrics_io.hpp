// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hetrain/he_nn.hpp"
#include "hetrain/training_common.hpp"

namespace hetrain {

    inline constexpr const char *kMetricsHeader =
        "epoch,train_loss,test_loss,train_acc,test_acc,cum_mults,cum_rotations,min_level";

    void write_metrics(std::ostream &out, const std::vector<EpochMetrics> &rows);
    void write_metrics(const std::string &path, const std::vector<EpochMetrics> &rows);

    std::vector<EpochMetrics> read_metrics(std::istream &in);
    std::vector<EpochMetrics> read_metrics(const std::string &path);

    /// Everything needed to resume a run: the packed model at full level, the
    /// hyperparameters and the counters accumulated so far.
    struct Checkpoint {
        NetworkState net;
        std::uint64_t seed = 0;
        int level_budget = 0;
        int epochs_completed = 0;
        OpCounters counters;
        int min_level = 0;
    };

    inline constexpr int kCheckpointVersion = 1;

    void save_checkpoint(std::ostream &out, const Checkpoint &cp);
    void save_checkpoint(const std::string &path, const Checkpoint &cp);

    Checkpoint load_checkpoint(std::istream &in);
    Checkpoint load_checkpoint(const std::string &path);

    Layout parse_layout(const std::string &name);

}  // namespace hetrain
