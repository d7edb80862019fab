// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hetrain/packed_linalg.hpp"

namespace hetrain {

    enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitData = 3, kExitDepth = 4 };

    struct RunConfig {
        Layout packing = Layout::Diagonal;
        int epochs = 400;
        int batch_size = 20;
        double lr = 0.1;
        /// Unset means 9 for diagonal layouts and 12 for row.
        std::optional<int> levels;
        double noise_std = 0.0;
        double init_std = 0.1;
        std::uint64_t seed = 1;
        int threads = 0;  // 0 = hardware concurrency
        bool experimental_ragged = false;
        std::vector<int> net{4, 10, 3};
        std::string data_path = "data/iris.csv";
        std::string metrics_out;
        std::string plain_metrics_out;
        std::string checkpoint_out;
        std::string checkpoint_in;
        int log_every = 50;

        int level_budget() const;
        int worker_count() const;
        /// Throws ConfigError on out-of-range values.
        void validate() const;
    };

    std::vector<int> parse_dims(const std::string &text);

    int run_train(const RunConfig &cfg, std::ostream &out);
    int run_opcount(const RunConfig &cfg, std::ostream &out);
    int run_compare(const RunConfig &cfg, std::ostream &out);

    /// Parses arguments, dispatches and maps errors to exit codes.
    int cli_main(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

}  // namespace hetrain
