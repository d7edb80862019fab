// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace hetrain {

    struct Sample {
        Eigen::VectorXd features;
        Eigen::VectorXd label;  // one-hot
    };

    struct TrainingData {
        std::vector<Sample> train;
        std::vector<Sample> test;
    };

    struct Hyper {
        double learning_rate = 0.1;
        int batch_size = 20;
        int epochs = 400;
    };

    /// Output-major weights and bias of one dense layer (y = w x + b).
    struct DenseParams {
        Eigen::MatrixXd w;
        Eigen::VectorXd b;
    };

    /// Gaussian(0, init_std) draws, layer by layer: w row-major, then b.
    /// Both trainers start from these so their trajectories can be compared.
    std::vector<DenseParams> initial_parameters(std::span<const int> dims, double init_std, std::uint64_t seed);

    /// Visiting order of n training samples in the given epoch. Depends only on
    /// (seed, epoch) so a resumed run replays the same schedule.
    std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, int epoch);

    struct EpochMetrics {
        int epoch = 0;
        double train_loss = 0.0;
        double test_loss = 0.0;
        double train_acc = 0.0;
        double test_acc = 0.0;
        std::uint64_t cum_mults = 0;
        std::uint64_t cum_rotations = 0;
        int min_level = 0;
    };

    /// Mean over the first out_dim entries of (pred - label)^2.
    double mse(const Eigen::VectorXd &pred, const Eigen::VectorXd &label);

    bool argmax_matches(const Eigen::VectorXd &pred, const Eigen::VectorXd &label);

    void validate_dims(std::span<const int> dims);

}  // namespace hetrain
