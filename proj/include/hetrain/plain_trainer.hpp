// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hetrain/training_common.hpp"

namespace hetrain {

    /// Dense float64 reference for the packed trainer: same architecture, same
    /// initial parameters, same batch schedule, same update rule.
    class PlainNetwork {
    public:
        explicit PlainNetwork(std::vector<DenseParams> params) : params_(std::move(params)) {
        }

        const std::vector<DenseParams> &parameters() const {
            return params_;
        }

        Eigen::VectorXd predict(const Eigen::VectorXd &x) const;

        /// Mean-squared-error loss of one sample.
        double loss(const Sample &s) const;

        /// Per-layer gradients of the sample loss with delta = pred - label at the
        /// output (the 2/out_dim factor lives in the learning rate).
        std::vector<DenseParams> gradients(const Sample &s) const;

        /// Sum of per-sample gradients, then params -= (lr / batch) * sum.
        double train_batch(std::span<const Sample> batch, double learning_rate);

    private:
        std::vector<DenseParams> params_;
    };

    std::pair<double, double> evaluate(const PlainNetwork &net, std::span<const Sample> samples);

    std::vector<EpochMetrics> train_plain(PlainNetwork &net, const TrainingData &data, const Hyper &hyper,
                                          std::uint64_t seed, int start_epoch = 0,
                                          const std::function<void(const EpochMetrics &)> &on_epoch = {});

}  // namespace hetrain
