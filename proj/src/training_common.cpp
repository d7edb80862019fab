// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetrain/training_common.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

#include "hetrain/errors.hpp"
#include "hetrain/slot_engine.hpp"

namespace hetrain {

    void validate_dims(std::span<const int> dims) {
        if (dims.size() < 2) {
            throw ConfigError("network needs at least an input and an output dimension");
        }
        for (int d : dims) {
            if (d < 1) {
                throw ConfigError("network dimensions must be positive, got " + std::to_string(d));
            }
        }
    }

    std::vector<DenseParams> initial_parameters(std::span<const int> dims, double init_std, std::uint64_t seed) {
        validate_dims(dims);
        if (!(init_std >= 0.0)) {
            throw ConfigError("init_std must be non-negative");
        }
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::vector<DenseParams> params;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            DenseParams p;
            p.w.resize(dims[l + 1], dims[l]);
            p.b.resize(dims[l + 1]);
            for (Eigen::Index i = 0; i < p.w.rows(); ++i) {
                for (Eigen::Index j = 0; j < p.w.cols(); ++j) {
                    p.w(i, j) = init_std * gauss(rng);
                }
            }
            for (Eigen::Index i = 0; i < p.b.size(); ++i) {
                p.b[i] = init_std * gauss(rng);
            }
            params.push_back(std::move(p));
        }
        return params;
    }

    std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, int epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(EngineContext::mix_seed(seed, 0x5eedULL + static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng() % i);
            std::swap(order[i - 1], order[j]);
        }
        return order;
    }

    double mse(const Eigen::VectorXd &pred, const Eigen::VectorXd &label) {
        const Eigen::Index n = label.size();
        return (pred.head(n) - label).squaredNorm() / static_cast<double>(n);
    }

    bool argmax_matches(const Eigen::VectorXd &pred, const Eigen::VectorXd &label) {
        Eigen::Index p = 0;
        Eigen::Index t = 0;
        pred.head(label.size()).maxCoeff(&p);
        label.maxCoeff(&t);
        return p == t;
    }

}  // namespace hetrain
