// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hetrain/training_common.hpp"

namespace hetrain {

    /// Iris measurements, min-max normalized per feature, one-hot labels and a
    /// class-stratified train/test split.
    struct Dataset {
        Eigen::MatrixXd features;  // rows = samples
        std::vector<int> labels;   // 0 setosa, 1 versicolor, 2 virginica
        Eigen::MatrixXd onehot;
        std::vector<std::size_t> train_idx;
        std::vector<std::size_t> test_idx;

        TrainingData samples() const;
    };

    inline constexpr int kIrisClasses = 3;

    /// Parses `sepal_length,sepal_width,petal_length,petal_width,species`. A
    /// non-numeric first line is taken as a header. Errors name the line.
    Dataset parse_iris(std::istream &in, std::uint64_t seed, double test_fraction = 0.2);

    Dataset load_iris(const std::string &path, std::uint64_t seed, double test_fraction = 0.2);

}  // namespace hetrain
