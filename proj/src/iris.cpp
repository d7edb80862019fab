// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetrain/iris.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "hetrain/errors.hpp"
#include "hetrain/slot_engine.hpp"

namespace hetrain {

    namespace {

        std::string trim(std::string_view s) {
            const auto first = s.find_first_not_of(" \t\r\"");
            if (first == std::string_view::npos) {
                return {};
            }
            const auto last = s.find_last_not_of(" \t\r\"");
            return std::string(s.substr(first, last - first + 1));
        }

        std::vector<std::string> split_csv(const std::string &line) {
            std::vector<std::string> fields;
            std::stringstream ss(line);
            std::string field;
            while (std::getline(ss, field, ',')) {
                fields.push_back(trim(field));
            }
            if (!line.empty() && line.back() == ',') {
                fields.emplace_back();
            }
            return fields;
        }

        bool parse_double(const std::string &s, double &out) {
            if (s.empty()) {
                return false;
            }
            const char *end = s.data() + s.size();
            auto [ptr, ec] = std::from_chars(s.data(), end, out);
            return ec == std::errc() && ptr == end && std::isfinite(out);
        }

        int species_index(std::string name) {
            std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
            if (name.rfind("iris-", 0) == 0) {
                name = name.substr(5);
            }
            if (name == "setosa") {
                return 0;
            }
            if (name == "versicolor") {
                return 1;
            }
            if (name == "virginica") {
                return 2;
            }
            return -1;
        }

    }  // namespace

    TrainingData Dataset::samples() const {
        TrainingData data;
        auto make = [&](std::size_t i) {
            return Sample{features.row(static_cast<Eigen::Index>(i)).transpose(),
                          onehot.row(static_cast<Eigen::Index>(i)).transpose()};
        };
        for (auto i : train_idx) {
            data.train.push_back(make(i));
        }
        for (auto i : test_idx) {
            data.test.push_back(make(i));
        }
        return data;
    }

    Dataset parse_iris(std::istream &in, std::uint64_t seed, double test_fraction) {
        if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
            throw ConfigError("test fraction must lie in [0, 1)");
        }
        std::vector<std::array<double, 4>> rows;
        std::vector<int> labels;
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) {
                continue;
            }
            const auto fields = split_csv(line);
            if (fields.size() != 5) {
                throw DataError("line " + std::to_string(line_no) + ": expected 5 columns, found " +
                                std::to_string(fields.size()));
            }
            std::array<double, 4> values{};
            bool numeric = true;
            for (std::size_t c = 0; c < 4; ++c) {
                numeric = numeric && parse_double(fields[c], values[c]);
            }
            if (!numeric) {
                if (rows.empty() && labels.empty() && !parse_double(fields[0], values[0])) {
                    continue;  // header
                }
                throw DataError("line " + std::to_string(line_no) + ": non-numeric feature value");
            }
            const int label = species_index(fields[4]);
            if (label < 0) {
                throw DataError("line " + std::to_string(line_no) + ": unknown species '" + fields[4] + "'");
            }
            rows.push_back(values);
            labels.push_back(label);
        }
        if (rows.empty()) {
            throw DataError("iris data contains no samples");
        }

        Dataset ds;
        const auto n = static_cast<Eigen::Index>(rows.size());
        ds.features.resize(n, 4);
        ds.onehot = Eigen::MatrixXd::Zero(n, kIrisClasses);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index c = 0; c < 4; ++c) {
                ds.features(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
            }
            ds.onehot(i, labels[static_cast<std::size_t>(i)]) = 1.0;
        }
        ds.labels = std::move(labels);

        for (Eigen::Index c = 0; c < 4; ++c) {
            const double lo = ds.features.col(c).minCoeff();
            const double span = ds.features.col(c).maxCoeff() - lo;
            if (span > 0.0) {
                ds.features.col(c) = (ds.features.col(c).array() - lo) / span;
            } else {
                ds.features.col(c).setZero();
            }
        }

        std::mt19937_64 rng(EngineContext::mix_seed(seed, 0x1215ULL));
        for (int cls = 0; cls < kIrisClasses; ++cls) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < ds.labels.size(); ++i) {
                if (ds.labels[i] == cls) {
                    members.push_back(i);
                }
            }
            for (std::size_t i = members.size(); i > 1; --i) {
                std::swap(members[i - 1], members[static_cast<std::size_t>(rng() % i)]);
            }
            const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
            ds.test_idx.insert(ds.test_idx.end(), members.begin(), members.begin() + static_cast<long>(n_test));
            ds.train_idx.insert(ds.train_idx.end(), members.begin() + static_cast<long>(n_test), members.end());
        }
        return ds;
    }

    Dataset load_iris(const std::string &path, std::uint64_t seed, double test_fraction) {
        std::ifstream in(path);
        if (!in) {
            throw DataError("cannot open iris data file '" + path + "'");
        }
        return parse_iris(in, seed, test_fraction);
    }

}  // namespace hetrain
