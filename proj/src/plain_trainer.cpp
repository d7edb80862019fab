// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetrain/plain_trainer.hpp"

#include <algorithm>
#include <tuple>

#include "hetrain/errors.hpp"

namespace hetrain {

    Eigen::VectorXd PlainNetwork::predict(const Eigen::VectorXd &x) const {
        Eigen::VectorXd a = x;
        for (const auto &p : params_) {
            a = (p.w * a + p.b).array().square().matrix();
        }
        return a;
    }

    double PlainNetwork::loss(const Sample &s) const {
        return mse(predict(s.features), s.label);
    }

    std::vector<DenseParams> PlainNetwork::gradients(const Sample &s) const {
        const std::size_t n = params_.size();
        std::vector<Eigen::VectorXd> inputs(n);
        std::vector<Eigen::VectorXd> pre(n);
        Eigen::VectorXd a = s.features;
        for (std::size_t l = 0; l < n; ++l) {
            inputs[l] = a;
            pre[l] = params_[l].w * a + params_[l].b;
            a = pre[l].array().square().matrix();
        }
        std::vector<DenseParams> grads(n);
        Eigen::VectorXd delta = ((a - s.label).array() * 2.0 * pre[n - 1].array()).matrix();
        for (std::size_t l = n; l-- > 0;) {
            grads[l].w = delta * inputs[l].transpose();
            grads[l].b = delta;
            if (l > 0) {
                delta = ((params_[l].w.transpose() * delta).array() * 2.0 * pre[l - 1].array()).matrix();
            }
        }
        return grads;
    }

    double PlainNetwork::train_batch(std::span<const Sample> batch, double learning_rate) {
        if (batch.empty()) {
            throw ConfigError("train_batch: empty batch");
        }
        std::vector<DenseParams> sum = gradients(batch.front());
        double loss = this->loss(batch.front());
        for (std::size_t i = 1; i < batch.size(); ++i) {
            const auto g = gradients(batch[i]);
            for (std::size_t l = 0; l < sum.size(); ++l) {
                sum[l].w += g[l].w;
                sum[l].b += g[l].b;
            }
            loss += this->loss(batch[i]);
        }
        const double step = learning_rate / static_cast<double>(batch.size());
        for (std::size_t l = 0; l < sum.size(); ++l) {
            params_[l].w -= step * sum[l].w;
            params_[l].b -= step * sum[l].b;
        }
        return loss / static_cast<double>(batch.size());
    }

    std::pair<double, double> evaluate(const PlainNetwork &net, std::span<const Sample> samples) {
        if (samples.empty()) {
            return {0.0, 0.0};
        }
        double loss = 0.0;
        std::size_t correct = 0;
        for (const auto &s : samples) {
            const Eigen::VectorXd p = net.predict(s.features);
            loss += mse(p, s.label);
            correct += argmax_matches(p, s.label) ? 1 : 0;
        }
        const auto n = static_cast<double>(samples.size());
        return {loss / n, static_cast<double>(correct) / n};
    }

    std::vector<EpochMetrics> train_plain(PlainNetwork &net, const TrainingData &data, const Hyper &hyper,
                                          std::uint64_t seed, int start_epoch,
                                          const std::function<void(const EpochMetrics &)> &on_epoch) {
        if (data.train.empty()) {
            throw DataError("train_plain: empty training set");
        }
        if (hyper.batch_size < 1) {
            throw ConfigError("train_plain: batch size must be positive");
        }
        const auto batch_size = static_cast<std::size_t>(hyper.batch_size);
        std::vector<EpochMetrics> out;
        std::vector<Sample> batch;
        for (int e = start_epoch; e < start_epoch + hyper.epochs; ++e) {
            const auto order = shuffled_order(data.train.size(), seed, e);
            for (std::size_t b = 0; b * batch_size < order.size(); ++b) {
                batch.clear();
                for (std::size_t i = b * batch_size; i < std::min(order.size(), (b + 1) * batch_size); ++i) {
                    batch.push_back(data.train[order[i]]);
                }
                net.train_batch(batch, hyper.learning_rate);
            }
            EpochMetrics m;
            m.epoch = e + 1;
            std::tie(m.train_loss, m.train_acc) = evaluate(net, data.train);
            std::tie(m.test_loss, m.test_acc) = evaluate(net, data.test);
            out.push_back(m);
            if (on_epoch) {
                on_epoch(m);
            }
        }
        return out;
    }

}  // namespace hetrain
