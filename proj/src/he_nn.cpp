// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetrain/he_nn.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "hetrain/errors.hpp"

namespace hetrain {

    namespace {

        /// Runs fn(i) for i in [0, n) on up to `threads` workers and rethrows the
        /// first failure.
        template <typename F>
        void parallel_for(std::size_t n, int threads, F &&fn) {
            const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
            if (workers <= 1) {
                for (std::size_t i = 0; i < n; ++i) {
                    fn(i);
                }
                return;
            }
            std::atomic<std::size_t> next{0};
            std::exception_ptr failure;
            std::mutex failure_mutex;
            std::vector<std::thread> pool;
            pool.reserve(workers);
            for (std::size_t w = 0; w < workers; ++w) {
                pool.emplace_back([&] {
                    for (std::size_t i = next++; i < n; i = next++) {
                        try {
                            fn(i);
                        } catch (...) {
                            std::lock_guard<std::mutex> lock(failure_mutex);
                            if (!failure) {
                                failure = std::current_exception();
                            }
                        }
                    }
                });
            }
            for (auto &t : pool) {
                t.join();
            }
            if (failure) {
                std::rethrow_exception(failure);
            }
        }

        Register forward_layer(const DenseLayer &layer, const Register &x, EngineContext &ctx) {
            if (x.size() != layer.input_length()) {
                throw DimensionError("dense_forward: input has " + std::to_string(x.size()) + " slots, layer expects " +
                                     std::to_string(layer.input_length()));
            }
            const Register product = layer.layout == Layout::Row ? matvec_row(layer.weights, x, *layer.units, ctx)
                                                                 : matvec_diag(layer.weights, x, ctx);
            return add(product, layer.bias, ctx);
        }

        PackedMatrix<double> add_packed(const PackedMatrix<double> &a, const PackedMatrix<double> &b,
                                        EngineContext &ctx) {
            PackedMatrix<double> out = a;
            for (std::size_t k = 0; k < out.parts.size(); ++k) {
                out.parts[k] = add(a.parts[k], b.parts[k], ctx);
            }
            return out;
        }

        struct SampleOutcome {
            double loss = 0.0;
            Eigen::VectorXd prediction;
            std::vector<PackedMatrix<double>> grads;
            std::vector<Register> grad_biases;
        };

        SampleOutcome run_sample(const std::vector<DenseLayer> &model, const Sample &sample, EngineContext &ctx,
                                 PhaseRecorder *rec) {
            std::vector<DenseLayer> layers = model;
            const int n = static_cast<int>(layers.size());

            Register x = encrypt(encode(sample.features, layers.front().input_length()), ctx);
            for (int l = 0; l < n; ++l) {
                auto &layer = layers[static_cast<std::size_t>(l)];
                const Register in = resize(x, layer.input_length());
                const Register u = measured(rec, Phase::Feedforward, l, "dense", ctx,
                                            [&] { return dense_forward(layer, in, ctx); });
                x = measured(rec, Phase::Feedforward, l, "square", ctx, [&] { return square_forward(u, ctx); });
            }

            const DenseLayer &last = layers.back();
            const Register label = encode(sample.label, last.output_length());
            SampleOutcome out;
            out.prediction = decrypt(x).slots().head(last.out_dim);
            out.loss = mse(out.prediction, sample.label);

            Register delta = measured(rec, Phase::Backprop, n - 1, "square", ctx, [&] {
                return output_delta(x, label, *last.cached_preactivation, last.out_dim, ctx);
            });
            out.grads.resize(static_cast<std::size_t>(n));
            out.grad_biases.resize(static_cast<std::size_t>(n), delta);
            for (int l = n - 1; l >= 0; --l) {
                auto &layer = layers[static_cast<std::size_t>(l)];
                LayerGradients lg = dense_backward(layer, delta, ctx, rec, l);
                out.grads[static_cast<std::size_t>(l)] = std::move(lg.grad);
                out.grad_biases[static_cast<std::size_t>(l)] = lg.grad_bias;
                if (l > 0) {
                    const auto &prev = layers[static_cast<std::size_t>(l - 1)];
                    const Register g = resize(lg.delta_in, prev.output_length());
                    delta = measured(rec, Phase::Backprop, l - 1, "square", ctx,
                                     [&] { return square_backward(g, *prev.cached_preactivation, ctx); });
                }
            }
            return out;
        }

    }  // namespace

    Eigen::MatrixXd DenseLayer::dense_weights() const {
        const Eigen::MatrixXd m = unpack(weights);
        return layout == Layout::Row ? m : Eigen::MatrixXd(m.transpose());
    }

    Eigen::VectorXd DenseLayer::dense_bias() const {
        return bias.slots().head(out_dim);
    }

    DenseLayer make_layer(const DenseParams &params, Layout layout, EngineContext &ctx, const PackingOptions &opts) {
        if (params.w.rows() != params.b.size()) {
            throw DimensionError("make_layer: bias length does not match the weight rows");
        }
        DenseLayer layer;
        layer.layout = layout;
        layer.in_dim = params.w.cols();
        layer.out_dim = params.w.rows();
        if (layout == Layout::Row) {
            layer.weights = pack_row(params.w, ctx);
            layer.units = std::make_shared<const UnitVectorSet<double>>(layer.weights.register_length());
        } else {
            const bool tall = layer.in_dim >= layer.out_dim;
            const bool pad = !(opts.experimental_ragged && tall);
            const Eigen::MatrixXd input_major = params.w.transpose();
            layer.weights = pack_diag(input_major, layout == Layout::DiagonalStepped, ctx, pad);
        }
        layer.bias = encrypt(encode(params.b, layer.output_length()), ctx);
        return layer;
    }

    std::vector<int> NetworkState::dims() const {
        std::vector<int> d;
        if (layers.empty()) {
            return d;
        }
        d.push_back(static_cast<int>(layers.front().in_dim));
        for (const auto &l : layers) {
            d.push_back(static_cast<int>(l.out_dim));
        }
        return d;
    }

    std::vector<DenseParams> NetworkState::dense_parameters() const {
        std::vector<DenseParams> out;
        for (const auto &l : layers) {
            out.push_back({l.dense_weights(), l.dense_bias()});
        }
        return out;
    }

    NetworkState network_from_parameters(std::span<const DenseParams> params, Layout layout, EngineContext &ctx,
                                         const PackingOptions &opts) {
        NetworkState net;
        net.layout = layout;
        net.packing = opts;
        for (std::size_t l = 0; l < params.size(); ++l) {
            if (l > 0 && params[l].w.cols() != params[l - 1].w.rows()) {
                throw DimensionError("adjacent layer dimensions do not match");
            }
            net.layers.push_back(make_layer(params[l], layout, ctx, opts));
        }
        return net;
    }

    NetworkState init_network(std::span<const int> dims, Layout layout, double init_std, std::uint64_t seed,
                              EngineContext &ctx, const PackingOptions &opts) {
        const auto params = initial_parameters(dims, init_std, seed);
        return network_from_parameters(params, layout, ctx, opts);
    }

    Register square_forward(const Register &u, EngineContext &ctx) {
        return mul(u, u, ctx);
    }

    Register square_backward(const Register &g, const Register &u, EngineContext &ctx) {
        return mul(g, add(u, u, ctx), ctx);
    }

    Register dense_forward(DenseLayer &layer, const Register &x, EngineContext &ctx) {
        Register u = forward_layer(layer, x, ctx);
        layer.cached_input = x;
        layer.cached_preactivation = u;
        return u;
    }

    LossGrad mse_loss_grad(const Register &pred, const Register &label, Eigen::Index out_dim, EngineContext &ctx) {
        if (pred.size() != label.size() || out_dim < 1 || out_dim > pred.size()) {
            throw DimensionError("mse_loss_grad: prediction, label and out_dim disagree");
        }
        const Eigen::VectorXd p = pred.is_cipher() ? decrypt(pred).slots() : pred.slots();
        const double loss = (p.head(out_dim) - label.slots().head(out_dim)).squaredNorm() /
                            static_cast<double>(out_dim);
        const Register diff = sub(pred, label, ctx);
        return {loss, mul(diff, prefix_mask<double>(out_dim, pred.size()), ctx)};
    }

    Register output_delta(const Register &pred, const Register &label, const Register &u, Eigen::Index out_dim,
                          EngineContext &ctx) {
        if (pred.size() != label.size() || pred.size() != u.size() || out_dim < 1 || out_dim > pred.size()) {
            throw DimensionError("output_delta: prediction, label and pre-activation disagree");
        }
        const Register masked_slope = mul(prefix_mask<double>(out_dim, u.size()), add(u, u, ctx), ctx);
        return mul(sub(pred, label, ctx), masked_slope, ctx);
    }

    void transition(DenseLayer &layer, EngineContext &ctx, const TransposeOptions &opts) {
        switch (layer.layout) {
            case Layout::Row:
                layer.transposed = transpose_row(layer.weights, *layer.units, ctx);
                break;
            case Layout::Diagonal:
                layer.transposed = transpose_diag(layer.weights, ctx, opts);
                break;
            case Layout::DiagonalStepped:
                layer.transposed = transpose_diag_stepped(layer.weights, ctx, opts);
                break;
        }
    }

    LayerGradients dense_backward(DenseLayer &layer, const Register &delta_out, EngineContext &ctx,
                                  PhaseRecorder *rec, int layer_index) {
        if (!layer.cached_input || !layer.cached_preactivation) {
            throw StateError("dense_backward: no cached forward pass");
        }
        if (!layer.transposed) {
            throw StateError("dense_backward: transition has not run for this layer");
        }
        if (delta_out.size() != layer.output_length()) {
            throw DimensionError("dense_backward: delta has the wrong length");
        }
        const bool row = layer.layout == Layout::Row;
        Register delta_in = measured(rec, Phase::Backprop, layer_index, "dense", ctx, [&] {
            return row ? matvec_row(*layer.transposed, delta_out, *layer.units, ctx)
                       : matvec_diag(*layer.transposed, delta_out, ctx);
        });
        PackedMatrix<double> grad = measured(rec, Phase::Gradient, layer_index, "outer", ctx, [&] {
            return row ? grad_outer_row(delta_out, *layer.cached_input, layer.weights.shape, *layer.units, ctx)
                       : grad_outer_diag(delta_out, *layer.cached_input, layer.weights.shape, ctx, layer.layout);
        });
        return {std::move(delta_in), std::move(grad), delta_out};
    }

    void sgd_update(DenseLayer &layer, const PackedMatrix<double> &grad, const Register &grad_bias, double lr,
                    EngineContext &ctx) {
        if (grad.layout != layer.weights.layout || !(grad.shape == layer.weights.shape) ||
            grad.parts.size() != layer.weights.parts.size() || grad.replicated_tail != layer.weights.replicated_tail) {
            throw LayoutError("sgd_update: gradient packing differs from the weight packing");
        }
        if (grad_bias.size() != layer.bias.size()) {
            throw DimensionError("sgd_update: bias gradient has the wrong length");
        }
        const Register rate = constant(lr, layer.weights.register_length());
        for (std::size_t k = 0; k < grad.parts.size(); ++k) {
            layer.weights.parts[k] = sub(layer.weights.parts[k], mul(grad.parts[k], rate, ctx), ctx);
        }
        layer.bias = sub(layer.bias, mul(grad_bias, rate, ctx), ctx);
        layer.transposed.reset();
        layer.cached_input.reset();
        layer.cached_preactivation.reset();
    }

    void repack(NetworkState &net, const EngineContext &ctx) {
        for (auto &layer : net.layers) {
            for (auto &part : layer.weights.parts) {
                part = refresh(part, ctx);
            }
            layer.bias = refresh(layer.bias, ctx);
            layer.transposed.reset();
            layer.cached_input.reset();
            layer.cached_preactivation.reset();
        }
    }

    Eigen::VectorXd predict(const NetworkState &net, const Eigen::VectorXd &features, EngineContext &ctx) {
        Register x = encrypt(encode(features, net.layers.front().input_length()), ctx);
        for (const auto &layer : net.layers) {
            x = square_forward(forward_layer(layer, resize(x, layer.input_length()), ctx), ctx);
        }
        return decrypt(x).slots().head(net.layers.back().out_dim);
    }

    BatchResult train_batch(NetworkState &net, std::span<const Sample> batch, EngineContext &ctx,
                            const StepOptions &opts) {
        if (batch.empty()) {
            throw ConfigError("train_batch: empty batch");
        }
        PhaseRecorder *rec = opts.recorder;
        EngineContext bctx = ctx.fork(opts.stream);
        const TransposeOptions topts{net.packing.experimental_ragged};
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            measured(rec, Phase::Transition, static_cast<int>(l), "transpose", bctx,
                     [&] { transition(net.layers[l], bctx, topts); });
        }

        std::vector<SampleOutcome> outcomes(batch.size());
        parallel_for(batch.size(), opts.threads, [&](std::size_t i) {
            EngineContext sctx = bctx.fork(i);
            outcomes[i] = run_sample(net.layers, batch[i], sctx, rec);
            bctx.merge(sctx);
        });

        BatchResult res;
        const std::size_t n_layers = net.layers.size();
        res.grads = outcomes.front().grads;
        res.grad_biases = outcomes.front().grad_biases;
        for (std::size_t l = 0; l < n_layers; ++l) {
            measured(rec, Phase::Update, static_cast<int>(l), "batch-sum", bctx, [&] {
                for (std::size_t i = 1; i < outcomes.size(); ++i) {
                    res.grads[l] = add_packed(res.grads[l], outcomes[i].grads[l], bctx);
                    res.grad_biases[l] = add(res.grad_biases[l], outcomes[i].grad_biases[l], bctx);
                }
            });
        }
        // mean gradient: the 1/B factor rides on the learning-rate multiply
        const double step = net.hyper.learning_rate / static_cast<double>(batch.size());
        for (std::size_t l = 0; l < n_layers; ++l) {
            measured(rec, Phase::Update, static_cast<int>(l), "sgd", bctx,
                     [&] { sgd_update(net.layers[l], res.grads[l], res.grad_biases[l], step, bctx); });
        }

        for (const auto &o : outcomes) {
            res.loss += o.loss;
            res.predictions.push_back(o.prediction);
        }
        res.loss /= static_cast<double>(outcomes.size());
        res.counters = bctx.counters();
        res.min_level_reached = bctx.min_level();
        ctx.merge(bctx);
        if (opts.repack_after) {
            repack(net, ctx);
        }
        return res;
    }

    std::pair<double, double> evaluate(const NetworkState &net, std::span<const Sample> samples,
                                       const EngineContext &ctx, std::uint64_t stream) {
        if (samples.empty()) {
            return {0.0, 0.0};
        }
        EngineContext scratch = ctx.fork(stream);
        double loss = 0.0;
        std::size_t correct = 0;
        for (const auto &s : samples) {
            const Eigen::VectorXd p = predict(net, s.features, scratch);
            loss += mse(p, s.label);
            correct += argmax_matches(p, s.label) ? 1 : 0;
        }
        const auto n = static_cast<double>(samples.size());
        return {loss / n, static_cast<double>(correct) / n};
    }

    TrainingMetrics train(NetworkState &net, const TrainingData &data, EngineContext &ctx, const TrainConfig &config) {
        if (data.train.empty()) {
            throw DataError("train: empty training set");
        }
        if (net.hyper.batch_size < 1 || net.hyper.epochs < 0) {
            throw ConfigError("train: batch size must be positive and epochs non-negative");
        }
        TrainingMetrics metrics;
        const auto batch_size = static_cast<std::size_t>(net.hyper.batch_size);
        std::vector<Sample> batch;
        for (int e = config.start_epoch; e < config.start_epoch + net.hyper.epochs; ++e) {
            const auto order = shuffled_order(data.train.size(), config.seed, e);
            for (std::size_t b = 0; b * batch_size < order.size(); ++b) {
                batch.clear();
                for (std::size_t i = b * batch_size; i < std::min(order.size(), (b + 1) * batch_size); ++i) {
                    batch.push_back(data.train[order[i]]);
                }
                StepOptions step;
                step.threads = config.threads;
                step.stream = (static_cast<std::uint64_t>(e) << 32) | b;
                try {
                    train_batch(net, batch, ctx, step);
                } catch (const DepthBudgetError &err) {
                    throw DepthBudgetError("epoch " + std::to_string(e + 1) + ", batch " + std::to_string(b + 1) +
                                           ": " + err.what());
                }
            }
            const std::uint64_t eval_stream = (static_cast<std::uint64_t>(e) << 32) | 0xffffffffULL;
            const auto [train_loss, train_acc] = evaluate(net, data.train, ctx, eval_stream);
            const auto [test_loss, test_acc] = evaluate(net, data.test, ctx, eval_stream ^ 0x1ULL);
            EpochMetrics m;
            m.epoch = e + 1;
            m.train_loss = train_loss;
            m.test_loss = test_loss;
            m.train_acc = train_acc;
            m.test_acc = test_acc;
            const OpCounters c = ctx.counters();
            m.cum_mults = c.mults();
            m.cum_rotations = c.rotations;
            m.min_level = ctx.min_level();
            metrics.epochs.push_back(m);
            if (config.on_epoch) {
                config.on_epoch(m);
            }
        }
        metrics.counters = ctx.counters();
        metrics.min_level = ctx.min_level();
        return metrics;
    }

}  // namespace hetrain
