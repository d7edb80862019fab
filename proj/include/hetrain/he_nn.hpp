// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

/* Dense network with square activations trained on packed, simulated
 * ciphertexts. A batch step follows the client/server split:
 *
 *   server: transition (transpose packed weights), per-sample feedforward and
 *           backprop, gradient reduction, SGD update on the packed weights;
 *   client: encrypts inputs, reads predictions for the loss, and repacks the
 *           model (decrypt + re-encrypt) after every batch.
 */

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hetrain/instrumentation.hpp"
#include "hetrain/packed_linalg.hpp"
#include "hetrain/slot_engine.hpp"
#include "hetrain/training_common.hpp"

namespace hetrain {

    struct PackingOptions {
        /// Leave tall layers unpadded (r > 0) and transpose them with the
        /// published summation bounds. Gradients are wrong; for study only.
        bool experimental_ragged = false;
    };

    struct DenseLayer {
        Layout layout = Layout::Diagonal;
        /// Diagonal layouts pack w^T (input-major); Row packs w.
        PackedMatrix<double> weights;
        Register bias{Register::Vector::Zero(1), SlotKind::Plain, 0};
        Eigen::Index in_dim = 0;
        Eigen::Index out_dim = 0;
        std::shared_ptr<const UnitVectorSet<double>> units;  // Row layout only

        std::optional<PackedMatrix<double>> transposed;
        std::optional<Register> cached_input;
        std::optional<Register> cached_preactivation;

        Eigen::Index input_length() const {
            return weights.register_length();
        }
        Eigen::Index output_length() const {
            return weights.register_length();
        }

        /// Client view: w (out x in) and b.
        Eigen::MatrixXd dense_weights() const;
        Eigen::VectorXd dense_bias() const;
    };

    DenseLayer make_layer(const DenseParams &params, Layout layout, EngineContext &ctx,
                          const PackingOptions &opts = {});

    struct NetworkState {
        std::vector<DenseLayer> layers;
        Hyper hyper;
        Layout layout = Layout::Diagonal;
        PackingOptions packing;

        std::vector<int> dims() const;
        std::vector<DenseParams> dense_parameters() const;
    };

    NetworkState init_network(std::span<const int> dims, Layout layout, double init_std, std::uint64_t seed,
                              EngineContext &ctx, const PackingOptions &opts = {});

    NetworkState network_from_parameters(std::span<const DenseParams> params, Layout layout, EngineContext &ctx,
                                         const PackingOptions &opts = {});

    Register square_forward(const Register &u, EngineContext &ctx);

    /// g * 2u, with 2u formed by an addition so the chain costs one level.
    Register square_backward(const Register &g, const Register &u, EngineContext &ctx);

    /// u = W x + b. Caches x and u on the layer.
    Register dense_forward(DenseLayer &layer, const Register &x, EngineContext &ctx);

    struct LossGrad {
        double loss;
        Register delta;
    };

    /// Loss is read by the client from the decrypted prediction. delta =
    /// mask * (pred - label), zero beyond out_dim; one plaintext multiplication.
    LossGrad mse_loss_grad(const Register &pred, const Register &label, Eigen::Index out_dim, EngineContext &ctx);

    /// Gradient at the last pre-activation, (pred - label) * (mask * 2u). The mask
    /// multiplies u, which sits one level above pred, so the whole output delta
    /// costs one level on the prediction path.
    Register output_delta(const Register &pred, const Register &label, const Register &u, Eigen::Index out_dim,
                          EngineContext &ctx);

    /// Transition phase: packs the transposed weights for backprop.
    void transition(DenseLayer &layer, EngineContext &ctx, const TransposeOptions &opts = {});

    struct LayerGradients {
        Register delta_in;  // gradient w.r.t. the layer input
        PackedMatrix<double> grad;
        Register grad_bias;
    };

    /// delta_out is the gradient at this layer's pre-activation. Requires a cached
    /// forward pass and a completed transition.
    LayerGradients dense_backward(DenseLayer &layer, const Register &delta_out, EngineContext &ctx,
                                  PhaseRecorder *rec = nullptr, int layer_index = -1);

    /// weights -= lr * grad, on the packed registers. One level on grad.
    void sgd_update(DenseLayer &layer, const PackedMatrix<double> &grad, const Register &grad_bias, double lr,
                    EngineContext &ctx);

    /// Client-side decrypt and re-encrypt of every weight and bias register at the
    /// full level budget. Drops transposed weights and caches.
    void repack(NetworkState &net, const EngineContext &ctx);

    /// Encrypted inference on one feature vector; returns the first out_dim slots.
    Eigen::VectorXd predict(const NetworkState &net, const Eigen::VectorXd &features, EngineContext &ctx);

    struct BatchResult {
        double loss = 0.0;  // mean over the batch
        std::vector<Eigen::VectorXd> predictions;
        std::vector<PackedMatrix<double>> grads;  // batch sums, per layer
        std::vector<Register> grad_biases;
        OpCounters counters;
        int min_level_reached = 0;
    };

    struct StepOptions {
        int threads = 1;
        std::uint64_t stream = 0;  // noise stream of this batch
        PhaseRecorder *recorder = nullptr;
        bool repack_after = true;
    };

    /// One full batch step. Counters and noise run on a fork of ctx that is
    /// merged back, so results do not depend on the worker count.
    BatchResult train_batch(NetworkState &net, std::span<const Sample> batch, EngineContext &ctx,
                            const StepOptions &opts = {});

    struct TrainConfig {
        std::uint64_t seed = 1;
        int threads = 1;
        int start_epoch = 0;  // epochs already completed (resume)
        std::function<void(const EpochMetrics &)> on_epoch;
    };

    struct TrainingMetrics {
        std::vector<EpochMetrics> epochs;
        OpCounters counters;
        int min_level = 0;
    };

    /// Loss and accuracy of the encrypted model on samples. Runs on a scratch
    /// context so evaluation never shows up in the training counters.
    std::pair<double, double> evaluate(const NetworkState &net, std::span<const Sample> samples,
                                       const EngineContext &ctx, std::uint64_t stream);

    TrainingMetrics train(NetworkState &net, const TrainingData &data, EngineContext &ctx, const TrainConfig &config);

}  // namespace hetrain
