// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetrain/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "hetrain/errors.hpp"
#include "hetrain/he_nn.hpp"
#include "hetrain/iris.hpp"
#include "hetrain/metrics_io.hpp"
#include "hetrain/opcount.hpp"
#include "hetrain/plain_trainer.hpp"

namespace hetrain {

    namespace {

        using Clock = std::chrono::steady_clock;

        std::string fixed(double v, int digits) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.*f", digits, v);
            return buf;
        }

        void print_epoch(std::ostream &out, const char *tag, const EpochMetrics &m) {
            out << tag << " epoch " << m.epoch << ": train loss " << fixed(m.train_loss, 6) << ", test loss "
                << fixed(m.test_loss, 6) << ", train acc " << fixed(m.train_acc, 4) << ", test acc "
                << fixed(m.test_acc, 4) << '\n';
        }

        struct EncryptedRun {
            TrainingMetrics metrics;
            NetworkState net;
            std::uint64_t seed = 0;
            int level_budget = 0;
            int epochs_completed = 0;
            double seconds = 0.0;
        };

        EncryptedRun run_encrypted(const RunConfig &cfg, std::optional<Checkpoint> cp, const TrainingData &data,
                                   std::ostream &out) {
            EncryptedRun run;
            int start_epoch = 0;
            run.seed = cp ? cp->seed : cfg.seed;
            run.level_budget = cfg.levels ? *cfg.levels : (cp ? cp->level_budget : cfg.level_budget());
            EngineContext ctx(run.level_budget, cfg.noise_std, run.seed);
            if (cp) {
                run.net = std::move(cp->net);
                start_epoch = cp->epochs_completed;
                ctx.absorb(cp->counters, cp->min_level);
                repack(run.net, ctx);
            } else {
                PackingOptions popts{cfg.experimental_ragged};
                run.net = init_network(cfg.net, cfg.packing, cfg.init_std, run.seed, ctx, popts);
                run.net.hyper.learning_rate = cfg.lr;
                run.net.hyper.batch_size = cfg.batch_size;
            }
            run.net.hyper.epochs = cfg.epochs;
            if (run.net.dims().front() != static_cast<int>(data.train.front().features.size()) ||
                run.net.dims().back() != static_cast<int>(data.train.front().label.size())) {
                throw ConfigError("network dimensions do not match the data (4 features, 3 classes)");
            }

            TrainConfig tc;
            tc.seed = run.seed;
            tc.threads = cfg.worker_count();
            tc.start_epoch = start_epoch;
            tc.on_epoch = [&](const EpochMetrics &m) {
                if (cfg.log_every > 0 && m.epoch % cfg.log_every == 0) {
                    print_epoch(out, "encrypted", m);
                }
            };
            const auto t0 = Clock::now();
            run.metrics = train(run.net, data, ctx, tc);
            run.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
            run.epochs_completed = start_epoch + cfg.epochs;
            return run;
        }

        void report_encrypted(const EncryptedRun &run, std::ostream &out) {
            out << "packing " << to_string(run.net.layout) << ", level budget " << run.level_budget << '\n';
            if (!run.metrics.epochs.empty()) {
                const auto &m = run.metrics.epochs.back();
                out << "final train accuracy " << fixed(m.train_acc, 4) << ", test accuracy " << fixed(m.test_acc, 4)
                    << ", test loss " << fixed(m.test_loss, 6) << '\n';
            }
            out << "total mults " << run.metrics.counters.mults() << " (ct " << run.metrics.counters.ct_mults << ", pt "
                << run.metrics.counters.pt_mults << "), rotations " << run.metrics.counters.rotations
                << ", min level " << run.metrics.min_level << '\n';
            out << "wall time " << fixed(run.seconds, 2) << " s\n";
        }

        TrainingData load_data(const RunConfig &cfg, std::uint64_t seed) {
            return load_iris(cfg.data_path, seed).samples();
        }

    }  // namespace

    int RunConfig::level_budget() const {
        if (levels) {
            return *levels;
        }
        return packing == Layout::Row ? 12 : 9;
    }

    int RunConfig::worker_count() const {
        if (threads > 0) {
            return threads;
        }
        return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    }

    void RunConfig::validate() const {
        if (epochs < 0) {
            throw ConfigError("--epochs must be non-negative");
        }
        if (batch_size < 1) {
            throw ConfigError("--batch-size must be positive");
        }
        if (!(lr >= 0.0) || !std::isfinite(lr)) {
            throw ConfigError("--lr must be a non-negative number");
        }
        if (levels && *levels < 1) {
            throw ConfigError("--levels must be positive");
        }
        if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
            throw ConfigError("--noise-std must be non-negative");
        }
        if (!(init_std >= 0.0) || !std::isfinite(init_std)) {
            throw ConfigError("--init-std must be non-negative");
        }
        if (threads < 0) {
            throw ConfigError("--threads must be non-negative");
        }
        validate_dims(net);
    }

    std::vector<int> parse_dims(const std::string &text) {
        std::vector<int> dims;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                std::size_t used = 0;
                const int d = std::stoi(item, &used);
                if (used != item.size()) {
                    throw std::invalid_argument(item);
                }
                dims.push_back(d);
            } catch (const std::logic_error &) {
                throw ConfigError("invalid network dimensions '" + text + "'");
            }
        }
        validate_dims(dims);
        return dims;
    }

    int run_train(const RunConfig &cfg, std::ostream &out) {
        cfg.validate();
        std::optional<Checkpoint> cp;
        if (!cfg.checkpoint_in.empty()) {
            cp = load_checkpoint(cfg.checkpoint_in);
        }
        // a resumed run keeps the split and the schedule of the original seed
        const TrainingData data = load_data(cfg, cp ? cp->seed : cfg.seed);
        const EncryptedRun run = run_encrypted(cfg, std::move(cp), data, out);
        report_encrypted(run, out);
        if (!cfg.metrics_out.empty()) {
            write_metrics(cfg.metrics_out, run.metrics.epochs);
        }
        if (!cfg.checkpoint_out.empty()) {
            Checkpoint cp;
            cp.net = run.net;
            cp.net.hyper.epochs = run.epochs_completed;
            cp.seed = run.seed;
            cp.level_budget = run.level_budget;
            cp.epochs_completed = run.epochs_completed;
            cp.counters = run.metrics.counters;
            cp.min_level = run.metrics.min_level;
            save_checkpoint(cfg.checkpoint_out, cp);
        }
        return kExitOk;
    }

    int run_opcount(const RunConfig &cfg, std::ostream &out) {
        validate_dims(cfg.net);
        const OpcountReport report = run_opcount(cfg.net, cfg.packing, cfg.seed);
        if (cfg.packing == Layout::Row) {
            out << format_opcount(report);
            const OpcountReport diag = run_opcount(cfg.net, Layout::Diagonal, cfg.seed);
            out << "diag reference: " << diag.cost() << " mults+rotations\n";
            out << "ratio diag/row: " << fixed(static_cast<double>(diag.cost()) / static_cast<double>(report.cost()), 4)
                << '\n';
        } else {
            const OpcountReport row = run_opcount(cfg.net, Layout::Row, cfg.seed);
            out << format_opcount(report, &row);
        }
        return kExitOk;
    }

    int run_compare(const RunConfig &cfg, std::ostream &out) {
        cfg.validate();
        if (!cfg.checkpoint_in.empty()) {
            throw ConfigError("compare starts from a fresh initialization; --checkpoint-in is not supported");
        }
        const TrainingData data = load_data(cfg, cfg.seed);
        const EncryptedRun enc = run_encrypted(cfg, std::nullopt, data, out);

        PlainNetwork plain(initial_parameters(cfg.net, cfg.init_std, cfg.seed));
        Hyper hyper;
        hyper.learning_rate = cfg.lr;
        hyper.batch_size = cfg.batch_size;
        hyper.epochs = cfg.epochs;
        const auto t0 = Clock::now();
        const auto plain_epochs = train_plain(plain, data, hyper, cfg.seed, 0, [&](const EpochMetrics &m) {
            if (cfg.log_every > 0 && m.epoch % cfg.log_every == 0) {
                print_epoch(out, "plaintext", m);
            }
        });
        const double plain_seconds = std::chrono::duration<double>(Clock::now() - t0).count();

        double max_div = 0.0;
        for (std::size_t e = 0; e < plain_epochs.size(); ++e) {
            const auto &a = enc.metrics.epochs[e];
            const auto &b = plain_epochs[e];
            max_div = std::max({max_div, std::abs(a.train_loss - b.train_loss), std::abs(a.test_loss - b.test_loss)});
        }
        report_encrypted(enc, out);
        if (!plain_epochs.empty()) {
            const auto &p = plain_epochs.back();
            const auto &c = enc.metrics.epochs.back();
            out << "plaintext wall time " << fixed(plain_seconds, 2) << " s\n";
            out << "final test accuracy: encrypted " << fixed(c.test_acc, 4) << ", plaintext " << fixed(p.test_acc, 4)
                << '\n';
            out << "final train accuracy: encrypted " << fixed(c.train_acc, 4) << ", plaintext "
                << fixed(p.train_acc, 4) << '\n';
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3e", max_div);
        out << "max per-epoch loss divergence " << buf << '\n';
        if (!cfg.metrics_out.empty()) {
            write_metrics(cfg.metrics_out, enc.metrics.epochs);
        }
        if (!cfg.plain_metrics_out.empty()) {
            write_metrics(cfg.plain_metrics_out, plain_epochs);
        }
        return kExitOk;
    }

    int cli_main(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
        RunConfig cfg;
        std::string packing = "diag";
        std::string net_text = "6,3,1";
        int levels = 0;

        CLI::App app{"Packed-ciphertext neural network training on a simulated CKKS slot engine"};
        app.require_subcommand(1);

        auto add_common = [&](CLI::App *cmd) {
            cmd->add_option("--packing", packing, "row, diag or diag-stepped")->capture_default_str();
            cmd->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
        };
        auto add_training = [&](CLI::App *cmd) {
            add_common(cmd);
            cmd->add_option("--epochs", cfg.epochs, "epochs to train")->capture_default_str();
            cmd->add_option("--batch-size", cfg.batch_size, "samples per batch")->capture_default_str();
            cmd->add_option("--lr", cfg.lr, "learning rate")->capture_default_str();
            cmd->add_option("--levels", levels, "level budget (default 9 diagonal, 12 row)");
            cmd->add_option("--noise-std", cfg.noise_std, "per-slot noise after each cipher multiplication")
                ->capture_default_str();
            cmd->add_option("--init-std", cfg.init_std, "std of the Gaussian initialization")->capture_default_str();
            cmd->add_option("--threads", cfg.threads, "worker threads (0 = all cores)")->capture_default_str();
            cmd->add_option("--data", cfg.data_path, "iris CSV")->capture_default_str();
            cmd->add_option("--metrics-out", cfg.metrics_out, "per-epoch metrics CSV");
            cmd->add_flag("--experimental-ragged", cfg.experimental_ragged,
                          "leave tall layers unpadded (published bounds, inexact)");
            cmd->add_option("--log-every", cfg.log_every, "print metrics every N epochs (0 = never)")
                ->capture_default_str();
        };

        CLI::App *train_cmd = app.add_subcommand("train", "train the 4-10-3 iris network on packed ciphertexts");
        add_training(train_cmd);
        train_cmd->add_option("--checkpoint-out", cfg.checkpoint_out, "write the trained model");
        train_cmd->add_option("--checkpoint-in", cfg.checkpoint_in, "resume from a checkpoint");

        CLI::App *opcount_cmd = app.add_subcommand("opcount", "count operations of one batch-1 iteration");
        add_common(opcount_cmd);
        opcount_cmd->add_option("--net", net_text, "layer dimensions, comma separated")->capture_default_str();

        CLI::App *compare_cmd = app.add_subcommand("compare", "train encrypted and plaintext models side by side");
        add_training(compare_cmd);
        compare_cmd->add_option("--plain-metrics-out", cfg.plain_metrics_out, "plaintext per-epoch metrics CSV");

        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError &e) {
            const int code = app.exit(e, out, err);
            return code == 0 ? kExitOk : kExitConfig;
        }

        try {
            cfg.packing = parse_layout(packing);
            if (levels != 0 || (train_cmd->parsed() && train_cmd->count("--levels") > 0) ||
                (compare_cmd->parsed() && compare_cmd->count("--levels") > 0)) {
                cfg.levels = levels;
            }
            if (opcount_cmd->parsed()) {
                cfg.net = parse_dims(net_text);
                return run_opcount(cfg, out);
            }
            if (train_cmd->parsed()) {
                return run_train(cfg, out);
            }
            return run_compare(cfg, out);
        } catch (const ConfigError &e) {
            err << "configuration error: " << e.what() << '\n';
            return kExitConfig;
        } catch (const DataError &e) {
            err << "data error: " << e.what() << '\n';
            return kExitData;
        } catch (const DepthBudgetError &e) {
            err << "depth budget exhausted: " << e.what() << '\n'
                << "raise --levels or switch to --packing diag (row packing needs a deeper chain)\n";
            return kExitDepth;
        } catch (const Error &e) {
            err << "error: " << e.what() << '\n';
            return kExitFailure;
        }
    }

}  // namespace hetrain
