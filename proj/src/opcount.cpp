// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetrain/opcount.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>
#include <tuple>

#include "hetrain/he_nn.hpp"
#include "hetrain/training_common.hpp"

namespace hetrain {

    namespace {

        constexpr int kDryRunLevels = 64;

        struct PublishedEntry {
            Phase phase;
            int layer;
            const char *step;
            PublishedCount diag;
            PublishedCount row;
        };

        const std::vector<PublishedEntry> &published_631() {
            static const std::vector<PublishedEntry> table = {
                {Phase::Feedforward, 0, "dense", {6, 3}, {3, 18}},
                {Phase::Feedforward, 0, "square", {1, 0}, {1, 0}},
                {Phase::Feedforward, 1, "dense", {3, 1}, {1, 3}},
                {Phase::Feedforward, 1, "square", {1, 0}, {1, 0}},
                {Phase::Transition, 0, "transpose", {0, 3}, {18, 18}},
                {Phase::Transition, 1, "transpose", {0, 1}, {3, 3}},
                {Phase::Backprop, 1, "dense", {1, 3}, {3, 3}},
                {Phase::Backprop, 1, "square", {1, std::nullopt}, {1, 0}},
                {Phase::Backprop, 0, "dense", {3, 6}, {6, 18}},
                {Phase::Backprop, 0, "square", {1, 0}, {1, 0}},
            };
            return table;
        }

        std::string layer_label(const std::vector<int> &dims, Phase phase, int layer, const std::string &step) {
            if (layer < 0 || layer + 1 >= static_cast<int>(dims.size())) {
                return step;
            }
            const int in = dims[static_cast<std::size_t>(layer)];
            const int out = dims[static_cast<std::size_t>(layer) + 1];
            std::ostringstream s;
            if (phase == Phase::Backprop && step == "dense") {
                s << "dense " << out << "->" << in;
            } else if (step == "dense" || step == "transpose") {
                s << step << ' ' << in << "->" << out;
            } else if (step == "outer") {
                s << "outer " << out << 'x' << in;
            } else if (phase == Phase::Backprop && step == "square") {
                s << "square'";
            } else {
                s << step;
            }
            return s.str();
        }

        std::optional<CostEstimate> predicted_cost(const DenseLayer &layer, Phase phase, const std::string &step) {
            const MatrixShape &s = layer.weights.shape;
            const Eigen::Index in = layer.in_dim;
            const Eigen::Index out = layer.out_dim;
            if (step == "square" && phase == Phase::Feedforward) {
                return CostEstimate{1, 0, 1};
            }
            if (step == "transpose") {
                return predict_cost(layer.layout, CostedOp::Transpose, s.n_big, s.m_small);
            }
            if (step != "dense") {
                return std::nullopt;
            }
            const bool backward = phase == Phase::Backprop;
            if (layer.layout == Layout::Row) {
                // rows of the matrix applied: out forward, in backward
                return backward ? predict_cost(Layout::Row, CostedOp::Matvec, out, in)
                                : predict_cost(Layout::Row, CostedOp::Matvec, in, out);
            }
            const bool large_to_small = backward ? s.direction == Direction::OutToIn : s.direction == Direction::InToOut;
            if (!large_to_small) {
                return std::nullopt;
            }
            return predict_cost(layer.layout, CostedOp::Matvec, s.n_big, s.m_small);
        }

        int phase_rank(Phase p) {
            return static_cast<int>(p);
        }

        std::string cell(std::optional<std::uint64_t> v) {
            return v ? std::to_string(*v) : std::string("-");
        }

    }  // namespace

    std::optional<PublishedCount> published_count(const std::vector<int> &dims, Layout layout, Phase phase,
                                                  int layer, const std::string &step) {
        if (dims != std::vector<int>{6, 3, 1}) {
            return std::nullopt;
        }
        for (const auto &e : published_631()) {
            if (e.phase == phase && e.layer == layer && step == e.step) {
                return layout == Layout::Row ? e.row : e.diag;
            }
        }
        return std::nullopt;
    }

    OpcountReport run_opcount(const std::vector<int> &dims, Layout layout, std::uint64_t seed) {
        validate_dims(dims);
        EngineContext ctx(kDryRunLevels, 0.0, seed);
        NetworkState net = init_network(dims, layout, 0.1, seed, ctx);

        std::mt19937_64 rng(EngineContext::mix_seed(seed, 0x0bc0));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        Sample sample;
        sample.features.resize(dims.front());
        for (auto &v : sample.features) {
            v = unit(rng);
        }
        sample.label = Eigen::VectorXd::Zero(dims.back());
        sample.label[0] = 1.0;

        PhaseRecorder rec;
        StepOptions opts;
        opts.recorder = &rec;
        opts.repack_after = false;
        const std::vector<DenseLayer> layers = net.layers;
        const std::vector<Sample> batch{sample};
        const BatchResult res = train_batch(net, batch, ctx, opts);

        OpcountReport report;
        report.dims = dims;
        report.layout = layout;
        report.levels_used = kDryRunLevels - res.min_level_reached;

        std::map<std::tuple<int, int, std::string>, std::size_t> index;
        auto entries = rec.entries();
        std::stable_sort(entries.begin(), entries.end(),
                         [](const PhaseEntry &a, const PhaseEntry &b) { return phase_rank(a.phase) < phase_rank(b.phase); });
        for (const auto &e : entries) {
            const auto key = std::make_tuple(phase_rank(e.phase), e.layer, e.step);
            auto it = index.find(key);
            if (it == index.end()) {
                OpcountRow row;
                row.phase = e.phase;
                row.layer = e.layer;
                row.step = e.step;
                row.label = layer_label(dims, e.phase, e.layer, e.step);
                if (e.layer >= 0) {
                    row.predicted = predicted_cost(layers[static_cast<std::size_t>(e.layer)], e.phase, e.step);
                }
                row.published = published_count(dims, layout, e.phase, e.layer, e.step);
                index.emplace(key, report.rows.size());
                report.rows.push_back(row);
                it = index.find(key);
            }
            report.rows[it->second].measured += e.ops;
            report.total += e.ops;
            if (e.phase == Phase::Feedforward || e.phase == Phase::Transition || e.phase == Phase::Backprop) {
                report.core_total += e.ops;
            }
        }
        return report;
    }

    std::string format_opcount(const OpcountReport &report, const OpcountReport *row_reference) {
        std::ostringstream out;
        out << "network";
        for (std::size_t i = 0; i < report.dims.size(); ++i) {
            out << (i == 0 ? " " : "-") << report.dims[i];
        }
        out << ", packing " << to_string(report.layout) << ", one batch-1 iteration\n";

        const bool preset = report.dims == std::vector<int>{6, 3, 1};
        char line[256];
        std::snprintf(line, sizeof line, "%-10s %-5s %-16s %7s %7s %9s %9s %9s %9s\n", "phase", "layer", "step", "mult",
                      "rot", "pred.mult", "pred.rot", preset ? "pub.mult" : "", preset ? "pub.rot" : "");
        out << line;
        for (const auto &r : report.rows) {
            std::optional<std::uint64_t> pm, pr, qm, qr;
            if (r.predicted) {
                pm = r.predicted->mults;
                pr = r.predicted->rotations;
            }
            if (r.published) {
                if (r.published->mults) {
                    qm = static_cast<std::uint64_t>(*r.published->mults);
                }
                if (r.published->rotations) {
                    qr = static_cast<std::uint64_t>(*r.published->rotations);
                }
            }
            const std::string layer = r.layer < 0 ? "-" : std::to_string(r.layer);
            std::snprintf(line, sizeof line, "%-10s %-5s %-16s %7llu %7llu %9s %9s %9s %9s\n", to_string(r.phase),
                          layer.c_str(), r.label.c_str(), static_cast<unsigned long long>(r.measured.mults()),
                          static_cast<unsigned long long>(r.measured.rotations), cell(pm).c_str(), cell(pr).c_str(),
                          preset ? cell(qm).c_str() : "", preset ? cell(qr).c_str() : "");
            out << line;
        }
        std::snprintf(line, sizeof line, "%-33s %7llu %7llu\n", "total", static_cast<unsigned long long>(report.total.mults()),
                      static_cast<unsigned long long>(report.total.rotations));
        out << line;
        std::snprintf(line, sizeof line, "%-33s %7llu %7llu\n", "total FF+Transition+BP",
                      static_cast<unsigned long long>(report.core_total.mults()),
                      static_cast<unsigned long long>(report.core_total.rotations));
        out << line;
        if (preset) {
            const bool row = report.layout == Layout::Row;
            std::snprintf(line, sizeof line, "%-33s %7d %7d\n", "published total", row ? 38 : 17, row ? 63 : 17);
            out << line;
        }
        out << "mults+rotations: " << report.cost() << " (FF+Transition+BP " << report.core_cost() << ")\n";
        out << "levels consumed: " << report.levels_used << '\n';
        if (row_reference != nullptr) {
            const double ratio = static_cast<double>(report.cost()) / static_cast<double>(row_reference->cost());
            const double core = static_cast<double>(report.core_cost()) / static_cast<double>(row_reference->core_cost());
            std::snprintf(line, sizeof line,
                          "ratio %s/row: %.4f (%llu / %llu), FF+Transition+BP %.4f (%llu / %llu)\n",
                          to_string(report.layout), ratio, static_cast<unsigned long long>(report.cost()),
                          static_cast<unsigned long long>(row_reference->cost()), core,
                          static_cast<unsigned long long>(report.core_cost()),
                          static_cast<unsigned long long>(row_reference->core_cost()));
            out << line;
            if (preset) {
                out << "published ratio diag/row: 0.3366 (34 / 101)\n";
            }
        }
        return out.str();
    }

}  // namespace hetrain
