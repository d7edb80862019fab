// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetrain/metrics_io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "hetrain/errors.hpp"

namespace hetrain {

    namespace {

        using nlohmann::json;

        std::ofstream open_out(const std::string &path) {
            std::ofstream out(path, std::ios::binary);
            if (!out) {
                throw DataError("cannot write '" + path + "'");
            }
            return out;
        }

        std::ifstream open_in(const std::string &path) {
            std::ifstream in(path, std::ios::binary);
            if (!in) {
                throw DataError("cannot read '" + path + "'");
            }
            return in;
        }

        json slots_json(const Register &r) {
            return json(std::vector<double>(r.slots().data(), r.slots().data() + r.size()));
        }

        Register cipher_from_json(const json &j, int level) {
            const auto values = j.get<std::vector<double>>();
            Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
            return Register(std::move(v), SlotKind::Cipher, level);
        }

        const char *to_string(Direction d) {
            return d == Direction::InToOut ? "in-to-out" : "out-to-in";
        }

    }  // namespace

    Layout parse_layout(const std::string &name) {
        for (Layout l : {Layout::Row, Layout::Diagonal, Layout::DiagonalStepped}) {
            if (name == to_string(l)) {
                return l;
            }
        }
        throw ConfigError("unknown packing '" + name + "' (expected row, diag or diag-stepped)");
    }

    void write_metrics(std::ostream &out, const std::vector<EpochMetrics> &rows) {
        out << kMetricsHeader << '\n';
        char line[256];
        for (const auto &m : rows) {
            std::snprintf(line, sizeof line, "%d,%.12g,%.12g,%.6f,%.6f,%" PRIu64 ",%" PRIu64 ",%d\n", m.epoch,
                          m.train_loss, m.test_loss, m.train_acc, m.test_acc, m.cum_mults, m.cum_rotations,
                          m.min_level);
            out << line;
        }
    }

    void write_metrics(const std::string &path, const std::vector<EpochMetrics> &rows) {
        auto out = open_out(path);
        write_metrics(out, rows);
    }

    std::vector<EpochMetrics> read_metrics(std::istream &in) {
        std::string line;
        if (!std::getline(in, line) || line != kMetricsHeader) {
            throw DataError("metrics file: unexpected header");
        }
        std::vector<EpochMetrics> rows;
        int line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) {
                continue;
            }
            EpochMetrics m;
            const int got = std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%" SCNu64 ",%" SCNu64 ",%d", &m.epoch,
                                        &m.train_loss, &m.test_loss, &m.train_acc, &m.test_acc, &m.cum_mults,
                                        &m.cum_rotations, &m.min_level);
            if (got != 8) {
                throw DataError("metrics file: malformed line " + std::to_string(line_no));
            }
            rows.push_back(m);
        }
        return rows;
    }

    std::vector<EpochMetrics> read_metrics(const std::string &path) {
        auto in = open_in(path);
        return read_metrics(in);
    }

    void save_checkpoint(std::ostream &out, const Checkpoint &cp) {
        json doc;
        doc["version"] = kCheckpointVersion;
        doc["layout"] = to_string(cp.net.layout);
        doc["experimental_ragged"] = cp.net.packing.experimental_ragged;
        doc["seed"] = cp.seed;
        doc["level_budget"] = cp.level_budget;
        doc["epochs_completed"] = cp.epochs_completed;
        doc["hyper"] = {{"learning_rate", cp.net.hyper.learning_rate},
                        {"batch_size", cp.net.hyper.batch_size},
                        {"epochs", cp.net.hyper.epochs}};
        doc["counters"] = {{"ct_mults", cp.counters.ct_mults},
                           {"pt_mults", cp.counters.pt_mults},
                           {"rotations", cp.counters.rotations},
                           {"additions", cp.counters.additions}};
        doc["min_level"] = cp.min_level;
        json layers = json::array();
        for (const auto &layer : cp.net.layers) {
            const MatrixShape &s = layer.weights.shape;
            json parts = json::array();
            for (const auto &p : layer.weights.parts) {
                parts.push_back(slots_json(p));
            }
            layers.push_back({{"in_dim", layer.in_dim},
                              {"out_dim", layer.out_dim},
                              {"shape",
                               {{"n_big", s.n_big},
                                {"m_small", s.m_small},
                                {"q", s.q},
                                {"r", s.r},
                                {"orig_in", s.orig_in},
                                {"orig_out", s.orig_out},
                                {"direction", to_string(s.direction)}}},
                              {"replicated_tail", layer.weights.replicated_tail},
                              {"parts", std::move(parts)},
                              {"bias", slots_json(layer.bias)}});
        }
        doc["layers"] = std::move(layers);
        out << doc.dump(1) << '\n';
    }

    void save_checkpoint(const std::string &path, const Checkpoint &cp) {
        auto out = open_out(path);
        save_checkpoint(out, cp);
    }

    Checkpoint load_checkpoint(std::istream &in) {
        try {
            const json doc = json::parse(in);
            if (doc.at("version").get<int>() != kCheckpointVersion) {
                throw DataError("checkpoint: unsupported version " + doc.at("version").dump());
            }
            Checkpoint cp;
            cp.net.layout = parse_layout(doc.at("layout").get<std::string>());
            cp.net.packing.experimental_ragged = doc.value("experimental_ragged", false);
            cp.seed = doc.at("seed").get<std::uint64_t>();
            cp.level_budget = doc.at("level_budget").get<int>();
            cp.epochs_completed = doc.at("epochs_completed").get<int>();
            const auto &h = doc.at("hyper");
            cp.net.hyper.learning_rate = h.at("learning_rate").get<double>();
            cp.net.hyper.batch_size = h.at("batch_size").get<int>();
            cp.net.hyper.epochs = h.at("epochs").get<int>();
            const auto &c = doc.at("counters");
            cp.counters = {c.at("ct_mults").get<std::uint64_t>(), c.at("pt_mults").get<std::uint64_t>(),
                           c.at("rotations").get<std::uint64_t>(), c.at("additions").get<std::uint64_t>()};
            cp.min_level = doc.at("min_level").get<int>();
            if (cp.level_budget < 1) {
                throw DataError("checkpoint: level budget must be positive");
            }

            for (const auto &jl : doc.at("layers")) {
                DenseLayer layer;
                layer.layout = cp.net.layout;
                layer.in_dim = jl.at("in_dim").get<Eigen::Index>();
                layer.out_dim = jl.at("out_dim").get<Eigen::Index>();
                const auto &js = jl.at("shape");
                MatrixShape s;
                s.n_big = js.at("n_big").get<Eigen::Index>();
                s.m_small = js.at("m_small").get<Eigen::Index>();
                s.q = js.at("q").get<Eigen::Index>();
                s.r = js.at("r").get<Eigen::Index>();
                s.orig_in = js.at("orig_in").get<Eigen::Index>();
                s.orig_out = js.at("orig_out").get<Eigen::Index>();
                s.direction = js.at("direction").get<std::string>() == "in-to-out" ? Direction::InToOut
                                                                                    : Direction::OutToIn;
                layer.weights.layout = cp.net.layout;
                layer.weights.shape = s;
                layer.weights.replicated_tail = jl.at("replicated_tail").get<bool>();
                for (const auto &jp : jl.at("parts")) {
                    layer.weights.parts.push_back(cipher_from_json(jp, cp.level_budget));
                }
                layer.bias = cipher_from_json(jl.at("bias"), cp.level_budget);

                const Eigen::Index L = s.register_length();
                const std::size_t expected_parts = cp.net.layout == Layout::Row
                                                       ? static_cast<std::size_t>(s.orig_out)
                                                       : static_cast<std::size_t>(s.padded_in());
                if (s.orig_in != layer.in_dim || s.orig_out != layer.out_dim ||
                    layer.weights.parts.size() != expected_parts || layer.bias.size() != L) {
                    throw DataError("checkpoint: layer shape is inconsistent");
                }
                for (const auto &p : layer.weights.parts) {
                    if (p.size() != L) {
                        throw DataError("checkpoint: part length differs from the register length");
                    }
                }
                if (cp.net.layout == Layout::Row) {
                    layer.units = std::make_shared<const UnitVectorSet<double>>(L);
                }
                if (!cp.net.layers.empty() && cp.net.layers.back().out_dim != layer.in_dim) {
                    throw DataError("checkpoint: adjacent layer dimensions do not match");
                }
                cp.net.layers.push_back(std::move(layer));
            }
            if (cp.net.layers.empty()) {
                throw DataError("checkpoint: no layers");
            }
            return cp;
        } catch (const nlohmann::json::exception &e) {
            throw DataError(std::string("checkpoint: ") + e.what());
        } catch (const ConfigError &e) {
            throw DataError(std::string("checkpoint: ") + e.what());
        }
    }

    Checkpoint load_checkpoint(const std::string &path) {
        auto in = open_in(path);
        return load_checkpoint(in);
    }

}  // namespace hetrain
