// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

/* Idealized model of a CKKS ciphertext: a cyclic register of real slots with a
 * remaining-level counter. Every homomorphic-style operation goes through the
 * free functions in this header so that the EngineContext sees an exact count
 * of multiplications, rotations and additions.
 *
 * Registers carry their own length. Rotation wraps modulo that length, which is
 * what the packed transposition relies on; a real backend has one fixed
 * power-of-two slot count instead.
 */

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <limits>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "hetrain/errors.hpp"

namespace hetrain {

    enum class SlotKind { Plain, Cipher };

    /// Level reported by Plain registers. Plain operands never bound a result level.
    inline constexpr int kUnboundedLevel = std::numeric_limits<int>::max();

    template <typename Scalar>
    class SlotRegister {
    public:
        using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

        SlotRegister(Vector slots, SlotKind kind, int level)
            : slots_(std::move(slots)), kind_(kind), level_(kind == SlotKind::Plain ? kUnboundedLevel : level) {
            if (slots_.size() < 1) {
                throw DimensionError("slot register must have at least one slot");
            }
            if (kind_ == SlotKind::Cipher && level_ < 0) {
                throw DepthBudgetError("cipher register created below level 0");
            }
        }

        Eigen::Index size() const {
            return slots_.size();
        }
        const Vector &slots() const {
            return slots_;
        }
        Scalar operator[](Eigen::Index i) const {
            return slots_[i];
        }
        SlotKind kind() const {
            return kind_;
        }
        bool is_cipher() const {
            return kind_ == SlotKind::Cipher;
        }
        int level() const {
            return level_;
        }

    private:
        Vector slots_;
        SlotKind kind_;
        int level_;
    };

    using Register = SlotRegister<double>;

    struct OpCounters {
        std::uint64_t ct_mults = 0;
        std::uint64_t pt_mults = 0;
        std::uint64_t rotations = 0;
        std::uint64_t additions = 0;

        /// Both kinds consume a level, so reports lump them together.
        std::uint64_t mults() const {
            return ct_mults + pt_mults;
        }

        OpCounters &operator+=(const OpCounters &o) {
            ct_mults += o.ct_mults;
            pt_mults += o.pt_mults;
            rotations += o.rotations;
            additions += o.additions;
            return *this;
        }
        friend OpCounters operator+(OpCounters a, const OpCounters &b) {
            return a += b;
        }
        /// Delta between two snapshots of the same monotone counter set.
        friend OpCounters operator-(const OpCounters &a, const OpCounters &b) {
            return {a.ct_mults - b.ct_mults, a.pt_mults - b.pt_mults, a.rotations - b.rotations,
                    a.additions - b.additions};
        }
        friend bool operator==(const OpCounters &, const OpCounters &) = default;
    };

    /// Level budget, noise configuration and the operation counters.
    ///
    /// Counter increments are atomic, so one context may be shared by several
    /// workers. For reproducible noise under concurrency give each worker its own
    /// fork() and merge() the shards afterwards.
    class EngineContext {
    public:
        explicit EngineContext(int level_budget, double noise_std = 0.0, std::uint64_t seed = 0)
            : level_budget_(level_budget), noise_std_(noise_std), seed_(seed), rng_(seed), min_level_(level_budget) {
            if (level_budget < 1) {
                throw ConfigError("level budget must be positive");
            }
            if (!(noise_std >= 0.0)) {
                throw ConfigError("noise standard deviation must be non-negative");
            }
        }

        EngineContext(const EngineContext &) = delete;
        EngineContext &operator=(const EngineContext &) = delete;

        int level_budget() const {
            return level_budget_;
        }
        double noise_std() const {
            return noise_std_;
        }
        std::uint64_t seed() const {
            return seed_;
        }

        OpCounters counters() const {
            return {ct_mults_.load(), pt_mults_.load(), rotations_.load(), additions_.load()};
        }

        /// Lowest level of any cipher register produced under this context.
        int min_level() const {
            return min_level_.load();
        }

        /// Fresh counters, same budget and noise, independent noise stream.
        EngineContext fork(std::uint64_t stream) const {
            return EngineContext(level_budget_, noise_std_, mix_seed(seed_, stream));
        }

        void merge(const EngineContext &shard) {
            absorb(shard.counters(), shard.min_level());
        }

        /// Adds externally recorded counts (checkpoint restore, shard merge).
        void absorb(const OpCounters &c, int min_level) {
            ct_mults_ += c.ct_mults;
            pt_mults_ += c.pt_mults;
            rotations_ += c.rotations;
            additions_ += c.additions;
            note_level(min_level);
        }

        void count_rotation() {
            ++rotations_;
        }
        void count_addition() {
            ++additions_;
        }
        void count_mult(bool both_cipher) {
            if (both_cipher) {
                ++ct_mults_;
            } else {
                ++pt_mults_;
            }
        }
        void note_level(int level) {
            int cur = min_level_.load();
            while (level < cur && !min_level_.compare_exchange_weak(cur, level)) {
            }
        }

        double sample_noise() {
            std::lock_guard<std::mutex> lock(rng_mutex_);
            return noise_(rng_) * noise_std_;
        }

        static std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
            // splitmix64 finalizer over the pair
            std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            return z ^ (z >> 31);
        }

    private:
        int level_budget_;
        double noise_std_;
        std::uint64_t seed_;

        std::mutex rng_mutex_;
        std::mt19937_64 rng_;
        std::normal_distribution<double> noise_{0.0, 1.0};

        std::atomic<std::uint64_t> ct_mults_{0};
        std::atomic<std::uint64_t> pt_mults_{0};
        std::atomic<std::uint64_t> rotations_{0};
        std::atomic<std::uint64_t> additions_{0};
        std::atomic<int> min_level_;
    };

    namespace detail {
        template <typename Scalar>
        void require_same_length(const SlotRegister<Scalar> &a, const SlotRegister<Scalar> &b, const char *op) {
            if (a.size() != b.size()) {
                throw DimensionError(std::string(op) + ": register lengths differ (" + std::to_string(a.size()) +
                                     " vs " + std::to_string(b.size()) + ")");
            }
        }

        inline Eigen::Index wrap(Eigen::Index k, Eigen::Index n) {
            Eigen::Index m = k % n;
            return m < 0 ? m + n : m;
        }
    }  // namespace detail

    template <typename Scalar>
    SlotRegister<Scalar> encode(std::span<const Scalar> values, Eigen::Index length) {
        if (length < 1 || static_cast<Eigen::Index>(values.size()) > length) {
            throw DimensionError("encode: " + std::to_string(values.size()) + " values do not fit in " +
                                 std::to_string(length) + " slots");
        }
        typename SlotRegister<Scalar>::Vector v = SlotRegister<Scalar>::Vector::Zero(length);
        std::copy(values.begin(), values.end(), v.data());
        return SlotRegister<Scalar>(std::move(v), SlotKind::Plain, 0);
    }

    template <typename Derived>
    auto encode(const Eigen::MatrixBase<Derived> &values, Eigen::Index length) {
        using Scalar = typename Derived::Scalar;
        typename SlotRegister<Scalar>::Vector tmp = values;
        return encode(std::span<const Scalar>(tmp.data(), static_cast<std::size_t>(tmp.size())), length);
    }

    /// Plain register with every slot equal to value.
    template <typename Scalar>
    SlotRegister<Scalar> constant(Scalar value, Eigen::Index length) {
        return SlotRegister<Scalar>(SlotRegister<Scalar>::Vector::Constant(length, value), SlotKind::Plain, 0);
    }

    /// Plain register with value in slots [0, count) and zeros after.
    template <typename Scalar>
    SlotRegister<Scalar> prefix_mask(Eigen::Index count, Eigen::Index length, Scalar value = Scalar(1)) {
        typename SlotRegister<Scalar>::Vector v = SlotRegister<Scalar>::Vector::Zero(length);
        v.head(std::min(count, length)).setConstant(value);
        return SlotRegister<Scalar>(std::move(v), SlotKind::Plain, 0);
    }

    template <typename Scalar>
    SlotRegister<Scalar> encrypt(const SlotRegister<Scalar> &p, const EngineContext &ctx) {
        if (p.is_cipher()) {
            throw KindError("encrypt: register is already a ciphertext");
        }
        return SlotRegister<Scalar>(p.slots(), SlotKind::Cipher, ctx.level_budget());
    }

    template <typename Scalar>
    SlotRegister<Scalar> decrypt(const SlotRegister<Scalar> &a) {
        if (!a.is_cipher()) {
            throw KindError("decrypt: register is not a ciphertext");
        }
        return SlotRegister<Scalar>(a.slots(), SlotKind::Plain, 0);
    }

    /// Right rotation by k (left for negative k): result[(j + k) mod L] = a[j].
    template <typename Scalar>
    SlotRegister<Scalar> rotate(const SlotRegister<Scalar> &a, Eigen::Index k, EngineContext &ctx) {
        const Eigen::Index n = a.size();
        const Eigen::Index shift = detail::wrap(k, n);
        if (shift == 0) {
            return a;
        }
        typename SlotRegister<Scalar>::Vector out(n);
        out.tail(n - shift) = a.slots().head(n - shift);
        out.head(shift) = a.slots().tail(shift);
        if (a.is_cipher()) {
            ctx.count_rotation();
        }
        return SlotRegister<Scalar>(std::move(out), a.kind(), a.level());
    }

    template <typename Scalar>
    SlotRegister<Scalar> add(const SlotRegister<Scalar> &a, const SlotRegister<Scalar> &b, EngineContext &ctx) {
        detail::require_same_length(a, b, "add");
        const bool cipher = a.is_cipher() || b.is_cipher();
        if (cipher) {
            ctx.count_addition();
        }
        return SlotRegister<Scalar>(a.slots() + b.slots(), cipher ? SlotKind::Cipher : SlotKind::Plain,
                                    std::min(a.level(), b.level()));
    }

    /// Counted as an addition.
    template <typename Scalar>
    SlotRegister<Scalar> sub(const SlotRegister<Scalar> &a, const SlotRegister<Scalar> &b, EngineContext &ctx) {
        detail::require_same_length(a, b, "sub");
        const bool cipher = a.is_cipher() || b.is_cipher();
        if (cipher) {
            ctx.count_addition();
        }
        return SlotRegister<Scalar>(a.slots() - b.slots(), cipher ? SlotKind::Cipher : SlotKind::Plain,
                                    std::min(a.level(), b.level()));
    }

    /// Slotwise product. Any product with a Cipher operand consumes one level.
    template <typename Scalar>
    SlotRegister<Scalar> mul(const SlotRegister<Scalar> &a, const SlotRegister<Scalar> &b, EngineContext &ctx) {
        detail::require_same_length(a, b, "mul");
        typename SlotRegister<Scalar>::Vector prod = a.slots().cwiseProduct(b.slots());
        if (!a.is_cipher() && !b.is_cipher()) {
            return SlotRegister<Scalar>(std::move(prod), SlotKind::Plain, 0);
        }
        const int level = std::min(a.level(), b.level());
        if (level < 1) {
            throw DepthBudgetError("mul: operand at level " + std::to_string(level) +
                                   ", the modulus chain is exhausted");
        }
        ctx.count_mult(a.is_cipher() && b.is_cipher());
        ctx.note_level(level - 1);
        if (ctx.noise_std() > 0.0) {
            for (Eigen::Index i = 0; i < prod.size(); ++i) {
                prod[i] += static_cast<Scalar>(ctx.sample_noise());
            }
        }
        return SlotRegister<Scalar>(std::move(prod), SlotKind::Cipher, level - 1);
    }

    /// Reinterprets a register at another length: keeps slots [0, min(L, length)),
    /// zero-fills the rest. Free; it exists because registers carry their own
    /// length and consecutive layers may use different ones.
    template <typename Scalar>
    SlotRegister<Scalar> resize(const SlotRegister<Scalar> &a, Eigen::Index length) {
        if (length == a.size()) {
            return a;
        }
        typename SlotRegister<Scalar>::Vector v = SlotRegister<Scalar>::Vector::Zero(length);
        const Eigen::Index keep = std::min(length, a.size());
        v.head(keep) = a.slots().head(keep);
        return SlotRegister<Scalar>(std::move(v), a.kind(), a.level());
    }

    /// Client-side decrypt and re-encrypt at full budget. Values are untouched
    /// and no homomorphic counter moves.
    template <typename Scalar>
    SlotRegister<Scalar> refresh(const SlotRegister<Scalar> &a, const EngineContext &ctx) {
        return encrypt(decrypt(a), ctx);
    }

}  // namespace hetrain
