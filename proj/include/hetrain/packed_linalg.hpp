// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

/* Packed matrices over slot registers.
 *
 * Diagonal layouts store the input-major matrix B (rows = input axis,
 * cols = output axis) of a linear map y = B^T x. Let R x C be its padded shape
 * and L = max(R, C) the register length. There are R parts; part k holds the
 * generalized diagonal
 *
 *     part_k[j] = B[(k + j) mod R][j]        for j < C,
 *
 * with zeros in slots [C, L) when the matrix is tall (R = L). A matrix obtained
 * by transposing a wide one instead carries B[(k + j) mod R][j mod C] in those
 * slots ("replicated tail"). The stepped layout stores part k pre-rotated right
 * by k.
 *
 * Row layout stores the output-major matrix W (y = W x) one row per register.
 */

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hetrain/errors.hpp"
#include "hetrain/slot_engine.hpp"

namespace hetrain {

    enum class Layout { Row, Diagonal, DiagonalStepped };

    /// Which logical axis of the map is the larger one (N).
    enum class Direction { InToOut, OutToIn };

    inline const char *to_string(Layout l) {
        switch (l) {
            case Layout::Row:
                return "row";
            case Layout::Diagonal:
                return "diag";
            case Layout::DiagonalStepped:
                return "diag-stepped";
        }
        return "?";
    }

    inline bool is_diagonal(Layout l) {
        return l != Layout::Row;
    }

    /// N = q*M + r with N the larger padded dimension and M the smaller one.
    struct MatrixShape {
        Eigen::Index n_big = 1;
        Eigen::Index m_small = 1;
        Eigen::Index q = 1;
        Eigen::Index r = 0;
        Eigen::Index orig_in = 1;
        Eigen::Index orig_out = 1;
        Direction direction = Direction::InToOut;

        /// Shape of a map from in_dim to out_dim. With pad_to_multiple the larger
        /// dimension is rounded up to the next multiple of the smaller (r = 0).
        static MatrixShape for_map(Eigen::Index in_dim, Eigen::Index out_dim, bool pad_to_multiple) {
            if (in_dim < 1 || out_dim < 1) {
                throw DimensionError("matrix dimensions must be positive");
            }
            MatrixShape s;
            s.orig_in = in_dim;
            s.orig_out = out_dim;
            s.direction = in_dim >= out_dim ? Direction::InToOut : Direction::OutToIn;
            s.m_small = std::min(in_dim, out_dim);
            s.n_big = std::max(in_dim, out_dim);
            if (pad_to_multiple) {
                s.n_big = (s.n_big + s.m_small - 1) / s.m_small * s.m_small;
            }
            s.q = s.n_big / s.m_small;
            s.r = s.n_big % s.m_small;
            return s;
        }

        Eigen::Index padded_in() const {
            return direction == Direction::InToOut ? n_big : m_small;
        }
        Eigen::Index padded_out() const {
            return direction == Direction::InToOut ? m_small : n_big;
        }
        Eigen::Index register_length() const {
            return n_big;
        }

        /// Shape of the reverse map; N, M, q, r are shared.
        MatrixShape transposed() const {
            MatrixShape t = *this;
            std::swap(t.orig_in, t.orig_out);
            if (n_big != m_small) {
                t.direction = direction == Direction::InToOut ? Direction::OutToIn : Direction::InToOut;
            }
            return t;
        }

        friend bool operator==(const MatrixShape &, const MatrixShape &) = default;
    };

    template <typename Scalar>
    struct PackedMatrix {
        Layout layout = Layout::Diagonal;
        MatrixShape shape;
        std::vector<SlotRegister<Scalar>> parts;
        /// Diagonal only: tail slots [C, L) of a tall packing hold wrapped copies
        /// instead of zeros.
        bool replicated_tail = false;

        Eigen::Index register_length() const {
            return shape.register_length();
        }

        /// Right-rotation already applied to part k at packing time.
        Eigen::Index part_offset(Eigen::Index k) const {
            return layout == Layout::DiagonalStepped ? k : 0;
        }

        int level() const {
            int lvl = kUnboundedLevel;
            for (const auto &p : parts) {
                lvl = std::min(lvl, p.level());
            }
            return lvl;
        }
    };

    /// Plain u_0..u_{L-1}, u_j = e_j. Used as masks by the row algorithms.
    template <typename Scalar>
    class UnitVectorSet {
    public:
        explicit UnitVectorSet(Eigen::Index length) {
            units_.reserve(static_cast<std::size_t>(length));
            for (Eigen::Index j = 0; j < length; ++j) {
                typename SlotRegister<Scalar>::Vector v = SlotRegister<Scalar>::Vector::Zero(length);
                v[j] = Scalar(1);
                units_.emplace_back(std::move(v), SlotKind::Plain, 0);
            }
        }

        Eigen::Index size() const {
            return static_cast<Eigen::Index>(units_.size());
        }
        const SlotRegister<Scalar> &operator[](Eigen::Index j) const {
            return units_[static_cast<std::size_t>(j)];
        }

    private:
        std::vector<SlotRegister<Scalar>> units_;
    };

    struct CostEstimate {
        std::uint64_t mults = 0;
        std::uint64_t rotations = 0;
        int depth = 0;

        friend bool operator==(const CostEstimate &, const CostEstimate &) = default;
    };

    enum class CostedOp { Matvec, Transpose };

    /// Closed-form operation counts for an N x M map (N >= M). Matvec means the
    /// M x N row-packed matrix for Row (any M, N) and the N -> M direction for
    /// Diagonal.
    inline CostEstimate predict_cost(Layout layout, CostedOp op, Eigen::Index n, Eigen::Index m) {
        const bool any_order = layout == Layout::Row && op == CostedOp::Matvec;
        if (m < 1 || n < 1 || (!any_order && n < m)) {
            throw DimensionError("predict_cost: need N >= M >= 1");
        }
        const auto N = static_cast<std::uint64_t>(n);
        const auto M = static_cast<std::uint64_t>(m);
        if (op == CostedOp::Matvec) {
            if (layout == Layout::Row) {
                return {2 * M, M * N, 2};
            }
            return {N, N - 1, 1};
        }
        switch (layout) {
            case Layout::Row:
                return {N * M, N * M, 1};
            case Layout::Diagonal:
                return {0, (N / M) * M, 0};
            case Layout::DiagonalStepped:
                return {0, M, 0};
        }
        return {};
    }

    namespace detail {
        template <typename Scalar>
        SlotRegister<Scalar> accumulate(std::optional<SlotRegister<Scalar>> &acc, SlotRegister<Scalar> term,
                                        EngineContext &ctx) {
            if (acc) {
                acc = add(*acc, term, ctx);
            } else {
                acc = std::move(term);
            }
            return *acc;
        }

        template <typename Scalar>
        void require_diagonal(const PackedMatrix<Scalar> &p, const char *op) {
            if (!is_diagonal(p.layout)) {
                throw LayoutError(std::string(op) + ": expects a diagonal packing");
            }
        }

        template <typename Scalar>
        void require_length(const SlotRegister<Scalar> &x, Eigen::Index length, const char *op) {
            if (x.size() != length) {
                throw DimensionError(std::string(op) + ": register has " + std::to_string(x.size()) +
                                     " slots, packing expects " + std::to_string(length));
            }
        }

        template <typename Derived>
        void require_nonempty(const Eigen::MatrixBase<Derived> &m, const char *op) {
            if (m.rows() < 1 || m.cols() < 1) {
                throw DimensionError(std::string(op) + ": empty matrix");
            }
        }
    }  // namespace detail

    /// Sum of x rotated by multiples of period: a period-periodic copy of slots
    /// [0, period) over the whole register. Slots beyond period must be zero.
    /// With allow_wrap a period that does not divide the length is accepted and
    /// the last, partial copy wraps onto the first slots.
    template <typename Scalar>
    SlotRegister<Scalar> replicate(const SlotRegister<Scalar> &x, Eigen::Index period, EngineContext &ctx,
                                   bool allow_wrap = false) {
        if (period < 1 || (x.size() % period != 0 && !allow_wrap)) {
            throw UnsupportedShapeError("replicate: period " + std::to_string(period) + " does not divide " +
                                        std::to_string(x.size()));
        }
        SlotRegister<Scalar> acc = x;
        for (Eigen::Index s = 1; s < (x.size() + period - 1) / period; ++s) {
            acc = add(acc, rotate(x, s * period, ctx), ctx);
        }
        return acc;
    }

    /// Plain registers of the diagonal packing of B (rows = input axis).
    template <typename Derived>
    auto diagonal_parts(const Eigen::MatrixBase<Derived> &b, const MatrixShape &shape, bool stepped) {
        using Scalar = typename Derived::Scalar;
        using Vector = typename SlotRegister<Scalar>::Vector;
        const Eigen::Index R = shape.padded_in();
        const Eigen::Index C = shape.padded_out();
        const Eigen::Index L = shape.register_length();
        std::vector<SlotRegister<Scalar>> parts;
        parts.reserve(static_cast<std::size_t>(R));
        for (Eigen::Index k = 0; k < R; ++k) {
            Vector v = Vector::Zero(L);
            for (Eigen::Index j = 0; j < C; ++j) {
                const Eigen::Index row = (k + j) % R;
                const Scalar value = (row < b.rows() && j < b.cols()) ? b(row, j) : Scalar(0);
                v[stepped ? (j + k) % L : j] = value;
            }
            parts.emplace_back(std::move(v), SlotKind::Plain, 0);
        }
        return parts;
    }

    /// Diagonal packing of the input-major matrix b, encrypted at full budget.
    /// Stepped pre-rotation happens on plaintext and is not counted.
    template <typename Derived>
    auto pack_diag(const Eigen::MatrixBase<Derived> &b, bool stepped, EngineContext &ctx, bool pad_to_multiple = true) {
        using Scalar = typename Derived::Scalar;
        detail::require_nonempty(b, "pack_diag");
        PackedMatrix<Scalar> out;
        out.layout = stepped ? Layout::DiagonalStepped : Layout::Diagonal;
        out.shape = MatrixShape::for_map(b.rows(), b.cols(), pad_to_multiple);
        for (auto &p : diagonal_parts(b, out.shape, stepped)) {
            out.parts.push_back(encrypt(p, ctx));
        }
        return out;
    }

    /// Row packing of the output-major matrix w; register length max(rows, cols).
    template <typename Derived>
    auto pack_row(const Eigen::MatrixBase<Derived> &w, EngineContext &ctx) {
        using Scalar = typename Derived::Scalar;
        using Vector = typename SlotRegister<Scalar>::Vector;
        detail::require_nonempty(w, "pack_row");
        PackedMatrix<Scalar> out;
        out.layout = Layout::Row;
        out.shape = MatrixShape::for_map(w.cols(), w.rows(), false);
        const Eigen::Index L = out.shape.register_length();
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            Vector v = Vector::Zero(L);
            v.head(w.cols()) = w.row(i).transpose();
            out.parts.push_back(encrypt(SlotRegister<Scalar>(std::move(v), SlotKind::Plain, 0), ctx));
        }
        return out;
    }

    /// Dense matrix behind a packing, unpadded: B (in x out) for diagonal
    /// layouts, W (out x in) for Row. Reads slots directly (client view).
    template <typename Scalar>
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> unpack(const PackedMatrix<Scalar> &p) {
        const MatrixShape &s = p.shape;
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m;
        if (p.layout == Layout::Row) {
            m.resize(s.orig_out, s.orig_in);
            for (Eigen::Index i = 0; i < s.orig_out; ++i) {
                m.row(i) = p.parts[static_cast<std::size_t>(i)].slots().head(s.orig_in).transpose();
            }
            return m;
        }
        const Eigen::Index R = s.padded_in();
        const Eigen::Index L = s.register_length();
        m.resize(s.orig_in, s.orig_out);
        for (Eigen::Index r = 0; r < s.orig_in; ++r) {
            for (Eigen::Index c = 0; c < s.orig_out; ++c) {
                const Eigen::Index k = detail::wrap(r - c, R);
                m(r, c) = p.parts[static_cast<std::size_t>(k)][(c + p.part_offset(k)) % L];
            }
        }
        return m;
    }

    /// Row-packed y = W x: rotate-and-sum inner products, rotate into place,
    /// isolate with a unit vector, sum. Two levels.
    template <typename Scalar>
    SlotRegister<Scalar> matvec_row(const PackedMatrix<Scalar> &w, const SlotRegister<Scalar> &x,
                                    const UnitVectorSet<Scalar> &units, EngineContext &ctx) {
        if (w.layout != Layout::Row) {
            throw LayoutError("matvec_row: expects a row packing");
        }
        detail::require_length(x, w.register_length(), "matvec_row");
        if (units.size() != w.register_length()) {
            throw DimensionError("matvec_row: unit vector set has the wrong length");
        }
        const Eigen::Index cols = w.shape.orig_in;
        std::optional<SlotRegister<Scalar>> result;
        for (std::size_t i = 0; i < w.parts.size(); ++i) {
            const SlotRegister<Scalar> prod = mul(w.parts[i], x, ctx);
            SlotRegister<Scalar> inner = prod;
            for (Eigen::Index s = 1; s < cols; ++s) {
                inner = add(inner, rotate(prod, -s, ctx), ctx);
            }
            const auto idx = static_cast<Eigen::Index>(i);
            detail::accumulate(result, mul(rotate(inner, idx, ctx), units[idx], ctx), ctx);
        }
        return *result;
    }

    /// Diagonal-packed y = B^T x as a sum of part-times-rotated-input products.
    /// One level. A wide packing first replicates x with period R; a replicated
    /// tail yields output replicated with period C. Readers take slots [0, out).
    template <typename Scalar>
    SlotRegister<Scalar> matvec_diag(const PackedMatrix<Scalar> &w, const SlotRegister<Scalar> &x,
                                     EngineContext &ctx) {
        detail::require_diagonal(w, "matvec_diag");
        detail::require_length(x, w.register_length(), "matvec_diag");
        const Eigen::Index R = w.shape.padded_in();
        const SlotRegister<Scalar> input = R < w.register_length() ? replicate(x, R, ctx, w.shape.r != 0) : x;
        std::optional<SlotRegister<Scalar>> result;
        for (Eigen::Index k = 0; k < R; ++k) {
            const auto &part = w.parts[static_cast<std::size_t>(k)];
            if (w.part_offset(k) == 0) {
                detail::accumulate(result, mul(part, rotate(input, -k, ctx), ctx), ctx);
            } else {
                // rot(part, -k) * rot(x, -k) == rot(part * x, -k)
                detail::accumulate(result, rotate(mul(part, input, ctx), -k, ctx), ctx);
            }
        }
        return *result;
    }

    /// Row packing of W^T from row packing of W: every entry isolated by a unit
    /// vector and rotated into its new row. One level.
    template <typename Scalar>
    PackedMatrix<Scalar> transpose_row(const PackedMatrix<Scalar> &w, const UnitVectorSet<Scalar> &units,
                                       EngineContext &ctx) {
        if (w.layout != Layout::Row) {
            throw LayoutError("transpose_row: expects a row packing");
        }
        if (units.size() != w.register_length()) {
            throw DimensionError("transpose_row: unit vector set has the wrong length");
        }
        const Eigen::Index rows = w.shape.orig_out;
        const Eigen::Index cols = w.shape.orig_in;
        PackedMatrix<Scalar> out;
        out.layout = Layout::Row;
        out.shape = w.shape.transposed();
        for (Eigen::Index j = 0; j < cols; ++j) {
            std::optional<SlotRegister<Scalar>> d;
            for (Eigen::Index i = 0; i < rows; ++i) {
                const auto masked = mul(w.parts[static_cast<std::size_t>(i)], units[j], ctx);
                detail::accumulate(d, rotate(masked, i - j, ctx), ctx);
            }
            out.parts.push_back(*d);
        }
        return out;
    }

    struct TransposeOptions {
        /// Allow r > 0 using the unpadded e_i = q / q+1 summation bounds as
        /// published. Those bounds over-tile the cyclic slots; results are wrong.
        bool experimental_ragged = false;
    };

    namespace detail {
        /// Shared rotate-and-add assembly. fetch(k, shift) yields the unstepped
        /// part k rotated by shift, absorbing any stepped pre-rotation.
        template <typename Scalar>
        PackedMatrix<Scalar> transpose_diag_impl(const PackedMatrix<Scalar> &c, EngineContext &ctx,
                                                 const TransposeOptions &opts) {
            const MatrixShape &s = c.shape;
            const Eigen::Index N = s.n_big;
            const Eigen::Index M = s.m_small;
            const Eigen::Index R = s.padded_in();
            auto fetch = [&](Eigen::Index k, Eigen::Index shift) {
                return rotate(c.parts[static_cast<std::size_t>(k)], shift - c.part_offset(k), ctx);
            };

            PackedMatrix<Scalar> out;
            out.layout = Layout::Diagonal;
            out.shape = s.transposed();

            if (R == N) {
                // tall (N parts) -> wide (M parts)
                for (Eigen::Index i = 0; i < M; ++i) {
                    std::optional<SlotRegister<Scalar>> d;
                    if (c.replicated_tail) {
                        const Eigen::Index k = wrap(-i, N);
                        d = fetch(k, k);
                    } else if (s.r == 0) {
                        // pieces s*M - i, s = 0..q-1, tile the N cyclic slots exactly once
                        for (Eigen::Index step = 0; step < s.q; ++step) {
                            const Eigen::Index shift = step * M - i;
                            accumulate(d, fetch(wrap(shift, N), shift), ctx);
                        }
                    } else if (opts.experimental_ragged) {
                        const Eigen::Index e = i <= M - s.r ? s.q : s.q + 1;
                        for (Eigen::Index step = 0; step <= e; ++step) {
                            const Eigen::Index shift = step * M - i;
                            accumulate(d, fetch(wrap(shift, N), shift), ctx);
                        }
                    } else {
                        throw UnsupportedShapeError("transpose_diag: N = " + std::to_string(N) +
                                                    " is not a multiple of M = " + std::to_string(M) +
                                                    " (pad the matrix or enable the experimental ragged path)");
                    }
                    out.parts.push_back(*d);
                }
            } else {
                // wide (M parts) -> tall (N parts); tail slots come out replicated
                if (s.r != 0) {
                    throw UnsupportedShapeError("transpose_diag: wide packing needs M to divide N");
                }
                out.replicated_tail = true;
                if (c.layout == Layout::DiagonalStepped) {
                    // Output part k is rot(C_j, -k) with j = -k mod M. Kept stepped it
                    // is plain C_j, so each source part is rotated once and reused.
                    out.layout = Layout::DiagonalStepped;
                    std::vector<SlotRegister<Scalar>> unstepped;
                    for (Eigen::Index j = 0; j < R; ++j) {
                        unstepped.push_back(fetch(j, 0));
                    }
                    for (Eigen::Index k = 0; k < N; ++k) {
                        out.parts.push_back(unstepped[static_cast<std::size_t>(wrap(-k, R))]);
                    }
                } else {
                    for (Eigen::Index k = 0; k < N; ++k) {
                        out.parts.push_back(fetch(wrap(-k, R), -k));
                    }
                }
            }
            return out;
        }
    }  // namespace detail

    /// Diagonal packing of the transposed map, by rotation and addition only.
    template <typename Scalar>
    PackedMatrix<Scalar> transpose_diag(const PackedMatrix<Scalar> &c, EngineContext &ctx,
                                        const TransposeOptions &opts = {}) {
        if (c.layout != Layout::Diagonal) {
            throw LayoutError("transpose_diag: expects an unstepped diagonal packing");
        }
        return detail::transpose_diag_impl(c, ctx, opts);
    }

    /// Same result as transpose_diag when the input has N parts: the stepped
    /// pre-rotation lines every piece up with its target slots, so no ciphertext
    /// rotation remains. An input with M parts yields a stepped packing of the
    /// transpose (same unpacked matrix) for M - 1 rotations.
    template <typename Scalar>
    PackedMatrix<Scalar> transpose_diag_stepped(const PackedMatrix<Scalar> &c, EngineContext &ctx,
                                                const TransposeOptions &opts = {}) {
        if (c.layout != Layout::DiagonalStepped) {
            throw LayoutError("transpose_diag_stepped: expects a stepped diagonal packing");
        }
        return detail::transpose_diag_impl(c, ctx, opts);
    }

    /// Gradient of the input-major matrix, G[r][c] = x[r] * delta[c], packed like
    /// the weights it updates. delta must be zero beyond the output dimension,
    /// x zero beyond the input dimension. One level on delta.
    template <typename Scalar>
    PackedMatrix<Scalar> grad_outer_diag(const SlotRegister<Scalar> &delta, const SlotRegister<Scalar> &x,
                                         const MatrixShape &shape, EngineContext &ctx,
                                         Layout layout = Layout::Diagonal) {
        if (!is_diagonal(layout)) {
            throw LayoutError("grad_outer_diag: expects a diagonal layout");
        }
        const Eigen::Index L = shape.register_length();
        detail::require_length(delta, L, "grad_outer_diag");
        detail::require_length(x, L, "grad_outer_diag");
        const Eigen::Index R = shape.padded_in();
        const SlotRegister<Scalar> input = R < L ? replicate(x, R, ctx, shape.r != 0) : x;

        PackedMatrix<Scalar> g;
        g.layout = layout;
        g.shape = shape;
        for (Eigen::Index k = 0; k < R; ++k) {
            if (layout == Layout::DiagonalStepped) {
                // rot(rot(x, -k) * delta, k) == x * rot(delta, k)
                g.parts.push_back(mul(input, rotate(delta, k, ctx), ctx));
            } else {
                g.parts.push_back(mul(rotate(input, -k, ctx), delta, ctx));
            }
        }
        return g;
    }

    /// Row-layout gradient G = delta x^T (out x in). Row a is assembled from
    /// rotated copies of delta against single-slot masks of x, so delta only
    /// pays one level; the masks cost one level on x.
    template <typename Scalar>
    PackedMatrix<Scalar> grad_outer_row(const SlotRegister<Scalar> &delta, const SlotRegister<Scalar> &x,
                                        const MatrixShape &shape, const UnitVectorSet<Scalar> &units,
                                        EngineContext &ctx) {
        const Eigen::Index L = shape.register_length();
        detail::require_length(delta, L, "grad_outer_row");
        detail::require_length(x, L, "grad_outer_row");
        const Eigen::Index rows = shape.orig_out;
        const Eigen::Index cols = shape.orig_in;
        std::vector<SlotRegister<Scalar>> x_masked;
        x_masked.reserve(static_cast<std::size_t>(cols));
        for (Eigen::Index b = 0; b < cols; ++b) {
            x_masked.push_back(mul(x, units[b], ctx));
        }
        PackedMatrix<Scalar> g;
        g.layout = Layout::Row;
        g.shape = shape;
        for (Eigen::Index a = 0; a < rows; ++a) {
            std::optional<SlotRegister<Scalar>> row;
            for (Eigen::Index b = 0; b < cols; ++b) {
                detail::accumulate(row, mul(rotate(delta, b - a, ctx), x_masked[static_cast<std::size_t>(b)], ctx),
                                   ctx);
            }
            g.parts.push_back(*row);
        }
        return g;
    }

}  // namespace hetrain
