// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>
#include <vector>

#include "hetrain/packed_linalg.hpp"

using namespace hetrain;

namespace {

    using Mat = Eigen::MatrixXd;
    using Vec = Eigen::VectorXd;

    Mat mat(std::initializer_list<std::initializer_list<double>> rows) {
        Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
        Eigen::Index i = 0;
        for (const auto &r : rows) {
            Eigen::Index j = 0;
            for (double v : r) {
                m(i, j++) = v;
            }
            ++i;
        }
        return m;
    }

    Vec vec(std::initializer_list<double> v) {
        std::vector<double> values(v);
        return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
    }

    Mat random_matrix(std::mt19937_64 &rng, Eigen::Index rows, Eigen::Index cols) {
        std::uniform_real_distribution<double> d(-1.0, 1.0);
        Mat m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) {
                m(i, j) = d(rng);
            }
        }
        return m;
    }

    Vec random_vector(std::mt19937_64 &rng, Eigen::Index n) {
        return random_matrix(rng, n, 1).col(0);
    }

    Register cipher(const Vec &v, Eigen::Index length, EngineContext &ctx) {
        return encrypt(encode(v, length), ctx);
    }

    // Random (in, out) with the larger a multiple of the smaller.
    std::pair<Eigen::Index, Eigen::Index> divisible_shape(std::mt19937_64 &rng, Eigen::Index max_small = 6) {
        const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(max_small));
        const Eigen::Index q = 1 + static_cast<Eigen::Index>(rng() % 5);
        return rng() % 2 ? std::make_pair(m * q, m) : std::make_pair(m, m * q);
    }

    double max_abs(const Vec &v) {
        return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
    }

}  // namespace

TEST_CASE("row packing stores one row per register") {
    EngineContext ctx(4);
    const auto p = pack_row(mat({{1, 2}, {3, 4}}), ctx);
    REQUIRE(p.parts.size() == 2);
    CHECK(p.parts[0].slots() == vec({1, 2}));
    CHECK(p.parts[1].slots() == vec({3, 4}));
    CHECK(p.parts[0].is_cipher());

    const auto id = pack_row(Mat::Identity(3, 3), ctx);
    CHECK(id.parts[0].slots() == vec({1, 0, 0}));
    CHECK(id.parts[1].slots() == vec({0, 1, 0}));
    CHECK(id.parts[2].slots() == vec({0, 0, 1}));
    CHECK_THROWS_AS(pack_row(Mat(0, 3), ctx), DimensionError);
}

TEST_CASE("diagonal packing of the worked 4x2 example") {
    EngineContext ctx(4);
    const Mat b = mat({{1, 2}, {3, 4}, {5, 6}, {7, 8}});
    const auto p = pack_diag(b, false, ctx);
    REQUIRE(p.parts.size() == 4);
    CHECK(p.parts[0].slots() == vec({1, 4, 0, 0}));
    CHECK(p.parts[1].slots() == vec({3, 6, 0, 0}));
    CHECK(p.parts[2].slots() == vec({5, 8, 0, 0}));
    CHECK(p.parts[3].slots() == vec({7, 2, 0, 0}));
    CHECK(p.shape.n_big == 4);
    CHECK(p.shape.m_small == 2);
    CHECK(p.shape.q == 2);
    CHECK(p.shape.r == 0);

    const auto s = pack_diag(b, true, ctx);
    CHECK(s.layout == Layout::DiagonalStepped);
    CHECK(s.parts[3].slots() == vec({2, 0, 0, 7}));
    CHECK(s.parts[0].slots() == vec({1, 4, 0, 0}));
    CHECK(s.parts[1].slots() == vec({0, 3, 6, 0}));
    // plaintext pre-rotation is free
    CHECK(ctx.counters().rotations == 0);

    const auto id = pack_diag(Mat::Identity(2, 2), false, ctx);
    CHECK(id.parts[0].slots() == vec({1, 1}));
    CHECK(id.parts[1].slots() == vec({0, 0}));
    CHECK_THROWS_AS(pack_diag(Mat(3, 0), false, ctx), DimensionError);
}

TEST_CASE("diagonal parts follow the index formula") {
    std::mt19937_64 rng(1);
    EngineContext ctx(2);
    for (int trial = 0; trial < 30; ++trial) {
        const auto [in, out] = divisible_shape(rng);
        const Mat b = random_matrix(rng, in, out);
        const auto p = pack_diag(b, false, ctx);
        const Eigen::Index R = in;
        const Eigen::Index L = std::max(in, out);
        REQUIRE(static_cast<Eigen::Index>(p.parts.size()) == R);
        for (Eigen::Index k = 0; k < R; ++k) {
            for (Eigen::Index j = 0; j < out; ++j) {
                CHECK(p.parts[static_cast<std::size_t>(k)][j] == b((k + j) % R, j));
            }
            for (Eigen::Index j = out; j < L; ++j) {
                CHECK(p.parts[static_cast<std::size_t>(k)][j] == 0.0);
            }
        }
    }
}

TEST_CASE("unpack inverts every packing exactly") {
    std::mt19937_64 rng(2);
    EngineContext ctx(2);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index r = 1 + static_cast<Eigen::Index>(rng() % 9);
        const Eigen::Index c = 1 + static_cast<Eigen::Index>(rng() % 9);
        const Mat m = random_matrix(rng, r, c);
        CHECK(unpack(pack_row(m, ctx)) == m);
        CHECK(unpack(pack_diag(m, false, ctx)) == m);
        CHECK(unpack(pack_diag(m, true, ctx)) == m);
        CHECK(unpack(pack_diag(m, false, ctx, false)) == m);
    }
}

TEST_CASE("padding makes the smaller dimension divide the larger") {
    const auto s = MatrixShape::for_map(10, 3, true);
    CHECK(s.n_big == 12);
    CHECK(s.m_small == 3);
    CHECK(s.q == 4);
    CHECK(s.r == 0);
    CHECK(s.padded_in() == 12);
    CHECK(s.padded_out() == 3);
    const auto w = MatrixShape::for_map(4, 10, true);
    CHECK(w.n_big == 12);
    CHECK(w.direction == Direction::OutToIn);
    CHECK(w.padded_in() == 4);
    const auto raw = MatrixShape::for_map(10, 3, false);
    CHECK(raw.q == 3);
    CHECK(raw.r == 1);
    CHECK(raw.n_big == raw.q * raw.m_small + raw.r);
    CHECK(s.transposed().transposed() == s);
    CHECK_THROWS_AS(MatrixShape::for_map(0, 3, true), DimensionError);
}

TEST_CASE("matvec worked examples") {
    EngineContext ctx(4);
    const Mat w = mat({{1, 2}, {3, 4}});
    const UnitVectorSet<double> u2(2);
    CHECK(decrypt(matvec_row(pack_row(w, ctx), cipher(vec({1, 1}), 2, ctx), u2, ctx)).slots() == vec({3, 7}));

    // the input-major packing of w has diagonals [1,4] and [2,3]
    const auto d = pack_diag(Mat(w.transpose()), false, ctx);
    CHECK(d.parts[0].slots() == vec({1, 4}));
    CHECK(d.parts[1].slots() == vec({2, 3}));
    CHECK(decrypt(matvec_diag(d, cipher(vec({1, 1}), 2, ctx), ctx)).slots() == vec({3, 7}));

    const UnitVectorSet<double> u3(3);
    CHECK(decrypt(matvec_row(pack_row(Mat::Identity(3, 3), ctx), cipher(vec({5, 6, 7}), 3, ctx), u3, ctx)).slots() ==
          vec({5, 6, 7}));
    const auto id4 = pack_diag(Mat::Identity(4, 4), false, ctx);
    CHECK(decrypt(matvec_diag(id4, cipher(vec({1, 2, 3, 4}), 4, ctx), ctx)).slots() == vec({1, 2, 3, 4}));
}

TEST_CASE("matvec matches the dense product across shapes") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 60; ++trial) {
        EngineContext ctx(4);
        const Eigen::Index in = 1 + static_cast<Eigen::Index>(rng() % 10);
        const Eigen::Index out = 1 + static_cast<Eigen::Index>(rng() % 10);
        const Mat w = random_matrix(rng, out, in);
        const Vec x = random_vector(rng, in);
        const Vec expected = w * x;

        const auto row = pack_row(w, ctx);
        const UnitVectorSet<double> units(row.register_length());
        const Vec yr = decrypt(matvec_row(row, cipher(x, row.register_length(), ctx), units, ctx)).slots();
        CHECK(max_abs(yr.head(out) - expected) <= 1e-9);

        for (bool stepped : {false, true}) {
            const auto d = pack_diag(Mat(w.transpose()), stepped, ctx);
            const Vec yd = decrypt(matvec_diag(d, cipher(x, d.register_length(), ctx), ctx)).slots();
            CHECK(max_abs(yd.head(out) - expected) <= 1e-9);
        }
    }
}

TEST_CASE("matvec cost and level consumption") {
    std::mt19937_64 rng(4);
    SUBCASE("row 3x6") {
        EngineContext ctx(4);
        const auto p = pack_row(random_matrix(rng, 3, 6), ctx);
        const UnitVectorSet<double> units(6);
        const Register y = matvec_row(p, cipher(random_vector(rng, 6), 6, ctx), units, ctx);
        CHECK(ctx.counters().mults() == 6);
        CHECK(ctx.counters().rotations <= 18);
        CHECK(y.level() == 4 - predict_cost(Layout::Row, CostedOp::Matvec, 6, 3).depth);
        CHECK(predict_cost(Layout::Row, CostedOp::Matvec, 6, 3).mults == ctx.counters().mults());
    }
    SUBCASE("diagonal 6 -> 3") {
        EngineContext ctx(4);
        const auto p = pack_diag(random_matrix(rng, 6, 3), false, ctx);
        const Register y = matvec_diag(p, cipher(random_vector(rng, 6), 6, ctx), ctx);
        CHECK(ctx.counters().mults() == 6);
        CHECK(ctx.counters().rotations <= 5);
        CHECK(y.level() == 4 - predict_cost(Layout::Diagonal, CostedOp::Matvec, 6, 3).depth);
    }
    SUBCASE("row matvec needs two levels") {
        EngineContext ctx(1);
        const auto p = pack_row(random_matrix(rng, 2, 2), ctx);
        const UnitVectorSet<double> units(2);
        CHECK_THROWS_AS(matvec_row(p, cipher(random_vector(rng, 2), 2, ctx), units, ctx), DepthBudgetError);
    }
    SUBCASE("diagonal matvec fits in one level") {
        EngineContext ctx(1);
        const auto p = pack_diag(random_matrix(rng, 2, 2), false, ctx);
        CHECK(matvec_diag(p, cipher(random_vector(rng, 2), 2, ctx), ctx).level() == 0);
    }
}

TEST_CASE("matvec rejects mismatched inputs") {
    EngineContext ctx(4);
    const auto d = pack_diag(Mat::Identity(4, 2), false, ctx);
    CHECK_THROWS_AS(matvec_diag(d, cipher(vec({1, 2}), 2, ctx), ctx), DimensionError);
    const auto r = pack_row(Mat::Identity(2, 2), ctx);
    const UnitVectorSet<double> units(2);
    CHECK_THROWS_AS(matvec_diag(r, cipher(vec({1, 2}), 2, ctx), ctx), LayoutError);
    CHECK_THROWS_AS(matvec_row(d, cipher(vec({1, 2, 3, 4}), 4, ctx), units, ctx), LayoutError);
}

TEST_CASE("matvec_diag is linear in the input") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        EngineContext ctx(4);
        const auto [in, out] = divisible_shape(rng);
        const auto p = pack_diag(random_matrix(rng, in, out), false, ctx);
        const Eigen::Index L = p.register_length();
        const Register x1 = cipher(random_vector(rng, in), L, ctx);
        const Register x2 = cipher(random_vector(rng, in), L, ctx);
        const Vec lhs = decrypt(matvec_diag(p, add(x1, x2, ctx), ctx)).slots();
        const Vec rhs = decrypt(add(matvec_diag(p, x1, ctx), matvec_diag(p, x2, ctx), ctx)).slots();
        CHECK(max_abs(lhs - rhs) <= 1e-9);
    }
}

TEST_CASE("transpose of the worked 4x2 example") {
    EngineContext ctx(4);
    const Mat b = mat({{1, 2}, {3, 4}, {5, 6}, {7, 8}});
    const auto t = transpose_diag(pack_diag(b, false, ctx), ctx);
    REQUIRE(t.parts.size() == 2);
    CHECK(t.parts[0].slots() == vec({1, 4, 5, 8}));
    CHECK(t.parts[1].slots() == vec({2, 3, 6, 7}));
    CHECK(unpack(t) == mat({{1, 3, 5, 7}, {2, 4, 6, 8}}));
    CHECK(ctx.counters().mults() == 0);

    EngineContext sctx(4);
    const auto ts = transpose_diag_stepped(pack_diag(b, true, sctx), sctx);
    CHECK(ts.parts[0].slots() == vec({1, 4, 5, 8}));
    CHECK(ts.parts[1].slots() == vec({2, 3, 6, 7}));
    CHECK(sctx.counters().mults() == 0);
}

TEST_CASE("transpose of identity and 2x2") {
    EngineContext ctx(4);
    const auto id = pack_diag(Mat::Identity(3, 3), false, ctx);
    const auto t = transpose_diag(id, ctx);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(t.parts[k].slots() == id.parts[k].slots());
    }
    const auto r = transpose_row(pack_row(mat({{1, 2}, {3, 4}}), ctx), UnitVectorSet<double>(2), ctx);
    CHECK(r.parts[0].slots() == vec({1, 3}));
    CHECK(r.parts[1].slots() == vec({2, 4}));
}

TEST_CASE("transposes unpack to the dense transpose") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 60; ++trial) {
        EngineContext ctx(4);
        const auto [in, out] = divisible_shape(rng);
        const Mat b = random_matrix(rng, in, out);
        const Mat bt = b.transpose();
        CHECK(unpack(transpose_diag(pack_diag(b, false, ctx), ctx)) == bt);
        CHECK(unpack(transpose_diag_stepped(pack_diag(b, true, ctx), ctx)) == bt);
        CHECK(ctx.counters().mults() == 0);

        const auto row = pack_row(b, ctx);
        CHECK(unpack(transpose_row(row, UnitVectorSet<double>(row.register_length()), ctx)) == bt);
    }
}

TEST_CASE("stepped and unstepped transposes agree slot for slot") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        EngineContext ctx(4);
        const auto [in, out] = divisible_shape(rng);
        const Mat b = random_matrix(rng, in, out);
        const auto plain_t = transpose_diag(pack_diag(b, false, ctx), ctx);
        const auto step_t = transpose_diag_stepped(pack_diag(b, true, ctx), ctx);
        REQUIRE(plain_t.parts.size() == step_t.parts.size());
        CHECK(plain_t.layout == Layout::Diagonal);
        CHECK(unpack(plain_t) == unpack(step_t));
        if (in >= out) {
            CHECK(step_t.layout == Layout::Diagonal);
            for (std::size_t k = 0; k < plain_t.parts.size(); ++k) {
                CHECK(plain_t.parts[k].slots() == step_t.parts[k].slots());
            }
        } else {
            // fewer parts than outputs: the result stays stepped
            CHECK(step_t.layout == Layout::DiagonalStepped);
            for (std::size_t k = 0; k < plain_t.parts.size(); ++k) {
                CHECK(rotate(plain_t.parts[k], static_cast<Eigen::Index>(k), ctx).slots() ==
                      step_t.parts[k].slots());
            }
        }
    }
}

TEST_CASE("transposed packings drive a correct matvec") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 40; ++trial) {
        EngineContext ctx(4);
        const auto [in, out] = divisible_shape(rng);
        const Mat b = random_matrix(rng, in, out);
        const Vec d = random_vector(rng, out);
        for (bool stepped : {false, true}) {
            const auto p = pack_diag(b, stepped, ctx);
            const auto t = stepped ? transpose_diag_stepped(p, ctx) : transpose_diag(p, ctx);
            const Vec y = decrypt(matvec_diag(t, cipher(d, t.register_length(), ctx), ctx)).slots();
            CHECK(max_abs(y.head(in) - b * d) <= 1e-9);
        }
    }
}

TEST_CASE("transposing twice gives the original matrix back") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 40; ++trial) {
        EngineContext ctx(4);
        const auto [in, out] = divisible_shape(rng);
        const Mat b = random_matrix(rng, in, out);
        const auto p = pack_diag(b, false, ctx);
        const auto tt = transpose_diag(transpose_diag(p, ctx), ctx);
        CHECK(unpack(tt) == b);
        CHECK(tt.shape == p.shape);
        CHECK(unpack(transpose_diag(tt, ctx)) == Mat(b.transpose()));

        const auto ps = pack_diag(b, true, ctx);
        auto transpose_any = [&](const PackedMatrix<double> &m) {
            return m.layout == Layout::DiagonalStepped ? transpose_diag_stepped(m, ctx) : transpose_diag(m, ctx);
        };
        const auto tts = transpose_any(transpose_any(ps));
        CHECK(unpack(tts) == b);
    }
}

TEST_CASE("transpose costs stay within the closed forms") {
    std::mt19937_64 rng(10);
    for (Eigen::Index m = 1; m <= 8; ++m) {
        for (Eigen::Index q = 1; m * q <= 64; q += 1 + static_cast<Eigen::Index>(rng() % 3)) {
            const Eigen::Index n = m * q;
            const Mat tall = random_matrix(rng, n, m);
            for (const Mat &b : {tall, Mat(tall.transpose())}) {
                EngineContext d(2);
                const auto pd = pack_diag(b, false, d);
                transpose_diag(pd, d);
                const auto cd = predict_cost(Layout::Diagonal, CostedOp::Transpose, n, m);
                CHECK(d.counters().mults() == cd.mults);
                CHECK(d.counters().rotations <= cd.rotations);
                CHECK(d.min_level() == 2 - cd.depth);

                EngineContext s(2);
                const auto ps = pack_diag(b, true, s);
                transpose_diag_stepped(ps, s);
                const auto cs = predict_cost(Layout::DiagonalStepped, CostedOp::Transpose, n, m);
                CHECK(s.counters().mults() == 0);
                CHECK(s.counters().rotations <= cs.rotations);
            }
            if (n <= 24) {
                EngineContext r(2);
                const auto pr = pack_row(tall, r);
                transpose_row(pr, UnitVectorSet<double>(pr.register_length()), r);
                const auto cr = predict_cost(Layout::Row, CostedOp::Transpose, n, m);
                CHECK(r.counters().mults() == cr.mults);
                CHECK(r.counters().mults() == static_cast<std::uint64_t>(n * m));
                CHECK(r.counters().rotations <= cr.rotations);
                CHECK(r.min_level() == 2 - cr.depth);
            }
        }
    }
}

TEST_CASE("specific transpose counts for 6x3 and 4x3") {
    std::mt19937_64 rng(11);
    EngineContext d(2);
    transpose_diag(pack_diag(random_matrix(rng, 6, 3), false, d), d);
    CHECK(d.counters().mults() == 0);
    CHECK(d.counters().rotations <= 6);

    EngineContext s(2);
    transpose_diag_stepped(pack_diag(random_matrix(rng, 6, 3), true, s), s);
    CHECK(s.counters().mults() == 0);
    CHECK(s.counters().rotations <= 3);

    EngineContext r(2);
    transpose_row(pack_row(random_matrix(rng, 4, 3), r), UnitVectorSet<double>(4), r);
    CHECK(r.counters().mults() == 12);
    CHECK(r.counters().rotations <= 12);

    EngineContext z(1);
    auto pr = pack_row(random_matrix(rng, 2, 2), z);
    const UnitVectorSet<double> u(2);
    auto once = transpose_row(pr, u, z);
    CHECK_THROWS_AS(transpose_row(once, u, z), DepthBudgetError);
}

TEST_CASE("transpose rejects the wrong layout and unpadded shapes") {
    EngineContext ctx(2);
    const Mat b = Mat::Ones(10, 3);
    CHECK_THROWS_AS(transpose_diag(pack_diag(b, true, ctx), ctx), LayoutError);
    CHECK_THROWS_AS(transpose_diag_stepped(pack_diag(b, false, ctx), ctx), LayoutError);
    CHECK_THROWS_AS(transpose_diag(pack_row(b, ctx), ctx), LayoutError);
    CHECK_THROWS_AS(transpose_diag(pack_diag(b, false, ctx, false), ctx), UnsupportedShapeError);
}

TEST_CASE("the ragged summation bounds do not reproduce the transpose") {
    std::mt19937_64 rng(12);
    EngineContext ctx(2);
    const Mat b = random_matrix(rng, 10, 3);
    const auto p = pack_diag(b, false, ctx, false);
    CHECK(p.shape.r == 1);
    const auto t = transpose_diag(p, ctx, TransposeOptions{true});
    CHECK(ctx.counters().mults() == 0);
    CHECK(max_abs((unpack(t) - b.transpose()).reshaped()) > 1e-3);
}

TEST_CASE("diagonal gradient outer product") {
    EngineContext ctx(4);
    const auto shape = MatrixShape::for_map(2, 2, true);
    const auto g = grad_outer_diag(cipher(vec({1, 2}), 2, ctx), cipher(vec({3, 4}), 2, ctx), shape, ctx);
    // input-major: G = x delta^T, i.e. the transpose of delta x^T
    CHECK(Mat(unpack(g).transpose()) == mat({{3, 4}, {6, 8}}));

    const auto zero = grad_outer_diag(cipher(vec({0, 0}), 2, ctx), cipher(vec({3, 4}), 2, ctx), shape, ctx);
    for (const auto &p : zero.parts) {
        CHECK(p.slots() == vec({0, 0}));
    }
}

TEST_CASE("gradient packings match the weight packing and the dense outer product") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 40; ++trial) {
        const Eigen::Index in = 1 + static_cast<Eigen::Index>(rng() % 8);
        const Eigen::Index out = 1 + static_cast<Eigen::Index>(rng() % 8);
        const Vec x = random_vector(rng, in);
        const Vec delta = random_vector(rng, out);
        const Mat dense = delta * x.transpose();  // out x in

        for (Layout layout : {Layout::Diagonal, Layout::DiagonalStepped}) {
            EngineContext ctx(4);
            const auto w = pack_diag(random_matrix(rng, in, out), layout == Layout::DiagonalStepped, ctx);
            const Eigen::Index L = w.register_length();
            const auto g = grad_outer_diag(cipher(delta, L, ctx), cipher(x, L, ctx), w.shape, ctx, layout);
            CHECK(g.layout == w.layout);
            CHECK(g.shape == w.shape);
            CHECK(g.parts.size() == w.parts.size());
            CHECK(max_abs((unpack(g) - dense.transpose()).reshaped()) <= 1e-12);
            CHECK(g.level() == 3);
            CHECK(ctx.counters().mults() == static_cast<std::uint64_t>(w.shape.padded_in()));
        }

        EngineContext ctx(4);
        const auto w = pack_row(random_matrix(rng, out, in), ctx);
        const Eigen::Index L = w.register_length();
        const UnitVectorSet<double> units(L);
        const auto g = grad_outer_row(cipher(delta, L, ctx), cipher(x, L, ctx), w.shape, units, ctx);
        CHECK(g.layout == Layout::Row);
        CHECK(g.shape == w.shape);
        CHECK(max_abs((unpack(g) - dense).reshaped()) <= 1e-12);
    }
}

TEST_CASE("unit vectors sum to ones") {
    const UnitVectorSet<double> u(5);
    Vec sum = Vec::Zero(5);
    for (Eigen::Index j = 0; j < u.size(); ++j) {
        CHECK(u[j].slots().sum() == 1.0);
        CHECK(u[j][j] == 1.0);
        CHECK_FALSE(u[j].is_cipher());
        sum += u[j].slots();
    }
    CHECK(sum == Vec::Ones(5));
}

TEST_CASE("closed-form costs") {
    CHECK(predict_cost(Layout::Diagonal, CostedOp::Transpose, 6, 3) == CostEstimate{0, 6, 0});
    CHECK(predict_cost(Layout::DiagonalStepped, CostedOp::Transpose, 6, 3) == CostEstimate{0, 3, 0});
    CHECK(predict_cost(Layout::Row, CostedOp::Transpose, 6, 3) == CostEstimate{18, 18, 1});
    CHECK(predict_cost(Layout::Diagonal, CostedOp::Matvec, 1, 1) == CostEstimate{1, 0, 1});
    CHECK(predict_cost(Layout::Diagonal, CostedOp::Matvec, 6, 3) == CostEstimate{6, 5, 1});
    CHECK(predict_cost(Layout::Row, CostedOp::Matvec, 6, 3) == CostEstimate{6, 18, 2});
    CHECK_THROWS_AS(predict_cost(Layout::Diagonal, CostedOp::Transpose, 2, 3), DimensionError);
    CHECK_THROWS_AS(predict_cost(Layout::Diagonal, CostedOp::Matvec, 3, 0), DimensionError);
}

TEST_CASE("measured matvec mults equal the closed form") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 30; ++trial) {
        const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng() % 6);
        const Eigen::Index n = m * (1 + static_cast<Eigen::Index>(rng() % 4));
        EngineContext d(2);
        const auto pd = pack_diag(random_matrix(rng, n, m), false, d);
        matvec_diag(pd, cipher(random_vector(rng, n), n, d), d);
        const auto cd = predict_cost(Layout::Diagonal, CostedOp::Matvec, n, m);
        CHECK(d.counters().mults() == cd.mults);
        CHECK(d.counters().rotations == cd.rotations);

        EngineContext r(2);
        const auto pr = pack_row(random_matrix(rng, m, n), r);
        matvec_row(pr, cipher(random_vector(rng, n), n, r), UnitVectorSet<double>(n), r);
        const auto cr = predict_cost(Layout::Row, CostedOp::Matvec, n, m);
        CHECK(r.counters().mults() == cr.mults);
        CHECK(r.counters().rotations <= cr.rotations);
    }
}
