// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "opfactor/blockop.hpp"
#include "opfactor/blockop_io.hpp"
#include "opfactor/families.hpp"

using namespace opfactor;
using namespace opfactor::blk;

namespace {

BlockOperator forward_block_shift(Index dim, int radius) {
    BlockShape shape = BlockShape::uniform(dim, radius);
    std::map<BlockKey, Matrix> blocks;
    for (int i = -radius; i < radius; ++i)
        blocks[{i, i + 1}] = Matrix::Identity(dim, dim);
    return BlockOperator::from_blocks(shape, shape, std::move(blocks));
}

BlockOperator random_banded(Index dim, int radius, int band, std::uint64_t seed) {
    fam::Rng rng(seed);
    BlockShape shape = BlockShape::uniform(dim, radius);
    std::map<BlockKey, Matrix> blocks;
    for (int i = -radius; i <= radius; ++i)
        for (int j = std::max(-radius, i - band); j <= std::min(radius, i + band); ++j)
            blocks[{i, j}] = rng.gaussian(dim, dim);
    return BlockOperator::from_blocks(shape, shape, std::move(blocks));
}

} // namespace

TEST_CASE("compose of two forward shifts lands on the 2-superdiagonal") {
    BlockOperator s = forward_block_shift(2, 3);
    BlockOperator s2 = compose(s, s);
    for (const auto& [i, j] : s2.support())
        CHECK(j - i == 2);
    CHECK((s2.block(-1, 1) - Matrix::Identity(2, 2)).norm() <= 1e-15);
}

TEST_CASE("compose with the zero operator vanishes") {
    BlockOperator s = forward_block_shift(2, 2);
    BlockOperator z = BlockOperator::zero(s.row_shape(), s.col_shape());
    CHECK(compose(z, s).support().empty());
    CHECK(compose(s, z).support().empty());
}

TEST_CASE("compose is associative on banded triples") {
    BlockOperator x = random_banded(2, 3, 1, 101);
    BlockOperator y = random_banded(2, 3, 1, 102);
    BlockOperator z = random_banded(2, 3, 1, 103);
    BlockOperator left = compose(compose(x, y), z);
    BlockOperator right = compose(x, compose(y, z));
    BlockSupport keys = left.support();
    for (const auto& k : right.support())
        keys.insert(k);
    for (const auto& [i, j] : keys)
        CHECK((left.block(i, j) - right.block(i, j)).norm() <= 1e-12 * 100.0);
}

TEST_CASE("compose rejects mismatched shapes") {
    BlockOperator a = forward_block_shift(2, 2);
    BlockOperator b = forward_block_shift(3, 2);
    CHECK_THROWS_AS(compose(a, b), ShapeMismatch);
}

TEST_CASE("truncate assembles ascending block order") {
    BlockOperator z = BlockOperator::zero(BlockShape::uniform(2, 2), BlockShape::uniform(2, 2));
    CHECK(truncate(z, 2).norm() == 0.0);
    CHECK(truncate(z, 2).rows() == 10);

    std::map<int, Index> dims{{-1, 1}, {0, 2}, {1, 1}};
    BlockShape shape{dims};
    std::map<BlockKey, Matrix> blocks;
    blocks[{-1, -1}] = Matrix::Identity(1, 1);
    blocks[{0, 0}] = Matrix::Identity(2, 2);
    blocks[{1, 1}] = Matrix::Identity(1, 1);
    BlockOperator d = BlockOperator::from_blocks(shape, shape, std::move(blocks));
    Matrix t = truncate(d, 1);
    CHECK((t - Matrix::Identity(4, 4)).norm() <= 1e-15);
}

TEST_CASE("truncation of a product agrees with the product of truncations") {
    BlockOperator x = random_banded(2, 6, 1, 201);
    BlockOperator y = random_banded(2, 6, 1, 202);
    const int w = 2, s = 1;  // support bandwidth of both factors
    Matrix full = truncate(compose(x, y), w);
    Matrix guarded = truncate(x, w + s) * truncate(y, w + s);
    // Central window rows/cols of the guarded product.
    TruncationLayout lay = truncation_layout(x.row_shape(), w + s);
    std::vector<Index> central;
    for (std::size_t t = 0; t < lay.indices.size(); ++t)
        if (std::abs(lay.indices[t]) <= w)
            for (Index q = 0; q < 2; ++q)
                central.push_back(lay.offsets[t] + q);
    double scale = 1.0 + la::norm2(truncate(x, w + s)) * la::norm2(truncate(y, w + s));
    for (std::size_t r = 0; r < central.size(); ++r)
        for (std::size_t c = 0; c < central.size(); ++c)
            CHECK(std::abs(full(static_cast<Index>(r), static_cast<Index>(c)) -
                           guarded(central[r], central[c])) <= 1e-10 * scale);
}

TEST_CASE("power norms of a single jordan block") {
    BlockOperator j = block_weighted_shift(1, 0, {1.0, 1.0});
    PowerNormSequence seq = power_norms(j, 4, 3);
    CHECK(seq.value(1) == doctest::Approx(1.0));
    CHECK(seq.value(2) == doctest::Approx(1.0));
    CHECK(seq.value(3) <= 1e-14);
    CHECK(seq.value(4) <= 1e-14);
}

TEST_CASE("power norms of the identity stay at one") {
    BlockOperator id = block_diagonal(2, -2, {1.0, 1.0, 1.0, 1.0, 1.0});
    PowerNormSequence seq = power_norms(id, 5, 2);
    for (double v : seq.values)
        CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(gelfand_estimate(seq) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("weighted shift power norms match the closed form") {
    const int n_max = 12;
    std::vector<double> weights = fam::geometric_weights(0.5, n_max + 2);
    BlockOperator s = block_weighted_shift(1, 1, weights);
    PowerNormSequence seq = power_norms(s, n_max, n_max + 2);
    for (int n = 1; n <= n_max; ++n) {
        // Window products of consecutive weights are maximal at the head:
        // prod_{i=1..n} 2^-i = 2^{-n(n+1)/2}.
        const double expected = std::pow(2.0, -0.5 * n * (n + 1));
        CHECK(std::abs(std::pow(seq.value(n), 1.0 / n) - std::pow(2.0, -0.5 * (n + 1))) <= 1e-9);
        CHECK(seq.value(n) == doctest::Approx(expected).epsilon(1e-9));
    }

    // Submultiplicativity on the fixed window.
    for (int m = 1; m < n_max; ++m)
        for (int n = 1; m + n <= n_max; ++n)
            CHECK(seq.value(m + n) <= seq.value(m) * seq.value(n) * (1.0 + 1e-9));
}

TEST_CASE("gelfand estimates") {
    BlockOperator j = block_weighted_shift(1, 0, {1.0, 1.0});
    CHECK(gelfand_estimate(power_norms(j, 5, 3)) == doctest::Approx(0.0));

    std::vector<double> weights = fam::geometric_weights(0.5, 22);
    BlockOperator s = block_weighted_shift(1, 1, weights);
    PowerNormSequence seq = power_norms(s, 20, 22);
    CHECK(gelfand_estimate(seq) <= std::pow(2.0, -10.5) + 1e-9);
}

TEST_CASE("strictly triangular operators reach exactly zero") {
    BlockOperator s = forward_block_shift(2, 3);  // one occupied superdiagonal
    PowerNormSequence seq = power_norms(s, 8, 3);
    bool hit_zero = false;
    for (std::size_t i = 0; i < seq.values.size(); ++i) {
        if (seq.values[i] == 0.0) {
            hit_zero = true;
            CHECK(static_cast<int>(i + 1) <= 8);
            break;
        }
    }
    CHECK(hit_zero);
}

TEST_CASE("weighted diagonal bound report") {
    BoundReport all_zero = weighted_diag_qn_bound({0.0, 0.0, 0.0}, 4.0, 5);
    CHECK(all_zero.all_pass);
    for (const auto& e : all_zero.entries)
        CHECK(e.computed == 0.0);

    // Scaled norms 2^-j: the analytic bound is max_j(2^-j) * 2^-(2+...+n).
    std::vector<double> b;
    for (int j = 1; j <= 6; ++j)
        b.push_back(std::pow(2.0, -j));
    BoundReport r = weighted_diag_qn_bound(b, 4.0, 6);
    CHECK(r.precondition_ok);
    CHECK(r.all_pass);
    for (const auto& e : r.entries) {
        const double expected = 0.5 * std::pow(2.0, -(0.5 * e.n * (e.n + 1.0) - 1.0));
        CHECK(e.analytic == doctest::Approx(expected).epsilon(1e-12));
    }

    BoundReport single = weighted_diag_qn_bound({0.7}, 4.0, 4);
    CHECK(single.all_pass);
    for (const auto& e : single.entries)
        if (e.n >= 2)
            CHECK(e.computed == 0.0);
}

TEST_CASE("triangular certificate validates decaying corners") {
    // Strictly upper triangular two-block operator: corners are zero.
    std::map<int, Index> dims{{0, 2}, {1, 2}};
    BlockShape shape{dims};
    std::map<BlockKey, Matrix> blocks;
    fam::Rng rng(55);
    blocks[{0, 1}] = rng.gaussian(2, 2);
    BlockOperator upper = BlockOperator::from_blocks(shape, shape, std::move(blocks));
    Certificate c = triangular_qn_certificate(upper, 0);
    CHECK(c.valid);
    CHECK(c.corner1_estimate == doctest::Approx(0.0));
    CHECK(c.corner2_estimate == doctest::Approx(0.0));

    // Decaying weighted shifts in both corners, arbitrary coupling above.
    std::vector<double> w = fam::geometric_weights(0.5, 6);
    BlockOperator corner_lo = block_weighted_shift(2, -7, w);
    BlockOperator corner_hi = block_weighted_shift(2, 1, w);
    std::map<BlockKey, Matrix> mixed;
    for (const auto& [i, j] : corner_lo.support())
        mixed[{i, j}] = corner_lo.block(i, j);
    for (const auto& [i, j] : corner_hi.support())
        mixed[{i, j}] = corner_hi.block(i, j);
    mixed[{-3, 4}] = 10.0 * rng.gaussian(2, 2);  // the B corner is ignored
    std::map<int, Index> mdims;
    for (int i = -7; i <= 7; ++i)
        mdims[i] = 2;
    BlockShape mshape{mdims};
    BlockOperator combined = BlockOperator::from_blocks(mshape, mshape, std::move(mixed));
    Certificate c2 = triangular_qn_certificate(combined, 0, {10, 8, 0.5});
    CHECK(c2.valid);

    // An identity corner is not quasi-nilpotent.
    BlockOperator id = block_diagonal(2, 1, {1.0, 1.0, 1.0});
    Certificate c3 = triangular_qn_certificate(id, 0, {6, 4, 0.5});
    CHECK_FALSE(c3.valid);
    CHECK(c3.corner2_estimate == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("triangular certificate rejects a violating support") {
    std::map<int, Index> dims{{0, 1}, {1, 1}};
    BlockShape shape{dims};
    std::map<BlockKey, Matrix> blocks;
    blocks[{1, 0}] = Matrix::Identity(1, 1);
    BlockOperator lower = BlockOperator::from_blocks(shape, shape, std::move(blocks));
    CHECK_THROWS_AS(triangular_qn_certificate(lower, 0), NotTriangular);
}

TEST_CASE("norm bound validation") {
    BlockShape shape = BlockShape::uniform(2, 1);
    std::map<BlockKey, Matrix> blocks;
    blocks[{0, 1}] = 2.0 * Matrix::Identity(2, 2);
    auto holder = std::make_shared<std::map<BlockKey, Matrix>>(std::move(blocks));
    BlockOperator claimed(
        shape, shape, [holder](int i, int j) { return holder->at({i, j}); },
        {{0, 1}}, [](int, int) { return 1.0; });
    CHECK_THROWS_AS(claimed.validate(), Error);
}

TEST_CASE("block operator json manifests round trip") {
    BlockOperator s = random_banded(2, 2, 1, 77);
    nlohmann::json doc = to_json(s);
    BlockOperator back = from_json(doc);
    CHECK(back.support() == s.support());
    for (const auto& [i, j] : s.support())
        CHECK((back.block(i, j) - s.block(i, j)).cwiseAbs().maxCoeff() == 0.0);

    nlohmann::json gen;
    gen["operator"] = {{"kind", "block-weighted-shift"},
                       {"block_dim", 2},
                       {"first_index", 1},
                       {"values", {0.5, 0.25}}};
    BlockOperator shift = from_json(gen);
    CHECK(shift.support().size() == 2);
    CHECK((shift.block(1, 2) - 0.5 * Matrix::Identity(2, 2)).norm() <= 1e-15);

    nlohmann::json scaled;
    scaled["row_shape"] = {{"0", 2}, {"1", 2}};
    scaled["col_shape"] = {{"0", 2}, {"1", 2}};
    scaled["blocks"] = nlohmann::json::array();
    scaled["blocks"].push_back(
        {{"row", 0}, {"col", 1}, {"generator", {{"kind", "scaled-identity"}, {"dim", 2}, {"scale", {0.5, 0.0}}}}});
    BlockOperator si = from_json(scaled);
    CHECK((si.block(0, 1) - 0.5 * Matrix::Identity(2, 2)).norm() <= 1e-15);
}
