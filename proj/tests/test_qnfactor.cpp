// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "opfactor/families.hpp"
#include "opfactor/qn_factor.hpp"

using namespace opfactor;
using namespace opfactor::qn;

namespace {

Matrix real_diagonal(std::initializer_list<double> values) {
    Matrix m = Matrix::Zero(static_cast<Index>(values.size()), static_cast<Index>(values.size()));
    Index i = 0;
    for (double v : values) {
        m(i, i) = v;
        ++i;
    }
    return m;
}

std::vector<double> lambda_geometric(double rate, Index n) {
    std::vector<double> out;
    double v = 1.0;
    for (Index j = 0; j < n; ++j) {
        v *= rate;
        out.push_back(v);
    }
    return out;
}

} // namespace

TEST_CASE("split_compact_domain bins by threshold arithmetic") {
    // sigma = (1, 0.05, 0.003) with three pieces: 0.05 <= 4^-2 lands in the
    // second band, 0.003 <= 4^-3 falls to the absorbing tail.
    Matrix k = real_diagonal({1.0, 0.05, 0.003});
    CompactSplit split = split_compact_domain(k, SplitOptions{4.0, 3});
    REQUIRE(split.pieces.size() == 3);
    CHECK(split.pieces[0].dim() == 1);
    CHECK(split.pieces[1].dim() == 1);
    CHECK(split.pieces[2].dim() == 1);
    CHECK(split.piece_bounds[0] == doctest::Approx(1.0));
    CHECK(split.piece_bounds[1] == doctest::Approx(0.05));
    CHECK(split.piece_bounds[2] == doctest::Approx(0.003));
    // The second-piece vector is the singular direction of 0.05: e_1.
    CHECK(std::abs(split.pieces[1].vectors()(1, 0)) == doctest::Approx(1.0));
}

TEST_CASE("split of the zero matrix is a single absorbing piece") {
    CompactSplit split = split_compact_domain(Matrix::Zero(4, 4), SplitOptions{4.0, 5});
    CHECK(split.nonempty_count() == 1);
    CHECK(split.pieces.back().dim() == 4);
    CHECK(split.piece_bounds.back() == 0.0);
}

TEST_CASE("split bins geometric singular values two per band") {
    // sigma_j = 2^-j: piece n collects j with 2^-j in (4^-(n+1), 4^-n],
    // i.e. j in {2n, 2n+1}; piece 1 takes j <= 3.
    const Index n = 12;
    std::vector<double> sig = lambda_geometric(0.5, n);
    Matrix k = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j)
        k(j, j) = sig[static_cast<std::size_t>(j)];
    CompactSplit split = split_compact_domain(k, SplitOptions{4.0, 5});
    CHECK(split.pieces[0].dim() == 3);  // 2^-1..2^-3 > 1/16
    CHECK(split.pieces[1].dim() == 2);  // 2^-4, 2^-5
    CHECK(split.pieces[2].dim() == 2);  // 2^-6, 2^-7
    CHECK(split.pieces[3].dim() == 2);  // 2^-8, 2^-9
    CHECK(split.pieces[4].dim() == 3);  // the tail absorbs the rest
    for (std::size_t m = 1; m < split.pieces.size(); ++m)
        CHECK(split.piece_bounds[m] <= std::pow(4.0, -static_cast<double>(m + 1)) + 1e-15);
}

TEST_CASE("split_compact_range mirrors on the left side") {
    fam::Rng rng(3);
    Matrix u = rng.unitary(5);
    Matrix l = u * real_diagonal({0.8, 0.05, 0.01, 1e-4, 1e-7}) * rng.unitary(5).adjoint();
    CompactSplit split = split_compact_range(l, SplitOptions{4.0, 4});
    // Restriction norms on the range side: ||P_n L|| <= bound.
    for (std::size_t m = 0; m < split.pieces.size(); ++m) {
        if (split.pieces[m].dim() == 0)
            continue;
        const double restricted = la::norm2(split.pieces[m].vectors().adjoint() * l);
        CHECK(restricted <= split.piece_bounds[m] + 1e-12);
        if (m >= 1)
            CHECK(split.piece_bounds[m] <= std::pow(4.0, -static_cast<double>(m + 1)) + 1e-15);
    }
}

TEST_CASE("factor pair of the all-zero pieces") {
    qn::RefinedPieces pieces;
    pieces.base = 4.0;
    pieces.c = Matrix::Zero(4, 4);
    for (int n = 0; n < 2; ++n) {
        pieces.a.push_back(Matrix::Zero(4, 4));
        pieces.k.push_back(Matrix::Zero(4, 4));
        pieces.d.push_back(Matrix::Zero(4, 4));
        pieces.l.push_back(Matrix::Zero(4, 4));
    }
    QNFactorization f = factor_from_pieces(pieces, 3);
    CHECK(f.product_residual == doctest::Approx(0.0));
    CHECK(f.cert_q1.valid);
    CHECK(f.cert_q2.valid);
    CHECK(f.r_bound_q1.all_pass);
    CHECK(f.r_bound_q2.all_pass);
}

TEST_CASE("scaled identities sit on the factor rows and columns") {
    qn::RefinedPieces pieces = fam::synthetic_canonical_pieces(3, 4, 17);
    const int radius = 6;
    blk::BlockOperator q1 = build_q1(pieces, radius);
    blk::BlockOperator q2 = build_q2(pieces, radius);
    for (int k = 1; k <= radius; ++k) {
        Matrix expected = std::pow(2.0, -(k - 1.0)) * Matrix::Identity(3, 3);
        CHECK((q1.block(0, -k) - expected).norm() <= 1e-14);
        CHECK((q2.block(k, 0) - expected).norm() <= 1e-14);
    }
    CHECK((q1.block(0, 1) - pieces.c).norm() == 0.0);
    // Weighted diagonals carry 2^n K_n and 2^n L_n.
    CHECK((q2.block(-2, -1) - 2.0 * pieces.k[0]).norm() <= 1e-14);
    CHECK((q1.block(1, 2) - 2.0 * pieces.l[0]).norm() <= 1e-14);
}

TEST_CASE("the composed pair reproduces the refined operator blockwise") {
    qn::RefinedPieces pieces = fam::synthetic_canonical_pieces(4, 4, 23);
    const int radius = 6;
    blk::BlockOperator q1 = build_q1(pieces, radius);
    blk::BlockOperator q2 = build_q2(pieces, radius);
    blk::BlockOperator prod = blk::compose(q1, q2);
    CHECK((prod.block(0, 0) - pieces.c).norm() <= 1e-13);
    for (int n = 1; n <= 4; ++n) {
        CHECK((prod.block(0, -n) - pieces.k[n - 1]).norm() <= 1e-13);
        CHECK((prod.block(0, n) - pieces.d[n - 1]).norm() <= 1e-13);
        CHECK((prod.block(-n, 0) - pieces.a[n - 1]).norm() <= 1e-13);
        CHECK((prod.block(n, 0) - pieces.l[n - 1]).norm() <= 1e-13);
    }
    // Everything off the cross pattern vanishes.
    for (const auto& [i, j] : prod.support()) {
        if (i != 0 && j != 0)
            CHECK(prod.block(i, j).norm() <= 1e-13);
    }
}

TEST_CASE("synthetic canonical family factors within tolerance") {
    qn::RefinedPieces pieces = fam::synthetic_canonical_pieces(16, 6, 42);
    QNFactorization f = factor_from_pieces(pieces, 6);
    CHECK(f.product_residual <= 1e-10 * (1.0 + f.max_block_norm));
    CHECK(f.cert_q1.valid);
    CHECK(f.cert_q2.valid);
    CHECK(f.r_bound_q1.all_pass);
    CHECK(f.r_bound_q1.precondition_ok);
    CHECK(f.r_bound_q2.all_pass);
}

TEST_CASE("factor_quasinilpotent runs off a canonical form with graded spectrum") {
    // A graded compact operator: the almost-null residuals span two bands.
    fam::Rng rng(9);
    const Index n = 24;
    std::vector<double> sig;
    for (Index j = 0; j < n; ++j)
        sig.push_back(std::pow(0.25, static_cast<double>(j + 1)));
    Matrix w = rng.unitary(n);
    Matrix diag = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j)
        diag(j, j) = sig[static_cast<std::size_t>(j)];
    Matrix t = w * diag * w.adjoint();

    dec::CanonicalForm cf = dec::canonical_form(t, dec::CanonicalOptions{3, {}, false});
    QNOptions opts;
    opts.max_pieces = 26;
    QNFactorization f = factor_quasinilpotent(cf, 4, opts);
    CHECK(f.product_residual <= 1e-10 * (1.0 + f.max_block_norm));
    CHECK(f.cert_q1.valid);
    CHECK(f.cert_q2.valid);
}

TEST_CASE("factor_quasinilpotent rejects a shallow split") {
    // An exact-kernel canonical form has K = L = 0: single absorbing piece.
    fam::Rng rng(29);
    Matrix core = rng.gaussian(9, 9);
    Matrix mid = Matrix::Zero(12, 12);
    mid.block(0, 3, 9, 9) = core;
    Matrix w = rng.unitary(12);
    Matrix t = w * mid * w.adjoint();
    dec::CanonicalForm cf = dec::canonical_form(t, dec::CanonicalOptions{3, {}, false});
    CHECK_THROWS_AS(factor_quasinilpotent(cf, 4), SplitTooShallow);
}

TEST_CASE("common right factor of the zero family") {
    std::vector<Matrix> ks(2, Matrix::Zero(6, 6));
    ShiftFactorization f = common_right_factor_compact(ks);
    CHECK(f.q.norm() == doctest::Approx(0.0));
    for (const Matrix& l : f.cofactors)
        CHECK(l.norm() == doctest::Approx(0.0));
}

TEST_CASE("single diagonal compact yields the quarter-power shift") {
    const Index n = 40;  // the truncation tail sqrt(lambda_n) must sit below 1e-10
    std::vector<double> lam = lambda_geometric(0.25, n);
    Matrix k1 = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j)
        k1(j, j) = std::sqrt(lam[static_cast<std::size_t>(j)]);
    const Matrix ks[] = {k1};
    ShiftFactorization f = common_right_factor_compact(ks);
    for (Index j = 0; j + 1 < n; ++j)
        CHECK(std::abs(f.q(j + 1, j)) ==
              doctest::Approx(std::pow(lam[static_cast<std::size_t>(j)], 0.25)).epsilon(1e-10));
    CHECK(f.residuals[0] <= 1e-10 * (1.0 + la::norm2(k1)));
}

TEST_CASE("power identity and head-tail bound for the shift") {
    const Index n = 40;
    std::vector<double> lam = lambda_geometric(0.25, n);
    std::vector<Matrix> ks = fam::compact_family_with_spectrum(lam, 2, 51);
    ShiftFactorization f = common_right_factor_compact(ks, CompactFactorOptions{30});
    for (int m = 1; 2 * m < static_cast<int>(n) && 2 * m <= 30; ++m) {
        double prod = 1.0;
        for (int j = 0; j < 2 * m; ++j)
            prod *= f.lambdas[static_cast<std::size_t>(j)];
        const double expected = std::pow(prod, 0.25);
        const double got = f.power_norms[static_cast<std::size_t>(2 * m - 1)];
        CHECK(std::abs(got - expected) <= 1e-12);
        CHECK(got <= std::pow(f.lambdas[0] * f.lambdas[static_cast<std::size_t>(m)], 0.25 * m) *
                          (1.0 + 1e-9));
    }
    // Boundedness of the cofactors in the construction basis.
    for (const Matrix& li : f.cofactors) {
        for (Index j = 1; j < n; ++j) {
            const double lamj = f.lambdas[static_cast<std::size_t>(j - 1)];
            const double sq = (li * f.basis.column(j)).squaredNorm();
            CHECK(sq <= std::sqrt(lamj) * (1.0 + 1e-9) + 1e-18);
        }
    }
}

TEST_CASE("common right factor on a left-rotated family meets the residual bound") {
    const Index n = 64;
    std::vector<double> lam = lambda_geometric(0.25, n);
    std::vector<Matrix> ks = fam::compact_family_with_spectrum(lam, 3, 77);
    ShiftFactorization f = common_right_factor_compact(ks);
    for (std::size_t i = 0; i < ks.size(); ++i)
        CHECK(f.residuals[i] <= 1e-10 * (1.0 + la::norm2(ks[i])));
}

TEST_CASE("common left factor mirrors the right one") {
    const Index n = 48;
    std::vector<double> lam = lambda_geometric(0.25, n);
    std::vector<Matrix> base = fam::compact_family_with_spectrum(lam, 2, 91);
    std::vector<Matrix> ks;
    for (const Matrix& k : base)
        ks.push_back(k.adjoint());
    ShiftFactorization f = common_left_factor_compact(ks);
    for (std::size_t i = 0; i < ks.size(); ++i)
        CHECK(la::norm2(f.q * f.cofactors[i] - ks[i]) <= 1e-10 * (1.0 + la::norm2(ks[i])));

    // Definitional consistency with the right factorization of the adjoints.
    ShiftFactorization r = common_right_factor_compact(base);
    CHECK(la::norm2(f.q - r.q.adjoint()) <= 1e-12);
}

TEST_CASE("two-sided compact factorization") {
    std::vector<Matrix> zeros(2, Matrix::Zero(5, 5));
    TwoSidedCompact z = two_sided_compact(zeros);
    CHECK(z.left.q.norm() == doctest::Approx(0.0));
    CHECK(z.right.q.norm() == doctest::Approx(0.0));

    const Index n = 80;
    std::vector<double> lam = lambda_geometric(0.25, n);
    std::vector<Matrix> ks = fam::compact_family_with_spectrum(lam, 2, 101);
    TwoSidedCompact f = two_sided_compact(ks, CompactFactorOptions{75});
    for (std::size_t i = 0; i < ks.size(); ++i)
        CHECK(f.residuals[i] <= 1e-10 * (1.0 + la::norm2(ks[i])));
    // The right shift runs on lambda_j = 4^-j and certifies fast; the left
    // stage sees the slower sqrt(lambda) spectrum of the mid factors and
    // needs the longer power sequence to cross the same threshold.
    CHECK(f.right.gelfand <= 0.1);
    CHECK(f.left.gelfand <= 0.1);
}

TEST_CASE("qq_star_factor on decaying positive operators") {
    CHECK(qq_star_factor(Matrix::Zero(4, 4)).norm() == doctest::Approx(0.0));

    const Index n = 24;
    Matrix tpos = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j)
        tpos(j, j) = std::pow(2.0, -static_cast<double>(j));
    Matrix q = qq_star_factor(tpos);
    CHECK(la::norm2(q * q.adjoint() - tpos * tpos) <= 1e-10 * (1.0 + la::norm2(tpos * tpos)));

    CHECK_THROWS_AS(qq_star_factor(Matrix::Identity(6, 6)), NotEssentiallySingular);
}

TEST_CASE("douglas_solve solves inside the range and rejects outside") {
    fam::Rng rng(7);
    Matrix q = rng.gaussian(6, 3) * rng.gaussian(3, 6);  // rank 3
    Matrix s_id = douglas_solve(q, q);
    CHECK(la::norm2(q * s_id - q) <= 1e-8 * (1.0 + la::norm2(q)));

    Matrix zero = douglas_solve(q, Matrix::Zero(6, 6));
    CHECK(zero.norm() == doctest::Approx(0.0));

    // A column orthogonal to the range of q.
    la::SubspaceBasis coker = la::cokernel_basis(q);
    REQUIRE(coker.dim() > 0);
    Matrix t = Matrix::Zero(6, 1);
    t.col(0) = coker.column(0);
    CHECK_THROWS_AS(douglas_solve(q, t), RangeInclusionFailed);
}

TEST_CASE("common general factors of the zero family") {
    std::vector<Matrix> ts(2, Matrix::Zero(24, 24));
    GeneralFactorization f = common_factor_general(ts);
    for (double r : f.residuals)
        CHECK(r <= 1e-12);
    CHECK(f.cube_offdiag_q1 <= 1e-12);
    CHECK(f.cube_diag_dev_q1 <= 1e-12);
    CHECK(f.cube_offdiag_q2 <= 1e-12);
    CHECK(f.cube_diag_dev_q2 <= 1e-12);
}

TEST_CASE("common general factors of a compact family") {
    const Index n = 48;
    std::vector<Matrix> ts;
    for (int i = 0; i < 3; ++i)
        ts.push_back(fam::random_compact(n, 0.5, 300 + static_cast<std::uint64_t>(i)));
    GeneralFactorization f = common_factor_general(ts);
    for (double r : f.residuals)
        CHECK(r <= 1e-8);
    // The cube of the cyclic factors is exactly block diagonal.
    CHECK(f.cube_offdiag_q1 <= 1e-12);
    CHECK(f.cube_diag_dev_q1 <= 1e-12);
    CHECK(f.cube_offdiag_q2 <= 1e-12);
    CHECK(f.cube_diag_dev_q2 <= 1e-12);
    // Pulled-back factors reproduce the padded inputs.
    for (std::size_t i = 0; i < ts.size(); ++i) {
        Matrix tp = f.jcf.padded_input(ts[i]);
        CHECK(la::norm2(f.q1 * f.s[i] * f.q2 - tp) <= 1e-7 * (1.0 + la::norm2(tp)));
    }
    REQUIRE(f.stacked_singular_values.size() == 4);
    for (double s : f.stacked_singular_values)
        CHECK(s <= 1e-2);
}
