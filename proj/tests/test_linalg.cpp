// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "opfactor/families.hpp"
#include "opfactor/linalg.hpp"
#include "opfactor/matrix_market.hpp"

using namespace opfactor;
using la::SubspaceBasis;

namespace {

Matrix cdiag(std::initializer_list<double> values) {
    Matrix m = Matrix::Zero(static_cast<Index>(values.size()), static_cast<Index>(values.size()));
    Index i = 0;
    for (double v : values) {
        m(i, i) = v;
        ++i;
    }
    return m;
}

// Independent rank oracle: column-pivoted QR (not the SVD kernel under test).
Index rank_oracle(const Matrix& a, double tol) {
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    qr.setThreshold(tol / std::max(1e-300, la::norm2(a)));
    return qr.rank();
}

// Modified Gram-Schmidt complement, independent of the QR-based helper.
Matrix complement_oracle(const Matrix& constraint) {
    const Index n = constraint.rows();
    Matrix candidates = Matrix::Identity(n, n);
    std::vector<Vector> basis;
    for (Index j = 0; j < constraint.cols(); ++j)
        basis.push_back(constraint.col(j));
    Matrix out(n, n - constraint.cols());
    Index got = 0;
    for (Index j = 0; j < n && got < out.cols(); ++j) {
        Vector v = candidates.col(j);
        for (int pass = 0; pass < 2; ++pass)
            for (const Vector& b : basis)
                v -= b * (b.adjoint() * v)(0, 0);
        if (v.norm() > 1e-8) {
            v /= v.norm();
            basis.push_back(v);
            out.col(got++) = v;
        }
    }
    REQUIRE(got == out.cols());
    return out;
}

} // namespace

TEST_CASE("svd identity and diagonal") {
    la::SvdResult dec = la::svd(Matrix::Identity(2, 2));
    CHECK(dec.singular_values(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(dec.singular_values(1) == doctest::Approx(1.0).epsilon(1e-14));

    la::SvdResult d2 = la::svd(cdiag({3.0, 0.0}));
    CHECK(d2.singular_values(0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(d2.singular_values(1) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("svd reconstructs a random 5x3 matrix") {
    fam::Rng rng(11);
    Matrix a = rng.gaussian(5, 3);
    la::SvdResult dec = la::svd(a);
    Matrix sigma = Matrix::Zero(5, 3);
    for (Index i = 0; i < 3; ++i)
        sigma(i, i) = dec.singular_values(i);
    Matrix rebuilt = dec.left.vectors() * sigma * dec.right.vectors().adjoint();
    CHECK((a - rebuilt).norm() <= 1e-12 * (1.0 + a.norm()));
    for (Index i = 0; i + 1 < 3; ++i)
        CHECK(dec.singular_values(i) >= dec.singular_values(i + 1));
}

TEST_CASE("svd respects unitary invariance") {
    fam::Rng rng(12);
    Matrix a = rng.gaussian(6, 6);
    Matrix u = rng.unitary(6), v = rng.unitary(6);
    RealVector s1 = la::svd(a).singular_values;
    RealVector s2 = la::svd(Matrix(u * a * v)).singular_values;
    CHECK((s1 - s2).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("kernel and cokernel bases") {
    CHECK(la::kernel_basis(Matrix::Zero(3, 3)).dim() == 3);
    CHECK(la::cokernel_basis(Matrix::Zero(3, 3)).dim() == 3);

    Matrix d = cdiag({1.0, 0.0, 2.0});
    SubspaceBasis ker = la::kernel_basis(d, 1e-8);
    REQUIRE(ker.dim() == 1);
    CHECK(std::abs(ker.vectors()(1, 0)) == doctest::Approx(1.0).epsilon(1e-12));
    SubspaceBasis coker = la::cokernel_basis(d, 1e-8);
    REQUIRE(coker.dim() == 1);
    CHECK(std::abs(coker.vectors()(1, 0)) == doctest::Approx(1.0).epsilon(1e-12));

    // The discretized integration operator is injective: sigma_min stays
    // above the threshold (oracle: direct Gram eigensolve).
    Matrix vol = fam::volterra(8);
    const double tol = la::default_rank_tol(vol);
    CHECK(rank_oracle(vol, tol) == 8);
    CHECK(la::kernel_basis(vol).dim() == 0);

    fam::Rng rng(5);
    Matrix low = rng.gaussian(4, 2) * rng.gaussian(2, 4);
    CHECK(rank_oracle(low, la::default_rank_tol(low)) == 2);
    CHECK(la::cokernel_basis(low).dim() == 2);
}

TEST_CASE("kernel vectors satisfy the residual bound") {
    fam::Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix a = rng.gaussian(6, 3) * rng.gaussian(3, 6);
        const double tol = la::default_rank_tol(a);
        SubspaceBasis ker = la::kernel_basis(a, tol);
        CHECK(ker.dim() == 3);
        for (Index j = 0; j < ker.dim(); ++j)
            CHECK((a * ker.column(j)).norm() <= tol * (1.0 + la::norm2(a)));
    }
}

TEST_CASE("pad_with_zero") {
    fam::Rng rng(7);
    Matrix a = rng.gaussian(2, 2);
    CHECK((la::pad_with_zero(a, 0) - a).norm() == 0.0);

    Matrix padded = la::pad_with_zero(Matrix::Identity(2, 2), 1);
    CHECK(la::kernel_basis(padded).dim() == 1);
    CHECK(la::cokernel_basis(padded).dim() == 1);

    Matrix low = rng.gaussian(3, 2) * rng.gaussian(2, 3);
    Matrix lp = la::pad_with_zero(low, 2);
    CHECK(la::kernel_basis(lp).dim() == 3);

    // Nonzero singular values are preserved.
    RealVector s_orig = la::svd(low).singular_values;
    RealVector s_pad = la::svd(lp).singular_values;
    for (Index i = 0; i < s_orig.size(); ++i)
        CHECK(std::abs(s_pad(i) - s_orig(i)) <= 1e-12);
    for (Index i = s_orig.size(); i < s_pad.size(); ++i)
        CHECK(s_pad(i) <= 1e-12);
}

TEST_CASE("smallest_singular_pair basics") {
    la::SingularPair zero = la::smallest_singular_pair(Matrix::Zero(3, 3),
                                                       SubspaceBasis::empty(3));
    CHECK(zero.value == doctest::Approx(0.0));
    CHECK(zero.vector.norm() == doctest::Approx(1.0));

    Matrix d = cdiag({1.0, 2.0});
    Matrix e1 = Matrix::Zero(2, 1);
    e1(0, 0) = 1.0;
    la::SingularPair p = la::smallest_singular_pair(d, SubspaceBasis(e1));
    CHECK(p.value == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(std::abs(p.vector(1)) == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(la::smallest_singular_pair(d, SubspaceBasis(Matrix::Identity(2, 2))),
                    EmptyComplement);
}

TEST_CASE("smallest_singular_pair matches the brute restriction oracle") {
    fam::Rng rng(23);
    Matrix a = rng.gaussian(6, 6);
    Matrix cons = rng.unitary(6).leftCols(3);
    la::SingularPair p = la::smallest_singular_pair(a, SubspaceBasis(cons));

    Matrix comp = complement_oracle(cons);
    Eigen::JacobiSVD<Matrix> brute(a * comp);
    const double expected = brute.singularValues().minCoeff();
    CHECK(p.value == doctest::Approx(expected).epsilon(1e-10));
    CHECK((cons.adjoint() * p.vector).norm() <= 1e-12);
    CHECK((a * p.vector).norm() == doctest::Approx(p.value).epsilon(1e-12));
}

TEST_CASE("subspace basis validation") {
    Matrix bad(2, 2);
    bad << 1.0, 1.0, 0.0, 1.0;
    CHECK_THROWS_AS(SubspaceBasis{bad}, Error);
    Matrix unnorm = 2.0 * Matrix::Identity(2, 2);
    CHECK_THROWS_AS(SubspaceBasis{unnorm}, Error);
}

TEST_CASE("hermitian_sqrt squares back") {
    fam::Rng rng(31);
    Matrix g = rng.gaussian(5, 5);
    Matrix h = g * g.adjoint();
    Matrix s = la::hermitian_sqrt(h);
    CHECK((s * s - h).norm() <= 1e-10 * (1.0 + h.norm()));
}

TEST_CASE("matrix market round trip is value exact") {
    fam::Rng rng(41);
    Matrix a = rng.gaussian(4, 3);
    a(1, 2) = Complex(1.0 / 3.0, -2.0e-17);
    Matrix b = mm::from_string(mm::to_string(a));
    REQUIRE(b.rows() == a.rows());
    REQUIRE(b.cols() == a.cols());
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

    // Writing twice produces identical bytes.
    CHECK(mm::to_string(a) == mm::to_string(b));
}

TEST_CASE("matrix market reads real and coordinate forms") {
    const char* real_array =
        "%%MatrixMarket matrix array real general\n"
        "% comment\n"
        "2 2\n"
        "1.5\n"
        "0\n"
        "2.5\n"
        "-1\n";
    Matrix a = mm::from_string(real_array);
    CHECK(a(0, 0) == Complex(1.5, 0.0));
    CHECK(a(0, 1) == Complex(2.5, 0.0));
    CHECK(a(1, 1) == Complex(-1.0, 0.0));

    const char* coord =
        "%%MatrixMarket matrix coordinate complex general\n"
        "3 3 2\n"
        "1 2 0.5 -0.25\n"
        "3 1 2 0\n";
    Matrix c = mm::from_string(coord);
    CHECK(c(0, 1) == Complex(0.5, -0.25));
    CHECK(c(2, 0) == Complex(2.0, 0.0));
    CHECK(c(1, 1) == Complex(0.0, 0.0));

    const char* herm =
        "%%MatrixMarket matrix coordinate complex hermitian\n"
        "2 2 2\n"
        "1 1 1 0\n"
        "2 1 0 1\n";
    Matrix h = mm::from_string(herm);
    CHECK(h(0, 1) == Complex(0.0, -1.0));
    CHECK(h(1, 0) == Complex(0.0, 1.0));
}

TEST_CASE("matrix market rejects malformed input") {
    CHECK_THROWS_AS(mm::from_string("not a matrix"), ParseError);
    CHECK_THROWS_AS(mm::from_string("%%MatrixMarket matrix array quaternion general\n1 1\n0\n"),
                    ParseError);
    CHECK_THROWS_AS(mm::from_string("%%MatrixMarket matrix array real general\n2 2\n1\n"),
                    ParseError);
}

TEST_CASE("matrix power norms and the gelfand helper") {
    Matrix j = Matrix::Zero(3, 3);
    j(0, 1) = 1.0;
    j(1, 2) = 1.0;
    std::vector<double> norms = la::matrix_power_norms(j, 4);
    CHECK(norms[0] == doctest::Approx(1.0));
    CHECK(norms[1] == doctest::Approx(1.0));
    CHECK(norms[2] <= 1e-14);
    CHECK(la::gelfand_from_norms(norms) == doctest::Approx(0.0));
    CHECK(la::gelfand_from_norms({1.0, 1.0, 1.0}) == doctest::Approx(1.0));
}
