// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

#include "opfactor/families.hpp"
#include "opfactor/nil_factor.hpp"

using namespace opfactor;
using namespace opfactor::nil;

namespace {

// Independent nilpotency oracle: every eigenvalue modulus below tolerance.
double max_eigenvalue_modulus(const Matrix& x) {
    Eigen::ComplexEigenSolver<Matrix> es(x, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

void check_factorization(const Matrix& t, const NilFactorization& f) {
    Matrix tp = la::pad_with_zero(t, f.pad_amount);
    Matrix product;
    if (f.mode == NilMode::TwoFactors)
        product = f.left * f.right;
    else
        product = f.left * f.middles[0] * f.right;
    CHECK((product - tp).norm() <= 1e-10 * std::max(1e-300, t.norm()));
}

} // namespace

TEST_CASE("balancing plans") {
    PadPolicy allow;
    // Already balanced: 6 = 3 * 2 with two kernel directions per side.
    BalancePlan p0 = plan_balance(6, 2, 2, allow);
    CHECK(p0.pad == 0);
    CHECK(p0.part == 2);

    // Invertible 4x4: every part must come from fresh padding.
    BalancePlan p1 = plan_balance(4, 0, 0, allow);
    CHECK(p1.pad == 8);
    CHECK(p1.part == 4);
    CHECK(p1.pad_u1 == 4);
    CHECK(p1.pad_u3 == 4);

    // ker 5, coker 1 on dim 12: the middle needs 12 - 5 - 1 = 6 <= d.
    BalancePlan p2 = plan_balance(12, 5, 1, allow);
    CHECK(p2.pad == 6);
    CHECK(p2.part == 6);
    CHECK(p2.take_u1 == 5);
    CHECK(p2.take_u3 == 1);

    PadPolicy none;
    none.allow_padding = false;
    CHECK_THROWS_AS(plan_balance(4, 0, 0, none), Infeasible);
    PadPolicy tiny;
    tiny.max_pad = 2;
    CHECK_THROWS_AS(plan_balance(4, 0, 0, tiny), BudgetExceeded);
}

TEST_CASE("nil decomposition of the zero operator") {
    NilDecomposition dec = nil_decomposition(Matrix::Zero(6, 6));
    CHECK(dec.pad_amount == 0);
    CHECK(dec.part_dim == 2);
    CHECK(dec.a.norm() == doctest::Approx(0.0));
    CHECK(dec.c.norm() == doctest::Approx(0.0));
    CHECK(dec.d.norm() == doctest::Approx(0.0));
}

TEST_CASE("nil decomposition pads a small rank-one operator") {
    // T = e1 b*: kernel contains e2 and the orthocomplement of b.
    Matrix t = Matrix::Zero(3, 3);
    t(0, 0) = 1.0;
    t(0, 1) = 0.5;
    NilDecomposition dec = nil_decomposition(t);
    CHECK(dec.part_dim * 3 == 3 + dec.pad_amount);
    CHECK(dec.kernel_residual <= 1e-12);
    CHECK(dec.cokernel_residual <= 1e-12);
    // The (1,3) block of the padded operator vanishes.
    Matrix tp = la::pad_with_zero(t, dec.pad_amount);
    Matrix b = dec.u1.vectors().adjoint() * tp * dec.u3.vectors();
    CHECK(b.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("injective operators need padding") {
    NilOptions no_pad;
    no_pad.pad.allow_padding = false;
    CHECK_THROWS_AS(nil_decomposition(Matrix::Identity(4, 4), no_pad), KernelEmpty);
}

TEST_CASE("factor_two_nilpotents on the zero operator") {
    NilFactorization f = factor_two_nilpotents(Matrix::Zero(6, 6));
    CHECK((f.left * f.right).norm() == doctest::Approx(0.0));
    CHECK(f.nilpotency_indices[0] <= 3);
    CHECK(f.nilpotency_indices[1] <= 3);
}

TEST_CASE("factor_two_nilpotents on seeded singular batches") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Index n = 8 + static_cast<Index>(seed * 2 % 40);
        const Index kdim = 1 + static_cast<Index>(seed % 5);
        Matrix t = fam::random_singular(n, kdim, seed);
        NilFactorization f = factor_two_nilpotents(t);
        check_factorization(t, f);
        const double mb = 1e-12 * std::pow(1.0 + la::norm2(f.left), 3.0);
        const double nb = 1e-12 * std::pow(1.0 + la::norm2(f.right), 3.0);
        CHECK(f.cube_norms[0] <= mb);
        CHECK(f.cube_norms[1] <= nb);
        CHECK(f.nilpotency_indices[0] >= 1);
        CHECK(f.nilpotency_indices[0] <= 3);
        CHECK(f.nilpotency_indices[1] >= 1);
        CHECK(f.nilpotency_indices[1] <= 3);
    }
}

TEST_CASE("eigenvalue oracle confirms nilpotency at tiny scale") {
    for (std::uint64_t seed = 40; seed < 46; ++seed) {
        const Index n = 4 + static_cast<Index>(seed % 3);
        Matrix t = fam::random_singular(n, 1, seed);
        NilFactorization f = factor_two_nilpotents(t);
        // Nilpotency is structural in the construction coordinates; the
        // ambient images would show the eps^(1/3) noise of defective spectra.
        CHECK(max_eigenvalue_modulus(f.left_block) <= 1e-8);
        CHECK(max_eigenvalue_modulus(f.right_block) <= 1e-8);
        // The product inherits a kernel at least as large as U1.
        Matrix product = f.left * f.right;
        CHECK(la::kernel_basis(product, 1e-8).dim() >= f.part_dim);
    }
}

TEST_CASE("factorization residuals are unitarily covariant") {
    Matrix t = fam::random_singular(12, 2, 7);
    Matrix u = fam::random_unitary(12, 8);
    Matrix conj = u * t * u.adjoint();
    NilFactorization f1 = factor_two_nilpotents(t);
    NilFactorization f2 = factor_two_nilpotents(conj);
    check_factorization(t, f1);
    check_factorization(conj, f2);
    CHECK(f1.pad_amount == f2.pad_amount);
}

namespace {

// A family with a shared block kernel: every member kills the first part and
// its adjoint kills the third, all in one rotated frame.
std::vector<Matrix> shared_kernel_family(Index part, int count, std::uint64_t seed) {
    fam::Rng rng(seed);
    Matrix w = rng.unitary(3 * part);
    std::vector<Matrix> ts;
    for (int i = 0; i < count; ++i) {
        Matrix blockm = Matrix::Zero(3 * part, 3 * part);
        blockm.block(0, part, part, part) = rng.gaussian(part, part);           // A_i
        blockm.block(part, part, part, part) = rng.gaussian(part, part);        // C_i
        blockm.block(part, 2 * part, part, part) = rng.gaussian(part, part);    // D_i
        ts.push_back(w * blockm * w.adjoint());
    }
    return ts;
}

} // namespace

TEST_CASE("common sandwich factors on a zero family") {
    std::vector<Matrix> ts(3, Matrix::Zero(6, 6));
    NilFactorization f = common_nilpotent_sandwich(ts);
    for (const Matrix& ni : f.middles)
        CHECK(ni.norm() == doctest::Approx(0.0));
    CHECK((f.left * f.left * f.left).norm() <= 1e-14);
}

TEST_CASE("common sandwich factors reproduce a shared-kernel family") {
    std::vector<Matrix> ts = shared_kernel_family(4, 2, 11);
    NilFactorization f = common_nilpotent_sandwich(ts);
    CHECK(f.pad_amount == 0);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        Matrix tp = la::pad_with_zero(ts[i], f.pad_amount);
        CHECK((f.left * f.middles[i] * f.left - tp).norm() <= 1e-10 * ts[i].norm());
        CHECK(f.nilpotency_indices[static_cast<std::size_t>(1 + i)] <= 3);
    }
}

TEST_CASE("two-sided common factors with nilpotent mixed products") {
    std::vector<Matrix> ts = shared_kernel_family(5, 3, 13);
    NilFactorization f = common_nilpotent_two_sided(ts);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        Matrix tp = la::pad_with_zero(ts[i], f.pad_amount);
        CHECK((f.left * f.middles[i] * f.right - tp).norm() <= 1e-10 * ts[i].norm());

        Matrix ls = f.left * f.middles[i];
        Matrix sr = f.middles[i] * f.right;
        CHECK((ls * ls * ls).norm() <= 1e-12 * std::pow(1.0 + la::norm2(ls), 3.0));
        CHECK((sr * sr * sr).norm() <= 1e-12 * std::pow(1.0 + la::norm2(sr), 3.0));

        // Block oracle: the square of N1 S_i collapses to one corner block
        // carrying D_i A_i.
        const Index d = f.part_dim;
        Matrix sq = ls * ls;
        Matrix in_parts = Matrix::Zero(3 * d, 3 * d);
        Matrix basis(f.decomposition.u1.ambient_dim(), 3 * d);
        basis.leftCols(d) = f.decomposition.u1.vectors();
        basis.middleCols(d, d) = f.decomposition.u2.vectors();
        basis.rightCols(d) = f.decomposition.u3.vectors();
        Matrix coords = basis.adjoint() * sq * basis;
        Matrix a_i = f.decomposition.u1.vectors().adjoint() * tp * f.decomposition.u2.vectors();
        Matrix d_i = f.decomposition.u2.vectors().adjoint() * tp * f.decomposition.u3.vectors();
        in_parts.block(d, 2 * d, d, d) = d_i * a_i;
        CHECK((coords - in_parts).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + la::norm2(tp)));
    }
}

TEST_CASE("necessity report") {
    NecessityReport zero = check_nilpotent_product_necessity(Matrix::Zero(6, 6), {});
    CHECK(zero.ker_dim == 6);
    CHECK(zero.feasible_without_padding);
    CHECK(zero.pad_needed == 0);

    NecessityReport inv = check_nilpotent_product_necessity(Matrix::Identity(4, 4), {});
    CHECK_FALSE(inv.feasible_without_padding);
    CHECK(inv.pad_needed == 8);

    Matrix t = fam::random_singular(9, 2, 3);
    NecessityReport r = check_nilpotent_product_necessity(t, {});
    CHECK(r.ker_dim == 2);
    CHECK(r.coker_dim == 2);  // rank-nullity on a square matrix
}
