// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#include "opfactor/nil_factor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "opfactor/decompose.hpp"

namespace opfactor {
namespace nil {

BalancePlan plan_balance(Index n, Index ker_dim, Index coker_dim, const PadPolicy& policy) {
    for (Index pad = (3 - n % 3) % 3;; pad += 3) {
        if (pad > policy.max_pad)
            throw BudgetExceeded("plan_balance: padding budget " +
                                 std::to_string(policy.max_pad) + " exhausted");
        if (!policy.allow_padding && pad > 0)
            throw Infeasible("plan_balance: balancing requires padding, which is disabled");
        const Index d = (n + pad) / 3;
        const Index take1 = std::min(ker_dim, d);
        const Index take3 = std::min(coker_dim, d);
        if (n - take1 - take3 > d)
            continue;  // middle does not fit yet
        BalancePlan plan;
        plan.pad = pad;
        plan.part = d;
        plan.take_u1 = take1;
        plan.take_u3 = take3;
        plan.pad_u1 = d - take1;
        plan.pad_u3 = d - take3;
        plan.pad_u2 = pad - plan.pad_u1 - plan.pad_u3;
        return plan;
    }
}

namespace {

// Combinations of the columns of `space` that are orthogonal to `against`,
// computed inside the subspace so membership is preserved exactly.
Matrix inside_complement(const Matrix& space, const Matrix& against) {
    if (space.cols() == 0 || against.cols() == 0)
        return space;
    Matrix overlap = against.adjoint() * space;
    la::SubspaceBasis combos = la::kernel_basis(overlap, 1e-12);
    return space * combos.vectors();
}

struct Parts {
    Matrix u1, u2, u3;  // padded-space bases
    BalancePlan plan;
    double ker_residual = 0.0, coker_residual = 0.0;
    std::string assignment;
};

// Builds the balanced parts for a family sharing the kernel bases.  U3 is
// drawn from the joint cokernel; U1 from the joint kernel orthogonal to U3
// and to every T_i U3, which kills the (1,3) blocks outright.  The plan is
// re-solved when the orthogonality constraints eat into the kernel supply.
Parts build_parts(std::span<const Matrix> ts, const Matrix& ker, const Matrix& coker,
                  const NilOptions& opts) {
    const Index n = ts[0].rows();

    Index k1_avail = ker.cols();
    Index k3_avail = coker.cols();
    BalancePlan plan;
    Matrix u1, u3;
    for (Index round = 0; round <= ker.cols() + 1; ++round) {
        plan = plan_balance(n, k1_avail, k3_avail, opts.pad);
        u3 = coker.leftCols(plan.take_u3);
        Matrix constraints(n, (1 + static_cast<Index>(ts.size())) * plan.take_u3);
        constraints.leftCols(plan.take_u3) = u3;
        Index at = plan.take_u3;
        for (const Matrix& t : ts) {
            constraints.middleCols(at, plan.take_u3) = t * u3;
            at += plan.take_u3;
        }
        Matrix u1_space = inside_complement(ker, constraints);
        if (u1_space.cols() >= plan.take_u1) {
            u1 = u1_space.leftCols(plan.take_u1);
            break;
        }
        k1_avail = u1_space.cols();
        u1 = Matrix(n, 0);
    }
    if (u1.cols() != plan.take_u1)
        throw Infeasible("nil decomposition: balancing did not stabilize");

    const Index big = n + plan.pad;

    auto embed = [&](const Matrix& cols) {
        Matrix out = Matrix::Zero(big, cols.cols());
        out.topRows(n) = cols;
        return out;
    };

    Parts parts;
    parts.plan = plan;
    // U1: kernel directions plus fresh padded coordinates.
    Matrix u1_big(big, plan.part);
    u1_big.leftCols(plan.take_u1) = embed(u1.leftCols(plan.take_u1));
    for (Index i = 0; i < plan.pad_u1; ++i) {
        u1_big.col(plan.take_u1 + i) = Vector::Zero(big);
        u1_big(n + i, plan.take_u1 + i) = 1.0;
    }
    // U3: cokernel directions plus the next run of padded coordinates.
    Matrix u3_big(big, plan.part);
    u3_big.leftCols(plan.take_u3) = embed(coker.leftCols(plan.take_u3));
    for (Index i = 0; i < plan.pad_u3; ++i) {
        u3_big.col(plan.take_u3 + i) = Vector::Zero(big);
        u3_big(n + plan.pad_u1 + i, plan.take_u3 + i) = 1.0;
    }
    // U2: the complement (remaining old directions plus leftover padding).
    Matrix both(big, 2 * plan.part);
    both.leftCols(plan.part) = u1_big;
    both.rightCols(plan.part) = u3_big;
    parts.u1 = u1_big;
    parts.u3 = u3_big;
    parts.u2 = la::orthonormal_complement(la::SubspaceBasis(both)).vectors();
    parts.assignment = "u1: " + std::to_string(plan.take_u1) + " kernel + " +
                       std::to_string(plan.pad_u1) + " padded; u3: " +
                       std::to_string(plan.take_u3) + " cokernel + " +
                       std::to_string(plan.pad_u3) + " padded; u2 absorbs " +
                       std::to_string(plan.pad_u2) + " padded";

    for (const Matrix& t : ts) {
        Matrix tp = la::pad_with_zero(t, plan.pad);
        parts.ker_residual = std::max(parts.ker_residual, la::norm2(tp * parts.u1));
        parts.coker_residual =
            std::max(parts.coker_residual, la::norm2(tp.adjoint() * parts.u3));
    }
    return parts;
}

NilDecomposition decomposition_from_parts(const Matrix& t, const Parts& parts) {
    NilDecomposition out;
    out.pad_amount = parts.plan.pad;
    out.part_dim = parts.plan.part;
    Matrix tp = la::pad_with_zero(t, parts.plan.pad);
    out.a = parts.u1.adjoint() * tp * parts.u2;
    out.c = parts.u2.adjoint() * tp * parts.u2;
    out.d = parts.u2.adjoint() * tp * parts.u3;
    out.kernel_residual = parts.ker_residual;
    out.cokernel_residual = parts.coker_residual;
    out.assignment = parts.assignment;
    out.u1 = la::SubspaceBasis(parts.u1);
    out.u2 = la::SubspaceBasis(parts.u2);
    out.u3 = la::SubspaceBasis(parts.u3);
    return out;
}

Matrix kernel_of_stack(std::span<const Matrix> ts, std::optional<double> tol, bool adjoint) {
    const Index n = ts[0].rows();
    Matrix stack(static_cast<Index>(ts.size()) * n, n);
    for (std::size_t i = 0; i < ts.size(); ++i)
        stack.middleRows(static_cast<Index>(i) * n, n) = adjoint ? Matrix(ts[i].adjoint()) : ts[i];
    return la::kernel_basis(stack, tol ? *tol : la::default_rank_tol(stack)).vectors();
}

void require_square_family(std::span<const Matrix> ts, const char* who) {
    if (ts.empty())
        throw Error(std::string(who) + ": empty family");
    const Index n = ts[0].rows();
    for (const Matrix& t : ts)
        if (t.rows() != n || t.cols() != n)
            throw ShapeMismatch(std::string(who) + ": family members must be square, same size");
}

NilDecomposition joint_decomposition_impl(std::span<const Matrix> ts, const NilOptions& opts,
                                          const char* who) {
    require_square_family(ts, who);
    Matrix ker = kernel_of_stack(ts, opts.tol, false);
    Matrix coker = kernel_of_stack(ts, opts.tol, true);
    if (!opts.pad.allow_padding && (ker.cols() == 0 || coker.cols() == 0))
        throw KernelEmpty(std::string(who) +
                          ": kernel or cokernel is trivial and padding is disabled");
    Parts parts = build_parts(ts, ker, coker, opts);
    NilDecomposition out = decomposition_from_parts(ts[0], parts);
    if (ts.size() > 1) {
        // Only the shared geometry matters for the family; per-operator
        // blocks are extracted by the factorizations below.
        out.a.resize(0, 0);
        out.c.resize(0, 0);
        out.d.resize(0, 0);
    }
    return out;
}

Matrix blocks3(const Matrix& b11, const Matrix& b12, const Matrix& b13, const Matrix& b21,
               const Matrix& b22, const Matrix& b23, const Matrix& b31, const Matrix& b32,
               const Matrix& b33, Index d) {
    Matrix out = Matrix::Zero(3 * d, 3 * d);
    auto put = [&](Index i, Index j, const Matrix& b) {
        if (b.size() > 0)
            out.block(i * d, j * d, d, d) = b;
    };
    put(0, 0, b11);
    put(0, 1, b12);
    put(0, 2, b13);
    put(1, 0, b21);
    put(1, 1, b22);
    put(1, 2, b23);
    put(2, 0, b31);
    put(2, 1, b32);
    put(2, 2, b33);
    return out;
}

double cube_norm(const Matrix& x) {
    return (x * x * x).norm();
}

} // namespace

NilDecomposition nil_decomposition(const Matrix& t, const NilOptions& opts) {
    const Matrix ts[] = {t};
    return joint_decomposition_impl(ts, opts, "nil_decomposition");
}

NilDecomposition joint_nil_decomposition(std::span<const Matrix> ts, const NilOptions& opts) {
    return joint_decomposition_impl(ts, opts, "joint_nil_decomposition");
}

std::pair<Matrix, BalancePlan> pad_for_balance(const Matrix& t, const NilOptions& opts) {
    NilDecomposition dec = nil_decomposition(t, opts);
    BalancePlan plan;
    plan.pad = dec.pad_amount;
    plan.part = dec.part_dim;
    return {la::pad_with_zero(t, dec.pad_amount), plan};
}

int nilpotency_index(const Matrix& x, int limit) {
    const double scale = 1.0 + la::norm2(x);
    Matrix p = Matrix::Identity(x.rows(), x.cols());
    double budget = 1.0;
    for (int k = 1; k <= limit; ++k) {
        p = p * x;
        budget *= scale;
        if (p.norm() <= 1e-12 * budget)
            return k;
    }
    return 0;
}

NilFactorization factor_two_nilpotents(const Matrix& t, const NilOptions& opts) {
    NilDecomposition dec = nil_decomposition(t, opts);
    const Index d = dec.part_dim;
    Matrix id = Matrix::Identity(d, d);
    Matrix none;

    // In the part basis: M = [[0,0,A],[I,0,C],[0,0,0]], N = [[0,0,D],[0,0,0],[0,I,0]].
    Matrix mb = blocks3(none, none, dec.a, id, none, dec.c, none, none, none, d);
    Matrix nb = blocks3(none, none, dec.d, none, none, none, none, id, none, d);

    Matrix basis(dec.u1.ambient_dim(), 3 * d);
    basis.leftCols(d) = dec.u1.vectors();
    basis.middleCols(d, d) = dec.u2.vectors();
    basis.rightCols(d) = dec.u3.vectors();

    NilFactorization out;
    out.mode = NilMode::TwoFactors;
    out.left = basis * mb * basis.adjoint();
    out.right = basis * nb * basis.adjoint();
    out.left_block = mb;
    out.right_block = nb;
    out.part_basis = basis;
    out.pad_amount = dec.pad_amount;
    out.part_dim = d;
    Matrix tp = la::pad_with_zero(t, dec.pad_amount);
    const double denom = std::max(t.norm(), 1e-300);
    out.product_residuals.push_back((out.left * out.right - tp).norm() / denom);
    out.cube_norms.push_back(cube_norm(out.left));
    out.cube_norms.push_back(cube_norm(out.right));
    out.nilpotency_indices.push_back(nilpotency_index(out.left));
    out.nilpotency_indices.push_back(nilpotency_index(out.right));
    out.decomposition = std::move(dec);
    return out;
}

NilFactorization common_nilpotent_sandwich(std::span<const Matrix> ts, const NilOptions& opts) {
    NilDecomposition dec = joint_decomposition_impl(ts, opts, "common_nilpotent_sandwich");
    const Index d = dec.part_dim;
    Matrix id = Matrix::Identity(d, d);
    Matrix none;

    Matrix basis(dec.u1.ambient_dim(), 3 * d);
    basis.leftCols(d) = dec.u1.vectors();
    basis.middleCols(d, d) = dec.u2.vectors();
    basis.rightCols(d) = dec.u3.vectors();

    NilFactorization out;
    out.mode = NilMode::Sandwich;
    out.pad_amount = dec.pad_amount;
    out.part_dim = d;
    Matrix nb = blocks3(none, id, none, none, none, id, none, none, none, d);
    out.left = basis * nb * basis.adjoint();
    out.right = out.left;
    out.left_block = nb;
    out.right_block = nb;
    out.part_basis = basis;
    out.nilpotency_indices.push_back(nilpotency_index(out.left));
    out.cube_norms.push_back(cube_norm(out.left));

    for (const Matrix& t : ts) {
        Matrix tp = la::pad_with_zero(t, dec.pad_amount);
        Matrix a = dec.u1.vectors().adjoint() * tp * dec.u2.vectors();
        Matrix c = dec.u2.vectors().adjoint() * tp * dec.u2.vectors();
        Matrix dd = dec.u2.vectors().adjoint() * tp * dec.u3.vectors();
        Matrix nib = blocks3(none, none, none, a, none, none, c, dd, none, d);
        Matrix ni = basis * nib * basis.adjoint();
        const double denom = std::max(t.norm(), 1e-300);
        out.product_residuals.push_back((out.left * ni * out.right - tp).norm() / denom);
        out.cube_norms.push_back(cube_norm(ni));
        out.nilpotency_indices.push_back(nilpotency_index(ni));
        out.middle_blocks.push_back(std::move(nib));
        out.middles.push_back(std::move(ni));
    }
    out.decomposition = std::move(dec);
    return out;
}

NilFactorization common_nilpotent_two_sided(std::span<const Matrix> ts, const NilOptions& opts) {
    NilDecomposition dec = joint_decomposition_impl(ts, opts, "common_nilpotent_two_sided");
    const Index d = dec.part_dim;
    Matrix id = Matrix::Identity(d, d);
    Matrix none;

    Matrix basis(dec.u1.ambient_dim(), 3 * d);
    basis.leftCols(d) = dec.u1.vectors();
    basis.middleCols(d, d) = dec.u2.vectors();
    basis.rightCols(d) = dec.u3.vectors();

    NilFactorization out;
    out.mode = NilMode::TwoSided;
    out.pad_amount = dec.pad_amount;
    out.part_dim = d;
    Matrix n1b = blocks3(none, none, id, id, none, none, none, none, none, d);
    Matrix n2b = blocks3(none, none, id, none, none, none, none, id, none, d);
    out.left = basis * n1b * basis.adjoint();
    out.right = basis * n2b * basis.adjoint();
    out.left_block = n1b;
    out.right_block = n2b;
    out.part_basis = basis;
    out.nilpotency_indices.push_back(nilpotency_index(out.left));
    out.nilpotency_indices.push_back(nilpotency_index(out.right));
    out.cube_norms.push_back(cube_norm(out.left));
    out.cube_norms.push_back(cube_norm(out.right));

    for (const Matrix& t : ts) {
        Matrix tp = la::pad_with_zero(t, dec.pad_amount);
        Matrix a = dec.u1.vectors().adjoint() * tp * dec.u2.vectors();
        Matrix c = dec.u2.vectors().adjoint() * tp * dec.u2.vectors();
        Matrix dd = dec.u2.vectors().adjoint() * tp * dec.u3.vectors();
        Matrix sib = blocks3(dd, none, c, none, none, none, none, none, a, d);
        Matrix si = basis * sib * basis.adjoint();
        const double denom = std::max(t.norm(), 1e-300);
        out.product_residuals.push_back((out.left * si * out.right - tp).norm() / denom);
        out.cube_norms.push_back(cube_norm(si));
        out.nilpotency_indices.push_back(nilpotency_index(si));
        out.middle_blocks.push_back(std::move(sib));
        out.middles.push_back(std::move(si));
    }
    out.decomposition = std::move(dec);
    return out;
}

NecessityReport check_nilpotent_product_necessity(const Matrix& t, std::optional<double> tol) {
    NecessityReport report;
    report.ker_dim = la::kernel_basis(t, tol).dim();
    report.coker_dim = la::cokernel_basis(t, tol).dim();
    const Index n = t.rows();
    try {
        PadPolicy none;
        none.allow_padding = false;
        BalancePlan plan = plan_balance(n, report.ker_dim, report.coker_dim, none);
        report.feasible_without_padding = true;
        report.pad_needed = plan.pad;
    } catch (const Error&) {
        report.feasible_without_padding = false;
        PadPolicy any;
        report.pad_needed = plan_balance(n, report.ker_dim, report.coker_dim, any).pad;
    }
    report.note = "truncation heuristic; reports feasibility of the finite construction only";
    return report;
}

} // namespace nil
} // namespace opfactor
