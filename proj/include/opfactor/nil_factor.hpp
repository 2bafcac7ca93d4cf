// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#ifndef OPFACTOR_NIL_FACTOR_HPP
#define OPFACTOR_NIL_FACTOR_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opfactor/linalg.hpp"

namespace opfactor {
namespace nil {

using la::SubspaceBasis;

struct PadPolicy {
    bool allow_padding = true;
    Index max_pad = 1 << 20;
};

/// Solution of the balancing constraints: the padded dimension splits into
/// three equal parts with U1 inside the kernel and U3 inside the cokernel.
struct BalancePlan {
    Index pad = 0;        // total padded coordinates
    Index part = 0;       // common part dimension
    Index take_u1 = 0;    // kernel directions used
    Index take_u3 = 0;    // cokernel directions used
    Index pad_u1 = 0, pad_u2 = 0, pad_u3 = 0;
};

/// Minimal padding p with (n + p) = 3d, d >= n - take_u1 - take_u3, where
/// take_u1 <= min(ker_dim, d) and take_u3 <= min(coker_dim, d).
BalancePlan plan_balance(Index n, Index ker_dim, Index coker_dim, const PadPolicy& policy);

struct NilDecomposition {
    SubspaceBasis u1, u2, u3;  // on the padded space; u1 in ker, u3 in ker*
    Index pad_amount = 0;
    Index part_dim = 0;
    Matrix a, c, d;  // blocks of the padded operator; (1,3) zeroed
    double kernel_residual = 0.0;    // max ||T u|| over u1
    double cokernel_residual = 0.0;  // max ||T* u|| over u3
    std::string assignment;          // where the padded coordinates went
};

struct NilOptions {
    std::optional<double> tol;  // singular value threshold; default 1e-9 relative
    PadPolicy pad;
};

/// Decomposition of the padded space into three equal parts with
/// U1 inside ker T, U3 inside ker T* and a vanishing (1,3) block.
NilDecomposition nil_decomposition(const Matrix& t, const NilOptions& opts = {});

/// Joint variant: U1 inside the intersection of the kernels, U3 inside the
/// intersection of the adjoint kernels, every (1,3) block zeroed.
NilDecomposition joint_nil_decomposition(std::span<const Matrix> ts,
                                         const NilOptions& opts = {});

/// Minimal zero-padding after which the balanced decomposition exists.
/// Returns the padded matrix and the assignment record.
std::pair<Matrix, BalancePlan> pad_for_balance(const Matrix& t, const NilOptions& opts = {});

enum class NilMode { TwoFactors, Sandwich, TwoSided };

struct NilFactorization {
    NilMode mode = NilMode::TwoFactors;
    Matrix left;                  // M, N, or N1
    Matrix right;                 // N, N, or N2
    std::vector<Matrix> middles;  // N_i or S_i
    // The same factors in the construction coordinates, where nilpotency is
    // structural (strictly triangular up to a permutation of the parts).
    // The ambient factors above are their images under part_basis and carry
    // the usual eps^(1/3) spectral noise of defective eigenvalues.
    Matrix left_block, right_block;
    std::vector<Matrix> middle_blocks;
    Matrix part_basis;  // [U1 | U2 | U3]
    std::vector<int> nilpotency_indices;     // of every factor, order: left, middles..., right
    std::vector<double> cube_norms;          // Frobenius norms of the cubes
    std::vector<double> product_residuals;   // relative, one per input operator
    Index pad_amount = 0;
    Index part_dim = 0;
    NilDecomposition decomposition;
};

/// T (padded) = M N with M^3 = N^3 = 0 structurally.
NilFactorization factor_two_nilpotents(const Matrix& t, const NilOptions& opts = {});

/// T_i (padded) = N N_i N with all cubes vanishing.
NilFactorization common_nilpotent_sandwich(std::span<const Matrix> ts,
                                           const NilOptions& opts = {});

/// T_i (padded) = N1 S_i N2; additionally (N1 S_i)^3 = (S_i N2)^3 = 0.
NilFactorization common_nilpotent_two_sided(std::span<const Matrix> ts,
                                            const NilOptions& opts = {});

struct NecessityReport {
    Index ker_dim = 0;
    Index coker_dim = 0;
    bool feasible_without_padding = false;
    Index pad_needed = 0;
    std::string note;
};

/// Reports the kernel data behind the construction.  A truncation heuristic:
/// it never decides the infinite-dimensional condition.
NecessityReport check_nilpotent_product_necessity(const Matrix& t,
                                                  std::optional<double> tol = {});

/// Least k <= limit with ||X^k|| <= 1e-12 * (1 + ||X||)^k, or 0 if none.
int nilpotency_index(const Matrix& x, int limit = 8);

} // namespace nil
} // namespace opfactor

#endif
