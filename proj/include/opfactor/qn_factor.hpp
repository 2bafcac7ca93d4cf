// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#ifndef OPFACTOR_QN_FACTOR_HPP
#define OPFACTOR_QN_FACTOR_HPP

#include <span>
#include <vector>

#include "opfactor/blockop.hpp"
#include "opfactor/decompose.hpp"
#include "opfactor/linalg.hpp"

namespace opfactor {
namespace qn {

using la::SubspaceBasis;

/// Partition of a domain (or range) into pieces on which a compact-like
/// operator has geometrically decaying restriction norms:
/// piece 1 takes singular values above base^-2, piece n (2 <= n < count)
/// the band (base^-(n+1), base^-n], and the last piece everything below.
struct CompactSplit {
    std::vector<SubspaceBasis> pieces;   // may contain empty pieces
    std::vector<double> piece_bounds;    // actual max sigma per piece
    double base = 4.0;
    Index ambient_dim() const { return pieces.empty() ? 0 : pieces[0].ambient_dim(); }
    int nonempty_count() const;
};

struct SplitOptions {
    double base = 4.0;
    int max_pieces = 6;
};

/// Splits the domain by binning right singular vectors.
CompactSplit split_compact_domain(const Matrix& k, const SplitOptions& opts = {});
/// Splits the range by binning left singular vectors.
CompactSplit split_compact_range(const Matrix& l, const SplitOptions& opts = {});

/// The center block and the per-piece slices of a canonical form, the data
/// from which the factor pair is assembled.
struct RefinedPieces {
    Matrix c;                 // d2 x d2 center
    std::vector<Matrix> a;    // a[n-1]: piece n of the column above the center
    std::vector<Matrix> k;    // k[n-1]: piece n of the row to the left
    std::vector<Matrix> d;    // d[n-1]: piece n of the row to the right
    std::vector<Matrix> l;    // l[n-1]: piece n of the column below
    double base = 4.0;

    Index center_dim() const { return c.rows(); }
    int side_pieces() const { return static_cast<int>(std::max(a.size(), d.size())); }
};

/// Slices A/K by the domain split of K and D/L by the range split of L.
RefinedPieces refine_canonical(const dec::CanonicalForm& cf, const CompactSplit& k_split,
                               const CompactSplit& l_split);

/// The doubly-indexed operator carrying the refined pieces: row 0 holds
/// K_n to the left of the boxed C and D_n to the right; column 0 holds
/// A_n above and L_n below.
blk::BlockOperator build_refined(const RefinedPieces& p, int index_radius);

/// First factor: scaled identities 2^-(k-1) I flowing into the center row,
/// the A_n column, C at (0, 1) and the weighted diagonal 2^n L_n.
blk::BlockOperator build_q1(const RefinedPieces& p, int index_radius);

/// Second factor: the weighted diagonal 2^n K_n, the D_n row and the scaled
/// identity column 2^-(n-1) I under the center.
blk::BlockOperator build_q2(const RefinedPieces& p, int index_radius);

struct QNFactorization {
    blk::BlockOperator q1, q2;
    RefinedPieces pieces;
    double product_residual = 0.0;  // blockwise, central window
    double max_block_norm = 0.0;    // of the refined operator
    blk::Certificate cert_q1, cert_q2;
    blk::BoundReport r_bound_q1;  // weighted diagonal of q1 (the 2^n L_n shift)
    blk::BoundReport r_bound_q2;  // weighted diagonal of q2 (the 2^n K_n shift)
    int window_used = 0;
};

struct QNOptions {
    double base = 4.0;
    int max_pieces = 6;
    int cert_n_max = 12;
    double cert_threshold = 0.5;
};

/// The factorization T = Q1 Q2 from a canonical form; the product is checked
/// blockwise against the refined operator on the central window.
QNFactorization factor_quasinilpotent(const dec::CanonicalForm& cf, int window,
                                      const QNOptions& opts = {});

/// Assembly + verification from already-refined pieces (synthetic families).
QNFactorization factor_from_pieces(const RefinedPieces& pieces, int window,
                                   const QNOptions& opts = {});

/// A common factor through a forward weighted shift: K_i = L_i Q (right) or
/// K_i = Q L_i (left), with Q = shift by lambda_j^(1/4) in the eigenbasis of
/// sum K_i* K_i.
struct ShiftFactorization {
    SubspaceBasis basis;          // eigenbasis phi_j
    std::vector<double> lambdas;  // eigenvalues, non-increasing, clipped at 0
    std::vector<double> weights;  // lambda_j^(1/4)
    Matrix q;
    std::vector<Matrix> cofactors;  // L_i
    std::vector<double> residuals;  // ||L_i Q - K_i|| (or mirrored)
    std::vector<double> power_norms;  // ||Q^n||, n = 1..n_max
    double gelfand = 0.0;
};

struct CompactFactorOptions {
    int power_n_max = 30;
};

ShiftFactorization common_right_factor_compact(std::span<const Matrix> ks,
                                               const CompactFactorOptions& opts = {});
ShiftFactorization common_left_factor_compact(std::span<const Matrix> ks,
                                              const CompactFactorOptions& opts = {});

struct TwoSidedCompact {
    ShiftFactorization right;  // K_i = mid_i * right.q
    ShiftFactorization left;   // mid_i = left.q * cofactor_i
    std::vector<Matrix> middles() const { return left.cofactors; }
    std::vector<double> residuals;  // ||Q1 L_i Q2 - K_i||
};

TwoSidedCompact two_sided_compact(std::span<const Matrix> ks,
                                  const CompactFactorOptions& opts = {});

struct QQStarOptions {
    double decay_tol = 1e-3;
};

/// A quasi-nilpotent Q with Q Q* = T^2, for diagonalizable positive T whose
/// spectrum decays to zero (backward weighted shift in the eigenbasis).
Matrix qq_star_factor(const Matrix& t_pos, const QQStarOptions& opts = {});

struct DouglasOptions {
    double range_tol = 1e-8;
};

/// Minimum-norm solution S of Q S = T after checking that the columns of T
/// lie in the range of Q.
Matrix douglas_solve(const Matrix& q, const Matrix& t, const DouglasOptions& opts = {});

/// Common general factors T_i = Q1 S_i Q2 through the joint canonical form:
/// the primed operators act on three balanced parts and satisfy
/// Q1'^3 = diag(R, R, R), Q2'^3 = diag(Q, Q, Q).
struct GeneralFactorization {
    dec::JointCanonicalForm jcf;
    Matrix r;                        // common left factor of the L_i
    Matrix q;                        // common right factor of the K_i
    std::vector<Matrix> m_factors;   // L_i = R M_i
    std::vector<Matrix> h_factors;   // K_i = H_i Q
    Matrix q1_primed, q2_primed;
    std::vector<Matrix> s_primed;
    Matrix q1, q2;                   // pulled back through V
    std::vector<Matrix> s;
    std::vector<double> residuals;          // ||Q1' S_i' Q2' - V T_i V^-1|| relative
    double cube_offdiag_q1 = 0.0;           // max off-diagonal block of Q1'^3
    double cube_offdiag_q2 = 0.0;
    double cube_diag_dev_q1 = 0.0;          // max ||diag block - R||
    double cube_diag_dev_q2 = 0.0;
    std::vector<double> r_power_norms, q_power_norms;
    double r_gelfand = 0.0, q_gelfand = 0.0;
    std::vector<double> stacked_singular_values;  // trailing sigmas of [S_1'; ...]
};

struct GeneralFactorOptions {
    dec::CanonicalOptions canonical;
    int power_n_max = 30;
    int diagnostic_count = 4;
};

GeneralFactorization common_factor_general(std::span<const Matrix> ts,
                                           const GeneralFactorOptions& opts = {});

} // namespace qn
} // namespace opfactor

#endif
