// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#ifndef OPFACTOR_DECOMPOSE_HPP
#define OPFACTOR_DECOMPOSE_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opfactor/linalg.hpp"

namespace opfactor {
namespace dec {

using la::SubspaceBasis;

struct AlmostNullPair {
    SubspaceBasis f;  // ||T f_n|| <= eps_n
    SubspaceBasis g;  // ||T* g_n|| <= eps_n
    std::vector<double> f_residuals;
    std::vector<double> g_residuals;
    std::vector<double> eps;
};

/// Default allowance schedule: ||T||_2 * (1/1, 1/2, ..., 1/k).
std::vector<double> default_eps_schedule(double norm, int k);

/// Greedy interleaved search for jointly orthonormal f_1, g_1, f_2, g_2, ...
/// with ||T f_n|| <= eps_n and ||T* g_n|| <= eps_n, each step the constrained
/// minimizer.  Acceptance is strict: a constrained minimum at (or above) the
/// allowance raises SemiFredholmObstruction.
AlmostNullPair interleaved_almost_null(const Matrix& t, int count,
                                       std::vector<double> eps_schedule = {});

/// The same search run against two separate operators (one for the f side,
/// one for the g side), used by the joint decomposition.
AlmostNullPair interleaved_almost_null_pairwise(const Matrix& for_f, const Matrix& for_g,
                                                int count, std::vector<double> eps_schedule);

struct TripleDecomposition {
    SubspaceBasis u1, u2, u3;  // mutually orthogonal, jointly spanning
    std::vector<double> eps_used;
    double corner_budget = 0.0;     // sum of the allowances
    bool middle_policy_ok = true;   // dim u2 >= dim u1 + dim u3
    std::string labels;
    Index ambient_dim() const { return u1.ambient_dim(); }
};

/// H = U1 + U2 + U3 with U1 spanned by the f-vectors, U3 by the g-vectors
/// and U2 the joint orthocomplement.  Requires ambient dim >= 3k.
TripleDecomposition triple_decomposition(const Matrix& t, int k,
                                         std::vector<double> eps_schedule = {});

/// Shrinks U1 so that the (1,3) block of t vanishes: the range of B moves
/// into the middle part.  Raises DegenerateReduction when rank(B) = dim U1.
TripleDecomposition zero_upper_right(const Matrix& t, const TripleDecomposition& dec);

/// Iterated zero_upper_right over a family; the surviving U1 kills every
/// (1,3) block at once.
TripleDecomposition multi_zero_upper_right(std::span<const Matrix> ts,
                                           const TripleDecomposition& dec);

struct CanonicalOptions {
    int k = 3;                          // almost-null pairs to extract
    std::vector<double> eps_schedule;   // empty: default schedule
    bool balance_parts = false;         // pad outer parts up to the middle dim
    Index min_part = 1;                 // parts keep at least this dimension
};

/// Similarity to the block form [[0,A,0],[K,C,D],[0,L,0]] on the zero-padded
/// space.  The corner blocks are exact structural zeros; the basis change V
/// is invertible (not unitary) with a recorded inverse.
struct CanonicalForm {
    TripleDecomposition decomposition;  // pre-padding orthonormal parts
    Matrix a, k, c, d, l, b;            // b is the (1,3) block, zero after reduction
    Matrix basis_change;                // V, acting on the padded space
    Matrix basis_change_inv;            // V^-1
    Index pad_amount = 0;
    Index dim1 = 0, dim2 = 0, dim3 = 0;  // part dimensions after padding
    std::vector<double> k_singular_values;  // compactness report
    std::vector<double> l_singular_values;
    std::vector<double> eps_schedule;

    Matrix padded_input(const Matrix& t) const { return la::pad_with_zero(t, pad_amount); }
    /// Assembles [[0,A,0],[K,C,D],[0,L,0]] as a dense matrix.
    Matrix assemble() const;
};

CanonicalForm canonical_form(const Matrix& t, const CanonicalOptions& opts = {});

/// One basis change putting every member of a family into canonical form.
/// The almost-null vectors are drawn from sqrt(sum Ti* Ti) on the f side and
/// sqrt(sum Ti Ti*) on the g side.  Parts are balanced to a common dimension.
struct JointCanonicalForm {
    TripleDecomposition decomposition;
    Matrix basis_change, basis_change_inv;
    Index pad_amount = 0;
    Index part_dim = 0;  // all three parts share this dimension
    struct Blocks {
        Matrix a, k, c, d, l, b;
    };
    std::vector<Blocks> ops;
    std::vector<double> eps_schedule;

    Matrix padded_input(const Matrix& t) const { return la::pad_with_zero(t, pad_amount); }
    Matrix assemble(std::size_t i) const;
};

JointCanonicalForm joint_canonical_form(std::span<const Matrix> ts,
                                        const CanonicalOptions& opts = {});

} // namespace dec
} // namespace opfactor

#endif
