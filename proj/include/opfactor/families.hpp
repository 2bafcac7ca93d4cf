// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#ifndef OPFACTOR_FAMILIES_HPP
#define OPFACTOR_FAMILIES_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "opfactor/linalg.hpp"
#include "opfactor/qn_factor.hpp"

namespace opfactor {
namespace fam {

/// Deterministic stream of complex gaussians (Box-Muller over the raw
/// engine so results do not depend on library distribution internals).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform();             // [0, 1)
    double normal();
    Complex cnormal();
    Matrix gaussian(Index rows, Index cols);
    /// Haar-like unitary from the QR of a gaussian matrix.
    Matrix unitary(Index n);

private:
    std::mt19937_64 engine_;
};

/// Discretized integration operator: lower-triangular averaging, injective.
Matrix volterra(Index n);

/// Superdiagonal forward shift: entry (j, j+1) = weights[j].
Matrix weighted_shift(const std::vector<double>& weights);

/// Geometric weights rate^1, ..., rate^count.
std::vector<double> geometric_weights(double rate, int count);

Matrix diagonal(const std::vector<double>& values);

/// Random dense matrix with singular values rate^j, j = 1..n.
Matrix random_compact(Index n, double rate, std::uint64_t seed);

/// Random matrix with an exact kernel (and cokernel) of the given dimension.
Matrix random_singular(Index n, Index kernel_dim, std::uint64_t seed);

/// Random unitary truncation (isometry-like; obstructs the almost-null search).
Matrix random_unitary(Index n, std::uint64_t seed);

/// Synthetic refined pieces for the block factor pair: every piece has the
/// same dimension, the diagonal families obey ||K_n||, ||L_n|| <= base^-n
/// for n >= 2 with a strict margin.
qn::RefinedPieces synthetic_canonical_pieces(Index block_dim, int pieces, std::uint64_t seed,
                                             double base = 4.0);

/// A compact family whose Gram matrix sum K_i* K_i is exactly diagonal with
/// the prescribed eigenvalues (left rotations only keep the computation
/// noise graded with the spectrum).
std::vector<Matrix> compact_family_with_spectrum(const std::vector<double>& lambdas,
                                                 int count, std::uint64_t seed);

struct FamilyDescriptor {
    std::string kind;  // volterra | weighted-shift | diagonal | random-compact |
                       // random-singular | random-unitary | canonical-form-synthetic
    Index n = 0;
    double decay = 0.5;
    std::uint64_t seed = 0;
    Index kernel_dim = 1;
    Index block_dim = 8;
    int pieces = 6;
    void validate() const;  // throws ParseError on bad parameters
};

} // namespace fam
} // namespace opfactor

#endif
