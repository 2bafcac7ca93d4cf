// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#ifndef OPFACTOR_BLOCKOP_HPP
#define OPFACTOR_BLOCKOP_HPP

#include <functional>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "opfactor/linalg.hpp"

namespace opfactor {
namespace blk {

/// Dimensions of the summands of a block decomposition, keyed by an integer
/// block index.  Index 0 is the distinguished center; undeclared indices have
/// dimension zero and carry no rows/columns in truncations.
class BlockShape {
public:
    BlockShape() = default;
    explicit BlockShape(std::map<int, Index> dims);

    /// Uniform shape: every index in [-radius, radius] has the same dimension.
    static BlockShape uniform(Index dim, int radius);

    Index dim(int i) const;
    bool declared(int i) const { return dims_.find(i) != dims_.end(); }
    const std::map<int, Index>& dims() const { return dims_; }
    bool operator==(const BlockShape& other) const { return dims_ == other.dims_; }

    /// Declared indices inside [-window, window], ascending.
    std::vector<int> indices_within(int window) const;
    /// Total dimension of the declared indices inside [-window, window].
    Index span(int window) const;

private:
    std::map<int, Index> dims_;
};

using BlockKey = std::pair<int, int>;
using BlockSupport = std::set<BlockKey>;

/// A lazily-indexed operator over integer block indices with a declared
/// finite support.  Accessors must be pure; off-support blocks are zero.
class BlockOperator {
public:
    using Generator = std::function<Matrix(int, int)>;
    using NormBound = std::function<double(int, int)>;

    BlockOperator(BlockShape row_shape, BlockShape col_shape, Generator generator,
                  BlockSupport support, NormBound norm_bound = {});

    /// Dense-block variant: blocks held in a map.
    static BlockOperator from_blocks(BlockShape row_shape, BlockShape col_shape,
                                     std::map<BlockKey, Matrix> blocks);

    static BlockOperator zero(BlockShape row_shape, BlockShape col_shape);

    const BlockShape& row_shape() const { return row_shape_; }
    const BlockShape& col_shape() const { return col_shape_; }
    const BlockSupport& support() const { return support_; }
    bool has_norm_bound() const { return static_cast<bool>(norm_bound_); }
    double norm_bound(int i, int j) const { return norm_bound_(i, j); }

    /// Block at (i, j); zero off support, dimensioned by the shapes.
    Matrix block(int i, int j) const;

    /// Largest |i - j| over the support (0 for empty support).
    int bandwidth() const;

    /// Checks block dimensions and declared norm bounds over the support.
    void validate() const;

private:
    BlockShape row_shape_, col_shape_;
    Generator generator_;
    BlockSupport support_;
    NormBound norm_bound_;
};

/// Blockwise product.  Fibers are finite by construction of the declared
/// supports; shapes must agree on every index touched by the composition.
BlockOperator compose(const BlockOperator& x, const BlockOperator& y);

/// Dense assembly of the blocks with |i|, |j| <= window, ascending index order.
Matrix truncate(const BlockOperator& x, int window);

/// Row/column offsets of each declared index inside a truncation.
struct TruncationLayout {
    std::vector<int> indices;
    std::vector<Index> offsets;
    Index total = 0;
};
TruncationLayout truncation_layout(const BlockShape& shape, int window);

struct PowerNormSequence {
    std::vector<double> values;  // values[n-1] = ||X^n|| on the stated truncation
    int window = 0;
    double value(int n) const { return values.at(static_cast<std::size_t>(n - 1)); }
};

/// ||X^n||_2 for n = 1..n_max, evaluated on the central window of a guarded
/// truncation (guard band = n_max * bandwidth) so edge effects do not leak in.
PowerNormSequence power_norms(const BlockOperator& x, int n_max, int window);

/// Upper bound on the truncation's spectral radius: min_n values[n]^(1/n).
double gelfand_estimate(const PowerNormSequence& seq);

struct BoundEntry {
    int n;
    double analytic;
    double computed;
    bool pass;
};

/// Certifies the decay of a weighted block superdiagonal from the claimed
/// block norms b_j: ||R^n|| <= max_j b_j * s^-(2+3+...+n) with s = sqrt(base).
struct BoundReport {
    std::vector<BoundEntry> entries;
    bool all_pass = true;
    bool precondition_ok = true;  // b_k <= s^-k for k >= 2
    double max_scaled_norm = 0.0;
    double base = 4.0;
};
BoundReport weighted_diag_qn_bound(const std::vector<double>& norm_bounds, double base,
                                   int n_max);

struct Certificate {
    bool valid = false;
    double threshold = 0.5;
    int split_after = 0;  // first interval: indices <= split_after
    double corner1_estimate = 0.0;
    double corner2_estimate = 0.0;
    PowerNormSequence corner1_powers;
    PowerNormSequence corner2_powers;
};

struct CertificateOptions {
    int n_max = 12;
    int window = 6;
    double threshold = 0.5;
};

/// Quasi-nilpotency certificate for a block-triangular operator: both
/// diagonal corners must have a Gelfand estimate below the threshold; the
/// off-diagonal corner is ignored.
Certificate triangular_qn_certificate(const BlockOperator& x, int split_after,
                                      const CertificateOptions& opts = {});

/// Restriction of x to the block indices selected by keep (re-indexed by shift).
BlockOperator restrict_indices(const BlockOperator& x, const std::function<bool(int)>& keep,
                               int shift);

} // namespace blk
} // namespace opfactor

#endif
