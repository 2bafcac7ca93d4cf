// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#include "opfactor/blockop.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace opfactor {
namespace blk {

BlockShape::BlockShape(std::map<int, Index> dims) : dims_(std::move(dims)) {
    for (const auto& [i, d] : dims_)
        if (d <= 0)
            throw ShapeMismatch("BlockShape: index " + std::to_string(i) +
                                " declared with non-positive dimension");
}

BlockShape BlockShape::uniform(Index dim, int radius) {
    std::map<int, Index> dims;
    for (int i = -radius; i <= radius; ++i)
        dims[i] = dim;
    return BlockShape(std::move(dims));
}

Index BlockShape::dim(int i) const {
    auto it = dims_.find(i);
    return it == dims_.end() ? 0 : it->second;
}

std::vector<int> BlockShape::indices_within(int window) const {
    std::vector<int> out;
    for (const auto& [i, d] : dims_)
        if (std::abs(i) <= window)
            out.push_back(i);
    return out;
}

Index BlockShape::span(int window) const {
    Index total = 0;
    for (const auto& [i, d] : dims_)
        if (std::abs(i) <= window)
            total += d;
    return total;
}

BlockOperator::BlockOperator(BlockShape row_shape, BlockShape col_shape, Generator generator,
                             BlockSupport support, NormBound norm_bound)
    : row_shape_(std::move(row_shape)),
      col_shape_(std::move(col_shape)),
      generator_(std::move(generator)),
      support_(std::move(support)),
      norm_bound_(std::move(norm_bound)) {
    // Support entries on undeclared indices would be unreachable zero blocks.
    for (auto it = support_.begin(); it != support_.end();) {
        if (row_shape_.dim(it->first) == 0 || col_shape_.dim(it->second) == 0)
            it = support_.erase(it);
        else
            ++it;
    }
}

BlockOperator BlockOperator::from_blocks(BlockShape row_shape, BlockShape col_shape,
                                         std::map<BlockKey, Matrix> blocks) {
    BlockSupport support;
    for (const auto& [key, m] : blocks)
        support.insert(key);
    auto holder = std::make_shared<std::map<BlockKey, Matrix>>(std::move(blocks));
    auto gen = [holder](int i, int j) -> Matrix { return holder->at({i, j}); };
    return BlockOperator(std::move(row_shape), std::move(col_shape), std::move(gen),
                         std::move(support));
}

BlockOperator BlockOperator::zero(BlockShape row_shape, BlockShape col_shape) {
    return BlockOperator(std::move(row_shape), std::move(col_shape),
                         [](int, int) -> Matrix { return Matrix(); }, {});
}

Matrix BlockOperator::block(int i, int j) const {
    const Index r = row_shape_.dim(i);
    const Index c = col_shape_.dim(j);
    if (support_.count({i, j}) == 0)
        return Matrix::Zero(r, c);
    Matrix b = generator_(i, j);
    if (b.rows() != r || b.cols() != c)
        throw ShapeMismatch("BlockOperator: block (" + std::to_string(i) + ", " +
                            std::to_string(j) + ") has dimensions " +
                            std::to_string(b.rows()) + "x" + std::to_string(b.cols()) +
                            ", shape declares " + std::to_string(r) + "x" + std::to_string(c));
    return b;
}

int BlockOperator::bandwidth() const {
    int bw = 0;
    for (const auto& [i, j] : support_)
        bw = std::max(bw, std::abs(i - j));
    return bw;
}

void BlockOperator::validate() const {
    for (const auto& [i, j] : support_) {
        Matrix b = block(i, j);  // checks dimensions
        if (norm_bound_) {
            const double bound = norm_bound_(i, j);
            const double actual = la::norm2(b);
            if (actual > bound + 1e-12)
                throw Error("BlockOperator: block (" + std::to_string(i) + ", " +
                            std::to_string(j) + ") norm " + std::to_string(actual) +
                            " exceeds declared bound " + std::to_string(bound));
        }
    }
}

BlockOperator compose(const BlockOperator& x, const BlockOperator& y) {
    // Every index used as an inner contraction index must agree.
    for (const auto& [i, k] : x.support()) {
        if (x.col_shape().dim(k) != y.row_shape().dim(k))
            throw ShapeMismatch("compose: inner index " + std::to_string(k) +
                                " has mismatched dimensions");
    }
    for (const auto& [k, j] : y.support()) {
        if (x.col_shape().declared(k) && x.col_shape().dim(k) != y.row_shape().dim(k))
            throw ShapeMismatch("compose: inner index " + std::to_string(k) +
                                " has mismatched dimensions");
    }

    // Group x's support by inner index for the fiber walk.
    std::map<int, std::vector<int>> rows_by_inner;
    for (const auto& [i, k] : x.support())
        rows_by_inner[k].push_back(i);

    std::map<BlockKey, Matrix> blocks;
    for (const auto& [k, j] : y.support()) {
        auto it = rows_by_inner.find(k);
        if (it == rows_by_inner.end())
            continue;
        Matrix yb = y.block(k, j);
        for (int i : it->second) {
            Matrix term = x.block(i, k) * yb;
            auto [pos, inserted] = blocks.try_emplace({i, j}, term);
            if (!inserted)
                pos->second += term;
        }
    }
    return BlockOperator::from_blocks(x.row_shape(), y.col_shape(), std::move(blocks));
}

TruncationLayout truncation_layout(const BlockShape& shape, int window) {
    TruncationLayout out;
    out.indices = shape.indices_within(window);
    out.offsets.reserve(out.indices.size());
    Index off = 0;
    for (int i : out.indices) {
        out.offsets.push_back(off);
        off += shape.dim(i);
    }
    out.total = off;
    return out;
}

Matrix truncate(const BlockOperator& x, int window) {
    if (window < 0)
        throw Error("truncate: negative window");
    TruncationLayout rows = truncation_layout(x.row_shape(), window);
    TruncationLayout cols = truncation_layout(x.col_shape(), window);
    Matrix out = Matrix::Zero(rows.total, cols.total);
    for (const auto& [i, j] : x.support()) {
        if (std::abs(i) > window || std::abs(j) > window)
            continue;
        auto ri = std::lower_bound(rows.indices.begin(), rows.indices.end(), i);
        auto cj = std::lower_bound(cols.indices.begin(), cols.indices.end(), j);
        const Index r0 = rows.offsets[static_cast<std::size_t>(ri - rows.indices.begin())];
        const Index c0 = cols.offsets[static_cast<std::size_t>(cj - cols.indices.begin())];
        out.block(r0, c0, x.row_shape().dim(i), x.col_shape().dim(j)) = x.block(i, j);
    }
    return out;
}

PowerNormSequence power_norms(const BlockOperator& x, int n_max, int window) {
    if (n_max < 1)
        throw Error("power_norms: n_max must be at least 1");
    if (!(x.row_shape() == x.col_shape()))
        throw ShapeMismatch("power_norms: operator is not square");
    const int guard = n_max * std::max(1, x.bandwidth());
    const int big = window + guard;
    Matrix b = truncate(x, big);

    // Central selection: rows/cols of the indices inside the plain window.
    TruncationLayout lay = truncation_layout(x.row_shape(), big);
    std::vector<Index> central;
    for (std::size_t s = 0; s < lay.indices.size(); ++s) {
        if (std::abs(lay.indices[s]) <= window) {
            const Index d = x.row_shape().dim(lay.indices[s]);
            for (Index t = 0; t < d; ++t)
                central.push_back(lay.offsets[s] + t);
        }
    }

    PowerNormSequence seq;
    seq.window = window;
    seq.values.reserve(static_cast<std::size_t>(n_max));
    Matrix p = b;
    for (int n = 1; n <= n_max; ++n) {
        Matrix core(central.size(), central.size());
        for (std::size_t r = 0; r < central.size(); ++r)
            for (std::size_t c = 0; c < central.size(); ++c)
                core(static_cast<Index>(r), static_cast<Index>(c)) =
                    p(central[r], central[c]);
        seq.values.push_back(la::norm2(core));
        if (n < n_max)
            p = p * b;
    }
    return seq;
}

double gelfand_estimate(const PowerNormSequence& seq) {
    return la::gelfand_from_norms(seq.values);
}

BoundReport weighted_diag_qn_bound(const std::vector<double>& norm_bounds, double base,
                                   int n_max) {
    for (double b : norm_bounds)
        if (b < 0.0)
            throw Error("weighted_diag_qn_bound: negative norm bound");
    if (base <= 1.0)
        throw Error("weighted_diag_qn_bound: base must exceed 1");
    BoundReport report;
    report.base = base;
    const double s = std::sqrt(base);
    const int m = static_cast<int>(norm_bounds.size());
    double max_b = 0.0;
    for (double b : norm_bounds)
        max_b = std::max(max_b, b);
    report.max_scaled_norm = max_b;
    for (int k = 2; k <= m; ++k)
        if (norm_bounds[static_cast<std::size_t>(k - 1)] > std::pow(s, -k) + 1e-12)
            report.precondition_ok = false;

    for (int n = 1; n <= n_max; ++n) {
        // exponent 2 + 3 + ... + n
        const double expo = 0.5 * n * (n + 1.0) - 1.0;
        const double analytic = max_b * std::pow(s, -expo);
        // ||R^n|| of the scalar surrogate: the largest window product of n
        // consecutive weights.
        double computed = 0.0;
        for (int j = 0; j + n <= m; ++j) {
            double prod = 1.0;
            for (int i = 1; i <= n; ++i)
                prod *= norm_bounds[static_cast<std::size_t>(j + i - 1)];
            computed = std::max(computed, prod);
        }
        const bool pass = computed <= analytic * (1.0 + 1e-9);
        report.entries.push_back(BoundEntry{n, analytic, computed, pass});
        report.all_pass = report.all_pass && pass;
    }
    return report;
}

BlockOperator restrict_indices(const BlockOperator& x, const std::function<bool(int)>& keep,
                               int shift) {
    std::map<int, Index> rdims, cdims;
    for (const auto& [i, d] : x.row_shape().dims())
        if (keep(i))
            rdims[i + shift] = d;
    for (const auto& [j, d] : x.col_shape().dims())
        if (keep(j))
            cdims[j + shift] = d;
    std::map<BlockKey, Matrix> blocks;
    for (const auto& [i, j] : x.support())
        if (keep(i) && keep(j))
            blocks[{i + shift, j + shift}] = x.block(i, j);
    return BlockOperator::from_blocks(BlockShape(std::move(rdims)), BlockShape(std::move(cdims)),
                                      std::move(blocks));
}

namespace {

// Square realization of a block operator whose row and column shapes differ
// only through piece identifications: every declared index is given the
// common bounding dimension and each block is embedded in the top-left
// corner.  Chains of embedded blocks multiply exactly like the originals,
// so truncated power norms are those of the identified operator.
BlockOperator uniformized(const BlockOperator& x) {
    Index m = 0;
    std::set<int> indices;
    for (const auto& [i, d] : x.row_shape().dims()) {
        m = std::max(m, d);
        indices.insert(i);
    }
    for (const auto& [j, d] : x.col_shape().dims()) {
        m = std::max(m, d);
        indices.insert(j);
    }
    std::map<int, Index> dims;
    for (int i : indices)
        dims[i] = m;
    std::map<BlockKey, Matrix> blocks;
    for (const auto& [i, j] : x.support()) {
        Matrix b = x.block(i, j);
        Matrix big = Matrix::Zero(m, m);
        big.topLeftCorner(b.rows(), b.cols()) = b;
        blocks[{i, j}] = std::move(big);
    }
    BlockShape shape{std::move(dims)};
    return BlockOperator::from_blocks(shape, shape, std::move(blocks));
}

} // namespace

Certificate triangular_qn_certificate(const BlockOperator& x, int split_after,
                                      const CertificateOptions& opts) {
    for (const auto& [i, j] : x.support())
        if (i > split_after && j <= split_after)
            throw NotTriangular("triangular_qn_certificate: support entry (" +
                                std::to_string(i) + ", " + std::to_string(j) +
                                ") violates the split at " + std::to_string(split_after));

    // Re-center each corner near index 0 so the evaluation window covers it;
    // powers run on the square embedded realization.
    auto in_first = [split_after](int i) { return i <= split_after; };
    auto in_second = [split_after](int i) { return i > split_after; };
    BlockOperator c1 = uniformized(restrict_indices(x, in_first, -split_after));
    BlockOperator c2 = uniformized(restrict_indices(x, in_second, -split_after - 1));

    Certificate cert;
    cert.split_after = split_after;
    cert.threshold = opts.threshold;
    cert.corner1_powers = power_norms(c1, opts.n_max, opts.window);
    cert.corner2_powers = power_norms(c2, opts.n_max, opts.window);
    cert.corner1_estimate = gelfand_estimate(cert.corner1_powers);
    cert.corner2_estimate = gelfand_estimate(cert.corner2_powers);
    cert.valid = cert.corner1_estimate < opts.threshold && cert.corner2_estimate < opts.threshold;
    return cert;
}

} // namespace blk
} // namespace opfactor
