// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#include "opfactor/qn_factor.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace opfactor {
namespace qn {

int CompactSplit::nonempty_count() const {
    int c = 0;
    for (const auto& p : pieces)
        if (p.dim() > 0)
            ++c;
    return c;
}

namespace {

// Bins the columns of an orthonormal system by singular value: piece 1 keeps
// sigma > base^-2, piece n the band (base^-(n+1), base^-n], the last piece
// everything below base^-(max_pieces).
CompactSplit split_by_values(const Matrix& vectors, const RealVector& sigmas,
                             const SplitOptions& opts) {
    if (opts.base <= 1.0)
        throw Error("compact split: base must exceed 1");
    if (opts.max_pieces < 2)
        throw Error("compact split: need at least two pieces");
    const Index n = vectors.cols();
    const int pc = opts.max_pieces;
    std::vector<std::vector<Index>> members(static_cast<std::size_t>(pc));
    auto sigma_of = [&](Index j) { return j < sigmas.size() ? sigmas(j) : 0.0; };
    for (Index j = 0; j < n; ++j) {
        const double s = sigma_of(j);
        int piece = pc;  // tail absorbs everything below base^-pc
        if (s > std::pow(opts.base, -2.0)) {
            piece = 1;
        } else {
            for (int m = 2; m < pc; ++m) {
                if (s > std::pow(opts.base, -(m + 1.0))) {
                    piece = m;
                    break;
                }
            }
        }
        members[static_cast<std::size_t>(piece - 1)].push_back(j);
    }

    CompactSplit out;
    out.base = opts.base;
    for (int m = 1; m <= pc; ++m) {
        const auto& mem = members[static_cast<std::size_t>(m - 1)];
        Matrix cols(vectors.rows(), static_cast<Index>(mem.size()));
        double bound = 0.0;
        for (std::size_t c = 0; c < mem.size(); ++c) {
            cols.col(static_cast<Index>(c)) = vectors.col(mem[c]);
            bound = std::max(bound, sigma_of(mem[c]));
        }
        out.pieces.emplace_back(std::move(cols));
        out.piece_bounds.push_back(bound);
    }
    return out;
}

} // namespace

CompactSplit split_compact_domain(const Matrix& k, const SplitOptions& opts) {
    la::SvdResult dec = la::svd(k);
    return split_by_values(dec.right.vectors(), dec.singular_values, opts);
}

CompactSplit split_compact_range(const Matrix& l, const SplitOptions& opts) {
    la::SvdResult dec = la::svd(l);
    return split_by_values(dec.left.vectors(), dec.singular_values, opts);
}

RefinedPieces refine_canonical(const dec::CanonicalForm& cf, const CompactSplit& k_split,
                               const CompactSplit& l_split) {
    if (k_split.ambient_dim() != cf.dim1)
        throw ShapeMismatch("refine_canonical: K split does not match part 1");
    if (l_split.ambient_dim() != cf.dim3)
        throw ShapeMismatch("refine_canonical: L split does not match part 3");
    RefinedPieces p;
    p.base = k_split.base;
    p.c = cf.c;
    for (const auto& phi : k_split.pieces) {
        p.a.push_back(phi.vectors().adjoint() * cf.a);  // piece rows of A
        p.k.push_back(cf.k * phi.vectors());            // piece columns of K
    }
    for (const auto& psi : l_split.pieces) {
        p.d.push_back(cf.d * psi.vectors());            // piece columns of D
        p.l.push_back(psi.vectors().adjoint() * cf.l);  // piece rows of L
    }
    return p;
}

namespace {

blk::BlockShape refined_shape(const RefinedPieces& p) {
    std::map<int, Index> dims;
    dims[0] = p.center_dim();
    for (std::size_t n = 0; n < p.a.size(); ++n)
        if (p.a[n].rows() > 0)
            dims[-static_cast<int>(n + 1)] = p.a[n].rows();
    for (std::size_t n = 0; n < p.d.size(); ++n)
        if (p.d[n].cols() > 0)
            dims[static_cast<int>(n + 1)] = p.d[n].cols();
    return blk::BlockShape(std::move(dims));
}

} // namespace

blk::BlockOperator build_refined(const RefinedPieces& p, int index_radius) {
    blk::BlockShape shape = refined_shape(p);
    std::map<blk::BlockKey, Matrix> blocks;
    blocks[{0, 0}] = p.c;
    for (std::size_t n = 0; n < p.a.size(); ++n) {
        const int i = static_cast<int>(n + 1);
        if (i > index_radius)
            break;
        if (p.a[n].rows() > 0) {
            blocks[{-i, 0}] = p.a[n];
            blocks[{0, -i}] = p.k[n];
        }
    }
    for (std::size_t n = 0; n < p.d.size(); ++n) {
        const int i = static_cast<int>(n + 1);
        if (i > index_radius)
            break;
        if (p.d[n].cols() > 0) {
            blocks[{0, i}] = p.d[n];
            blocks[{i, 0}] = p.l[n];
        }
    }
    return blk::BlockOperator::from_blocks(shape, shape, std::move(blocks));
}

blk::BlockOperator build_q1(const RefinedPieces& p, int index_radius) {
    const double s = std::sqrt(p.base);
    const Index d2 = p.center_dim();
    blk::BlockShape rows = refined_shape(p);
    blk::BlockShape cols = blk::BlockShape::uniform(d2, index_radius);

    blk::BlockSupport support;
    for (int k = 1; k <= index_radius; ++k)
        support.insert({0, -k});
    support.insert({0, 1});
    for (std::size_t n = 0; n < p.a.size(); ++n)
        if (p.a[n].rows() > 0 && static_cast<int>(n + 1) <= index_radius)
            support.insert({-static_cast<int>(n + 1), 1});
    for (std::size_t n = 0; n < p.l.size(); ++n)
        if (p.l[n].rows() > 0 && static_cast<int>(n + 2) <= index_radius)
            support.insert({static_cast<int>(n + 1), static_cast<int>(n + 2)});

    auto pieces = std::make_shared<RefinedPieces>(p);
    auto gen = [pieces, s, d2](int i, int j) -> Matrix {
        if (i == 0 && j <= -1)
            return std::pow(s, static_cast<double>(j + 1)) * Matrix::Identity(d2, d2);
        if (i == 0 && j == 1)
            return pieces->c;
        if (i < 0 && j == 1)
            return pieces->a[static_cast<std::size_t>(-i - 1)];
        if (i >= 1 && j == i + 1)
            return std::pow(s, static_cast<double>(i)) * pieces->l[static_cast<std::size_t>(i - 1)];
        throw Error("build_q1: generator queried off support");
    };
    return blk::BlockOperator(std::move(rows), std::move(cols), std::move(gen),
                              std::move(support));
}

blk::BlockOperator build_q2(const RefinedPieces& p, int index_radius) {
    const double s = std::sqrt(p.base);
    const Index d2 = p.center_dim();
    blk::BlockShape rows = blk::BlockShape::uniform(d2, index_radius);
    blk::BlockShape cols = refined_shape(p);

    blk::BlockSupport support;
    for (int n = 1; n <= index_radius; ++n)
        support.insert({n, 0});
    for (std::size_t n = 0; n < p.d.size(); ++n)
        if (p.d[n].cols() > 0 && static_cast<int>(n + 1) <= index_radius)
            support.insert({-1, static_cast<int>(n + 1)});
    for (std::size_t n = 0; n < p.k.size(); ++n)
        if (p.k[n].cols() > 0 && static_cast<int>(n + 2) <= index_radius)
            support.insert({-static_cast<int>(n + 2), -static_cast<int>(n + 1)});

    auto pieces = std::make_shared<RefinedPieces>(p);
    auto gen = [pieces, s, d2](int i, int j) -> Matrix {
        if (j == 0 && i >= 1)
            return std::pow(s, static_cast<double>(1 - i)) * Matrix::Identity(d2, d2);
        if (i == -1 && j >= 1)
            return pieces->d[static_cast<std::size_t>(j - 1)];
        if (i <= -2 && j == i + 1)
            return std::pow(s, static_cast<double>(-j)) *
                   pieces->k[static_cast<std::size_t>(-j - 1)];
        throw Error("build_q2: generator queried off support");
    };
    return blk::BlockOperator(std::move(rows), std::move(cols), std::move(gen),
                              std::move(support));
}

QNFactorization factor_from_pieces(const RefinedPieces& pieces, int window,
                                   const QNOptions& opts) {
    const int radius = std::max(window, pieces.side_pieces()) + 1;
    QNFactorization out{build_q1(pieces, radius), build_q2(pieces, radius), pieces};
    out.window_used = window;

    blk::BlockOperator refined = build_refined(pieces, radius);
    blk::BlockOperator product = blk::compose(out.q1, out.q2);

    blk::BlockSupport keys = refined.support();
    for (const auto& key : product.support())
        keys.insert(key);
    double residual = 0.0, max_norm = 0.0;
    for (const auto& [i, j] : keys) {
        if (std::abs(i) > window || std::abs(j) > window)
            continue;
        residual = std::max(residual, la::norm2(product.block(i, j) - refined.block(i, j)));
        max_norm = std::max(max_norm, la::norm2(refined.block(i, j)));
    }
    out.product_residual = residual;
    out.max_block_norm = max_norm;

    blk::CertificateOptions copts;
    copts.n_max = opts.cert_n_max;
    copts.window = window;
    copts.threshold = opts.cert_threshold;
    out.cert_q1 = blk::triangular_qn_certificate(out.q1, 0, copts);
    out.cert_q2 = blk::triangular_qn_certificate(out.q2, -1, copts);

    std::vector<double> l_norms, k_norms;
    for (std::size_t n = 0; n < pieces.l.size(); ++n)
        l_norms.push_back(la::norm2(std::pow(std::sqrt(pieces.base), n + 1.0) * pieces.l[n]));
    for (std::size_t n = 0; n < pieces.k.size(); ++n)
        k_norms.push_back(la::norm2(std::pow(std::sqrt(pieces.base), n + 1.0) * pieces.k[n]));
    out.r_bound_q1 = blk::weighted_diag_qn_bound(l_norms, pieces.base, opts.cert_n_max);
    out.r_bound_q2 = blk::weighted_diag_qn_bound(k_norms, pieces.base, opts.cert_n_max);
    return out;
}

QNFactorization factor_quasinilpotent(const dec::CanonicalForm& cf, int window,
                                      const QNOptions& opts) {
    if (cf.b.size() > 0 && cf.b.cwiseAbs().maxCoeff() > 1e-12 * (1.0 + la::norm2(cf.c)))
        throw Error("factor_quasinilpotent: canonical form has a nonzero (1,3) block");
    SplitOptions sopts{opts.base, opts.max_pieces};
    CompactSplit k_split = split_compact_domain(cf.k, sopts);
    CompactSplit l_split = split_compact_range(cf.l, sopts);
    if (k_split.nonempty_count() < 2 || l_split.nonempty_count() < 2)
        throw SplitTooShallow(
            "factor_quasinilpotent: degenerate display; nonempty pieces: K side " +
            std::to_string(k_split.nonempty_count()) + ", L side " +
            std::to_string(l_split.nonempty_count()));
    RefinedPieces pieces = refine_canonical(cf, k_split, l_split);
    return factor_from_pieces(pieces, window, opts);
}

ShiftFactorization common_right_factor_compact(std::span<const Matrix> ks,
                                               const CompactFactorOptions& opts) {
    if (ks.empty())
        throw Error("common_right_factor_compact: empty family");
    const Index rows = ks[0].rows(), cols = ks[0].cols();
    for (const Matrix& k : ks)
        if (k.rows() != rows || k.cols() != cols)
            throw ShapeMismatch("common_right_factor_compact: family shapes differ");

    Matrix gram = Matrix::Zero(cols, cols);
    for (const Matrix& k : ks)
        gram += k.adjoint() * k;
    gram = 0.5 * (gram + gram.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    if (es.info() != Eigen::Success)
        throw ConvergenceFailure("common_right_factor_compact: eigensolver failed");

    const Index n = cols;
    ShiftFactorization out;
    Matrix phi(n, n);
    out.lambdas.resize(static_cast<std::size_t>(n));
    out.weights.resize(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) {
        const double lam = std::max(0.0, es.eigenvalues()(n - 1 - j));  // descending
        phi.col(j) = es.eigenvectors().col(n - 1 - j);
        out.lambdas[static_cast<std::size_t>(j)] = lam;
        out.weights[static_cast<std::size_t>(j)] = std::pow(lam, 0.25);
    }

    Matrix w = Matrix::Zero(n, n);
    for (Index j = 0; j + 1 < n; ++j)
        w(j + 1, j) = out.weights[static_cast<std::size_t>(j)];
    out.q = phi * w * phi.adjoint();

    for (const Matrix& k : ks) {
        Matrix cols_phi = Matrix::Zero(rows, n);
        for (Index j = 1; j < n; ++j) {
            const double lam = out.lambdas[static_cast<std::size_t>(j - 1)];
            if (lam > 0.0)
                cols_phi.col(j) =
                    (k * phi.col(j - 1)) / out.weights[static_cast<std::size_t>(j - 1)];
        }
        Matrix li = cols_phi * phi.adjoint();
        out.residuals.push_back(la::norm2(li * out.q - k));
        out.cofactors.push_back(std::move(li));
    }
    out.basis = la::SubspaceBasis(std::move(phi));
    out.power_norms = la::matrix_power_norms(out.q, opts.power_n_max);
    out.gelfand = la::gelfand_from_norms(out.power_norms);
    return out;
}

ShiftFactorization common_left_factor_compact(std::span<const Matrix> ks,
                                              const CompactFactorOptions& opts) {
    std::vector<Matrix> adjs;
    adjs.reserve(ks.size());
    for (const Matrix& k : ks)
        adjs.push_back(k.adjoint());
    ShiftFactorization mirrored = common_right_factor_compact(adjs, opts);

    ShiftFactorization out;
    out.basis = mirrored.basis;
    out.lambdas = mirrored.lambdas;
    out.weights = mirrored.weights;
    out.q = mirrored.q.adjoint();
    out.power_norms = mirrored.power_norms;  // ||(Q*)^n|| = ||Q^n||
    out.gelfand = mirrored.gelfand;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        out.cofactors.push_back(mirrored.cofactors[i].adjoint());
        out.residuals.push_back(la::norm2(out.q * out.cofactors[i] - ks[i]));
    }
    return out;
}

TwoSidedCompact two_sided_compact(std::span<const Matrix> ks, const CompactFactorOptions& opts) {
    TwoSidedCompact out;
    out.right = common_right_factor_compact(ks, opts);
    out.left = common_left_factor_compact(out.right.cofactors, opts);
    for (std::size_t i = 0; i < ks.size(); ++i)
        out.residuals.push_back(
            la::norm2(out.left.q * out.left.cofactors[i] * out.right.q - ks[i]));
    return out;
}

Matrix qq_star_factor(const Matrix& t_pos, const QQStarOptions& opts) {
    const Index n = t_pos.rows();
    if (t_pos.cols() != n)
        throw ShapeMismatch("qq_star_factor: matrix not square");
    const double scale = la::norm2(t_pos);
    if (la::norm2(t_pos - t_pos.adjoint()) > 1e-8 * (1.0 + scale))
        throw Error("qq_star_factor: input is not hermitian");
    Matrix h = 0.5 * (t_pos + t_pos.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    if (es.info() != Eigen::Success)
        throw ConvergenceFailure("qq_star_factor: eigensolver failed");
    if (es.eigenvalues().minCoeff() < -1e-10 * (1.0 + scale))
        throw Error("qq_star_factor: input is not positive semidefinite");

    std::vector<double> t(static_cast<std::size_t>(n));
    Matrix u(n, n);
    for (Index j = 0; j < n; ++j) {
        t[static_cast<std::size_t>(j)] = std::max(0.0, es.eigenvalues()(n - 1 - j));
        u.col(j) = es.eigenvectors().col(n - 1 - j);
    }
    const Index quartile = (n + 3) / 4;
    double tail_mean = 0.0;
    for (Index j = n - quartile; j < n; ++j)
        tail_mean += t[static_cast<std::size_t>(j)];
    tail_mean /= static_cast<double>(quartile);
    if (tail_mean > opts.decay_tol * t[0])
        throw NotEssentiallySingular(
            "qq_star_factor: spectrum does not decay (tail mean " + std::to_string(tail_mean) +
            " vs top " + std::to_string(t[0]) + ")");

    Matrix w = Matrix::Zero(n, n);
    for (Index i = 0; i + 1 < n; ++i)
        w(i, i + 1) = t[static_cast<std::size_t>(i)];
    return u * w * u.adjoint();
}

Matrix douglas_solve(const Matrix& q, const Matrix& t, const DouglasOptions& opts) {
    if (q.rows() != t.rows())
        throw ShapeMismatch("douglas_solve: row dimensions differ");
    la::SvdResult dec = la::svd(q);
    const double tol = la::default_rank_tol(q);
    Index rank = 0;
    for (Index j = 0; j < dec.singular_values.size(); ++j)
        if (dec.singular_values(j) > tol)
            ++rank;
    Matrix ur = dec.left.vectors().leftCols(rank);
    Matrix vr = dec.right.vectors().leftCols(rank);
    const double projection = la::norm2(t - ur * (ur.adjoint() * t));
    if (projection > opts.range_tol * (1.0 + la::norm2(t)))
        throw RangeInclusionFailed(
            "douglas_solve: columns of T leave the range of Q (projection norm " +
                std::to_string(projection) + ")",
            projection);
    Matrix s = Matrix::Zero(q.cols(), t.cols());
    for (Index j = 0; j < rank; ++j)
        s += vr.col(j) * (ur.col(j).adjoint() * t) / dec.singular_values(j);
    return s;
}

namespace {

Matrix three_block(const Matrix& b11, const Matrix& b12, const Matrix& b13, const Matrix& b21,
                   const Matrix& b22, const Matrix& b23, const Matrix& b31, const Matrix& b32,
                   const Matrix& b33, Index m) {
    Matrix out = Matrix::Zero(3 * m, 3 * m);
    auto put = [&](Index i, Index j, const Matrix& b) {
        if (b.size() > 0)
            out.block(i * m, j * m, m, m) = b;
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

} // namespace

GeneralFactorization common_factor_general(std::span<const Matrix> ts,
                                           const GeneralFactorOptions& opts) {
    GeneralFactorization out;
    out.jcf = dec::joint_canonical_form(ts, opts.canonical);
    const Index m = out.jcf.part_dim;

    std::vector<Matrix> ks, ls;
    for (const auto& op : out.jcf.ops) {
        ks.push_back(op.k);
        ls.push_back(op.l);
    }
    CompactFactorOptions copts{opts.power_n_max};
    ShiftFactorization right = common_right_factor_compact(ks, copts);  // K_i = H_i Q
    ShiftFactorization left = common_left_factor_compact(ls, copts);    // L_i = R M_i
    out.q = right.q;
    out.r = left.q;
    out.h_factors = right.cofactors;
    out.m_factors = left.cofactors;
    out.q_power_norms = right.power_norms;
    out.r_power_norms = left.power_norms;
    out.q_gelfand = right.gelfand;
    out.r_gelfand = left.gelfand;

    const Matrix id = Matrix::Identity(m, m);
    const Matrix none;
    out.q1_primed = three_block(none, id, none, none, none, id, out.r, none, none, m);
    out.q2_primed = three_block(none, id, none, none, none, id, out.q, none, none, m);

    Matrix stacked(3 * m * static_cast<Index>(ts.size()), 3 * m);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const auto& op = out.jcf.ops[i];
        Matrix sp = three_block(out.m_factors[i], none, none, op.a, none, none, op.c, op.d,
                                out.h_factors[i], m);
        Matrix target = out.jcf.basis_change *
                        out.jcf.padded_input(ts[i]) * out.jcf.basis_change_inv;
        const double rel = la::norm2(out.q1_primed * sp * out.q2_primed - target) /
                           (1.0 + la::norm2(target));
        out.residuals.push_back(rel);
        stacked.middleRows(static_cast<Index>(i) * 3 * m, 3 * m) = sp;
        out.s_primed.push_back(std::move(sp));
    }

    auto cube_check = [&](const Matrix& qp, const Matrix& diag, double& offdiag, double& dev) {
        Matrix cube = qp * qp * qp;
        offdiag = 0.0;
        dev = 0.0;
        for (Index bi = 0; bi < 3; ++bi)
            for (Index bj = 0; bj < 3; ++bj) {
                Matrix blkm = cube.block(bi * m, bj * m, m, m);
                if (bi == bj)
                    dev = std::max(dev, (blkm - diag).cwiseAbs().maxCoeff());
                else
                    offdiag = std::max(offdiag, blkm.cwiseAbs().maxCoeff());
            }
    };
    cube_check(out.q1_primed, out.r, out.cube_offdiag_q1, out.cube_diag_dev_q1);
    cube_check(out.q2_primed, out.q, out.cube_offdiag_q2, out.cube_diag_dev_q2);

    la::SvdResult sdec = la::svd(stacked);
    const Index count = std::min<Index>(opts.diagnostic_count, sdec.singular_values.size());
    for (Index j = sdec.singular_values.size() - count; j < sdec.singular_values.size(); ++j)
        out.stacked_singular_values.push_back(sdec.singular_values(j));

    for (std::size_t i = 0; i < ts.size(); ++i)
        out.s.push_back(out.jcf.basis_change_inv * out.s_primed[i] * out.jcf.basis_change);
    out.q1 = out.jcf.basis_change_inv * out.q1_primed * out.jcf.basis_change;
    out.q2 = out.jcf.basis_change_inv * out.q2_primed * out.jcf.basis_change;
    return out;
}

} // namespace qn
} // namespace opfactor
