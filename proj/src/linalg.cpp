// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#include "opfactor/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

namespace opfactor {
namespace la {

namespace {

// BDCSVD is faster for larger problems; the two-sided Jacobi kernel is the
// more accurate choice for small blocks.
constexpr Index kJacobiLimit = 48;

void check_svd_info(Eigen::ComputationInfo info) {
    if (info != Eigen::Success)
        throw ConvergenceFailure("svd: iterative kernel did not converge");
}

} // namespace

bool is_finite(const Matrix& a) {
    return a.allFinite();
}

void require_finite(const Matrix& a, const char* context) {
    if (!is_finite(a))
        throw Error(std::string(context) + ": matrix has non-finite entries");
}

double norm2(const Matrix& a) {
    if (a.rows() == 0 || a.cols() == 0)
        return 0.0;
    // sqrt of the largest eigenvalue of the Gram matrix on the smaller side.
    Matrix g = (a.rows() <= a.cols()) ? Matrix(a * a.adjoint()) : Matrix(a.adjoint() * a);
    Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw ConvergenceFailure("norm2: eigensolver did not converge");
    double top = es.eigenvalues().maxCoeff();
    return top > 0.0 ? std::sqrt(top) : 0.0;
}

double default_rank_tol(const Matrix& a) {
    return 1e-9 * norm2(a);
}

SubspaceBasis::SubspaceBasis(Matrix vectors) : vectors_(std::move(vectors)) {
    require_finite(vectors_, "SubspaceBasis");
    const Index d = vectors_.cols();
    if (d == 0)
        return;
    Matrix gram = vectors_.adjoint() * vectors_;
    for (Index i = 0; i < d; ++i) {
        if (std::abs(gram(i, i) - 1.0) > 1e-12)
            throw Error("SubspaceBasis: column " + std::to_string(i) + " is not unit norm");
        for (Index j = 0; j < d; ++j) {
            if (i != j && std::abs(gram(i, j)) > 1e-12)
                throw Error("SubspaceBasis: columns " + std::to_string(i) + ", " +
                            std::to_string(j) + " are not orthogonal");
        }
    }
}

SubspaceBasis SubspaceBasis::empty(Index ambient_dim) {
    return SubspaceBasis(Matrix(ambient_dim, 0));
}

SvdResult svd(const Matrix& a) {
    require_finite(a, "svd");
    const Index m = a.rows(), n = a.cols();
    if (m == 0 || n == 0) {
        return SvdResult{SubspaceBasis(Matrix::Identity(m, m)), RealVector(0),
                         SubspaceBasis(Matrix::Identity(n, n))};
    }
    Matrix u, v;
    RealVector sv;
    if (std::max(m, n) <= kJacobiLimit) {
        Eigen::JacobiSVD<Matrix> dec(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
        check_svd_info(dec.info());
        u = dec.matrixU();
        v = dec.matrixV();
        sv = dec.singularValues();
    } else {
        Eigen::BDCSVD<Matrix> dec(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
        check_svd_info(dec.info());
        u = dec.matrixU();
        v = dec.matrixV();
        sv = dec.singularValues();
    }
    return SvdResult{SubspaceBasis(std::move(u)), std::move(sv), SubspaceBasis(std::move(v))};
}

SubspaceBasis kernel_basis(const Matrix& a, std::optional<double> tol) {
    const double t = tol ? *tol : default_rank_tol(a);
    SvdResult dec = svd(a);
    const Index n = a.cols();
    std::vector<Index> keep;
    for (Index j = 0; j < n; ++j) {
        const double s = (j < dec.singular_values.size()) ? dec.singular_values(j) : 0.0;
        if (s <= t)
            keep.push_back(j);
    }
    Matrix out(n, static_cast<Index>(keep.size()));
    for (Index c = 0; c < out.cols(); ++c)
        out.col(c) = dec.right.vectors().col(keep[static_cast<std::size_t>(c)]);
    return SubspaceBasis(std::move(out));
}

SubspaceBasis cokernel_basis(const Matrix& a, std::optional<double> tol) {
    const double t = tol ? *tol : default_rank_tol(a);
    return kernel_basis(a.adjoint(), t);
}

Matrix pad_with_zero(const Matrix& a, Index p) {
    if (p < 0)
        throw Error("pad_with_zero: negative padding");
    Matrix out = Matrix::Zero(a.rows() + p, a.cols() + p);
    out.topLeftCorner(a.rows(), a.cols()) = a;
    return out;
}

SingularPair smallest_singular_pair(const Matrix& a, const SubspaceBasis& constraint) {
    if (constraint.ambient_dim() != a.cols())
        throw ShapeMismatch("smallest_singular_pair: constraint ambient dim mismatch");
    SubspaceBasis comp = orthonormal_complement(constraint);
    if (comp.dim() == 0)
        throw EmptyComplement("smallest_singular_pair: constraint spans the whole space");
    Matrix restricted = a * comp.vectors();
    SvdResult dec = svd(restricted);
    const Index k = comp.dim();
    // Sigma is non-increasing; implicit zeros live past min(m, k).  The first
    // column attaining the minimum wins, which resolves ties deterministically.
    Index best = 0;
    double best_val = (dec.singular_values.size() > 0)
                          ? dec.singular_values(0)
                          : 0.0;
    for (Index j = 0; j < k; ++j) {
        const double s = (j < dec.singular_values.size()) ? dec.singular_values(j) : 0.0;
        if (s < best_val) {
            best_val = s;
            best = j;
        }
    }
    Vector x = comp.vectors() * dec.right.vectors().col(best);
    x /= x.norm();
    return SingularPair{(a * x).norm(), std::move(x)};
}

SubspaceBasis orthonormal_complement(const SubspaceBasis& s) {
    const Index n = s.ambient_dim();
    const Index c = s.dim();
    if (c == 0)
        return SubspaceBasis(Matrix::Identity(n, n));
    if (c >= n)
        return SubspaceBasis::empty(n);
    Eigen::HouseholderQR<Matrix> qr(s.vectors());
    Matrix q = qr.householderQ();
    return SubspaceBasis(q.rightCols(n - c));
}

SubspaceBasis orthonormalize(const Matrix& columns, double drop_tol) {
    if (columns.cols() == 0)
        return SubspaceBasis::empty(columns.rows());
    SvdResult dec = svd(columns);
    Index rank = 0;
    for (Index j = 0; j < dec.singular_values.size(); ++j)
        if (dec.singular_values(j) > drop_tol)
            ++rank;
    return SubspaceBasis(dec.left.vectors().leftCols(rank));
}

Matrix hermitian_sqrt(const Matrix& a) {
    if (a.rows() != a.cols())
        throw ShapeMismatch("hermitian_sqrt: matrix not square");
    Matrix h = 0.5 * (a + a.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    if (es.info() != Eigen::Success)
        throw ConvergenceFailure("hermitian_sqrt: eigensolver did not converge");
    RealVector lam = es.eigenvalues();
    for (Index i = 0; i < lam.size(); ++i)
        lam(i) = lam(i) > 0.0 ? std::sqrt(lam(i)) : 0.0;
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().adjoint();
}

std::vector<double> matrix_power_norms(const Matrix& x, int n_max) {
    if (x.rows() != x.cols())
        throw ShapeMismatch("matrix_power_norms: matrix not square");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n_max));
    Matrix p = x;
    for (int n = 1; n <= n_max; ++n) {
        out.push_back(norm2(p));
        if (n < n_max)
            p = p * x;
    }
    return out;
}

double gelfand_from_norms(const std::vector<double>& values) {
    if (values.empty())
        throw Error("gelfand_from_norms: empty sequence");
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double n = static_cast<double>(i + 1);
        best = std::min(best, std::pow(values[i], 1.0 / n));
    }
    return best;
}

} // namespace la
} // namespace opfactor
