// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#ifndef OPFACTOR_LINALG_HPP
#define OPFACTOR_LINALG_HPP

#include <Eigen/Dense>

#include <complex>
#include <optional>
#include <vector>

#include "opfactor/errors.hpp"

namespace opfactor {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace la {

bool is_finite(const Matrix& a);
void require_finite(const Matrix& a, const char* context);

/// Operator 2-norm (largest singular value).
double norm2(const Matrix& a);

/// Default singular-value threshold: 1e-9 relative to the 2-norm.
double default_rank_tol(const Matrix& a);

/// An ordered list of unit, pairwise-orthonormal columns of a common
/// ambient space.  May be empty (zero columns).
class SubspaceBasis {
public:
    SubspaceBasis() : vectors_(0, 0) {}
    /// Validates unit norms and pairwise orthogonality at 1e-12.
    explicit SubspaceBasis(Matrix vectors);
    static SubspaceBasis empty(Index ambient_dim);

    const Matrix& vectors() const { return vectors_; }
    Index ambient_dim() const { return vectors_.rows(); }
    Index dim() const { return vectors_.cols(); }
    Vector column(Index j) const { return vectors_.col(j); }

private:
    Matrix vectors_;
};

struct SvdResult {
    SubspaceBasis left;          // full m x m
    RealVector singular_values;  // min(m, n), non-increasing
    SubspaceBasis right;         // full n x n
};

/// Full SVD with non-increasing singular values.
SvdResult svd(const Matrix& a);

/// Right singular vectors whose singular value is <= tol
/// (implicit zeros past min(m, n) included).
SubspaceBasis kernel_basis(const Matrix& a, std::optional<double> tol = {});

/// kernel_basis applied to the adjoint: left singular vectors with sigma <= tol.
SubspaceBasis cokernel_basis(const Matrix& a, std::optional<double> tol = {});

/// Direct sum with a p-dimensional zero operator: (n+p) x (m+p),
/// original matrix in the top-left corner.
Matrix pad_with_zero(const Matrix& a, Index p);

struct SingularPair {
    double value;   // ||A * vector||
    Vector vector;  // unit, orthogonal to the constraint
};

/// Minimizes ||A x|| over unit x orthogonal to the given constraint basis.
/// Throws EmptyComplement when the constraint spans the whole space.
SingularPair smallest_singular_pair(const Matrix& a, const SubspaceBasis& constraint);

/// Orthonormal basis of the orthogonal complement of s in its ambient space.
SubspaceBasis orthonormal_complement(const SubspaceBasis& s);

/// Orthonormal basis of the column span, dropping directions with
/// singular value <= drop_tol.
SubspaceBasis orthonormalize(const Matrix& columns, double drop_tol);

/// Positive-semidefinite square root.  The input is symmetrized first and
/// negative eigenvalues are clipped at zero.
Matrix hermitian_sqrt(const Matrix& a);

/// ||X^n||_2 for n = 1..n_max of a plain square matrix.
std::vector<double> matrix_power_norms(const Matrix& x, int n_max);

/// min over n of values[n]^(1/n); values are 1-based powers.
double gelfand_from_norms(const std::vector<double>& values);

} // namespace la
} // namespace opfactor

#endif
