// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#include "opfactor/families.hpp"

#include <Eigen/QR>

#include <cmath>

namespace opfactor {
namespace fam {

double Rng::uniform() {
    // 53 random bits into [0, 1).
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0)
        u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Complex Rng::cnormal() {
    const double re = normal();
    const double im = normal();
    return Complex(re, im) / std::sqrt(2.0);
}

Matrix Rng::gaussian(Index rows, Index cols) {
    Matrix out(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
            out(i, j) = cnormal();
    return out;
}

Matrix Rng::unitary(Index n) {
    Eigen::HouseholderQR<Matrix> qr(gaussian(n, n));
    Matrix q = qr.householderQ();
    // Fix the phases so the factorization is unique up to the engine stream.
    Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index j = 0; j < n; ++j) {
        const Complex d = r(j, j);
        if (std::abs(d) > 0.0)
            q.col(j) *= d / std::abs(d);
    }
    return q;
}

Matrix volterra(Index n) {
    Matrix out = Matrix::Zero(n, n);
    const double h = 1.0 / static_cast<double>(n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j <= i; ++j)
            out(i, j) = h;
    return out;
}

Matrix weighted_shift(const std::vector<double>& weights) {
    const Index n = static_cast<Index>(weights.size()) + 1;
    Matrix out = Matrix::Zero(n, n);
    for (Index j = 0; j + 1 < n; ++j)
        out(j, j + 1) = weights[static_cast<std::size_t>(j)];
    return out;
}

std::vector<double> geometric_weights(double rate, int count) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(count));
    double w = 1.0;
    for (int j = 1; j <= count; ++j) {
        w *= rate;
        out.push_back(w);
    }
    return out;
}

Matrix diagonal(const std::vector<double>& values) {
    const Index n = static_cast<Index>(values.size());
    Matrix out = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j)
        out(j, j) = values[static_cast<std::size_t>(j)];
    return out;
}

Matrix random_compact(Index n, double rate, std::uint64_t seed) {
    Rng rng(seed);
    Matrix u = rng.unitary(n);
    Matrix v = rng.unitary(n);
    Matrix d = diagonal(geometric_weights(rate, static_cast<int>(n)));
    return u * d * v.adjoint();
}

Matrix random_singular(Index n, Index kernel_dim, std::uint64_t seed) {
    if (kernel_dim < 1 || kernel_dim >= n)
        throw Error("random_singular: kernel dimension out of range");
    Rng rng(seed);
    const Index r = n - kernel_dim;
    // Exact rank r: the kernel and cokernel both have dimension n - r.
    return rng.gaussian(n, r) * rng.gaussian(r, n) / std::sqrt(static_cast<double>(n));
}

Matrix random_unitary(Index n, std::uint64_t seed) {
    Rng rng(seed);
    return rng.unitary(n);
}

qn::RefinedPieces synthetic_canonical_pieces(Index block_dim, int pieces, std::uint64_t seed,
                                             double base) {
    if (pieces < 2)
        throw Error("synthetic_canonical_pieces: need at least two pieces per side");
    Rng rng(seed);
    auto scaled = [&](double target) {
        Matrix g = rng.gaussian(block_dim, block_dim);
        return Matrix(g * (target / la::norm2(g)));
    };
    qn::RefinedPieces p;
    p.base = base;
    p.c = scaled(1.0);
    for (int n = 1; n <= pieces; ++n) {
        const double cap = (n == 1) ? 0.5 : 0.9 * std::pow(base, -n);
        p.a.push_back(scaled(std::pow(2.0, -n)));
        p.k.push_back(scaled(cap));
        p.d.push_back(scaled(std::pow(2.0, -n)));
        p.l.push_back(scaled(cap));
    }
    return p;
}

std::vector<Matrix> compact_family_with_spectrum(const std::vector<double>& lambdas, int count,
                                                 std::uint64_t seed) {
    if (count < 1)
        throw Error("compact_family_with_spectrum: count must be positive");
    Rng rng(seed);
    const Index n = static_cast<Index>(lambdas.size());
    std::vector<double> split(lambdas.size());
    for (std::size_t j = 0; j < lambdas.size(); ++j) {
        if (lambdas[j] < 0.0)
            throw Error("compact_family_with_spectrum: negative eigenvalue");
        split[j] = std::sqrt(lambdas[j] / static_cast<double>(count));
    }
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        out.push_back(rng.unitary(n) * diagonal(split));
    return out;
}

void FamilyDescriptor::validate() const {
    auto fail = [](const std::string& why) { throw ParseError("family descriptor: " + why); };
    if (kind == "volterra" || kind == "random-unitary") {
        if (n < 1)
            fail("dimension must be positive");
    } else if (kind == "weighted-shift" || kind == "diagonal" || kind == "random-compact") {
        if (n < 1)
            fail("dimension must be positive");
        if (decay <= 0.0 || decay >= 1.0)
            fail("decay rate must lie in (0, 1)");
    } else if (kind == "random-singular") {
        if (n < 2)
            fail("dimension must be at least 2");
        if (kernel_dim < 1 || kernel_dim >= n)
            fail("kernel dimension must lie in [1, n)");
    } else if (kind == "canonical-form-synthetic") {
        if (block_dim < 1)
            fail("block dimension must be positive");
        if (pieces < 2)
            fail("need at least two pieces per side");
    } else {
        fail("unknown kind: " + kind);
    }
}

} // namespace fam
} // namespace opfactor
