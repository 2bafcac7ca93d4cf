// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#include "opfactor/matrix_market.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "opfactor/errors.hpp"

namespace opfactor {
namespace mm {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool next_data_line(std::istream& in, std::string& line) {
    while (std::getline(in, line)) {
        std::size_t i = line.find_first_not_of(" \t\r");
        if (i == std::string::npos)
            continue;
        if (line[i] == '%')
            continue;
        return true;
    }
    return false;
}

double parse_real(std::istringstream& ls, const char* what) {
    double v;
    if (!(ls >> v))
        throw ParseError(std::string("matrix market: expected ") + what);
    return v;
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

Matrix read(std::istream& in) {
    std::string line;
    if (!std::getline(in, line))
        throw ParseError("matrix market: empty stream");
    std::istringstream hs(line);
    std::string banner, object, format, field, symmetry;
    hs >> banner >> object >> format >> field >> symmetry;
    if (lower(banner) != "%%matrixmarket" || lower(object) != "matrix")
        throw ParseError("matrix market: bad banner: " + line);
    format = lower(format);
    field = lower(field);
    symmetry = lower(symmetry);
    if (format != "array" && format != "coordinate")
        throw ParseError("matrix market: unsupported format: " + format);
    const bool complex_field = field == "complex";
    if (!complex_field && field != "real" && field != "integer")
        throw ParseError("matrix market: unsupported field: " + field);
    const bool sym = symmetry == "symmetric";
    const bool herm = symmetry == "hermitian";
    const bool skew = symmetry == "skew-symmetric";
    if (!sym && !herm && !skew && symmetry != "general")
        throw ParseError("matrix market: unsupported symmetry: " + symmetry);
    const bool mirrored = sym || herm || skew;

    if (!next_data_line(in, line))
        throw ParseError("matrix market: missing size line");
    std::istringstream ss(line);
    long rows = 0, cols = 0, nnz = 0;
    if (!(ss >> rows >> cols))
        throw ParseError("matrix market: bad size line: " + line);
    if (rows < 0 || cols < 0)
        throw ParseError("matrix market: negative dimensions");
    if (mirrored && rows != cols)
        throw ParseError("matrix market: symmetric storage requires a square matrix");

    Matrix a = Matrix::Zero(rows, cols);
    auto mirror = [&](long i, long j, Complex v) {
        a(i, j) = v;
        if (mirrored && i != j) {
            if (sym)
                a(j, i) = v;
            else if (herm)
                a(j, i) = std::conj(v);
            else
                a(j, i) = -v;
        }
    };

    if (format == "coordinate") {
        if (!(ss >> nnz))
            throw ParseError("matrix market: coordinate header lacks entry count");
        for (long e = 0; e < nnz; ++e) {
            if (!next_data_line(in, line))
                throw ParseError("matrix market: truncated coordinate data");
            std::istringstream ls(line);
            long i, j;
            if (!(ls >> i >> j))
                throw ParseError("matrix market: bad coordinate entry: " + line);
            if (i < 1 || i > rows || j < 1 || j > cols)
                throw ParseError("matrix market: index out of range: " + line);
            double re = parse_real(ls, "value");
            double im = complex_field ? parse_real(ls, "imaginary part") : 0.0;
            mirror(i - 1, j - 1, Complex(re, im));
        }
    } else {
        // Array data is stored column by column; mirrored variants keep only
        // the lower triangle (without the diagonal in the skew case).
        for (long j = 0; j < cols; ++j) {
            long i0 = mirrored ? (skew ? j + 1 : j) : 0;
            for (long i = i0; i < rows; ++i) {
                if (!next_data_line(in, line))
                    throw ParseError("matrix market: truncated array data");
                std::istringstream ls(line);
                double re = parse_real(ls, "value");
                double im = complex_field ? parse_real(ls, "imaginary part") : 0.0;
                mirror(i, j, Complex(re, im));
            }
        }
    }
    la::require_finite(a, "matrix market");
    return a;
}

Matrix read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("matrix market: cannot open " + path.string());
    return read(in);
}

void write(std::ostream& out, const Matrix& a, const std::string& comment) {
    out << "%%MatrixMarket matrix array complex general\n";
    if (!comment.empty())
        out << "% " << comment << "\n";
    out << a.rows() << " " << a.cols() << "\n";
    for (Index j = 0; j < a.cols(); ++j)
        for (Index i = 0; i < a.rows(); ++i)
            out << fmt17(a(i, j).real()) << " " << fmt17(a(i, j).imag()) << "\n";
}

void write_file(const std::filesystem::path& path, const Matrix& a, const std::string& comment) {
    std::ofstream out(path);
    if (!out)
        throw Error("matrix market: cannot write " + path.string());
    write(out, a, comment);
}

std::string to_string(const Matrix& a) {
    std::ostringstream out;
    write(out, a);
    return out.str();
}

Matrix from_string(const std::string& text) {
    std::istringstream in(text);
    return read(in);
}

} // namespace mm
} // namespace opfactor
