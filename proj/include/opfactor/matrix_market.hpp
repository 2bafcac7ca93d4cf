// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#ifndef OPFACTOR_MATRIX_MARKET_HPP
#define OPFACTOR_MATRIX_MARKET_HPP

#include <filesystem>
#include <iosfwd>
#include <string>

#include "opfactor/linalg.hpp"

namespace opfactor {
namespace mm {

/// Reads a Matrix Market stream.  Accepts both the array and coordinate
/// formats; real and integer fields are promoted to complex.  Symmetric,
/// hermitian and skew-symmetric storage is expanded.
Matrix read(std::istream& in);
Matrix read_file(const std::filesystem::path& path);

/// Writes in dense array format with the complex field, 17 significant
/// digits (values round-trip exactly).
void write(std::ostream& out, const Matrix& a, const std::string& comment = {});
void write_file(const std::filesystem::path& path, const Matrix& a,
                const std::string& comment = {});

std::string to_string(const Matrix& a);
Matrix from_string(const std::string& text);

} // namespace mm
} // namespace opfactor

#endif
