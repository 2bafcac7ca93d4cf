// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#ifndef OPFACTOR_BLOCKOP_IO_HPP
#define OPFACTOR_BLOCKOP_IO_HPP

#include <filesystem>
#include <string>

#include <json.hpp>

#include "opfactor/blockop.hpp"

namespace opfactor {
namespace blk {

/// JSON description of a block operator: shapes plus either an explicit
/// block list (inline Matrix Market payloads or scaled-identity generators)
/// or a whole-operator generator (weighted shift / diagonal family).
nlohmann::json to_json(const BlockOperator& x);
BlockOperator from_json(const nlohmann::json& doc);

void save_manifest(const std::filesystem::path& path, const BlockOperator& x);
BlockOperator load_manifest(const std::filesystem::path& path);

/// Block weighted shift: weights[j] * I on the (j, j+1) superdiagonal,
/// j = first_index .. first_index + weights.size() - 1, uniform block dim.
BlockOperator block_weighted_shift(Index block_dim, int first_index,
                                   const std::vector<double>& weights);

/// Block diagonal: values[j] * I at (first_index + j, first_index + j).
BlockOperator block_diagonal(Index block_dim, int first_index,
                             const std::vector<double>& values);

} // namespace blk
} // namespace opfactor

#endif
