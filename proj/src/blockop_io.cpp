// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#include "opfactor/blockop_io.hpp"

#include <fstream>

#include "opfactor/matrix_market.hpp"

namespace opfactor {
namespace blk {

namespace {

nlohmann::json shape_to_json(const BlockShape& s) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [i, d] : s.dims())
        out[std::to_string(i)] = d;
    return out;
}

BlockShape shape_from_json(const nlohmann::json& doc) {
    std::map<int, Index> dims;
    for (auto it = doc.begin(); it != doc.end(); ++it)
        dims[std::stoi(it.key())] = it.value().get<Index>();
    return BlockShape(std::move(dims));
}

} // namespace

nlohmann::json to_json(const BlockOperator& x) {
    nlohmann::json doc;
    doc["schema_version"] = 1;
    doc["row_shape"] = shape_to_json(x.row_shape());
    doc["col_shape"] = shape_to_json(x.col_shape());
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& [i, j] : x.support()) {
        nlohmann::json entry;
        entry["row"] = i;
        entry["col"] = j;
        entry["mm"] = mm::to_string(x.block(i, j));
        blocks.push_back(std::move(entry));
    }
    doc["blocks"] = std::move(blocks);
    return doc;
}

BlockOperator from_json(const nlohmann::json& doc) {
    if (!doc.contains("row_shape") && doc.contains("operator")) {
        // Whole-operator generator descriptor.
        const auto& gen = doc.at("operator");
        const std::string kind = gen.at("kind").get<std::string>();
        const Index block_dim = gen.at("block_dim").get<Index>();
        const int first = gen.value("first_index", 1);
        std::vector<double> values = gen.at("values").get<std::vector<double>>();
        if (kind == "block-weighted-shift")
            return block_weighted_shift(block_dim, first, values);
        if (kind == "block-diagonal")
            return block_diagonal(block_dim, first, values);
        throw ParseError("block operator manifest: unknown generator kind: " + kind);
    }

    BlockShape rows = shape_from_json(doc.at("row_shape"));
    BlockShape cols = shape_from_json(doc.at("col_shape"));
    std::map<BlockKey, Matrix> blocks;
    for (const auto& entry : doc.at("blocks")) {
        const int i = entry.at("row").get<int>();
        const int j = entry.at("col").get<int>();
        Matrix b;
        if (entry.contains("mm")) {
            b = mm::from_string(entry.at("mm").get<std::string>());
        } else if (entry.contains("generator")) {
            const auto& g = entry.at("generator");
            const std::string kind = g.at("kind").get<std::string>();
            if (kind != "scaled-identity")
                throw ParseError("block operator manifest: unknown block generator: " + kind);
            const Index d = g.at("dim").get<Index>();
            const auto sc = g.at("scale");
            b = Complex(sc.at(0).get<double>(), sc.at(1).get<double>()) * Matrix::Identity(d, d);
        } else {
            throw ParseError("block operator manifest: block entry lacks payload");
        }
        blocks[{i, j}] = std::move(b);
    }
    return BlockOperator::from_blocks(std::move(rows), std::move(cols), std::move(blocks));
}

void save_manifest(const std::filesystem::path& path, const BlockOperator& x) {
    std::ofstream out(path);
    if (!out)
        throw Error("block operator manifest: cannot write " + path.string());
    out << to_json(x).dump(2) << "\n";
}

BlockOperator load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("block operator manifest: cannot open " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("block operator manifest: " + std::string(e.what()));
    }
    return from_json(doc);
}

BlockOperator block_weighted_shift(Index block_dim, int first_index,
                                   const std::vector<double>& weights) {
    std::map<int, Index> dims;
    const int m = static_cast<int>(weights.size());
    for (int j = first_index; j <= first_index + m; ++j)
        dims[j] = block_dim;
    std::map<BlockKey, Matrix> blocks;
    for (int j = 0; j < m; ++j)
        blocks[{first_index + j, first_index + j + 1}] =
            weights[static_cast<std::size_t>(j)] * Matrix::Identity(block_dim, block_dim);
    BlockShape shape(std::move(dims));
    return BlockOperator::from_blocks(shape, shape, std::move(blocks));
}

BlockOperator block_diagonal(Index block_dim, int first_index,
                             const std::vector<double>& values) {
    std::map<int, Index> dims;
    const int m = static_cast<int>(values.size());
    for (int j = first_index; j < first_index + m; ++j)
        dims[j] = block_dim;
    std::map<BlockKey, Matrix> blocks;
    for (int j = 0; j < m; ++j)
        blocks[{first_index + j, first_index + j}] =
            values[static_cast<std::size_t>(j)] * Matrix::Identity(block_dim, block_dim);
    BlockShape shape(std::move(dims));
    return BlockOperator::from_blocks(shape, shape, std::move(blocks));
}

} // namespace blk
} // namespace opfactor
