// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#ifndef OPFACTOR_BUNDLE_HPP
#define OPFACTOR_BUNDLE_HPP

#include <filesystem>
#include <string>

#include <json.hpp>

#include "opfactor/linalg.hpp"

namespace opfactor {
namespace bundle {

std::string sha256_bytes(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// A factorization bundle on disk:
///   <dir>/manifest.json           command, parameters, tolerances, hashes,
///                                 certificates
///   <dir>/payloads/<name>.mtx     every input and factor, Matrix Market
class Writer {
public:
    Writer(std::filesystem::path dir, const std::string& command);

    void add_payload(const std::string& name, const Matrix& m);
    nlohmann::json& parameters() { return manifest_["parameters"]; }
    nlohmann::json& tolerances() { return manifest_["tolerances"]; }
    void set_certificates(nlohmann::json certs) { manifest_["certificates"] = std::move(certs); }

    /// Writes manifest.json; the writer must not be reused afterwards.
    void finalize();

private:
    std::filesystem::path dir_;
    nlohmann::json manifest_;
};

nlohmann::json load_manifest(const std::filesystem::path& dir);

/// Loads a payload by name after checking its recorded hash.
/// Throws ParseError when missing and Error on a hash mismatch.
Matrix load_payload(const std::filesystem::path& dir, const nlohmann::json& manifest,
                    const std::string& name);

bool has_payload(const nlohmann::json& manifest, const std::string& name);

/// Recursively compares stored and recomputed certificate documents.
/// Numbers must agree within 1e-12; everything else must match exactly.
/// Returns the JSON pointer of the first divergence, or an empty string.
std::string first_divergence(const nlohmann::json& stored, const nlohmann::json& recomputed,
                             double tol = 1e-12);

} // namespace bundle
} // namespace opfactor

#endif
