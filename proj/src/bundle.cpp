// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#include "opfactor/bundle.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "opfactor/matrix_market.hpp"

namespace opfactor {
namespace bundle {

namespace fs = std::filesystem;

std::string sha256_bytes(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256: digest computation failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("sha256: cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return sha256_bytes(buf.str());
}

Writer::Writer(fs::path dir, const std::string& command) : dir_(std::move(dir)) {
    fs::create_directories(dir_ / "payloads");
    manifest_["schema_version"] = 1;
    manifest_["command"] = command;
    manifest_["parameters"] = nlohmann::json::object();
    manifest_["tolerances"] = nlohmann::json::object();
    manifest_["payloads"] = nlohmann::json::array();
    manifest_["certificates"] = nlohmann::json::object();
    const auto now = std::chrono::system_clock::now();
    manifest_["timestamp"] =
        static_cast<long long>(std::chrono::duration_cast<std::chrono::seconds>(
                                   now.time_since_epoch())
                                   .count());
}

void Writer::add_payload(const std::string& name, const Matrix& m) {
    const std::string file = "payloads/" + name + ".mtx";
    const std::string text = mm::to_string(m);
    std::ofstream out(dir_ / file, std::ios::binary);
    if (!out)
        throw Error("bundle: cannot write " + (dir_ / file).string());
    out << text;
    out.close();
    nlohmann::json entry;
    entry["name"] = name;
    entry["file"] = file;
    entry["sha256"] = sha256_bytes(text);
    entry["rows"] = m.rows();
    entry["cols"] = m.cols();
    manifest_["payloads"].push_back(std::move(entry));
}

void Writer::finalize() {
    std::ofstream out(dir_ / "manifest.json", std::ios::binary);
    if (!out)
        throw Error("bundle: cannot write manifest in " + dir_.string());
    out << manifest_.dump(2) << "\n";
}

nlohmann::json load_manifest(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in)
        throw ParseError("bundle: cannot open manifest in " + dir.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bundle: bad manifest: " + std::string(e.what()));
    }
    if (!doc.contains("schema_version") || doc["schema_version"].get<int>() != 1)
        throw ParseError("bundle: unsupported schema version");
    return doc;
}

namespace {

const nlohmann::json* find_payload(const nlohmann::json& manifest, const std::string& name) {
    for (const auto& entry : manifest.at("payloads"))
        if (entry.at("name").get<std::string>() == name)
            return &entry;
    return nullptr;
}

} // namespace

bool has_payload(const nlohmann::json& manifest, const std::string& name) {
    return find_payload(manifest, name) != nullptr;
}

Matrix load_payload(const fs::path& dir, const nlohmann::json& manifest,
                    const std::string& name) {
    const nlohmann::json* entry = find_payload(manifest, name);
    if (!entry)
        throw ParseError("bundle: payload not in manifest: " + name);
    const fs::path file = dir / entry->at("file").get<std::string>();
    std::ifstream in(file, std::ios::binary);
    if (!in)
        throw ParseError("bundle: missing payload file " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    if (sha256_bytes(text) != entry->at("sha256").get<std::string>())
        throw Error("bundle: payload hash mismatch for " + name);
    return mm::from_string(text);
}

namespace {

bool walk(const nlohmann::json& a, const nlohmann::json& b, double tol, std::string path,
          std::string& where) {
    if (a.is_number() && b.is_number()) {
        const double x = a.get<double>(), y = b.get<double>();
        if (std::abs(x - y) <= tol || (std::isnan(x) && std::isnan(y)))
            return true;
        where = path;
        return false;
    }
    if (a.type() != b.type()) {
        where = path;
        return false;
    }
    if (a.is_object()) {
        for (auto it = a.begin(); it != a.end(); ++it) {
            if (!b.contains(it.key())) {
                where = path + "/" + it.key();
                return false;
            }
            if (!walk(it.value(), b.at(it.key()), tol, path + "/" + it.key(), where))
                return false;
        }
        for (auto it = b.begin(); it != b.end(); ++it)
            if (!a.contains(it.key())) {
                where = path + "/" + it.key();
                return false;
            }
        return true;
    }
    if (a.is_array()) {
        if (a.size() != b.size()) {
            where = path;
            return false;
        }
        for (std::size_t i = 0; i < a.size(); ++i)
            if (!walk(a[i], b[i], tol, path + "/" + std::to_string(i), where))
                return false;
        return true;
    }
    if (a != b) {
        where = path;
        return false;
    }
    return true;
}

} // namespace

std::string first_divergence(const nlohmann::json& stored, const nlohmann::json& recomputed,
                             double tol) {
    std::string where;
    walk(stored, recomputed, tol, "", where);
    return where;
}

} // namespace bundle
} // namespace opfactor
