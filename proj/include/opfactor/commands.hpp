// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#ifndef OPFACTOR_COMMANDS_HPP
#define OPFACTOR_COMMANDS_HPP

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "opfactor/families.hpp"
#include "opfactor/linalg.hpp"
#include "opfactor/nil_factor.hpp"
#include "opfactor/qn_factor.hpp"

namespace opfactor {
namespace cmd {

// Exit-code contract: 0 ok, 2 infeasible, 3 parse/config, 4 obstruction,
// 5 verify mismatch.  Unexpected internal failures return 1.
inline constexpr int kOk = 0;
inline constexpr int kFail = 1;
inline constexpr int kInfeasible = 2;
inline constexpr int kParse = 3;
inline constexpr int kObstruction = 4;
inline constexpr int kVerifyMismatch = 5;

struct FactorNilpotentOptions {
    bool allow_padding = true;
    Index max_pad = 1 << 20;
};

struct FactorQnOptions {
    int window = 6;
    double base = 4.0;
    int max_pieces = 6;
    int almost_null_count = 6;
};

struct CommonFactorOptions {
    std::string mode = "compact-right";
    int power_n_max = 30;
    int almost_null_count = 3;
    int diagnostic_count = 4;
};

int factor_nilpotent(const std::filesystem::path& input, const std::filesystem::path& out_dir,
                     const FactorNilpotentOptions& opts, std::ostream& err);

/// Inputs ending in .json are synthetic canonical-piece families; anything
/// else is read as a Matrix Market operator and decomposed first.
int factor_qn(const std::filesystem::path& input, const std::filesystem::path& out_dir,
              const FactorQnOptions& opts, std::ostream& err);

int common_factor(const std::vector<std::filesystem::path>& inputs,
                  const std::filesystem::path& out_dir, const CommonFactorOptions& opts,
                  std::ostream& err);

int verify(const std::filesystem::path& bundle_dir, std::ostream& out, std::ostream& err);

int generate(const fam::FamilyDescriptor& family, const std::filesystem::path& output,
             std::ostream& err);

// Certificate builders, shared between the factor commands and verify so a
// verification run reproduces the exact computation path.
nlohmann::json nil_two_certs(const Matrix& t, const Matrix& m, const Matrix& n, Index pad);
nlohmann::json nil_family_certs(const std::string& mode, std::span<const Matrix> ts,
                                const Matrix& left, const Matrix& right,
                                std::span<const Matrix> middles, Index pad);
nlohmann::json qn_certs(const qn::RefinedPieces& pieces, int window, const qn::QNOptions& opts);
nlohmann::json conjugation_certs(const Matrix& t, const Matrix& v, const Matrix& v_inv,
                                 const Matrix& a, const Matrix& k, const Matrix& c,
                                 const Matrix& d, const Matrix& l, Index p1, Index p3);
nlohmann::json compact_certs(const std::string& mode, std::span<const Matrix> ks,
                             std::span<const Matrix> cofactors, const Matrix& q_left,
                             const Matrix& q_right, int power_n_max);
nlohmann::json general_certs(std::span<const Matrix> ts, const Matrix& v, const Matrix& v_inv,
                             const Matrix& q, const Matrix& r, std::span<const Matrix> ms,
                             std::span<const Matrix> hs, std::span<const Matrix> as,
                             std::span<const Matrix> cs, std::span<const Matrix> ds, Index pad,
                             Index part_dim, int power_n_max, int diagnostic_count);

/// Synthetic canonical-piece files (produced by generate, consumed by factor_qn).
void save_pieces(const std::filesystem::path& path, const qn::RefinedPieces& pieces);
qn::RefinedPieces load_pieces(const std::filesystem::path& path);

} // namespace cmd
} // namespace opfactor

#endif
