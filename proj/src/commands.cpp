// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#include "opfactor/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "opfactor/bundle.hpp"
#include "opfactor/decompose.hpp"
#include "opfactor/matrix_market.hpp"

namespace opfactor {
namespace cmd {

namespace fs = std::filesystem;

namespace {

int guard(std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const SemiFredholmObstruction& e) {
        err << "obstruction: " << e.what() << "\n";
        return kObstruction;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return kParse;
    } catch (const Infeasible& e) {
        err << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const KernelEmpty& e) {
        err << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const BudgetExceeded& e) {
        err << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const SplitTooShallow& e) {
        err << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const DegenerateReduction& e) {
        err << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const SpaceTooSmall& e) {
        err << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const NotEssentiallySingular& e) {
        err << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const RangeInclusionFailed& e) {
        err << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kFail;
    }
}

std::vector<double> to_vec(const RealVector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

nlohmann::json bound_report_json(const blk::BoundReport& r) {
    nlohmann::json out;
    out["all_pass"] = r.all_pass;
    out["precondition_ok"] = r.precondition_ok;
    out["max_scaled_norm"] = r.max_scaled_norm;
    out["base"] = r.base;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : r.entries) {
        nlohmann::json j;
        j["n"] = e.n;
        j["analytic"] = e.analytic;
        j["computed"] = e.computed;
        j["pass"] = e.pass;
        entries.push_back(std::move(j));
    }
    out["entries"] = std::move(entries);
    return out;
}

nlohmann::json certificate_json(const blk::Certificate& c) {
    nlohmann::json out;
    out["valid"] = c.valid;
    out["threshold"] = c.threshold;
    out["split_after"] = c.split_after;
    out["corner1_estimate"] = c.corner1_estimate;
    out["corner2_estimate"] = c.corner2_estimate;
    return out;
}

} // namespace

nlohmann::json nil_two_certs(const Matrix& t, const Matrix& m, const Matrix& n, Index pad) {
    Matrix tp = la::pad_with_zero(t, pad);
    const double denom = std::max(t.norm(), 1e-300);
    const double residual = (m * n - tp).norm() / denom;
    const double m_cube = (m * m * m).norm();
    const double n_cube = (n * n * n).norm();
    const double m_budget = 1e-12 * std::pow(1.0 + la::norm2(m), 3.0);
    const double n_budget = 1e-12 * std::pow(1.0 + la::norm2(n), 3.0);
    const int mi = nil::nilpotency_index(m);
    const int ni = nil::nilpotency_index(n);

    nlohmann::json out;
    out["product_residual"] = residual;
    out["cube_fro"] = {m_cube, n_cube};
    out["cube_budget"] = {m_budget, n_budget};
    out["nilpotency_index"] = {mi, ni};
    out["ker_dim"] = la::kernel_basis(t).dim();
    out["coker_dim"] = la::cokernel_basis(t).dim();
    out["pad_amount"] = pad;
    out["pass"] = residual <= 1e-10 && m_cube <= m_budget && n_cube <= n_budget && mi >= 1 &&
                  mi <= 3 && ni >= 1 && ni <= 3;
    return out;
}

nlohmann::json nil_family_certs(const std::string& mode, std::span<const Matrix> ts,
                                const Matrix& left, const Matrix& right,
                                std::span<const Matrix> middles, Index pad) {
    nlohmann::json out;
    out["mode"] = mode;
    out["pad_amount"] = pad;
    bool pass = true;

    auto cube_ok = [&pass](const Matrix& x, nlohmann::json& fro, nlohmann::json& budget) {
        const double c = (x * x * x).norm();
        const double b = 1e-12 * std::pow(1.0 + la::norm2(x), 3.0);
        fro.push_back(c);
        budget.push_back(b);
        pass = pass && c <= b;
        const int idx = nil::nilpotency_index(x);
        pass = pass && idx >= 1 && idx <= 3;
        return idx;
    };

    // The sandwich middles N_i are nilpotent; the two-sided middles S_i are
    // not claimed to be — only the mixed products below.
    nlohmann::json fro = nlohmann::json::array(), budget = nlohmann::json::array();
    nlohmann::json indices = nlohmann::json::array();
    indices.push_back(cube_ok(left, fro, budget));
    if (mode == "nilpotent-two-sided")
        indices.push_back(cube_ok(right, fro, budget));
    if (mode == "nilpotent-sandwich")
        for (const Matrix& s : middles)
            indices.push_back(cube_ok(s, fro, budget));
    out["factor_cube_fro"] = std::move(fro);
    out["factor_cube_budget"] = std::move(budget);
    out["nilpotency_indices"] = std::move(indices);

    nlohmann::json residuals = nlohmann::json::array();
    for (std::size_t i = 0; i < ts.size(); ++i) {
        Matrix tp = la::pad_with_zero(ts[i], pad);
        const double denom = std::max(ts[i].norm(), 1e-300);
        const double r = (left * middles[i] * right - tp).norm() / denom;
        residuals.push_back(r);
        pass = pass && r <= 1e-10;
    }
    out["residuals"] = std::move(residuals);

    if (mode == "nilpotent-two-sided") {
        nlohmann::json mixed = nlohmann::json::array();
        for (const Matrix& s : middles) {
            Matrix ls = left * s;
            Matrix sr = s * right;
            const double c1 = (ls * ls * ls).norm();
            const double c2 = (sr * sr * sr).norm();
            const double b1 = 1e-12 * std::pow(1.0 + la::norm2(ls), 3.0);
            const double b2 = 1e-12 * std::pow(1.0 + la::norm2(sr), 3.0);
            mixed.push_back(c1);
            mixed.push_back(c2);
            pass = pass && c1 <= b1 && c2 <= b2;
        }
        out["mixed_cube_fro"] = std::move(mixed);
    }
    out["pass"] = pass;
    return out;
}

nlohmann::json qn_certs(const qn::RefinedPieces& pieces, int window, const qn::QNOptions& opts) {
    qn::QNFactorization f = qn::factor_from_pieces(pieces, window, opts);
    nlohmann::json out;
    out["window"] = f.window_used;
    out["base"] = pieces.base;
    out["product_residual"] = f.product_residual;
    out["max_block_norm"] = f.max_block_norm;
    out["cert_q1"] = certificate_json(f.cert_q1);
    out["cert_q2"] = certificate_json(f.cert_q2);
    out["bound_q1"] = bound_report_json(f.r_bound_q1);
    out["bound_q2"] = bound_report_json(f.r_bound_q2);
    const bool residual_ok = f.product_residual <= 1e-10 * (1.0 + f.max_block_norm);
    out["pass"] = residual_ok && f.cert_q1.valid && f.cert_q2.valid && f.r_bound_q1.all_pass &&
                  f.r_bound_q2.all_pass;
    return out;
}

nlohmann::json conjugation_certs(const Matrix& t, const Matrix& v, const Matrix& v_inv,
                                 const Matrix& a, const Matrix& k, const Matrix& c,
                                 const Matrix& d, const Matrix& l, Index p1, Index p3) {
    const Index mid = c.rows();
    const Index big = p1 + mid + p3;
    Matrix form = Matrix::Zero(big, big);
    form.block(0, p1, p1, mid) = a;
    form.block(p1, 0, mid, p1) = k;
    form.block(p1, p1, mid, mid) = c;
    form.block(p1, p1 + mid, mid, p3) = d;
    form.block(p1 + mid, p1, p3, mid) = l;
    Matrix tp = la::pad_with_zero(t, big - t.rows());
    const double residual = la::norm2(v_inv * form * v - tp) / (1.0 + la::norm2(tp));

    nlohmann::json out;
    out["conjugation_residual"] = residual;
    out["part_dims"] = {p1, mid, p3};
    out["pad_amount"] = big - t.rows();
    out["pass"] = residual <= 1e-10;
    return out;
}

nlohmann::json compact_certs(const std::string& mode, std::span<const Matrix> ks,
                             std::span<const Matrix> cofactors, const Matrix& q_left,
                             const Matrix& q_right, int power_n_max) {
    nlohmann::json out;
    out["mode"] = mode;
    bool pass = true;

    nlohmann::json residuals = nlohmann::json::array();
    for (std::size_t i = 0; i < ks.size(); ++i) {
        double r;
        if (mode == "compact-right")
            r = la::norm2(cofactors[i] * q_right - ks[i]);
        else if (mode == "compact-left")
            r = la::norm2(q_left * cofactors[i] - ks[i]);
        else
            r = la::norm2(q_left * cofactors[i] * q_right - ks[i]);
        residuals.push_back(r);
        pass = pass && r <= 1e-10 * (1.0 + la::norm2(ks[i]));
    }
    out["residuals"] = std::move(residuals);

    // Spectral data of the gram matrix driving the shift construction.
    const bool right_side = mode != "compact-left";
    Matrix gram = Matrix::Zero(right_side ? ks[0].cols() : ks[0].rows(),
                               right_side ? ks[0].cols() : ks[0].rows());
    for (const Matrix& k : ks)
        gram += right_side ? Matrix(k.adjoint() * k) : Matrix(k * k.adjoint());
    gram = 0.5 * (gram + gram.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    const Index n = gram.rows();
    std::vector<double> lambdas(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j)
        lambdas[static_cast<std::size_t>(j)] = std::max(0.0, es.eigenvalues()(n - 1 - j));

    auto power_json = [&](const Matrix& q, const char* key_norms, const char* key_gelfand) {
        std::vector<double> norms = la::matrix_power_norms(q, power_n_max);
        out[key_norms] = norms;
        out[key_gelfand] = la::gelfand_from_norms(norms);
        return norms;
    };

    if (mode == "compact-two-sided") {
        power_json(q_left, "power_norms_q1", "gelfand_q1");
        power_json(q_right, "power_norms_q2", "gelfand_q2");
    } else {
        const Matrix& q = right_side ? q_right : q_left;
        std::vector<double> norms = power_json(q, "power_norms", "gelfand");
        // Exact power identity ||Q^{2m}|| = (lambda_1 ... lambda_{2m})^{1/4}
        // and the head-tail bound (lambda_1 lambda_{m+1})^{m/4}.
        double max_dev = 0.0;
        bool bound_ok = true;
        const int m_cap = std::min<int>(power_n_max / 2, static_cast<int>(n - 1) / 2);
        for (int m = 1; m <= m_cap; ++m) {
            double prod = 1.0;
            for (int j = 0; j < 2 * m; ++j)
                prod *= lambdas[static_cast<std::size_t>(j)];
            const double expected = std::pow(prod, 0.25);
            const double got = norms[static_cast<std::size_t>(2 * m - 1)];
            max_dev = std::max(max_dev, std::abs(got - expected));
            const double head_tail =
                std::pow(lambdas[0] * lambdas[static_cast<std::size_t>(m)], 0.25 * m);
            bound_ok = bound_ok && got <= head_tail * (1.0 + 1e-9) + 1e-300;
        }
        out["power_identity_max_dev"] = max_dev;
        out["power_identity_bound_ok"] = bound_ok;
        pass = pass && max_dev <= 1e-12 && bound_ok;

        // ||L_i phi_j||^2 <= sqrt(lambda_{j-1}) in the construction basis.
        Matrix phi(n, n);
        for (Index j = 0; j < n; ++j)
            phi.col(j) = es.eigenvectors().col(n - 1 - j);
        double max_ratio = 0.0;
        for (std::size_t i = 0; i < cofactors.size(); ++i) {
            const Matrix& li = cofactors[i];
            for (Index j = 1; j < n; ++j) {
                const double lam = lambdas[static_cast<std::size_t>(j - 1)];
                Vector col = right_side ? Vector(li * phi.col(j))
                                        : Vector(li.adjoint() * phi.col(j));
                const double sq = col.squaredNorm();
                if (lam > 0.0)
                    max_ratio = std::max(max_ratio, sq / std::sqrt(lam));
                else
                    max_ratio = std::max(max_ratio, sq > 1e-20 ? 2.0 : 0.0);
            }
        }
        out["cofactor_bound_max_ratio"] = max_ratio;
        pass = pass && max_ratio <= 1.0 + 1e-9;
    }
    out["pass"] = pass;
    return out;
}

nlohmann::json general_certs(std::span<const Matrix> ts, const Matrix& v, const Matrix& v_inv,
                             const Matrix& q, const Matrix& r, std::span<const Matrix> ms,
                             std::span<const Matrix> hs, std::span<const Matrix> as,
                             std::span<const Matrix> cs, std::span<const Matrix> ds, Index pad,
                             Index part_dim, int power_n_max, int diagnostic_count) {
    const Index m = part_dim;
    const Matrix id = Matrix::Identity(m, m);
    auto cyclic = [&](const Matrix& corner) {
        Matrix out = Matrix::Zero(3 * m, 3 * m);
        out.block(0, m, m, m) = id;
        out.block(m, 2 * m, m, m) = id;
        out.block(2 * m, 0, m, m) = corner;
        return out;
    };
    Matrix q1p = cyclic(r);
    Matrix q2p = cyclic(q);

    nlohmann::json out;
    out["mode"] = "general";
    out["pad_amount"] = pad;
    out["part_dim"] = part_dim;
    bool pass = true;

    nlohmann::json residuals = nlohmann::json::array();
    Matrix stacked(3 * m * static_cast<Index>(ts.size()), 3 * m);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        Matrix sp = Matrix::Zero(3 * m, 3 * m);
        sp.block(0, 0, m, m) = ms[i];
        sp.block(m, 0, m, m) = as[i];
        sp.block(2 * m, 0, m, m) = cs[i];
        sp.block(2 * m, m, m, m) = ds[i];
        sp.block(2 * m, 2 * m, m, m) = hs[i];
        Matrix target = v * la::pad_with_zero(ts[i], pad) * v_inv;
        const double rel = la::norm2(q1p * sp * q2p - target) / (1.0 + la::norm2(target));
        residuals.push_back(rel);
        pass = pass && rel <= 1e-8;
        stacked.middleRows(static_cast<Index>(i) * 3 * m, 3 * m) = sp;
    }
    out["residuals"] = std::move(residuals);

    auto cube_stats = [&](const Matrix& qp, const Matrix& diag) {
        Matrix cube = qp * qp * qp;
        double offdiag = 0.0, dev = 0.0;
        for (Index bi = 0; bi < 3; ++bi)
            for (Index bj = 0; bj < 3; ++bj) {
                Matrix blkm = cube.block(bi * m, bj * m, m, m);
                if (bi == bj)
                    dev = std::max(dev, (blkm - diag).cwiseAbs().maxCoeff());
                else
                    offdiag = std::max(offdiag, blkm.cwiseAbs().maxCoeff());
            }
        return std::pair<double, double>(offdiag, dev);
    };
    auto [off1, dev1] = cube_stats(q1p, r);
    auto [off2, dev2] = cube_stats(q2p, q);
    out["cube_offdiag"] = {off1, off2};
    out["cube_diag_dev"] = {dev1, dev2};
    pass = pass && off1 <= 1e-12 && off2 <= 1e-12 && dev1 <= 1e-12 && dev2 <= 1e-12;

    std::vector<double> r_norms = la::matrix_power_norms(r, power_n_max);
    std::vector<double> q_norms = la::matrix_power_norms(q, power_n_max);
    out["gelfand_r"] = la::gelfand_from_norms(r_norms);
    out["gelfand_q"] = la::gelfand_from_norms(q_norms);

    la::SvdResult sdec = la::svd(stacked);
    nlohmann::json sig = nlohmann::json::array();
    const Index count = std::min<Index>(diagnostic_count, sdec.singular_values.size());
    for (Index j = sdec.singular_values.size() - count; j < sdec.singular_values.size(); ++j)
        sig.push_back(sdec.singular_values(j));
    out["stacked_trailing_sigmas"] = std::move(sig);
    out["pass"] = pass;
    return out;
}

void save_pieces(const fs::path& path, const qn::RefinedPieces& pieces) {
    nlohmann::json doc;
    doc["kind"] = "canonical-pieces";
    doc["base"] = pieces.base;
    doc["c"] = mm::to_string(pieces.c);
    auto dump = [](const std::vector<Matrix>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const Matrix& m : v)
            arr.push_back(mm::to_string(m));
        return arr;
    };
    doc["a"] = dump(pieces.a);
    doc["k"] = dump(pieces.k);
    doc["d"] = dump(pieces.d);
    doc["l"] = dump(pieces.l);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("save_pieces: cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

qn::RefinedPieces load_pieces(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("load_pieces: cannot open " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("load_pieces: " + std::string(e.what()));
    }
    if (doc.value("kind", "") != "canonical-pieces")
        throw ParseError("load_pieces: not a canonical-pieces file");
    qn::RefinedPieces pieces;
    pieces.base = doc.at("base").get<double>();
    pieces.c = mm::from_string(doc.at("c").get<std::string>());
    auto slurp = [](const nlohmann::json& arr) {
        std::vector<Matrix> out;
        for (const auto& s : arr)
            out.push_back(mm::from_string(s.get<std::string>()));
        return out;
    };
    pieces.a = slurp(doc.at("a"));
    pieces.k = slurp(doc.at("k"));
    pieces.d = slurp(doc.at("d"));
    pieces.l = slurp(doc.at("l"));
    return pieces;
}

int factor_nilpotent(const fs::path& input, const fs::path& out_dir,
                     const FactorNilpotentOptions& opts, std::ostream& err) {
    return guard(err, [&] {
        Matrix t = mm::read_file(input);
        nil::NilOptions nopts;
        nopts.pad.allow_padding = opts.allow_padding;
        nopts.pad.max_pad = opts.max_pad;
        nil::NilFactorization f = nil::factor_two_nilpotents(t, nopts);

        bundle::Writer w(out_dir, "factor-nilpotent");
        w.parameters()["input"] = input.filename().string();
        w.parameters()["allow_padding"] = opts.allow_padding;
        w.parameters()["pad_amount"] = f.pad_amount;
        w.parameters()["part_dim"] = f.part_dim;
        w.tolerances()["product_residual"] = 1e-10;
        w.tolerances()["cube_relative"] = 1e-12;
        w.tolerances()["rank_tol_relative"] = 1e-9;
        w.add_payload("input", t);
        w.add_payload("m", f.left);
        w.add_payload("n", f.right);
        nlohmann::json certs = nil_two_certs(t, f.left, f.right, f.pad_amount);
        const bool pass = certs["pass"].get<bool>();
        w.set_certificates(std::move(certs));
        w.finalize();
        return pass ? kOk : kFail;
    });
}

int factor_qn(const fs::path& input, const fs::path& out_dir, const FactorQnOptions& opts,
              std::ostream& err) {
    return guard(err, [&] {
        qn::QNOptions qopts;
        qopts.base = opts.base;
        qopts.max_pieces = opts.max_pieces;

        bundle::Writer w(out_dir, "factor-qn");
        w.parameters()["window"] = opts.window;
        w.parameters()["base"] = opts.base;
        w.parameters()["pieces"] = opts.max_pieces;
        w.tolerances()["product_residual_relative"] = 1e-10;
        w.tolerances()["certificate_threshold"] = qopts.cert_threshold;

        qn::RefinedPieces pieces;
        nlohmann::json conj;
        bool have_conj = false;
        if (input.extension() == ".json") {
            pieces = load_pieces(input);
            w.parameters()["input_kind"] = "canonical-pieces";
        } else {
            Matrix t = mm::read_file(input);
            dec::CanonicalOptions copts;
            // Both outer parts must keep two dimensions so each compact
            // split can occupy two pieces.
            copts.min_part = 2;
            copts.k = std::max(opts.almost_null_count, 6);
            dec::CanonicalForm cf = dec::canonical_form(t, copts);
            qn::SplitOptions sopts{opts.base, opts.max_pieces};
            qn::CompactSplit ks = qn::split_compact_domain(cf.k, sopts);
            qn::CompactSplit ls = qn::split_compact_range(cf.l, sopts);
            if (ks.nonempty_count() < 2 || ls.nonempty_count() < 2)
                throw SplitTooShallow("factor-qn: fewer than two nonempty pieces on a side");
            pieces = qn::refine_canonical(cf, ks, ls);
            w.parameters()["input_kind"] = "operator";
            w.parameters()["almost_null_count"] = opts.almost_null_count;
            w.add_payload("input", t);
            w.add_payload("v", cf.basis_change);
            w.add_payload("v_inv", cf.basis_change_inv);
            w.add_payload("cf_a", cf.a);
            w.add_payload("cf_k", cf.k);
            w.add_payload("cf_c", cf.c);
            w.add_payload("cf_d", cf.d);
            w.add_payload("cf_l", cf.l);
            conj = conjugation_certs(t, cf.basis_change, cf.basis_change_inv, cf.a, cf.k, cf.c,
                                     cf.d, cf.l, cf.dim1, cf.dim3);
            have_conj = true;
        }

        w.parameters()["side_pieces"] = pieces.side_pieces();
        w.add_payload("c", pieces.c);
        for (std::size_t i = 0; i < pieces.a.size(); ++i)
            w.add_payload("a_" + std::to_string(i + 1), pieces.a[i]);
        for (std::size_t i = 0; i < pieces.k.size(); ++i)
            w.add_payload("k_" + std::to_string(i + 1), pieces.k[i]);
        for (std::size_t i = 0; i < pieces.d.size(); ++i)
            w.add_payload("d_" + std::to_string(i + 1), pieces.d[i]);
        for (std::size_t i = 0; i < pieces.l.size(); ++i)
            w.add_payload("l_" + std::to_string(i + 1), pieces.l[i]);

        nlohmann::json certs = qn_certs(pieces, opts.window, qopts);
        if (have_conj)
            certs["conjugation"] = std::move(conj);
        bool pass = certs["pass"].get<bool>();
        if (have_conj)
            pass = pass && certs["conjugation"]["pass"].get<bool>();
        w.set_certificates(std::move(certs));
        w.finalize();
        return pass ? kOk : kFail;
    });
}

namespace {

std::vector<Matrix> read_family(const std::vector<fs::path>& inputs) {
    if (inputs.empty())
        throw ParseError("common-factor: no inputs");
    std::vector<Matrix> ts;
    ts.reserve(inputs.size());
    for (const auto& p : inputs)
        ts.push_back(mm::read_file(p));
    for (const Matrix& t : ts)
        if (t.rows() != ts[0].rows() || t.cols() != ts[0].cols())
            throw ParseError("common-factor: inputs must share dimensions");
    return ts;
}

} // namespace

int common_factor(const std::vector<fs::path>& inputs, const fs::path& out_dir,
                  const CommonFactorOptions& opts, std::ostream& err) {
    return guard(err, [&] {
        std::vector<Matrix> ts = read_family(inputs);
        bundle::Writer w(out_dir, "common-factor");
        w.parameters()["mode"] = opts.mode;
        w.parameters()["count"] = ts.size();
        w.parameters()["power_n_max"] = opts.power_n_max;
        w.tolerances()["residual_relative"] = opts.mode == "general" ? 1e-8 : 1e-10;

        nlohmann::json certs;
        qn::CompactFactorOptions copts{opts.power_n_max};
        if (opts.mode == "compact-right" || opts.mode == "compact-left") {
            qn::ShiftFactorization f = opts.mode == "compact-right"
                                           ? qn::common_right_factor_compact(ts, copts)
                                           : qn::common_left_factor_compact(ts, copts);
            for (std::size_t i = 0; i < ts.size(); ++i)
                w.add_payload("k_" + std::to_string(i + 1), ts[i]);
            w.add_payload("q", f.q);
            for (std::size_t i = 0; i < f.cofactors.size(); ++i)
                w.add_payload("l_" + std::to_string(i + 1), f.cofactors[i]);
            certs = compact_certs(opts.mode, ts, f.cofactors,
                                  opts.mode == "compact-left" ? f.q : Matrix(),
                                  opts.mode == "compact-right" ? f.q : Matrix(),
                                  opts.power_n_max);
        } else if (opts.mode == "compact-two-sided") {
            qn::TwoSidedCompact f = qn::two_sided_compact(ts, copts);
            for (std::size_t i = 0; i < ts.size(); ++i)
                w.add_payload("k_" + std::to_string(i + 1), ts[i]);
            w.add_payload("q1", f.left.q);
            w.add_payload("q2", f.right.q);
            for (std::size_t i = 0; i < f.left.cofactors.size(); ++i)
                w.add_payload("l_" + std::to_string(i + 1), f.left.cofactors[i]);
            certs = compact_certs(opts.mode, ts, f.left.cofactors, f.left.q, f.right.q,
                                  opts.power_n_max);
        } else if (opts.mode == "general") {
            qn::GeneralFactorOptions gopts;
            gopts.canonical.k = opts.almost_null_count;
            gopts.power_n_max = opts.power_n_max;
            gopts.diagnostic_count = opts.diagnostic_count;
            qn::GeneralFactorization f = qn::common_factor_general(ts, gopts);
            for (std::size_t i = 0; i < ts.size(); ++i) {
                const std::string sfx = "_" + std::to_string(i + 1);
                w.add_payload("t" + sfx, ts[i]);
                w.add_payload("m" + sfx, f.m_factors[i]);
                w.add_payload("h" + sfx, f.h_factors[i]);
                w.add_payload("a" + sfx, f.jcf.ops[i].a);
                w.add_payload("c" + sfx, f.jcf.ops[i].c);
                w.add_payload("d" + sfx, f.jcf.ops[i].d);
            }
            w.add_payload("v", f.jcf.basis_change);
            w.add_payload("v_inv", f.jcf.basis_change_inv);
            w.add_payload("q", f.q);
            w.add_payload("r", f.r);
            std::vector<Matrix> as, cs, ds;
            for (const auto& op : f.jcf.ops) {
                as.push_back(op.a);
                cs.push_back(op.c);
                ds.push_back(op.d);
            }
            certs = general_certs(ts, f.jcf.basis_change, f.jcf.basis_change_inv, f.q, f.r,
                                  f.m_factors, f.h_factors, as, cs, ds, f.jcf.pad_amount,
                                  f.jcf.part_dim, opts.power_n_max, opts.diagnostic_count);
        } else if (opts.mode == "nilpotent-sandwich" || opts.mode == "nilpotent-two-sided") {
            nil::NilOptions nopts;
            nil::NilFactorization f = opts.mode == "nilpotent-sandwich"
                                          ? nil::common_nilpotent_sandwich(ts, nopts)
                                          : nil::common_nilpotent_two_sided(ts, nopts);
            for (std::size_t i = 0; i < ts.size(); ++i)
                w.add_payload("t_" + std::to_string(i + 1), ts[i]);
            if (opts.mode == "nilpotent-sandwich") {
                w.add_payload("nfac", f.left);
            } else {
                w.add_payload("n1", f.left);
                w.add_payload("n2", f.right);
            }
            for (std::size_t i = 0; i < f.middles.size(); ++i)
                w.add_payload("s_" + std::to_string(i + 1), f.middles[i]);
            w.parameters()["pad_amount"] = f.pad_amount;
            certs = nil_family_certs(opts.mode, ts, f.left, f.right, f.middles, f.pad_amount);
        } else {
            throw ParseError("common-factor: unknown mode: " + opts.mode);
        }
        const bool pass = certs["pass"].get<bool>();
        w.set_certificates(std::move(certs));
        w.finalize();
        return pass ? kOk : kFail;
    });
}

int generate(const fam::FamilyDescriptor& family, const fs::path& output, std::ostream& err) {
    return guard(err, [&] {
        family.validate();
        if (family.kind == "volterra") {
            mm::write_file(output, fam::volterra(family.n), "volterra n=" + std::to_string(family.n));
        } else if (family.kind == "weighted-shift") {
            mm::write_file(output,
                           fam::weighted_shift(fam::geometric_weights(
                               family.decay, static_cast<int>(family.n - 1))),
                           "weighted shift");
        } else if (family.kind == "diagonal") {
            mm::write_file(output,
                           fam::diagonal(fam::geometric_weights(family.decay,
                                                                static_cast<int>(family.n))),
                           "diagonal");
        } else if (family.kind == "random-compact") {
            mm::write_file(output, fam::random_compact(family.n, family.decay, family.seed),
                           "random compact");
        } else if (family.kind == "random-singular") {
            mm::write_file(output,
                           fam::random_singular(family.n, family.kernel_dim, family.seed),
                           "random singular");
        } else if (family.kind == "random-unitary") {
            mm::write_file(output, fam::random_unitary(family.n, family.seed), "random unitary");
        } else {  // canonical-form-synthetic
            qn::RefinedPieces pieces = fam::synthetic_canonical_pieces(
                family.block_dim, family.pieces, family.seed);
            save_pieces(output, pieces);
        }
        return kOk;
    });
}

int verify(const fs::path& dir, std::ostream& out, std::ostream& err) {
    return guard(err, [&]() -> int {
        nlohmann::json manifest = bundle::load_manifest(dir);

        // Byte-level integrity first.
        for (const auto& entry : manifest.at("payloads")) {
            const fs::path file = dir / entry.at("file").get<std::string>();
            if (!fs::exists(file)) {
                out << "verify: missing payload " << entry.at("name").get<std::string>() << "\n";
                return kVerifyMismatch;
            }
            if (bundle::sha256_file(file) != entry.at("sha256").get<std::string>()) {
                out << "verify: hash mismatch on payload "
                    << entry.at("name").get<std::string>() << "\n";
                return kVerifyMismatch;
            }
        }

        auto load = [&](const std::string& name) {
            return bundle::load_payload(dir, manifest, name);
        };
        auto load_series = [&](const std::string& prefix) {
            std::vector<Matrix> out_v;
            for (std::size_t i = 1; bundle::has_payload(manifest, prefix + std::to_string(i)); ++i)
                out_v.push_back(load(prefix + std::to_string(i)));
            return out_v;
        };

        const std::string command = manifest.at("command").get<std::string>();
        const nlohmann::json& stored = manifest.at("certificates");
        nlohmann::json recomputed;

        if (command == "factor-nilpotent") {
            recomputed = nil_two_certs(load("input"), load("m"), load("n"),
                                       manifest["parameters"]["pad_amount"].get<Index>());
        } else if (command == "factor-qn") {
            qn::RefinedPieces pieces;
            pieces.base = manifest["parameters"]["base"].get<double>();
            pieces.c = load("c");
            pieces.a = load_series("a_");
            pieces.k = load_series("k_");
            pieces.d = load_series("d_");
            pieces.l = load_series("l_");
            qn::QNOptions qopts;
            qopts.base = pieces.base;
            recomputed = qn_certs(pieces, manifest["parameters"]["window"].get<int>(), qopts);
            if (stored.contains("conjugation")) {
                Matrix cf_c = load("cf_c");
                recomputed["conjugation"] = conjugation_certs(
                    load("input"), load("v"), load("v_inv"), load("cf_a"), load("cf_k"), cf_c,
                    load("cf_d"), load("cf_l"), load("cf_a").rows(), load("cf_l").rows());
            }
        } else if (command == "common-factor") {
            const std::string mode = manifest["parameters"]["mode"].get<std::string>();
            if (mode == "compact-right" || mode == "compact-left" ||
                mode == "compact-two-sided") {
                std::vector<Matrix> ks = load_series("k_");
                std::vector<Matrix> ls = load_series("l_");
                Matrix q_left, q_right;
                if (mode == "compact-right")
                    q_right = load("q");
                else if (mode == "compact-left")
                    q_left = load("q");
                else {
                    q_left = load("q1");
                    q_right = load("q2");
                }
                recomputed = compact_certs(mode, ks, ls, q_left, q_right,
                                           manifest["parameters"]["power_n_max"].get<int>());
            } else if (mode == "general") {
                std::vector<Matrix> ts = load_series("t_");
                std::vector<Matrix> ms = load_series("m_");
                std::vector<Matrix> hs = load_series("h_");
                std::vector<Matrix> as = load_series("a_");
                std::vector<Matrix> cs = load_series("c_");
                std::vector<Matrix> ds = load_series("d_");
                recomputed = general_certs(
                    ts, load("v"), load("v_inv"), load("q"), load("r"), ms, hs, as, cs, ds,
                    stored["pad_amount"].get<Index>(), stored["part_dim"].get<Index>(),
                    manifest["parameters"]["power_n_max"].get<int>(),
                    static_cast<int>(stored["stacked_trailing_sigmas"].size()));
            } else {
                std::vector<Matrix> ts = load_series("t_");
                std::vector<Matrix> ss = load_series("s_");
                Matrix left, right;
                if (mode == "nilpotent-sandwich") {
                    left = load("nfac");
                    right = left;
                } else {
                    left = load("n1");
                    right = load("n2");
                }
                recomputed = nil_family_certs(mode, ts, left, right, ss,
                                              manifest["parameters"]["pad_amount"].get<Index>());
            }
        } else {
            throw ParseError("verify: unknown command in manifest: " + command);
        }

        const std::string where = bundle::first_divergence(stored, recomputed);
        if (!where.empty()) {
            out << "verify: certificate mismatch at " << where << "\n";
            return kVerifyMismatch;
        }
        out << "verify: ok\n";
        return kOk;
    });
}

} // namespace cmd
} // namespace opfactor
