// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <Eigen/Core>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "opfactor/commands.hpp"

namespace {

void cap_threads() {
    int threads = 1;
    if (const char* env = std::getenv("OPFACTOR_MAX_THREADS")) {
        try {
            threads = std::max(1, std::stoi(env));
        } catch (...) {
            threads = 1;
        }
    }
    Eigen::setNbThreads(threads);
}

} // namespace

int main(int argc, char** argv) {
    cap_threads();

    CLI::App app{"opfactor: a factorization workbench for products of (quasi-)nilpotent "
                 "operators at truncation scale"};
    app.require_subcommand(1);

    // factor-nilpotent
    std::string fn_input, fn_out = "bundle";
    bool fn_no_pad = false;
    long fn_max_pad = 1 << 20;
    auto* fn = app.add_subcommand("factor-nilpotent", "factor T = M N with M^3 = N^3 = 0");
    fn->add_option("input", fn_input, "Matrix Market input")->required();
    fn->add_option("-o,--out", fn_out, "bundle directory");
    fn->add_flag("--no-pad", fn_no_pad, "disable zero padding");
    fn->add_option("--max-pad", fn_max_pad, "padding budget");

    // factor-qn
    std::string fq_input, fq_out = "bundle";
    int fq_window = 6, fq_pieces = 6, fq_k = 6;
    double fq_base = 4.0;
    auto* fq = app.add_subcommand("factor-qn",
                                  "factor T = Q1 Q2 with quasi-nilpotent block factors");
    fq->add_option("input", fq_input, "Matrix Market operator or canonical-pieces JSON")
        ->required();
    fq->add_option("-o,--out", fq_out, "bundle directory");
    fq->add_option("--window", fq_window, "verification window (block radius)");
    fq->add_option("--base", fq_base, "decay base of the compact splitting");
    fq->add_option("--pieces", fq_pieces, "pieces per side");
    fq->add_option("--almost-null", fq_k, "almost-null pairs for the decomposition");

    // common-factor
    std::vector<std::string> cf_inputs;
    std::string cf_out = "bundle", cf_mode = "compact-right";
    int cf_nmax = 30, cf_k = 3, cf_diag = 4;
    auto* cf = app.add_subcommand("common-factor", "common factors for a family of operators");
    cf->add_option("inputs", cf_inputs, "Matrix Market inputs")->required();
    cf->add_option("-o,--out", cf_out, "bundle directory");
    cf->add_option("--mode", cf_mode,
                   "compact-right | compact-left | compact-two-sided | general | "
                   "nilpotent-sandwich | nilpotent-two-sided");
    cf->add_option("--power-nmax", cf_nmax, "power norms computed up to this exponent");
    cf->add_option("--almost-null", cf_k, "almost-null pairs (general mode)");
    cf->add_option("--diagnostic-count", cf_diag, "trailing singular values recorded (general)");

    // verify
    std::string v_dir;
    auto* vf = app.add_subcommand("verify", "recompute and check a bundle");
    vf->add_option("bundle", v_dir, "bundle directory")->required();

    // generate
    std::string g_kind, g_out = "out.mtx";
    long g_n = 16, g_kernel = 1, g_block = 8;
    int g_pieces = 6;
    double g_decay = 0.5;
    unsigned long long g_seed = 0;
    auto* gn = app.add_subcommand("generate", "write a test-family operator");
    gn->add_option("--family", g_kind,
                   "volterra | weighted-shift | diagonal | random-compact | random-singular | "
                   "random-unitary | canonical-form-synthetic")
        ->required();
    gn->add_option("-o,--out", g_out, "output file");
    gn->add_option("-n,--dim", g_n, "dimension");
    gn->add_option("--decay", g_decay, "decay rate in (0,1)");
    gn->add_option("--seed", g_seed, "random seed");
    gn->add_option("--kernel-dim", g_kernel, "kernel dimension (random-singular)");
    gn->add_option("--block-dim", g_block, "block dimension (canonical-form-synthetic)");
    gn->add_option("--pieces", g_pieces, "pieces per side (canonical-form-synthetic)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : opfactor::cmd::kParse;
    }

    using namespace opfactor;
    if (fn->parsed()) {
        cmd::FactorNilpotentOptions opts;
        opts.allow_padding = !fn_no_pad;
        opts.max_pad = fn_max_pad;
        return cmd::factor_nilpotent(fn_input, fn_out, opts, std::cerr);
    }
    if (fq->parsed()) {
        cmd::FactorQnOptions opts;
        opts.window = fq_window;
        opts.base = fq_base;
        opts.max_pieces = fq_pieces;
        opts.almost_null_count = fq_k;
        return cmd::factor_qn(fq_input, fq_out, opts, std::cerr);
    }
    if (cf->parsed()) {
        cmd::CommonFactorOptions opts;
        opts.mode = cf_mode;
        opts.power_n_max = cf_nmax;
        opts.almost_null_count = cf_k;
        opts.diagnostic_count = cf_diag;
        std::vector<std::filesystem::path> paths(cf_inputs.begin(), cf_inputs.end());
        return cmd::common_factor(paths, cf_out, opts, std::cerr);
    }
    if (vf->parsed())
        return cmd::verify(v_dir, std::cout, std::cerr);
    if (gn->parsed()) {
        fam::FamilyDescriptor d;
        d.kind = g_kind;
        d.n = g_n;
        d.decay = g_decay;
        d.seed = g_seed;
        d.kernel_dim = g_kernel;
        d.block_dim = g_block;
        d.pieces = g_pieces;
        return cmd::generate(d, g_out, std::cerr);
    }
    return cmd::kParse;
}
