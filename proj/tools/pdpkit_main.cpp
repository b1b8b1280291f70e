#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "pdpkit/cli.hpp"

namespace {

constexpr int kExitInput = 64;
constexpr int kExitInternal = 70;

std::string read_all(const std::string& path) {
    if (path == "-") {
        std::ostringstream ss;
        ss << std::cin.rdbuf();
        return ss.str();
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw pdpkit::cli::InputError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Per-subcommand argument bag. tol and seed go through has_* flags so that
// "not given" is distinguishable from any explicit value.
struct Args {
    std::string input;
    std::string report;
    double tol = 0.0;
    CLI::Option* tol_opt = nullptr;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    pdpkit::cli::Options opts;

    pdpkit::cli::Options resolved() const {
        pdpkit::cli::Options o = opts;
        if (tol_opt != nullptr && tol_opt->count() > 0) o.tol = tol;
        if (seed_opt != nullptr && seed_opt->count() > 0) o.seed = seed;
        return o;
    }
};

void add_common_options(CLI::App* cmd, Args& a, bool with_search) {
    cmd->add_option("-i,--input", a.input, "problem file (JSON), or - for stdin");
    a.tol_opt = cmd->add_option("--tol", a.tol,
                                "classification tolerance (overrides file and PDPKIT_TOL)");
    a.seed_opt = cmd->add_option("--seed", a.seed, "random seed (overrides the problem file)");
    cmd->add_option("--format", a.opts.format, "output format: json or text")
        ->capture_default_str();
    cmd->add_flag("--timings", a.opts.timings, "include wall-clock timings in the report");
    if (with_search) {
        cmd->add_option("--restarts", a.opts.restarts, "falsifier restarts")
            ->capture_default_str();
        cmd->add_option("--max-iters", a.opts.max_iters, "falsifier iterations per restart")
            ->capture_default_str();
        cmd->add_option("--trials", a.opts.trials, "sampling trials after the falsifier")
            ->capture_default_str();
        cmd->add_option("--rank-cap", a.opts.extremal_rank_cap,
                        "largest rank enumerated by the extremal battery")
            ->capture_default_str();
    }
}

const std::string& require_input(const Args& a, const char* who) {
    if (a.input.empty())
        throw pdpkit::cli::InputError(std::string(who) +
                                      ": --input is required (use - for stdin)");
    return a.input;
}

constexpr const char* kFormatDoc = R"(Problem files are JSON objects:
  n          dimension of the symmetric matrices (required)
  map        N x N matrix acting on svec coordinates, N = n(n+1)/2
  canonical  {"U": [..], "B": [..]}, lists of n x n symmetric matrices
  pair       {"A": .., "B": ..}, for diagonalize
  family     [..], n x n symmetric matrices, for diagonalize
  tol, seed  optional defaults for --tol and --seed

svec packs the upper triangle row by row: (1,1),(1,2),...,(1,n),(2,2),...,(n,n),
with off-diagonal entries scaled by sqrt(2) so the packing preserves trace inner
products. Matrices must be symmetric within 1e-8; smaller deviations are
symmetrized with a warning on stderr.

Exit codes: 0 preserves / checks passed, 1 not preserving / counterexample
found / checks failed, 2 inconclusive / nothing found, 64 bad input or usage,
70 internal error.)";

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pdpkit: decides whether a linear map on real symmetric matrices preserves "
                 "positive definiteness"};
    app.set_version_flag("--version", std::string("pdpkit ") + pdpkit::cli::kVersion);
    app.require_subcommand(1);
    app.footer(kFormatDoc);

    Args decide_args, canonical_args, diagonalize_args, falsify_args, verify_args;

    CLI::App* decide_cmd = app.add_subcommand(
        "decide", "run the full decision pipeline and emit a certificate");
    add_common_options(decide_cmd, decide_args, true);

    CLI::App* canonical_cmd = app.add_subcommand(
        "canonical", "extract the trace form and re-base it over a PD image basis");
    add_common_options(canonical_cmd, canonical_args, false);

    CLI::App* diagonalize_cmd = app.add_subcommand(
        "diagonalize", "simultaneous congruence diagonalization of a pair or family");
    add_common_options(diagonalize_cmd, diagonalize_args, false);

    CLI::App* falsify_cmd = app.add_subcommand(
        "falsify", "search for a PD matrix whose image is not PD");
    add_common_options(falsify_cmd, falsify_args, true);

    CLI::App* verify_cmd = app.add_subcommand(
        "verify", "re-check a report against its own claims and, optionally, the problem");
    add_common_options(verify_cmd, verify_args, false);
    verify_cmd->add_option("-r,--report", verify_args.report,
                           "report file produced by decide, or - for stdin");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        pdpkit::cli::CommandResult res;
        if (decide_cmd->parsed()) {
            const pdpkit::cli::ProblemFile pf =
                pdpkit::cli::load_problem(read_all(require_input(decide_args, "decide")));
            res = pdpkit::cli::cmd_decide(pf, decide_args.resolved());
        } else if (canonical_cmd->parsed()) {
            const pdpkit::cli::ProblemFile pf =
                pdpkit::cli::load_problem(read_all(require_input(canonical_args, "canonical")));
            res = pdpkit::cli::cmd_canonical(pf, canonical_args.resolved());
        } else if (diagonalize_cmd->parsed()) {
            const pdpkit::cli::ProblemFile pf = pdpkit::cli::load_problem(
                read_all(require_input(diagonalize_args, "diagonalize")));
            res = pdpkit::cli::cmd_diagonalize(pf, diagonalize_args.resolved());
        } else if (falsify_cmd->parsed()) {
            const pdpkit::cli::ProblemFile pf =
                pdpkit::cli::load_problem(read_all(require_input(falsify_args, "falsify")));
            res = pdpkit::cli::cmd_falsify(pf, falsify_args.resolved());
        } else {
            if (verify_args.report.empty())
                throw pdpkit::cli::InputError("verify: --report is required");
            const std::string report_text = read_all(verify_args.report);
            std::optional<pdpkit::cli::ProblemFile> pf;
            if (!verify_args.input.empty())
                pf = pdpkit::cli::load_problem(read_all(verify_args.input));
            res = pdpkit::cli::cmd_verify(report_text, pf ? &*pf : nullptr,
                                          verify_args.resolved());
        }
        for (const std::string& diag : res.diagnostics) std::cerr << diag << '\n';
        std::cout << res.output;
        return res.exit_code;
    } catch (const pdpkit::cli::InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}
