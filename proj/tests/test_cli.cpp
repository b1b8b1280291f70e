#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>
#include <string>
#include <vector>

#include "test_support.hpp"

using nlohmann::json;
using testkit::fixture;
using testkit::read_file;
using testkit::run_cli;
using testkit::RunResult;

namespace {

json parse(const RunResult& r) {
    INFO("stdout: " << r.out);
    INFO("stderr: " << r.err);
    return json::parse(r.out);
}

} // namespace

TEST_CASE("decide maps every fixture to its frozen outcome and exit code") {
    struct Expect {
        const char* file;
        int exit_code;
        const char* outcome;
        const char* rule;
    };
    const std::vector<Expect> table = {
        {"rank1_preserving.json", 0, "Preserves", "Rank1"},
        {"rank1_refuting.json", 1, "NotPreserving", "Rank1"},
        {"rank2_preserving.json", 0, "Preserves", "Rank2"},
        {"rank2_refuting.json", 1, "NotPreserving", "Rank2"},
        {"extremal_vs_rank2.json", 0, "Preserves", "Rank2"},
        {"tidentity_refuted.json", 1, "NotPreserving", "TIdentityFails"},
        {"zero_map.json", 1, "NotPreserving", "TIdentityFails"},
        {"identity_map.json", 2, "Inconclusive", "Exhausted"},
        {"falsifier_found.json", 1, "NotPreserving", "FalsifierFound"},
    };
    for (const Expect& e : table) {
        INFO(e.file);
        const RunResult r = run_cli({"decide", "--input", fixture(e.file)});
        REQUIRE(r.exit_code == e.exit_code);
        const json rep = parse(r);
        CHECK(rep.at("tool") == "pdpkit");
        CHECK(rep.at("command") == "decide");
        CHECK(rep.at("outcome") == e.outcome);
        CHECK(rep.at("rule") == e.rule);
        CHECK(rep.contains("certificate"));
        CHECK(rep.contains("canonical_form"));
        if (std::string(e.outcome) == "NotPreserving")
            CHECK(rep.contains("counterexample"));
        else
            CHECK_FALSE(rep.contains("counterexample"));
    }
}

TEST_CASE("decide output is byte-identical across reruns") {
    const RunResult a = run_cli({"decide", "-i", fixture("falsifier_found.json")});
    const RunResult b = run_cli({"decide", "-i", fixture("falsifier_found.json")});
    REQUIRE(a.exit_code == 1);
    CHECK(a.out == b.out);

    const RunResult c = run_cli({"decide", "-i", fixture("rank2_preserving.json")});
    const RunResult d = run_cli({"decide", "-i", fixture("rank2_preserving.json")});
    CHECK(c.out == d.out);
}

TEST_CASE("verify closes the loop on decide reports") {
    const RunResult dec = run_cli({"decide", "-i", fixture("rank2_refuting.json")});
    REQUIRE(dec.exit_code == 1);

    // report on stdin, problem by path
    const RunResult ver =
        run_cli({"verify", "--report", "-", "--input", fixture("rank2_refuting.json")},
                dec.out);
    REQUIRE(ver.exit_code == 0);
    const json vr = parse(ver);
    CHECK(vr.at("all_passed") == true);
    REQUIRE(vr.at("checks").is_array());
    for (const json& c : vr.at("checks")) {
        INFO(c.dump());
        CHECK(c.at("pass") == true);
    }
}

TEST_CASE("verify also works without the original problem") {
    const RunResult dec = run_cli({"decide", "-i", fixture("rank1_preserving.json")});
    REQUIRE(dec.exit_code == 0);
    const RunResult ver = run_cli({"verify", "-r", "-"}, dec.out);
    REQUIRE(ver.exit_code == 0);
    const json vr = parse(ver);
    CHECK(vr.at("all_passed") == true);
    // the problem agreement check only runs when the problem is supplied
    bool saw_agreement = false;
    for (const json& c : vr.at("checks"))
        if (c.at("name") == "problem_agreement") saw_agreement = true;
    CHECK_FALSE(saw_agreement);
}

TEST_CASE("verify rejects a tampered outcome") {
    const RunResult dec = run_cli({"decide", "-i", fixture("rank1_refuting.json")});
    REQUIRE(dec.exit_code == 1);

    json rep = json::parse(dec.out);
    rep["outcome"] = "Preserves";
    rep.erase("counterexample");
    const RunResult ver = run_cli({"verify", "-r", "-"}, rep.dump());
    REQUIRE(ver.exit_code == 1);
    const json vr = parse(ver);
    CHECK(vr.at("all_passed") == false);
}

TEST_CASE("verify rejects a tampered counterexample") {
    const RunResult dec = run_cli({"decide", "-i", fixture("rank1_refuting.json")});
    REQUIRE(dec.exit_code == 1);
    json rep = json::parse(dec.out);
    // push the witness far into PD-image territory
    rep["counterexample"][0][0] = 1e6;
    const RunResult ver = run_cli({"verify", "-r", "-"}, rep.dump());
    REQUIRE(ver.exit_code == 1);
}

TEST_CASE("verify rejects a mismatched problem") {
    const RunResult dec = run_cli({"decide", "-i", fixture("rank1_preserving.json")});
    REQUIRE(dec.exit_code == 0);
    const RunResult ver =
        run_cli({"verify", "-r", "-", "-i", fixture("rank2_preserving.json")}, dec.out);
    REQUIRE(ver.exit_code == 1);
    const json vr = parse(ver);
    bool agreement_failed = false;
    for (const json& c : vr.at("checks"))
        if (c.at("name") == "problem_agreement" && c.at("pass") == false)
            agreement_failed = true;
    CHECK(agreement_failed);
}

TEST_CASE("canonical extracts the trace form") {
    const RunResult r = run_cli({"canonical", "-i", fixture("rank2_preserving.json")});
    REQUIRE(r.exit_code == 0);
    const json rep = parse(r);
    CHECK(rep.at("command") == "canonical");
    CHECK(rep.at("canonical_form").at("r") == 2);
    CHECK(rep.at("canonical_form").at("basis_is_pd") == true);

    const RunResult bad = run_cli({"canonical", "-i", fixture("tidentity_refuted.json")});
    REQUIRE(bad.exit_code == 1);
    const json brep = parse(bad);
    CHECK(brep.at("zero_map") == false);
    CHECK(brep.at("image_has_no_pd_element").at("class") == "Indefinite");

    const RunResult zero = run_cli({"canonical", "-i", fixture("zero_map.json")});
    REQUIRE(zero.exit_code == 1);
    CHECK(parse(zero).at("zero_map") == true);
}

TEST_CASE("diagonalize handles pairs and families") {
    const RunResult pr = run_cli({"diagonalize", "-i", fixture("pair.json")});
    REQUIRE(pr.exit_code == 0);
    const json prep = parse(pr);
    const double root = 1.0 / std::sqrt(3.0);
    CHECK(prep.at("mu")[0].get<double>() == Catch::Approx(-root).margin(1e-12));
    CHECK(prep.at("mu")[1].get<double>() == Catch::Approx(root).margin(1e-12));
    CHECK(prep.at("residuals").at("left_identity").get<double>() <= 1e-10);
    CHECK(prep.at("residuals").at("right_offdiagonal").get<double>() <= 1e-10);

    const RunResult fam = run_cli({"diagonalize", "-i", fixture("family_commuting.json")});
    REQUIRE(fam.exit_code == 0);
    const json frep = parse(fam);
    CHECK(frep.at("diagonalizable") == true);
    CHECK(frep.at("residuals").at("max_offdiagonal").get<double>() <= 1e-10);

    const RunResult bad = run_cli({"diagonalize", "-i", fixture("family_noncommuting.json")});
    REQUIRE(bad.exit_code == 0); // a definite negative answer is still an answer
    const json brep = parse(bad);
    CHECK(brep.at("diagonalizable") == false);
    CHECK(brep.at("first") == 1);
    CHECK(brep.at("second") == 2);
    CHECK(brep.at("commutator_norm").get<double>() > 0.0);
}

TEST_CASE("falsify reports violations and their method") {
    const RunResult hit = run_cli({"falsify", "-i", fixture("falsifier_found.json")});
    REQUIRE(hit.exit_code == 1);
    const json hrep = parse(hit);
    CHECK(hrep.at("found") == true);
    CHECK(hrep.at("method") == "falsifier");
    CHECK(hrep.contains("counterexample"));

    const RunResult tid = run_cli({"falsify", "-i", fixture("tidentity_refuted.json")});
    REQUIRE(tid.exit_code == 1);
    CHECK(parse(tid).at("method") == "t_identity");

    const RunResult zero = run_cli({"falsify", "-i", fixture("zero_map.json")});
    REQUIRE(zero.exit_code == 1);
    CHECK(parse(zero).at("method") == "zero_map");

    const RunResult none = run_cli({"falsify", "-i", fixture("rank1_preserving.json")});
    REQUIRE(none.exit_code == 2);
    CHECK(parse(none).at("found") == false);
}

TEST_CASE("problems are accepted on stdin") {
    const std::string problem = read_file(fixture("rank1_preserving.json"));
    REQUIRE_FALSE(problem.empty());
    const RunResult r = run_cli({"decide", "-i", "-"}, problem);
    REQUIRE(r.exit_code == 0);
    CHECK(parse(r).at("outcome") == "Preserves");
}

TEST_CASE("bad input exits with the usage code") {
    CHECK(run_cli({"decide"}).exit_code == 64);                       // no input
    CHECK(run_cli({"decide", "-i", "/nonexistent.json"}).exit_code == 64);
    CHECK(run_cli({"decide", "-i", "-"}, "{").exit_code == 64);       // truncated JSON
    CHECK(run_cli({"decide", "-i", "-"}, "[]").exit_code == 64);      // wrong top-level type
    CHECK(run_cli({}).exit_code == 64);                               // no subcommand
    CHECK(run_cli({"frobnicate"}).exit_code == 64);                   // unknown subcommand
    CHECK(run_cli({"decide", "--bogus"}).exit_code == 64);            // unknown flag

    const std::string unknown = R"({"n": 2, "map": [[1,0,0],[0,1,0],[0,0,1]],
                                    "unknown_key": 1})";
    CHECK(run_cli({"decide", "-i", "-"}, unknown).exit_code == 64);   // unknown problem key

    const std::string asym_mat =
        R"({"n": 2, "canonical": {"U": [[[1,0.5],[0,1]]], "B": [[[1,0],[0,1]]]}})";
    CHECK(run_cli({"decide", "-i", "-"}, asym_mat).exit_code == 64);  // asymmetric beyond 1e-8

    CHECK(run_cli({"decide", "--tol", "-1", "-i", fixture("rank1_preserving.json")}).exit_code ==
          64);
    CHECK(run_cli({"falsify", "--trials", "0", "-i", fixture("rank1_preserving.json")})
              .exit_code == 64);
    CHECK(run_cli({"decide", "--format", "yaml", "-i", fixture("rank1_preserving.json")})
              .exit_code == 64);
    CHECK(run_cli({"verify", "-r", "/nonexistent.json"}).exit_code == 64);
}

TEST_CASE("mild asymmetry is symmetrized with a warning") {
    const std::string problem =
        R"({"n": 2, "canonical": {"U": [[[1, 1e-10], [0, 1]]], "B": [[[1, 0], [0, 1]]]}})";
    const RunResult r = run_cli({"decide", "-i", "-"}, problem);
    REQUIRE(r.exit_code == 0);
    CHECK(r.err.find("symmetrized") != std::string::npos);
}

TEST_CASE("tolerance resolution prefers the flag over the environment") {
    const RunResult env =
        run_cli({"decide", "-i", fixture("rank1_preserving.json")}, "", "PDPKIT_TOL=1e-5 ");
    REQUIRE(env.exit_code == 0);
    CHECK(parse(env).at("tol").get<double>() == 1e-5);

    const RunResult flag = run_cli({"decide", "--tol", "1e-7", "-i",
                                    fixture("rank1_preserving.json")},
                                   "", "PDPKIT_TOL=1e-5 ");
    REQUIRE(flag.exit_code == 0);
    CHECK(parse(flag).at("tol").get<double>() == 1e-7);

    const RunResult junk =
        run_cli({"decide", "-i", fixture("rank1_preserving.json")}, "", "PDPKIT_TOL=banana ");
    CHECK(junk.exit_code == 64);
}

TEST_CASE("the seed flag changes the run configuration") {
    const RunResult r = run_cli(
        {"decide", "--seed", "9", "-i", fixture("identity_map.json")});
    REQUIRE(r.exit_code == 2);
    CHECK(parse(r).at("config").at("seed").get<std::uint64_t>() == 9);
}

TEST_CASE("text format renders a human summary") {
    const RunResult r =
        run_cli({"decide", "--format", "text", "-i", fixture("rank1_preserving.json")});
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("outcome: Preserves") != std::string::npos);
    CHECK(r.out.find("rule: Rank1") != std::string::npos);
}

TEST_CASE("version and help exit cleanly") {
    CHECK(run_cli({"--version"}).exit_code == 0);
    CHECK(run_cli({"--help"}).exit_code == 0);
    CHECK(run_cli({"decide", "--help"}).exit_code == 0);
}
