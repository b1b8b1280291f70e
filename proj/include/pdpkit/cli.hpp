#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pdpkit/decide.hpp"

namespace pdpkit::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Bad problem files, bad reports, bad flag values. Maps to exit code 64.
struct InputError : Error {
    using Error::Error;
};

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Deterministic JSON output
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    if (!std::isfinite(v)) return "null";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void append_escaped(const std::string& s, std::string& out) {
    out += '"';
    for (const char ch : s) {
        const auto u = static_cast<unsigned char>(ch);
        switch (ch) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (u < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", u);
                    out += buf;
                } else {
                    out += ch;
                }
        }
    }
    out += '"';
}

/// Serializes with caller-fixed field order and 17 significant digits for
/// every float, so identical runs produce byte-identical reports.
inline void dump_deterministic(const Json& v, std::string& out) {
    switch (v.type()) {
        case Json::value_t::object: {
            out += '{';
            bool first = true;
            for (auto it = v.begin(); it != v.end(); ++it) {
                if (!first) out += ',';
                first = false;
                append_escaped(it.key(), out);
                out += ':';
                dump_deterministic(it.value(), out);
            }
            out += '}';
            break;
        }
        case Json::value_t::array: {
            out += '[';
            bool first = true;
            for (const Json& item : v) {
                if (!first) out += ',';
                first = false;
                dump_deterministic(item, out);
            }
            out += ']';
            break;
        }
        case Json::value_t::string:
            append_escaped(v.get_ref<const std::string&>(), out);
            break;
        case Json::value_t::boolean:
            out += v.get<bool>() ? "true" : "false";
            break;
        case Json::value_t::number_integer:
            out += std::to_string(v.get<long long>());
            break;
        case Json::value_t::number_unsigned:
            out += std::to_string(v.get<unsigned long long>());
            break;
        case Json::value_t::number_float:
            out += format_double(v.get<double>());
            break;
        default:
            out += "null";
            break;
    }
}

inline std::string dump_report(const Json& v) {
    std::string out;
    dump_deterministic(v, out);
    out += '\n';
    return out;
}

// ---------------------------------------------------------------------------
// JSON building blocks
// ---------------------------------------------------------------------------

inline Json matrix_json(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Json vector_json(const Eigen::VectorXd& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Json psd_class_json(const PsdClass& cls) {
    Json j = Json::object();
    j["class"] = to_string(cls.kind);
    j["min_eigenvalue"] = cls.min_eigenvalue;
    j["max_eigenvalue"] = cls.max_eigenvalue;
    return j;
}

inline Json witness_json(const Witness& w) {
    Json j = Json::object();
    j["label"] = w.label;
    j["class"] = to_string(w.cls.kind);
    j["min_eigenvalue"] = w.cls.min_eigenvalue;
    j["max_eigenvalue"] = w.cls.max_eigenvalue;
    j["matrix"] = matrix_json(w.matrix.mat());
    return j;
}

inline Json canonical_form_json(const CanonicalForm& cf) {
    Json j = Json::object();
    j["n"] = cf.n;
    j["r"] = cf.rank();
    j["basis_is_pd"] = cf.basis_is_pd;
    Json u = Json::array();
    Json b = Json::array();
    for (const SymMatrix& m : cf.U) u.push_back(matrix_json(m.mat()));
    for (const SymMatrix& m : cf.B) b.push_back(matrix_json(m.mat()));
    j["U"] = std::move(u);
    j["B"] = std::move(b);
    return j;
}

inline Json certificate_json(const Certificate& cert) {
    Json j = Json::object();
    j["rule"] = to_string(cert.rule);
    std::visit(
        [&](const auto& payload) {
            using P = std::decay_t<decltype(payload)>;
            if constexpr (std::is_same_v<P, Rank1Certificate>) {
                j["coefficient"] = witness_json(payload.coefficient);
                j["image_basis"] = witness_json(payload.image_basis);
            } else if constexpr (std::is_same_v<P, Rank2Certificate>) {
                j["mu_min"] = payload.mu_min;
                j["mu_max"] = payload.mu_max;
                j["g_min"] = witness_json(payload.g_min);
                j["g_max"] = witness_json(payload.g_max);
                j["failing"] = payload.failing;
            } else if constexpr (std::is_same_v<P, RankRCertificate>) {
                j["W"] = matrix_json(payload.W);
                j["lambda"] = matrix_json(payload.lambda);
                Json combos = Json::array();
                for (const Witness& w : payload.combos) combos.push_back(witness_json(w));
                j["combos"] = std::move(combos);
                j["failing"] = payload.failing;
            } else if constexpr (std::is_same_v<P, AllBkPsdCertificate>) {
                Json classes = Json::array();
                for (const PsdClass& c : payload.coefficient_classes)
                    classes.push_back(psd_class_json(c));
                j["coefficient_classes"] = std::move(classes);
                j["failing"] = payload.failing;
            } else if constexpr (std::is_same_v<P, ExtremalCertificate>) {
                j["lambda_min_u"] = vector_json(payload.lambda_min_u);
                j["lambda_max_u"] = vector_json(payload.lambda_max_u);
                Json pats = Json::array();
                for (const ExtremalPattern& p : payload.patterns) {
                    Json pj = Json::object();
                    pj["pattern"] = p.pattern;
                    pj["class"] = to_string(p.cls.kind);
                    pj["min_eigenvalue"] = p.cls.min_eigenvalue;
                    pj["max_eigenvalue"] = p.cls.max_eigenvalue;
                    pats.push_back(std::move(pj));
                }
                j["patterns"] = std::move(pats);
                j["failing"] = payload.failing;
            } else if constexpr (std::is_same_v<P, TIdentityCertificate>) {
                j["zero_map"] = payload.zero_map;
                j["t_identity"] = matrix_json(payload.t_identity.mat());
                j["class"] = to_string(payload.cls.kind);
                j["min_eigenvalue"] = payload.cls.min_eigenvalue;
                j["max_eigenvalue"] = payload.cls.max_eigenvalue;
            } else if constexpr (std::is_same_v<P, FalsifierCertificate>) {
                j["best_value"] = payload.best_value;
                j["iterations_used"] = payload.iterations_used;
                j["restarts_used"] = payload.restarts_used;
                j["image_class"] = psd_class_json(payload.image_class);
            } else if constexpr (std::is_same_v<P, ExhaustedCertificate>) {
                Json ff = Json::object();
                ff["first"] = payload.family_failure.first;
                ff["second"] = payload.family_failure.second;
                ff["commutator_norm"] = payload.family_failure.commutator_norm;
                j["family_failure"] = std::move(ff);
                j["all_bk_first_failing"] = payload.all_bk_first_failing;
                j["extremal_skipped_rank_cap"] = payload.extremal_skipped_rank_cap;
                if (payload.extremal_first_failing_pattern.empty())
                    j["extremal_first_failing_pattern"] = nullptr;
                else
                    j["extremal_first_failing_pattern"] = payload.extremal_first_failing_pattern;
                j["falsifier_best_value"] = payload.falsifier_best_value;
                j["falsifier_iterations_used"] = payload.falsifier_iterations_used;
                j["falsifier_restarts_used"] = payload.falsifier_restarts_used;
            }
        },
        cert.payload);
    return j;
}

// ---------------------------------------------------------------------------
// Problem files
// ---------------------------------------------------------------------------

inline constexpr double kSymmetryTol = 1e-8;
inline constexpr int kMaxDim = 100;

struct ProblemFile {
    int n = 0;
    std::optional<LinearMapOnSym> map;
    std::optional<CanonicalForm> canonical;
    std::optional<std::pair<SymMatrix, SymMatrix>> pair;
    std::optional<std::vector<SymMatrix>> family;
    std::optional<double> tol;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> warnings;
};

inline Eigen::MatrixXd parse_matrix(const Json& j, int rows, int cols, const std::string& what) {
    if (!j.is_array() || static_cast<int>(j.size()) != rows)
        throw InputError(what + ": expected " + std::to_string(rows) + " rows");
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        const Json& row = j[i];
        if (!row.is_array() || static_cast<int>(row.size()) != cols)
            throw InputError(what + ": row " + std::to_string(i) + " must have " +
                             std::to_string(cols) + " entries");
        for (int c = 0; c < cols; ++c) {
            const Json& cell = row[c];
            if (!cell.is_number())
                throw InputError(what + ": entry (" + std::to_string(i) + ", " +
                                 std::to_string(c) + ") is not a number");
            m(i, c) = cell.get<double>();
        }
    }
    return m;
}

/// Parses an n x n matrix required to be symmetric within 1e-8. Smaller
/// deviations are symmetrized with a warning; larger ones are rejected.
inline SymMatrix parse_symmetric(const Json& j, int n, const std::string& what,
                                 std::vector<std::string>* warnings) {
    Eigen::MatrixXd m = parse_matrix(j, n, n, what);
    double asym = 0.0;
    for (int i = 0; i < n; ++i)
        for (int c = i + 1; c < n; ++c) asym = std::max(asym, std::abs(m(i, c) - m(c, i)));
    if (asym > kSymmetryTol)
        throw InputError(what + ": matrix is asymmetric beyond 1e-8 (max deviation " +
                         format_double(asym) + ")");
    if (asym > 0.0 && warnings)
        warnings->push_back("warning: " + what + ": symmetrized entries deviating by up to " +
                            format_double(asym));
    return SymMatrix(std::move(m));
}

inline ProblemFile load_problem(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const std::exception& e) {
        throw InputError(std::string("problem file: ") + e.what());
    }
    if (!j.is_object()) throw InputError("problem file: top level must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        if (key != "n" && key != "map" && key != "canonical" && key != "pair" &&
            key != "family" && key != "tol" && key != "seed" && key != "description")
            throw InputError("problem file: unknown key '" + key + "'");
    }
    if (!j.contains("n") || !j["n"].is_number_integer())
        throw InputError("problem file: n must be a positive integer");
    const long long n_raw = j["n"].get<long long>();
    if (n_raw < 1 || n_raw > kMaxDim)
        throw InputError("problem file: n must be between 1 and " + std::to_string(kMaxDim));

    ProblemFile pf;
    pf.n = static_cast<int>(n_raw);
    const int nn = svec_size(pf.n);

    const int provided = static_cast<int>(j.contains("map")) +
                         static_cast<int>(j.contains("canonical")) +
                         static_cast<int>(j.contains("pair")) +
                         static_cast<int>(j.contains("family"));
    if (provided != 1)
        throw InputError("problem file: provide exactly one of map, canonical, pair, family");

    if (j.contains("map")) {
        pf.map.emplace(pf.n, parse_matrix(j["map"], nn, nn, "map"));
    } else if (j.contains("canonical")) {
        const Json& c = j["canonical"];
        if (!c.is_object()) throw InputError("canonical: must be an object");
        for (auto it = c.begin(); it != c.end(); ++it)
            if (it.key() != "U" && it.key() != "B" && it.key() != "basis_is_pd")
                throw InputError("canonical: unknown key '" + it.key() + "'");
        if (!c.contains("U") || !c.contains("B") || !c["U"].is_array() || !c["B"].is_array())
            throw InputError("canonical: U and B must be arrays of matrices");
        const int r = static_cast<int>(c["U"].size());
        if (r < 1 || static_cast<int>(c["B"].size()) != r)
            throw InputError("canonical: U and B must be nonempty and of equal length");
        if (r > nn)
            throw InputError("canonical: more terms than the dimension of the symmetric space");
        CanonicalForm cf;
        cf.n = pf.n;
        for (int k = 0; k < r; ++k) {
            cf.U.push_back(parse_symmetric(c["U"][k], pf.n, "canonical U[" + std::to_string(k) + "]",
                                           &pf.warnings));
            cf.B.push_back(parse_symmetric(c["B"][k], pf.n, "canonical B[" + std::to_string(k) + "]",
                                           &pf.warnings));
        }
        if (c.contains("basis_is_pd")) {
            if (!c["basis_is_pd"].is_boolean())
                throw InputError("canonical: basis_is_pd must be a boolean");
            cf.basis_is_pd = c["basis_is_pd"].get<bool>();
        }
        pf.canonical = std::move(cf);
    } else if (j.contains("pair")) {
        const Json& p = j["pair"];
        if (!p.is_object() || !p.contains("A") || !p.contains("B"))
            throw InputError("pair: must be an object with matrices A and B");
        for (auto it = p.begin(); it != p.end(); ++it)
            if (it.key() != "A" && it.key() != "B")
                throw InputError("pair: unknown key '" + it.key() + "'");
        SymMatrix a = parse_symmetric(p["A"], pf.n, "pair A", &pf.warnings);
        SymMatrix b = parse_symmetric(p["B"], pf.n, "pair B", &pf.warnings);
        pf.pair.emplace(std::move(a), std::move(b));
    } else {
        const Json& f = j["family"];
        if (!f.is_array() || f.empty()) throw InputError("family: must be a nonempty array");
        std::vector<SymMatrix> fam;
        for (std::size_t k = 0; k < f.size(); ++k)
            fam.push_back(parse_symmetric(f[k], pf.n, "family[" + std::to_string(k) + "]",
                                          &pf.warnings));
        pf.family = std::move(fam);
    }

    if (j.contains("tol")) {
        if (!j["tol"].is_number() || !(j["tol"].get<double>() > 0.0))
            throw InputError("problem file: tol must be a positive number");
        pf.tol = j["tol"].get<double>();
    }
    if (j.contains("seed")) {
        if (!j["seed"].is_number_integer() && !j["seed"].is_number_unsigned())
            throw InputError("problem file: seed must be a nonnegative integer");
        const long long s = j["seed"].get<long long>();
        if (s < 0) throw InputError("problem file: seed must be a nonnegative integer");
        pf.seed = static_cast<std::uint64_t>(s);
    }
    return pf;
}

// ---------------------------------------------------------------------------
// Options and resolution
// ---------------------------------------------------------------------------

struct Options {
    std::optional<double> tol;
    std::optional<std::uint64_t> seed;
    int restarts = 16;
    int max_iters = 500;
    long trials = 1000;
    int extremal_rank_cap = 20;
    std::string format = "json";
    bool timings = false;
};

inline std::optional<double> env_tol() {
    const char* s = std::getenv("PDPKIT_TOL");
    if (s == nullptr || *s == '\0') return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s, &end);
    if (end == s || *end != '\0' || !std::isfinite(v) || !(v > 0.0))
        throw InputError("PDPKIT_TOL must be a positive number");
    return v;
}

/// Tolerance precedence: --tol flag, then the problem file, then the
/// PDPKIT_TOL environment variable, then the built-in default.
inline double resolve_tol(const Options& opts, const ProblemFile& pf) {
    if (opts.tol) {
        if (!(*opts.tol > 0.0) || !std::isfinite(*opts.tol))
            throw InputError("--tol must be a positive number");
        return *opts.tol;
    }
    if (pf.tol) return *pf.tol;
    if (const std::optional<double> v = env_tol()) return *v;
    return kDefaultTol;
}

inline std::uint64_t resolve_seed(const Options& opts, const ProblemFile& pf) {
    if (opts.seed) return *opts.seed;
    if (pf.seed) return *pf.seed;
    return 0;
}

inline void check_common_options(const Options& opts) {
    if (opts.format != "json" && opts.format != "text")
        throw InputError("--format must be json or text");
    if (opts.restarts < 1) throw InputError("--restarts must be positive");
    if (opts.max_iters < 1) throw InputError("--max-iters must be positive");
    if (opts.trials < 1) throw InputError("--trials must be positive");
    if (opts.extremal_rank_cap < 1) throw InputError("--rank-cap must be positive");
}

struct CommandResult {
    int exit_code = 0;
    std::string output;
    std::vector<std::string> diagnostics;
};

namespace detail {

inline Json report_header(const char* command, int n) {
    Json j = Json::object();
    j["tool"] = "pdpkit";
    j["version"] = kVersion;
    j["command"] = command;
    j["n"] = n;
    return j;
}

inline void attach_timings(Json& rep, const Options& opts,
                           std::chrono::steady_clock::time_point t0) {
    if (!opts.timings) return;
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    Json t = Json::object();
    t["total_ms"] = ms;
    rep["timings"] = std::move(t);
}

inline std::string text_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string text_matrix(const Eigen::MatrixXd& m, const std::string& indent) {
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out += indent + "[";
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) out += ", ";
            out += text_double(m(i, j));
        }
        out += "]\n";
    }
    return out;
}

inline LinearMapOnSym problem_map(const ProblemFile& pf, const char* who) {
    if (pf.map) return *pf.map;
    if (pf.canonical) return assemble(*pf.canonical);
    throw InputError(std::string(who) + ": problem file must supply map or canonical");
}

} // namespace detail

// ---------------------------------------------------------------------------
// decide
// ---------------------------------------------------------------------------

inline CommandResult cmd_decide(const ProblemFile& pf, const Options& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    check_common_options(opts);
    const LinearMapOnSym t = detail::problem_map(pf, "decide");

    DecisionConfig cfg;
    cfg.tol = resolve_tol(opts, pf);
    cfg.extremal_rank_cap = opts.extremal_rank_cap;
    cfg.falsifier.restarts = opts.restarts;
    cfg.falsifier.max_iters = opts.max_iters;
    cfg.falsifier.seed = resolve_seed(opts, pf);

    CanonicalForm cf;
    const Verdict v = decide(t, cfg, &cf);

    Json rep = detail::report_header("decide", pf.n);
    rep["tol"] = cfg.tol;
    Json config = Json::object();
    config["seed"] = cfg.falsifier.seed;
    config["restarts"] = cfg.falsifier.restarts;
    config["max_iters"] = cfg.falsifier.max_iters;
    config["extremal_rank_cap"] = cfg.extremal_rank_cap;
    rep["config"] = std::move(config);
    rep["outcome"] = to_string(v.outcome);
    rep["rule"] = to_string(v.certificate.rule);
    rep["certificate"] = certificate_json(v.certificate);
    rep["canonical_form"] = canonical_form_json(cf);
    if (v.counterexample) rep["counterexample"] = matrix_json(v.counterexample->mat());
    detail::attach_timings(rep, opts, t0);

    CommandResult res;
    res.exit_code = v.outcome == Outcome::Preserves ? 0
                    : v.outcome == Outcome::NotPreserving ? 1
                                                          : 2;
    res.diagnostics = pf.warnings;
    if (opts.format == "text") {
        std::string out;
        out += std::string("outcome: ") + to_string(v.outcome) + "\n";
        out += std::string("rule: ") + to_string(v.certificate.rule) + "\n";
        out += "n: " + std::to_string(pf.n) + "\n";
        out += "r: " + std::to_string(cf.rank()) + "\n";
        out += "tol: " + detail::text_double(cfg.tol) + "\n";
        if (v.counterexample) {
            out += "counterexample:\n";
            out += detail::text_matrix(v.counterexample->mat(), "  ");
        }
        res.output = out;
    } else {
        res.output = dump_report(rep);
    }
    return res;
}

// ---------------------------------------------------------------------------
// canonical
// ---------------------------------------------------------------------------

inline CommandResult cmd_canonical(const ProblemFile& pf, const Options& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    check_common_options(opts);
    const LinearMapOnSym t = detail::problem_map(pf, "canonical");
    const double tol = resolve_tol(opts, pf);

    Json rep = detail::report_header("canonical", pf.n);
    rep["tol"] = tol;

    CommandResult res;
    res.diagnostics = pf.warnings;
    const CanonicalForm raw = extract(t, tol);
    std::string text;
    if (raw.is_zero_map()) {
        rep["zero_map"] = true;
        rep["canonical_form"] = canonical_form_json(raw);
        res.exit_code = 1;
        text = "zero map: no positive definite image basis exists\n";
    } else {
        RebaseResult rb = rebase_pd(raw, tol);
        if (const auto* refuted = std::get_if<ImageHasNoPdElement>(&rb)) {
            rep["zero_map"] = false;
            Json info = Json::object();
            info["t_identity"] = matrix_json(refuted->t_identity.mat());
            info["class"] = to_string(refuted->cls.kind);
            info["min_eigenvalue"] = refuted->cls.min_eigenvalue;
            info["max_eigenvalue"] = refuted->cls.max_eigenvalue;
            rep["image_has_no_pd_element"] = std::move(info);
            res.exit_code = 1;
            text = std::string("image of the identity is ") + to_string(refuted->cls.kind) +
                   ": no positive definite image basis exists\n";
        } else {
            const CanonicalForm& cf = std::get<CanonicalForm>(rb);
            rep["zero_map"] = false;
            rep["canonical_form"] = canonical_form_json(cf);
            res.exit_code = 0;
            text = "r: " + std::to_string(cf.rank()) + "\n";
            for (int k = 0; k < cf.rank(); ++k) {
                text += "U[" + std::to_string(k) + "]:\n" +
                        detail::text_matrix(cf.U[k].mat(), "  ");
                text += "B[" + std::to_string(k) + "]:\n" +
                        detail::text_matrix(cf.B[k].mat(), "  ");
            }
        }
    }
    detail::attach_timings(rep, opts, t0);
    res.output = opts.format == "text" ? text : dump_report(rep);
    return res;
}

// ---------------------------------------------------------------------------
// diagonalize
// ---------------------------------------------------------------------------

inline CommandResult cmd_diagonalize(const ProblemFile& pf, const Options& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    check_common_options(opts);
    const double tol = resolve_tol(opts, pf);

    Json rep = detail::report_header("diagonalize", pf.n);
    rep["tol"] = tol;
    CommandResult res;
    res.diagnostics = pf.warnings;
    std::string text;

    if (pf.pair) {
        CongruencePair cp;
        try {
            cp = diagonalize_pair(pf.pair->first, pf.pair->second, tol);
        } catch (const NotPositiveDefinite& e) {
            throw InputError(std::string("diagonalize: ") + e.what());
        }
        rep["mode"] = "pair";
        rep["mu"] = vector_json(cp.mu);
        rep["W"] = matrix_json(cp.W);
        const Eigen::MatrixXd wa =
            cp.W * pf.pair->first.mat() * cp.W.transpose() -
            Eigen::MatrixXd::Identity(pf.n, pf.n);
        Eigen::MatrixXd wb = cp.W * pf.pair->second.mat() * cp.W.transpose();
        wb.diagonal().setZero();
        Json resid = Json::object();
        resid["left_identity"] = wa.norm();
        resid["right_offdiagonal"] = wb.norm();
        rep["residuals"] = std::move(resid);
        text = "mu:";
        for (Eigen::Index i = 0; i < cp.mu.size(); ++i)
            text += " " + detail::text_double(cp.mu(i));
        text += "\nW:\n" + detail::text_matrix(cp.W, "  ");
    } else {
        std::vector<SymMatrix> family;
        if (pf.family)
            family = *pf.family;
        else if (pf.canonical)
            family = pf.canonical->U;
        else
            throw InputError("diagonalize: problem file must supply pair, family, or canonical");
        FamilyDiagonalization fd;
        try {
            fd = diagonalize_family(family, tol);
        } catch (const NotPositiveDefinite& e) {
            throw InputError(std::string("diagonalize: ") + e.what());
        }
        rep["mode"] = "family";
        if (const auto* bad = std::get_if<NotSimultaneouslyDiagonalizable>(&fd)) {
            rep["diagonalizable"] = false;
            rep["first"] = bad->first;
            rep["second"] = bad->second;
            rep["commutator_norm"] = bad->commutator_norm;
            text = "not simultaneously diagonalizable: members " + std::to_string(bad->first) +
                   " and " + std::to_string(bad->second) +
                   " (commutator norm " + detail::text_double(bad->commutator_norm) + ")\n";
        } else {
            const auto& jd = std::get<JointDiagonalization>(fd);
            rep["diagonalizable"] = true;
            rep["W"] = matrix_json(jd.W);
            rep["lambda"] = matrix_json(jd.lambda);
            double max_off = 0.0;
            for (const SymMatrix& u : family) {
                Eigen::MatrixXd d = jd.W * u.mat() * jd.W.transpose();
                d.diagonal().setZero();
                max_off = std::max(max_off, d.norm());
            }
            Json resid = Json::object();
            resid["max_offdiagonal"] = max_off;
            rep["residuals"] = std::move(resid);
            text = "diagonalizable: yes\nW:\n" + detail::text_matrix(jd.W, "  ") +
                   "lambda:\n" + detail::text_matrix(jd.lambda, "  ");
        }
    }
    detail::attach_timings(rep, opts, t0);
    res.exit_code = 0;
    res.output = opts.format == "text" ? text : dump_report(rep);
    return res;
}

// ---------------------------------------------------------------------------
// falsify
// ---------------------------------------------------------------------------

inline CommandResult cmd_falsify(const ProblemFile& pf, const Options& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    check_common_options(opts);
    const LinearMapOnSym t = detail::problem_map(pf, "falsify");
    const double tol = resolve_tol(opts, pf);
    const std::uint64_t seed = resolve_seed(opts, pf);

    Json rep = detail::report_header("falsify", pf.n);
    rep["tol"] = tol;
    Json config = Json::object();
    config["seed"] = seed;
    config["restarts"] = opts.restarts;
    config["max_iters"] = opts.max_iters;
    config["oracle_trials"] = opts.trials;
    rep["config"] = std::move(config);

    CommandResult res;
    res.diagnostics = pf.warnings;
    std::string text;

    const auto emit_found = [&](const char* method, const SymMatrix& a,
                                const CanonicalForm& cf) {
        const PsdClass image = classify(evaluate(cf, a), tol);
        rep["found"] = true;
        rep["method"] = method;
        rep["counterexample"] = matrix_json(a.mat());
        rep["image_class"] = psd_class_json(image);
        rep["canonical_form"] = canonical_form_json(cf);
        res.exit_code = 1;
        text = std::string("found: yes (") + method + ")\ncounterexample:\n" +
               detail::text_matrix(a.mat(), "  ");
    };

    const CanonicalForm raw = extract(t, tol);
    if (raw.is_zero_map()) {
        emit_found("zero_map", SymMatrix::Identity(pf.n), raw);
    } else {
        RebaseResult rb = rebase_pd(raw, tol);
        if (std::holds_alternative<ImageHasNoPdElement>(rb)) {
            emit_found("t_identity", SymMatrix::Identity(pf.n), raw);
        } else {
            const CanonicalForm& cf = std::get<CanonicalForm>(rb);
            FalsifierConfig fcfg;
            fcfg.restarts = opts.restarts;
            fcfg.max_iters = opts.max_iters;
            fcfg.seed = seed;
            const FalsifierReport frep = falsify(cf, fcfg, tol);
            rep["best_value"] = frep.best_value;
            rep["iterations_used"] = frep.iterations_used;
            rep["restarts_used"] = frep.restarts_used;
            if (frep.found) {
                emit_found("falsifier", frep.best_A, cf);
            } else {
                // The descent came up empty; try plain sampling before
                // reporting failure to find anything.
                const std::optional<SymMatrix> hit = sample_oracle(cf, opts.trials, seed + 1, tol);
                bool confirmed = false;
                if (hit) {
                    // Cross-check the sampled violation through the assembled
                    // matrix route before trusting it.
                    confirmed = !classify(apply(assemble(cf), *hit), tol).is_positive_definite();
                }
                if (hit && confirmed) {
                    emit_found("oracle", *hit, cf);
                } else {
                    rep["found"] = false;
                    rep["canonical_form"] = canonical_form_json(cf);
                    res.exit_code = 2;
                    text = "found: no\nbest_value: " + detail::text_double(frep.best_value) + "\n";
                }
            }
        }
    }
    detail::attach_timings(rep, opts, t0);
    res.output = opts.format == "text" ? text : dump_report(rep);
    return res;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

inline bool close(double a, double b, double tol = 1e-8) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

/// Smallest/largest singular value ratio of the stacked svec coordinates;
/// treats the list as independent when the ratio stays above 1e-12.
inline bool svec_independent(const std::vector<SymMatrix>& ms) {
    const int r = static_cast<int>(ms.size());
    const int nn = svec_size(ms.front().dim());
    if (r > nn) return false;
    Eigen::MatrixXd s(nn, r);
    for (int k = 0; k < r; ++k) s.col(k) = svec(ms[k]);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(s);
    const Eigen::VectorXd& sv = svd.singularValues();
    return sv(0) > 0.0 && sv(sv.size() - 1) > 1e-12 * sv(0);
}

inline bool rule_needs_pd_basis(const std::string& rule) {
    return rule == "Rank1" || rule == "Rank2" || rule == "RankRDiagonalizable" ||
           rule == "AllBkPsd" || rule == "ExtremalEigen" || rule == "Exhausted" ||
           rule == "FalsifierFound";
}

inline void run_verify(const Json& rep, const ProblemFile* problem, std::vector<Check>& checks,
                       std::vector<std::string>& notes) {
    const auto add = [&](std::string name, bool pass, std::string detail = "") {
        checks.push_back(Check{std::move(name), pass, std::move(detail)});
        return pass;
    };

    // Shape of the report itself.
    std::string shape_err;
    const bool shape_ok = [&] {
        if (!rep.contains("outcome") || !rep["outcome"].is_string()) {
            shape_err = "missing or non-string outcome";
            return false;
        }
        if (!rep.contains("rule") || !rep["rule"].is_string()) {
            shape_err = "missing or non-string rule";
            return false;
        }
        if (!rep.contains("n") || !rep["n"].is_number_integer() || rep["n"].get<int>() < 1) {
            shape_err = "missing or invalid n";
            return false;
        }
        if (!rep.contains("tol") || !rep["tol"].is_number() || !(rep["tol"].get<double>() > 0.0)) {
            shape_err = "missing or invalid tol";
            return false;
        }
        if (!rep.contains("certificate") || !rep["certificate"].is_object()) {
            shape_err = "missing certificate object";
            return false;
        }
        if (!rep.contains("canonical_form") || !rep["canonical_form"].is_object()) {
            shape_err = "missing canonical_form object";
            return false;
        }
        return true;
    }();
    if (!add("report_shape", shape_ok, shape_err)) return;

    const int n = rep["n"].get<int>();
    const double tol = rep["tol"].get<double>();
    const std::string outcome = rep["outcome"].get<std::string>();
    const std::string rule = rep["rule"].get<std::string>();

    const bool preserves_rule = rule == "Rank1" || rule == "Rank2" ||
                                rule == "RankRDiagonalizable" || rule == "AllBkPsd" ||
                                rule == "ExtremalEigen";
    const bool refuting_rule = rule == "Rank1" || rule == "Rank2" ||
                               rule == "RankRDiagonalizable" || rule == "TIdentityFails" ||
                               rule == "FalsifierFound";
    const bool paired = (outcome == "Preserves" && preserves_rule) ||
                        (outcome == "NotPreserving" && refuting_rule) ||
                        (outcome == "Inconclusive" && rule == "Exhausted");
    if (!add("outcome_rule_consistency", paired, "outcome " + outcome + " with rule " + rule))
        return;

    // Canonical form.
    CanonicalForm cf;
    std::string cf_err;
    const bool cf_ok = [&] {
        try {
            const Json& c = rep["canonical_form"];
            if (!c.contains("n") || !c["n"].is_number_integer() || c["n"].get<int>() != n) {
                cf_err = "canonical_form.n does not match the report";
                return false;
            }
            if (!c.contains("U") || !c.contains("B") || !c["U"].is_array() || !c["B"].is_array()) {
                cf_err = "canonical_form must carry U and B arrays";
                return false;
            }
            const int r = static_cast<int>(c["U"].size());
            if (static_cast<int>(c["B"].size()) != r) {
                cf_err = "U and B lengths differ";
                return false;
            }
            if (c.contains("r") && (!c["r"].is_number_integer() || c["r"].get<int>() != r)) {
                cf_err = "r field does not match the list lengths";
                return false;
            }
            if (r > svec_size(n)) {
                cf_err = "more terms than the dimension of the symmetric space";
                return false;
            }
            cf.n = n;
            for (int k = 0; k < r; ++k) {
                cf.U.push_back(parse_symmetric(c["U"][k], n, "U[" + std::to_string(k) + "]", nullptr));
                cf.B.push_back(parse_symmetric(c["B"][k], n, "B[" + std::to_string(k) + "]", nullptr));
            }
            cf.basis_is_pd = c.contains("basis_is_pd") && c["basis_is_pd"].is_boolean() &&
                             c["basis_is_pd"].get<bool>();
            if (r == 0 && !(rule == "TIdentityFails")) {
                cf_err = "empty canonical form outside the zero-map rule";
                return false;
            }
            return true;
        } catch (const InputError& e) {
            cf_err = e.what();
            return false;
        }
    }();
    if (!add("canonical_form_valid", cf_ok, cf_err)) return;

    if (cf.rank() >= 1) {
        add("coefficient_independence", svec_independent(cf.B),
            "B list must be linearly independent");
        if (!add("basis_independence", svec_independent(cf.U),
                 "U list must be linearly independent"))
            return;
        if (rule_needs_pd_basis(rule)) {
            bool all_pd = cf.basis_is_pd;
            std::string why = all_pd ? "" : "basis_is_pd flag is not set";
            if (all_pd) {
                for (int k = 0; k < cf.rank(); ++k)
                    if (!classify(cf.U[k], tol).is_positive_definite()) {
                        all_pd = false;
                        why = "U[" + std::to_string(k) + "] is not positive definite";
                        break;
                    }
            }
            if (!add("image_basis_pd", all_pd, why)) return;
        }
    }

    // Agreement with the original problem, when one is supplied.
    if (problem != nullptr) {
        const LinearMapOnSym pm = problem_map(*problem, "verify");
        bool agrees = false;
        std::string why;
        if (problem->n != n) {
            why = "problem dimension differs from the report";
        } else if (cf.rank() == 0) {
            agrees = pm.matrix.norm() <= 1e-8;
            why = "zero-map report against a nonzero problem map";
            if (agrees) why.clear();
        } else {
            const double diff = (assemble(cf).matrix - pm.matrix).norm();
            agrees = diff <= 1e-8 * std::max(1.0, pm.matrix.norm());
            why = "||assembled - problem|| = " + format_double(diff);
        }
        add("problem_agreement", agrees, why);
    }

    // Counterexample, for refuting outcomes.
    std::optional<SymMatrix> cex;
    if (outcome == "NotPreserving") {
        bool ok = false;
        std::string why;
        if (!rep.contains("counterexample")) {
            why = "missing counterexample";
        } else {
            try {
                cex = parse_symmetric(rep["counterexample"], n, "counterexample", nullptr);
                const bool a_pd = classify(*cex, tol).is_positive_definite();
                const bool image_pd = classify(evaluate(cf, *cex), tol).is_positive_definite();
                ok = a_pd && !image_pd;
                if (!a_pd)
                    why = "counterexample is not positive definite";
                else if (image_pd)
                    why = "image of the counterexample is still positive definite";
            } catch (const InputError& e) {
                why = e.what();
            }
        }
        if (!add("counterexample_refutes", ok, why)) return;
    } else if (rep.contains("counterexample")) {
        add("counterexample_absent", false, "unexpected counterexample for outcome " + outcome);
        return;
    }

    // Rule-specific recomputation. The failing combination, when one is
    // claimed, is rebuilt from scratch and the trace inequality re-derived.
    const auto trace_check = [&](const SymMatrix& g, const PsdClass& gcls) {
        if (!cex) return;
        if (gcls.kind == PsdKind::Zero) {
            notes.push_back("failing combination classifies as zero; trace inequality not applicable");
            return;
        }
        const double ip = trace_inner(*cex, g);
        add("counterexample_trace_inequality", ip < 0.0,
            "trace_inner(A, G) = " + format_double(ip));
    };

    if (rule == "Rank1") {
        if (!add("rank1_shape", cf.rank() == 1, "rank must be 1")) return;
        const PsdClass bcls = classify(cf.B[0], tol);
        if (outcome == "Preserves") {
            add("rank1_recompute", bcls.is_psd_nonzero(),
                std::string("B1 classifies ") + to_string(bcls.kind));
        } else {
            add("rank1_recompute", !bcls.is_psd_nonzero(),
                std::string("B1 classifies ") + to_string(bcls.kind));
            trace_check(cf.B[0], bcls);
        }
    } else if (rule == "Rank2") {
        if (!add("rank2_shape", cf.rank() == 2, "rank must be 2")) return;
        CongruencePair cp;
        bool diag_ok = true;
        std::string why;
        try {
            cp = diagonalize_pair(cf.U[0], cf.U[1], tol);
        } catch (const Error& e) {
            diag_ok = false;
            why = e.what();
        }
        if (!add("rank2_pair_diagonalization", diag_ok, why)) return;
        const Json& cert = rep["certificate"];
        const bool mu_ok = cert.contains("mu_min") && cert["mu_min"].is_number() &&
                           cert.contains("mu_max") && cert["mu_max"].is_number() &&
                           close(cert["mu_min"].get<double>(), cp.mu_min()) &&
                           close(cert["mu_max"].get<double>(), cp.mu_max());
        add("rank2_mu_match", mu_ok,
            "recomputed mu = [" + format_double(cp.mu_min()) + ", " + format_double(cp.mu_max()) +
                "]");
        const SymMatrix gmin(cf.B[0].mat() + cp.mu_min() * cf.B[1].mat());
        const SymMatrix gmax(cf.B[0].mat() + cp.mu_max() * cf.B[1].mat());
        const PsdClass cmin = classify(gmin, tol);
        const PsdClass cmax = classify(gmax, tol);
        if (outcome == "Preserves") {
            add("rank2_recompute", cmin.is_psd_nonzero() && cmax.is_psd_nonzero(),
                std::string("endpoints classify ") + to_string(cmin.kind) + " and " +
                    to_string(cmax.kind));
        } else {
            const bool some_fail = !cmin.is_psd_nonzero() || !cmax.is_psd_nonzero();
            add("rank2_recompute", some_fail, "both endpoint combinations classify nonzero PSD");
            if (some_fail)
                trace_check(!cmin.is_psd_nonzero() ? gmin : gmax,
                            !cmin.is_psd_nonzero() ? cmin : cmax);
        }
    } else if (rule == "RankRDiagonalizable") {
        FamilyDiagonalization fd;
        bool diag_ok = true;
        std::string why;
        try {
            fd = diagonalize_family(cf.U, tol);
        } catch (const Error& e) {
            diag_ok = false;
            why = e.what();
        }
        if (diag_ok && std::holds_alternative<NotSimultaneouslyDiagonalizable>(fd)) {
            diag_ok = false;
            why = "image basis is not simultaneously diagonalizable";
        }
        if (!add("rankr_family_diagonalization", diag_ok, why)) return;
        const auto& jd = std::get<JointDiagonalization>(fd);
        int failing = -1;
        SymMatrix gfail = SymMatrix::Zero(n);
        PsdClass cfail{PsdKind::Zero, 0.0, 0.0};
        for (int i = 0; i < n; ++i) {
            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
            for (int k = 0; k < cf.rank(); ++k) g += jd.lambda(i, k) * cf.B[k].mat();
            const SymMatrix gi(std::move(g));
            const PsdClass cls = classify(gi, tol);
            if (failing < 0 && !cls.is_psd_nonzero()) {
                failing = i;
                gfail = gi;
                cfail = cls;
            }
        }
        if (outcome == "Preserves") {
            add("rankr_recompute", failing < 0,
                failing < 0 ? "" : "combination " + std::to_string(failing) + " is not nonzero PSD");
        } else {
            add("rankr_recompute", failing >= 0, "every combination classifies nonzero PSD");
            if (failing >= 0) trace_check(gfail, cfail);
        }
    } else if (rule == "AllBkPsd") {
        bool all_ok = true;
        std::string why;
        for (int k = 0; k < cf.rank(); ++k) {
            const PsdClass cls = classify(cf.B[k], tol);
            if (!cls.is_psd_nonzero()) {
                all_ok = false;
                why = "B[" + std::to_string(k) + "] classifies " + to_string(cls.kind);
                break;
            }
        }
        add("all_bk_psd_recompute", all_ok, why);
    } else if (rule == "ExtremalEigen") {
        if (!add("extremal_rank_cap", cf.rank() <= 20, "rank exceeds the enumeration cap")) return;
        bool all_ok = true;
        std::string why;
        Eigen::VectorXd lo(cf.rank()), hi(cf.rank());
        for (int k = 0; k < cf.rank(); ++k) {
            const SpectralDecomposition d = eig(cf.U[k]);
            hi(k) = d.eigenvalues(0);
            lo(k) = d.eigenvalues(n - 1);
        }
        const std::uint64_t total = std::uint64_t{1} << cf.rank();
        for (std::uint64_t s = 0; s < total && all_ok; ++s) {
            Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
            for (int k = 0; k < cf.rank(); ++k)
                h += (((s >> k) & 1u) ? hi(k) : lo(k)) * cf.B[k].mat();
            const PsdClass cls = classify(SymMatrix(std::move(h)), tol);
            if (!cls.is_psd_nonzero()) {
                all_ok = false;
                why = "pattern " + std::to_string(s) + " classifies " + to_string(cls.kind);
            }
        }
        add("extremal_recompute", all_ok, why);
    } else if (rule == "TIdentityFails") {
        const SymMatrix p = evaluate(cf, SymMatrix::Identity(n));
        const PsdClass pcls = classify(p, tol);
        add("t_identity_not_pd", !pcls.is_positive_definite(),
            std::string("T(I) classifies ") + to_string(pcls.kind));
        const Json& cert = rep["certificate"];
        if (cert.contains("zero_map") && cert["zero_map"].is_boolean() &&
            cert["zero_map"].get<bool>())
            add("zero_map_rank", cf.rank() == 0, "zero-map claim with a nonzero canonical form");
    } else if (rule == "FalsifierFound") {
        bool strict = false;
        if (cex) strict = classify(evaluate(cf, *cex), tol).is_not_psd();
        add("counterexample_image_not_psd", strict,
            "falsifier counterexamples must break PSD strictly");
    } else if (rule == "Exhausted") {
        add("exhausted_rank", cf.rank() >= 3, "exact tests cover ranks 1 and 2");
        FamilyDiagonalization fd;
        bool not_diag = false;
        std::string why;
        try {
            fd = diagonalize_family(cf.U, tol);
            not_diag = std::holds_alternative<NotSimultaneouslyDiagonalizable>(fd);
            if (!not_diag) why = "image basis is simultaneously diagonalizable";
        } catch (const Error& e) {
            why = e.what();
        }
        add("exhausted_family_not_diagonalizable", not_diag, why);
        const Verdict by_coeffs = sufficient_all_bk_psd(cf, tol);
        add("exhausted_all_bk_not_preserves", by_coeffs.outcome != Outcome::Preserves,
            "coefficient battery would have settled the map");
        if (cf.rank() <= 20) {
            const Verdict by_extremes = sufficient_extremal(cf, tol);
            add("exhausted_extremal_not_preserves", by_extremes.outcome != Outcome::Preserves,
                "extremal battery would have settled the map");
        }
        notes.push_back("falsifier absence is reported, not re-run");
    }
}

} // namespace detail

inline CommandResult cmd_verify(const std::string& report_text, const ProblemFile* problem,
                                const Options& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    check_common_options(opts);
    if (problem != nullptr && !problem->map && !problem->canonical)
        throw InputError("verify: problem file must supply map or canonical");

    Json rep;
    try {
        rep = Json::parse(report_text);
    } catch (const std::exception& e) {
        throw InputError(std::string("report: ") + e.what());
    }
    if (!rep.is_object()) throw InputError("report: top level must be a JSON object");

    std::vector<Check> checks;
    std::vector<std::string> notes;
    detail::run_verify(rep, problem, checks, notes);

    bool all_passed = true;
    for (const Check& c : checks) all_passed = all_passed && c.pass;

    Json out = detail::report_header("verify", rep.contains("n") && rep["n"].is_number_integer()
                                                   ? rep["n"].get<int>()
                                                   : 0);
    out["report_outcome"] = rep.contains("outcome") && rep["outcome"].is_string()
                                ? Json(rep["outcome"].get<std::string>())
                                : Json(nullptr);
    out["report_rule"] = rep.contains("rule") && rep["rule"].is_string()
                             ? Json(rep["rule"].get<std::string>())
                             : Json(nullptr);
    Json jchecks = Json::array();
    for (const Check& c : checks) {
        Json jc = Json::object();
        jc["name"] = c.name;
        jc["pass"] = c.pass;
        jc["detail"] = c.detail;
        jchecks.push_back(std::move(jc));
    }
    out["checks"] = std::move(jchecks);
    Json jnotes = Json::array();
    for (const std::string& s : notes) jnotes.push_back(s);
    out["notes"] = std::move(jnotes);
    out["all_passed"] = all_passed;
    detail::attach_timings(out, opts, t0);

    CommandResult res;
    res.exit_code = all_passed ? 0 : 1;
    if (problem != nullptr) res.diagnostics = problem->warnings;
    if (opts.format == "text") {
        std::string text;
        for (const Check& c : checks) {
            text += c.pass ? "ok " : "FAIL ";
            text += c.name;
            if (!c.pass && !c.detail.empty()) text += ": " + c.detail;
            text += "\n";
        }
        text += all_passed ? "all checks passed\n" : "verification failed\n";
        res.output = text;
    } else {
        res.output = dump_report(out);
    }
    return res;
}

} // namespace pdpkit::cli
