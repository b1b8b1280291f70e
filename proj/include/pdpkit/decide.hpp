#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pdpkit/congruence.hpp"
#include "pdpkit/falsify.hpp"

namespace pdpkit {

enum class Outcome { Preserves, NotPreserving, Inconclusive };

inline const char* to_string(Outcome o) {
    switch (o) {
        case Outcome::Preserves: return "Preserves";
        case Outcome::NotPreserving: return "NotPreserving";
        case Outcome::Inconclusive: return "Inconclusive";
    }
    return "Unknown";
}

/// Which argument settled (or failed to settle) the verdict.
enum class Rule {
    Rank1,
    Rank2,
    RankRDiagonalizable,
    AllBkPsd,
    ExtremalEigen,
    TIdentityFails,
    FalsifierFound,
    Exhausted,
};

inline const char* to_string(Rule r) {
    switch (r) {
        case Rule::Rank1: return "Rank1";
        case Rule::Rank2: return "Rank2";
        case Rule::RankRDiagonalizable: return "RankRDiagonalizable";
        case Rule::AllBkPsd: return "AllBkPsd";
        case Rule::ExtremalEigen: return "ExtremalEigen";
        case Rule::TIdentityFails: return "TIdentityFails";
        case Rule::FalsifierFound: return "FalsifierFound";
        case Rule::Exhausted: return "Exhausted";
    }
    return "Unknown";
}

/// A matrix whose PSD class carries part of a certificate.
struct Witness {
    std::string label;
    SymMatrix matrix;
    PsdClass cls;
};

struct Rank1Certificate {
    Witness coefficient;
    Witness image_basis;
};

struct Rank2Certificate {
    double mu_min;
    double mu_max;
    Witness g_min;
    Witness g_max;
    int failing; // -1 none, 0 -> g_min, 1 -> g_max
};

struct RankRCertificate {
    Eigen::MatrixXd W;
    Eigen::MatrixXd lambda;
    std::vector<Witness> combos;
    int failing; // -1 none, else index into combos
};

struct AllBkPsdCertificate {
    std::vector<PsdClass> coefficient_classes;
    int failing; // -1 none, else first non-PSD coefficient
};

/// One sign pattern of the extremal battery. pattern[k] is 'm' when the
/// term uses lambda_min(U_k) and 'M' for lambda_max(U_k).
struct ExtremalPattern {
    std::string pattern;
    PsdClass cls;
};

struct ExtremalCertificate {
    Eigen::VectorXd lambda_min_u;
    Eigen::VectorXd lambda_max_u;
    std::vector<ExtremalPattern> patterns;
    int failing; // -1 none; patterns stop at the first failure otherwise
};

struct TIdentityCertificate {
    SymMatrix t_identity;
    PsdClass cls;
    bool zero_map;
};

struct FalsifierCertificate {
    double best_value;
    long iterations_used;
    int restarts_used;
    PsdClass image_class;
};

/// Everything that was tried before giving up, in pipeline order.
struct ExhaustedCertificate {
    NotSimultaneouslyDiagonalizable family_failure;
    int all_bk_first_failing = -1;
    bool extremal_skipped_rank_cap = false;
    std::string extremal_first_failing_pattern;
    double falsifier_best_value = 0.0;
    long falsifier_iterations_used = 0;
    int falsifier_restarts_used = 0;
};

using CertificatePayload =
    std::variant<Rank1Certificate, Rank2Certificate, RankRCertificate, AllBkPsdCertificate,
                 ExtremalCertificate, TIdentityCertificate, FalsifierCertificate,
                 ExhaustedCertificate>;

struct Certificate {
    Rule rule;
    CertificatePayload payload;
};

struct Verdict {
    Outcome outcome;
    Certificate certificate;
    std::optional<SymMatrix> counterexample; // present iff NotPreserving
};

struct DecisionConfig {
    double tol = kDefaultTol;
    int extremal_rank_cap = 20;
    FalsifierConfig falsifier;
};

namespace detail {

inline void require_pd_basis(const CanonicalForm& cf, const char* who) {
    if (!cf.basis_is_pd)
        throw NotPositiveDefinite(std::string(who) + ": canonical form must carry a PD image basis");
}

/// Every emitted counterexample is re-checked before it leaves: A must be
/// positive definite and its image must not be.
inline void check_counterexample(const CanonicalForm& cf, const SymMatrix& a, double tol) {
    if (!classify(a, tol).is_positive_definite())
        throw VerificationFailure("counterexample is not positive definite");
    if (classify(evaluate(cf, a), tol).is_positive_definite())
        throw VerificationFailure("counterexample image still classifies positive definite");
}

/// Counterexample for a failing coefficient combination G: the trace
/// construction when G has a negative direction, the identity when G
/// classifies as zero (the image is then zero, which is not PD).
inline SymMatrix refute_with(const CanonicalForm& cf, const SymMatrix& g, const PsdClass& gcls,
                             double tol) {
    SymMatrix a = gcls.kind == PsdKind::Zero ? SymMatrix::Identity(cf.n)
                                             : construct_trace_counterexample(g, tol);
    check_counterexample(cf, a, tol);
    return a;
}

} // namespace detail

/// Exact test for rank 1: T preserves positive definiteness iff the single
/// coefficient B_1 is nonzero PSD.
inline Verdict decide_rank1(const CanonicalForm& cf, double tol = kDefaultTol) {
    if (cf.rank() != 1) throw WrongRank("decide_rank1: canonical form must have rank 1");
    detail::require_pd_basis(cf, "decide_rank1");
    const PsdClass bcls = classify(cf.B[0], tol);
    const PsdClass ucls = classify(cf.U[0], tol);
    Certificate cert{Rule::Rank1,
                     Rank1Certificate{Witness{"B1", cf.B[0], bcls}, Witness{"U1", cf.U[0], ucls}}};
    if (bcls.is_psd_nonzero()) return Verdict{Outcome::Preserves, std::move(cert), std::nullopt};
    SymMatrix a = detail::refute_with(cf, cf.B[0], bcls, tol);
    return Verdict{Outcome::NotPreserving, std::move(cert), std::move(a)};
}

/// Exact test for rank 2: with mu the extreme eigenvalues of U_1^-1 U_2,
/// T preserves iff both B_1 + mu_min B_2 and B_1 + mu_max B_2 are nonzero
/// PSD. A failing endpoint yields an explicit counterexample.
inline Verdict decide_rank2(const CanonicalForm& cf, double tol = kDefaultTol) {
    if (cf.rank() != 2) throw WrongRank("decide_rank2: canonical form must have rank 2");
    detail::require_pd_basis(cf, "decide_rank2");
    const CongruencePair cp = diagonalize_pair(cf.U[0], cf.U[1], tol);
    const double mlo = cp.mu_min();
    const double mhi = cp.mu_max();
    const SymMatrix gmin(cf.B[0].mat() + mlo * cf.B[1].mat());
    const SymMatrix gmax(cf.B[0].mat() + mhi * cf.B[1].mat());
    const PsdClass cmin = classify(gmin, tol);
    const PsdClass cmax = classify(gmax, tol);
    int failing = -1;
    if (!cmin.is_psd_nonzero())
        failing = 0;
    else if (!cmax.is_psd_nonzero())
        failing = 1;
    Certificate cert{Rule::Rank2,
                     Rank2Certificate{mlo, mhi, Witness{"B1+mu_min*B2", gmin, cmin},
                                      Witness{"B1+mu_max*B2", gmax, cmax}, failing}};
    if (failing < 0) return Verdict{Outcome::Preserves, std::move(cert), std::nullopt};
    SymMatrix a = detail::refute_with(cf, failing == 0 ? gmin : gmax,
                                      failing == 0 ? cmin : cmax, tol);
    return Verdict{Outcome::NotPreserving, std::move(cert), std::move(a)};
}

/// Exact test when the image basis is simultaneously congruence
/// diagonalizable: T preserves iff every row combination
/// G_i = sum_k lambda(i, k) B_k is nonzero PSD.
inline Verdict decide_rankr_diagonalizable(const CanonicalForm& cf,
                                           const JointDiagonalization& jd,
                                           double tol = kDefaultTol) {
    const int n = cf.n;
    const int r = cf.rank();
    if (r < 1) throw WrongRank("decide_rankr_diagonalizable: canonical form must have rank >= 1");
    detail::require_pd_basis(cf, "decide_rankr_diagonalizable");
    if (jd.lambda.rows() != n || jd.lambda.cols() != r || jd.W.rows() != n || jd.W.cols() != n)
        throw DimensionMismatch(
            "decide_rankr_diagonalizable: joint diagonalization does not match the canonical form");

    std::vector<Witness> combos;
    combos.reserve(n);
    int failing = -1;
    for (int i = 0; i < n; ++i) {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
        for (int k = 0; k < r; ++k) g += jd.lambda(i, k) * cf.B[k].mat();
        SymMatrix gi(std::move(g));
        const PsdClass cls = classify(gi, tol);
        if (failing < 0 && !cls.is_psd_nonzero()) failing = i;
        combos.push_back(Witness{"G_" + std::to_string(i + 1), std::move(gi), cls});
    }
    Certificate cert{Rule::RankRDiagonalizable, RankRCertificate{jd.W, jd.lambda, combos, failing}};
    if (failing < 0) return Verdict{Outcome::Preserves, std::move(cert), std::nullopt};
    SymMatrix a = detail::refute_with(cf, combos[failing].matrix, combos[failing].cls, tol);
    return Verdict{Outcome::NotPreserving, std::move(cert), std::move(a)};
}

/// Sufficient condition: if every coefficient B_k is nonzero PSD, every
/// positive combination is, and T preserves. Never refutes.
inline Verdict sufficient_all_bk_psd(const CanonicalForm& cf, double tol = kDefaultTol) {
    if (cf.rank() < 1) throw WrongRank("sufficient_all_bk_psd: canonical form must have rank >= 1");
    detail::require_pd_basis(cf, "sufficient_all_bk_psd");
    std::vector<PsdClass> classes;
    int failing = -1;
    for (int k = 0; k < cf.rank(); ++k) {
        classes.push_back(classify(cf.B[k], tol));
        if (failing < 0 && !classes.back().is_psd_nonzero()) failing = k;
    }
    const Outcome outcome = failing < 0 ? Outcome::Preserves : Outcome::Inconclusive;
    return Verdict{outcome,
                   Certificate{Rule::AllBkPsd, AllBkPsdCertificate{std::move(classes), failing}},
                   std::nullopt};
}

/// Sufficient condition over the 2^r extremal eigenvalue patterns of the
/// image basis: if every H_s = sum_k lambda_{s_k}(U_k) B_k is nonzero PSD,
/// T preserves, because lambda_min is superadditive. Never refutes.
inline Verdict sufficient_extremal(const CanonicalForm& cf, double tol = kDefaultTol,
                                   int rank_cap = 20) {
    const int r = cf.rank();
    if (r < 1) throw WrongRank("sufficient_extremal: canonical form must have rank >= 1");
    detail::require_pd_basis(cf, "sufficient_extremal");
    if (r > rank_cap)
        throw RankTooLarge("sufficient_extremal: 2^r patterns exceed the rank cap");

    ExtremalCertificate ec;
    ec.lambda_min_u.resize(r);
    ec.lambda_max_u.resize(r);
    for (int k = 0; k < r; ++k) {
        const SpectralDecomposition d = eig(cf.U[k]);
        ec.lambda_max_u(k) = d.eigenvalues(0);
        ec.lambda_min_u(k) = d.eigenvalues(cf.n - 1);
    }
    ec.failing = -1;
    const std::uint64_t total = std::uint64_t{1} << r;
    for (std::uint64_t s = 0; s < total; ++s) {
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(cf.n, cf.n);
        std::string pattern(r, 'm');
        for (int k = 0; k < r; ++k) {
            const bool use_max = (s >> k) & 1u;
            if (use_max) pattern[k] = 'M';
            h += (use_max ? ec.lambda_max_u(k) : ec.lambda_min_u(k)) * cf.B[k].mat();
        }
        const PsdClass cls = classify(SymMatrix(std::move(h)), tol);
        ec.patterns.push_back(ExtremalPattern{std::move(pattern), cls});
        if (!cls.is_psd_nonzero()) {
            ec.failing = static_cast<int>(ec.patterns.size()) - 1;
            break;
        }
    }
    const Outcome outcome = ec.failing < 0 ? Outcome::Preserves : Outcome::Inconclusive;
    return Verdict{outcome, Certificate{Rule::ExtremalEigen, std::move(ec)}, std::nullopt};
}

/// Full pipeline: extract, re-base, then the sharpest applicable test.
/// Exact verdicts for rank 1, rank 2, and diagonalizable families; the two
/// sufficient batteries plus the falsifier otherwise. canonical_out, when
/// given, receives the re-based canonical form actually decided on (or the
/// raw extraction when re-basing refutes first).
inline Verdict decide(const LinearMapOnSym& t, const DecisionConfig& cfg = {},
                      CanonicalForm* canonical_out = nullptr) {
    CanonicalForm cf = extract(t, cfg.tol);
    if (cf.is_zero_map()) {
        if (canonical_out) *canonical_out = cf;
        const SymMatrix id = SymMatrix::Identity(t.n);
        const SymMatrix p = evaluate(cf, id);
        Certificate cert{Rule::TIdentityFails, TIdentityCertificate{p, classify(p, cfg.tol), true}};
        detail::check_counterexample(cf, id, cfg.tol);
        return Verdict{Outcome::NotPreserving, std::move(cert), id};
    }

    RebaseResult rebased = rebase_pd(cf, cfg.tol);
    if (const auto* refuted = std::get_if<ImageHasNoPdElement>(&rebased)) {
        if (canonical_out) *canonical_out = cf;
        const SymMatrix id = SymMatrix::Identity(t.n);
        Certificate cert{Rule::TIdentityFails,
                         TIdentityCertificate{refuted->t_identity, refuted->cls, false}};
        detail::check_counterexample(cf, id, cfg.tol);
        return Verdict{Outcome::NotPreserving, std::move(cert), id};
    }
    cf = std::get<CanonicalForm>(std::move(rebased));
    if (canonical_out) *canonical_out = cf;

    const int r = cf.rank();
    if (r == 1) return decide_rank1(cf, cfg.tol);
    if (r == 2) return decide_rank2(cf, cfg.tol);

    FamilyDiagonalization fd = diagonalize_family(cf.U, cfg.tol);
    if (const auto* jd = std::get_if<JointDiagonalization>(&fd))
        return decide_rankr_diagonalizable(cf, *jd, cfg.tol);

    // No exact theorem applies. Try to confirm, then try to refute.
    ExhaustedCertificate ex;
    ex.family_failure = std::get<NotSimultaneouslyDiagonalizable>(fd);

    Verdict by_coeffs = sufficient_all_bk_psd(cf, cfg.tol);
    if (by_coeffs.outcome == Outcome::Preserves) return by_coeffs;
    ex.all_bk_first_failing =
        std::get<AllBkPsdCertificate>(by_coeffs.certificate.payload).failing;

    if (r <= cfg.extremal_rank_cap) {
        Verdict by_extremes = sufficient_extremal(cf, cfg.tol, cfg.extremal_rank_cap);
        if (by_extremes.outcome == Outcome::Preserves) return by_extremes;
        const auto& ec = std::get<ExtremalCertificate>(by_extremes.certificate.payload);
        ex.extremal_first_failing_pattern = ec.patterns[ec.failing].pattern;
    } else {
        ex.extremal_skipped_rank_cap = true;
    }

    FalsifierConfig fcfg = cfg.falsifier;
    const FalsifierReport rep = falsify(cf, fcfg, cfg.tol);
    ex.falsifier_best_value = rep.best_value;
    ex.falsifier_iterations_used = rep.iterations_used;
    ex.falsifier_restarts_used = rep.restarts_used;
    if (rep.found) {
        const PsdClass image_class = classify(evaluate(cf, rep.best_A), cfg.tol);
        Certificate cert{Rule::FalsifierFound,
                         FalsifierCertificate{rep.best_value, rep.iterations_used,
                                              rep.restarts_used, image_class}};
        detail::check_counterexample(cf, rep.best_A, cfg.tol);
        return Verdict{Outcome::NotPreserving, std::move(cert), rep.best_A};
    }
    return Verdict{Outcome::Inconclusive, Certificate{Rule::Exhausted, std::move(ex)}, std::nullopt};
}

} // namespace pdpkit
