#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "pdpkit/canonical.hpp"

namespace pdpkit {

/// Explicit A with trace_inner(A, B) <= (1/2) sum of the negative
/// eigenvalues of B, built from the spectrum of a non-PSD B. A shares
/// eigenvectors with B; its eigenvalues are 1 on the negative part of the
/// spectrum and a small positive delta elsewhere, so A is positive definite.
inline SymMatrix construct_trace_counterexample(const SymMatrix& b, double tol = kDefaultTol) {
    if (!classify(b, tol).is_not_psd())
        throw NotApplicable("construct_trace_counterexample: input classifies as PSD or zero");
    const SpectralDecomposition d = eig(b);
    const int n = b.dim();
    double neg = 0.0;
    double pos = 0.0;
    for (int i = 0; i < n; ++i) (d.eigenvalues(i) < 0.0 ? neg : pos) += d.eigenvalues(i);
    const double delta = pos > 0.0 ? -neg / (2.0 * pos) : 1.0;
    Eigen::VectorXd c(n);
    for (int i = 0; i < n; ++i) c(i) = d.eigenvalues(i) < 0.0 ? 1.0 : delta;
    return SymMatrix(d.eigenvectors * c.asDiagonal() * d.eigenvectors.transpose());
}

struct FalsifierConfig {
    int restarts = 16;
    int max_iters = 500;
    double initial_step = 0.1;
    double eps_floor = 1e-6;
    std::uint64_t seed = 0;
};

struct FalsifierReport {
    bool found;
    SymMatrix best_A;
    double best_value;
    long iterations_used;
    int restarts_used;
};

namespace detail {

// Iterates are parametrized as A = G G^t + eps I and kept at a bounded
// scale so the positive definiteness of A survives the relative tolerance.
inline constexpr double kFalsifierGNorm = 10.0;

inline Eigen::MatrixXd clamp_scale(Eigen::MatrixXd g) {
    const double norm = g.norm();
    if (norm > kFalsifierGNorm) g *= kFalsifierGNorm / norm;
    return g;
}

} // namespace detail

/// Randomized projected subgradient search for a positive definite A whose
/// image fails to be positive semidefinite. Minimizes
/// lambda_min(T(G G^t + eps I)) over G with step halving; a find only
/// counts after both evaluation routes (trace form and assembled matrix)
/// classify the image as not PSD. Deterministic for a fixed seed.
inline FalsifierReport falsify(const CanonicalForm& cf, const FalsifierConfig& cfg = {},
                               double tol = kDefaultTol) {
    if (!cf.basis_is_pd)
        throw NotPositiveDefinite("falsify: canonical form must carry a PD image basis");
    if (cfg.restarts < 1 || cfg.max_iters < 1 || !(cfg.initial_step > 0.0) ||
        !(cfg.eps_floor > 0.0))
        throw std::invalid_argument("falsify: configuration values must be positive");

    const int n = cf.n;
    const int r = cf.rank();
    const LinearMapOnSym assembled = assemble(cf);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const auto make_a = [&](const Eigen::MatrixXd& g) {
        return SymMatrix(g * g.transpose() + cfg.eps_floor * Eigen::MatrixXd::Identity(n, n));
    };
    // Objective f(A) = lambda_min(T(A)); also hands back the bottom
    // eigenvector, which drives the subgradient.
    const auto objective = [&](const SymMatrix& a, Eigen::VectorXd& v_out) {
        const SpectralDecomposition d = eig(evaluate(cf, a));
        v_out = d.eigenvectors.col(n - 1);
        return d.eigenvalues(n - 1);
    };
    const auto verified_violation = [&](const SymMatrix& a) {
        if (!classify(a, tol).is_positive_definite()) return false;
        if (!classify(evaluate(cf, a), tol).is_not_psd()) return false;
        return classify(apply(assembled, a), tol).is_not_psd();
    };

    long iters_total = 0;
    bool have_best = false;
    double best_value = 0.0;
    SymMatrix best_a = SymMatrix::Identity(n);

    for (int restart = 0; restart < cfg.restarts; ++restart) {
        Eigen::MatrixXd g(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) g(i, j) = gauss(rng);
        g = detail::clamp_scale(std::move(g));

        SymMatrix a = make_a(g);
        Eigen::VectorXd v;
        double f = objective(a, v);
        if (!have_best || f < best_value) {
            have_best = true;
            best_value = f;
            best_a = a;
        }
        if (f < 0.0 && verified_violation(a))
            return FalsifierReport{true, a, f, iters_total, restart + 1};

        double step = cfg.initial_step;
        for (int iter = 0; iter < cfg.max_iters; ++iter) {
            ++iters_total;
            // d f / d G = 2 S G with S = sum_k (v^t U_k v) B_k, where v is
            // the bottom eigenvector of T(A).
            Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
            for (int k = 0; k < r; ++k)
                s += v.dot(cf.U[k].mat() * v) * cf.B[k].mat();
            const Eigen::MatrixXd grad = 2.0 * s * g;
            const double gn = grad.norm();
            if (gn < 1e-14) break;

            bool accepted = false;
            while (step >= 1e-12) {
                const Eigen::MatrixXd g2 = detail::clamp_scale(g - (step / gn) * grad);
                const SymMatrix a2 = make_a(g2);
                Eigen::VectorXd v2;
                const double f2 = objective(a2, v2);
                if (f2 < f) {
                    g = g2;
                    a = a2;
                    v = v2;
                    f = f2;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) break;

            if (f < best_value) {
                best_value = f;
                best_a = a;
            }
            if (f < 0.0 && verified_violation(a))
                return FalsifierReport{true, a, f, iters_total, restart + 1};
        }
    }
    return FalsifierReport{false, best_a, best_value, iters_total, cfg.restarts};
}

/// Plain random search: draws trials PD matrices and returns the first one
/// whose image is not positive definite, if any. Used as an independent
/// cross-check on verdicts.
inline std::optional<SymMatrix> sample_oracle(const CanonicalForm& cf, long trials,
                                              std::uint64_t seed, double tol = kDefaultTol) {
    if (trials < 1) throw std::invalid_argument("sample_oracle: trials must be positive");
    const int n = cf.n;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (long t = 0; t < trials; ++t) {
        Eigen::MatrixXd g(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) g(i, j) = gauss(rng);
        const SymMatrix a(g * g.transpose() + 1e-6 * Eigen::MatrixXd::Identity(n, n));
        if (!classify(evaluate(cf, a), tol).is_positive_definite()) return a;
    }
    return std::nullopt;
}

} // namespace pdpkit
