#pragma once

#include <utility>
#include <variant>
#include <vector>

#include "pdpkit/symmat.hpp"

namespace pdpkit {

namespace detail {

/// Cholesky factor L of a matrix already checked positive definite.
inline Eigen::MatrixXd cholesky_factor(const SymMatrix& a, const char* who) {
    Eigen::LLT<Eigen::MatrixXd> llt(a.mat());
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefinite(std::string(who) + ": Cholesky factorization failed");
    return llt.matrixL();
}

/// Whitening of b against the factor L of a: returns L^-1 b L^-t.
inline Eigen::MatrixXd whiten(const Eigen::MatrixXd& l, const Eigen::MatrixXd& b) {
    const Eigen::MatrixXd x = l.triangularView<Eigen::Lower>().solve(b);
    return l.triangularView<Eigen::Lower>().solve(x.transpose()).transpose();
}

} // namespace detail

/// Congruence W with W A W^t = I and W B W^t = diag(mu), mu nondecreasing.
/// mu also equals the spectrum of A^-1 B.
struct CongruencePair {
    Eigen::MatrixXd W;
    Eigen::VectorXd mu;

    double mu_min() const { return mu(0); }
    double mu_max() const { return mu(mu.size() - 1); }
};

inline CongruencePair diagonalize_pair(const SymMatrix& a, const SymMatrix& b,
                                       double tol = kDefaultTol) {
    if (a.dim() != b.dim()) throw DimensionMismatch("diagonalize_pair: dimension mismatch");
    if (!classify(a, tol).is_positive_definite())
        throw NotPositiveDefinite("diagonalize_pair: left matrix must be positive definite");
    const Eigen::MatrixXd l = detail::cholesky_factor(a, "diagonalize_pair");
    const SpectralDecomposition d = eig(SymMatrix(detail::whiten(l, b.mat())));
    const int n = a.dim();
    CongruencePair out;
    out.mu.resize(n);
    Eigen::MatrixXd q(n, n);
    for (int i = 0; i < n; ++i) {
        out.mu(i) = d.eigenvalues(n - 1 - i);
        q.col(i) = d.eigenvectors.col(n - 1 - i);
    }
    // W = Q^t L^-1, via L^t Z = Q.
    out.W = l.transpose().triangularView<Eigen::Upper>().solve(q).transpose();
    return out;
}

/// One invertible W with W U_k W^t diagonal for every member. lambda(i, k)
/// is the i-th diagonal entry of W U_k W^t; column 0 is all ones up to
/// roundoff because the family is whitened against U_0.
struct JointDiagonalization {
    Eigen::MatrixXd W;
    Eigen::MatrixXd lambda;
};

/// Witness that the whitened family does not commute, with the offending
/// pair of member indices.
struct NotSimultaneouslyDiagonalizable {
    int first = -1;
    int second = -1;
    double commutator_norm = 0.0;
};

using FamilyDiagonalization =
    std::variant<JointDiagonalization, NotSimultaneouslyDiagonalizable>;

/// Simultaneous congruence diagonalization of a family of positive definite
/// matrices. Whitens everything against U_0, checks pairwise commutation of
/// the whitened members, then builds a common orthogonal diagonalizer by
/// re-diagonalizing inside eigenvalue clusters one member at a time.
inline FamilyDiagonalization diagonalize_family(const std::vector<SymMatrix>& u,
                                                double tol = kDefaultTol) {
    if (u.empty()) throw std::invalid_argument("diagonalize_family: need at least one member");
    if (!(tol > 0.0)) throw std::invalid_argument("diagonalize_family: tol must be positive");
    const int n = u.front().dim();
    const int r = static_cast<int>(u.size());
    for (const SymMatrix& m : u) {
        if (m.dim() != n) throw DimensionMismatch("diagonalize_family: dimension mismatch");
        if (!classify(m, tol).is_positive_definite())
            throw NotPositiveDefinite("diagonalize_family: every member must be positive definite");
    }

    const Eigen::MatrixXd l = detail::cholesky_factor(u[0], "diagonalize_family");
    std::vector<Eigen::MatrixXd> m(r);
    m[0] = Eigen::MatrixXd::Identity(n, n);
    for (int k = 1; k < r; ++k) m[k] = detail::whiten(l, u[k].mat());

    for (int i = 1; i < r; ++i)
        for (int j = i + 1; j < r; ++j) {
            const double cnorm = (m[i] * m[j] - m[j] * m[i]).norm();
            if (cnorm > tol * m[i].norm() * m[j].norm())
                return NotSimultaneouslyDiagonalizable{i, j, cnorm};
        }

    // Common diagonalizer. Blocks track the eigenvalue clusters shared by
    // the members processed so far; each new member can only be refined
    // inside those blocks.
    Eigen::MatrixXd q = Eigen::MatrixXd::Identity(n, n);
    std::vector<std::pair<int, int>> blocks{{0, n}};
    for (int k = 1; k < r; ++k) {
        const Eigen::MatrixXd mk = q.transpose() * m[k] * q;
        const double thr = tol * std::max(1.0, m[k].norm());
        std::vector<std::pair<int, int>> next;
        for (const auto& [b, e] : blocks) {
            const int len = e - b;
            if (len == 1) {
                next.emplace_back(b, e);
                continue;
            }
            const SpectralDecomposition d = eig(SymMatrix(mk.block(b, b, len, len)));
            q.middleCols(b, len) = q.middleCols(b, len) * d.eigenvectors;
            int start = 0;
            for (int t = 1; t <= len; ++t) {
                if (t == len || std::abs(d.eigenvalues(t) - d.eigenvalues(t - 1)) > thr) {
                    next.emplace_back(b + start, b + t);
                    start = t;
                }
            }
        }
        blocks = std::move(next);
    }

    JointDiagonalization jd;
    jd.W = l.transpose().triangularView<Eigen::Upper>().solve(q).transpose();
    jd.lambda.resize(n, r);
    for (int k = 0; k < r; ++k) {
        const Eigen::MatrixXd dk = jd.W * u[k].mat() * jd.W.transpose();
        for (int i = 0; i < n; ++i) jd.lambda(i, k) = dk(i, i);
    }
    return jd;
}

} // namespace pdpkit
