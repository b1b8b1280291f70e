#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pdpkit/symmat.hpp"

namespace pdpkit {

/// Linear map on the space of symmetric n x n matrices, stored as its
/// N x N action on svec coordinates, N = n(n+1)/2.
struct LinearMapOnSym {
    int n;
    Eigen::MatrixXd matrix;

    LinearMapOnSym(int n_, Eigen::MatrixXd m) : n(n_), matrix(std::move(m)) {
        if (n < 1 || matrix.rows() != svec_size(n) || matrix.cols() != svec_size(n))
            throw DimensionMismatch("LinearMapOnSym: matrix must be N x N with N = n(n+1)/2");
    }
};

inline SymMatrix apply(const LinearMapOnSym& t, const SymMatrix& a) {
    if (a.dim() != t.n) throw DimensionMismatch("apply: dimension mismatch");
    return unsvec(t.matrix * svec(a), t.n);
}

/// Trace form of a linear map: T(A) = sum_k trace_inner(A, B[k]) * U[k],
/// with both lists linearly independent. r == 0 encodes the zero map.
/// basis_is_pd records that every U[k] is positive definite.
struct CanonicalForm {
    int n = 0;
    std::vector<SymMatrix> B;
    std::vector<SymMatrix> U;
    bool basis_is_pd = false;

    int rank() const { return static_cast<int>(B.size()); }
    bool is_zero_map() const { return B.empty(); }
};

inline SymMatrix evaluate(const CanonicalForm& cf, const SymMatrix& a) {
    if (a.dim() != cf.n) throw DimensionMismatch("evaluate: dimension mismatch");
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(cf.n, cf.n);
    for (std::size_t k = 0; k < cf.B.size(); ++k)
        acc += trace_inner(a, cf.B[k]) * cf.U[k].mat();
    return SymMatrix(std::move(acc));
}

/// Rebuilds the svec-coordinate matrix, sum_k svec(U_k) svec(B_k)^t.
inline LinearMapOnSym assemble(const CanonicalForm& cf) {
    if (cf.n < 1) throw DimensionMismatch("assemble: canonical form has no dimension");
    const int nn = svec_size(cf.n);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nn, nn);
    for (std::size_t k = 0; k < cf.B.size(); ++k)
        m += svec(cf.U[k]) * svec(cf.B[k]).transpose();
    return LinearMapOnSym(cf.n, std::move(m));
}

/// Extracts a trace form from the svec-coordinate matrix via SVD:
/// U_k = unsvec(u_k), B_k = unsvec(sigma_k v_k) over singular values above
/// tol * sigma_max. The U_k come out orthonormal in svec coordinates, so
/// both lists are linearly independent by construction.
inline CanonicalForm extract(const LinearMapOnSym& t, double tol = kDefaultTol) {
    if (!(tol > 0.0)) throw std::invalid_argument("extract: tol must be positive");
    CanonicalForm cf;
    cf.n = t.n;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(t.matrix, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::VectorXd& sv = svd.singularValues();
    if (sv.size() == 0 || !(sv(0) > 0.0)) return cf;
    const double thr = tol * sv(0);
    for (int k = 0; k < sv.size(); ++k) {
        if (sv(k) <= thr) break;
        cf.U.push_back(unsvec(svd.matrixU().col(k), t.n));
        cf.B.push_back(unsvec(sv(k) * svd.matrixV().col(k), t.n));
    }
    return cf;
}

/// Refutation discovered while re-basing: T(I) is not positive definite, so
/// the image contains no positive definite basis and A = I already fails.
struct ImageHasNoPdElement {
    SymMatrix t_identity;
    PsdClass cls;
};

using RebaseResult = std::variant<CanonicalForm, ImageHasNoPdElement>;

/// Re-expresses a canonical form over a positive definite image basis by
/// shifting each U_k with a multiple of P = T(I). Requires P positive
/// definite; otherwise returns the refutation witness instead.
inline RebaseResult rebase_pd(const CanonicalForm& cf, double tol = kDefaultTol) {
    if (!(tol > 0.0)) throw std::invalid_argument("rebase_pd: tol must be positive");
    const int n = cf.n;
    const int r = cf.rank();
    const SymMatrix p = evaluate(cf, SymMatrix::Identity(n));
    const PsdClass pcls = classify(p, tol);
    if (!pcls.is_positive_definite()) return ImageHasNoPdElement{p, pcls};

    // Shift sizes: c_k = |min(0, lambda_min(U_k))| / lambda_min(P) + 1 makes
    // U_k + c_k P positive definite with margin lambda_min(P).
    const double pmin = pcls.min_eigenvalue;
    Eigen::VectorXd c(r);
    for (int k = 0; k < r; ++k) {
        const double umin = eig(cf.U[k]).eigenvalues(n - 1);
        c(k) = std::abs(std::min(0.0, umin)) / pmin + 1.0;
    }

    // Coordinates of svec(P) in the span of the current basis.
    const int nn = svec_size(n);
    Eigen::MatrixXd us(nn, r);
    for (int k = 0; k < r; ++k) us.col(k) = svec(cf.U[k]);
    const Eigen::VectorXd pc = us.colPivHouseholderQr().solve(svec(p));

    // The change of basis is I + pc c^t with determinant 1 + c . pc. If it
    // degenerates, growing c_0 moves the determinant away from zero.
    bool invertible = false;
    for (int attempt = 0; attempt < 4; ++attempt) {
        const Eigen::MatrixXd cb = Eigen::MatrixXd::Identity(r, r) + pc * c.transpose();
        Eigen::JacobiSVD<Eigen::MatrixXd> csvd(cb);
        if (csvd.singularValues()(r - 1) > tol * csvd.singularValues()(0)) {
            invertible = true;
            break;
        }
        c(0) *= 2.0;
    }
    if (!invertible)
        throw RebaseDegenerate("rebase_pd: change of basis stayed singular after retries");

    CanonicalForm out;
    out.n = n;
    out.basis_is_pd = true;
    Eigen::MatrixXd us2(nn, r);
    for (int k = 0; k < r; ++k) {
        out.U.push_back(SymMatrix(cf.U[k].mat() + c(k) * p.mat()));
        us2.col(k) = svec(out.U[k]);
    }

    // Recover the coefficients against the new basis from the assembled map:
    // M = sum_k svec(U'_k) svec(B'_k)^t, solved in the least squares sense.
    const Eigen::MatrixXd b2t = us2.colPivHouseholderQr().solve(assemble(cf).matrix);
    for (int k = 0; k < r; ++k)
        out.B.push_back(unsvec(b2t.row(k).transpose(), n));

    for (int k = 0; k < r; ++k)
        if (!classify(out.U[k], tol).is_positive_definite())
            throw RebaseDegenerate("rebase_pd: shifted basis fails the definiteness check");
    return out;
}

} // namespace pdpkit
