#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pdpkit/errors.hpp"

namespace pdpkit {

inline constexpr double kDefaultTol = 1e-9;

/// Dense real symmetric matrix. Entries are symmetrized once on
/// construction; from then on m(i, j) == m(j, i) holds bit for bit.
class SymMatrix {
public:
    explicit SymMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
        if (m_.rows() < 1 || m_.rows() != m_.cols())
            throw DimensionMismatch("SymMatrix: need a square matrix with n >= 1");
        for (Eigen::Index i = 0; i < m_.rows(); ++i)
            for (Eigen::Index j = i + 1; j < m_.cols(); ++j) {
                const double v = 0.5 * (m_(i, j) + m_(j, i));
                m_(i, j) = v;
                m_(j, i) = v;
            }
    }

    static SymMatrix Zero(int n) { return SymMatrix(Eigen::MatrixXd::Zero(n, n)); }
    static SymMatrix Identity(int n) { return SymMatrix(Eigen::MatrixXd::Identity(n, n)); }

    static SymMatrix Diagonal(const Eigen::VectorXd& d) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d.size(), d.size());
        m.diagonal() = d;
        return SymMatrix(std::move(m));
    }

    /// Symmetric unit element: E_ii on the diagonal, E_ij + E_ji off it.
    static SymMatrix BasisElement(int n, int i, int j) {
        if (i < 0 || j < 0 || i >= n || j >= n)
            throw DimensionMismatch("BasisElement: index out of range");
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
        m(i, j) = 1.0;
        m(j, i) = 1.0;
        return SymMatrix(std::move(m));
    }

    int dim() const { return static_cast<int>(m_.rows()); }
    double operator()(int i, int j) const { return m_(i, j); }
    const Eigen::MatrixXd& mat() const { return m_; }
    double frobenius_norm() const { return m_.norm(); }

private:
    Eigen::MatrixXd m_;
};

inline SymMatrix operator+(const SymMatrix& a, const SymMatrix& b) {
    if (a.dim() != b.dim()) throw DimensionMismatch("SymMatrix +: dimension mismatch");
    return SymMatrix(a.mat() + b.mat());
}

inline SymMatrix operator-(const SymMatrix& a, const SymMatrix& b) {
    if (a.dim() != b.dim()) throw DimensionMismatch("SymMatrix -: dimension mismatch");
    return SymMatrix(a.mat() - b.mat());
}

inline SymMatrix operator*(double c, const SymMatrix& a) { return SymMatrix(c * a.mat()); }

/// Eigenvalues in nonincreasing order, eigenvectors as the paired columns of
/// an orthogonal matrix. Each eigenvector is sign-fixed so that its first
/// nonzero component is positive, which keeps repeated runs byte-identical.
struct SpectralDecomposition {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;
};

inline SpectralDecomposition eig(const SymMatrix& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m.mat());
    if (solver.info() != Eigen::Success)
        throw ConvergenceFailure("eig: eigensolver did not converge");
    const int n = m.dim();
    SpectralDecomposition out;
    out.eigenvalues.resize(n);
    out.eigenvectors.resize(n, n);
    // The solver sorts ascending; flip to nonincreasing.
    for (int k = 0; k < n; ++k) {
        const int src = n - 1 - k;
        out.eigenvalues(k) = solver.eigenvalues()(src);
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        for (int i = 0; i < n; ++i) {
            if (v(i) != 0.0) {
                if (v(i) < 0.0) v = -v;
                break;
            }
        }
        out.eigenvectors.col(k) = v;
    }
    return out;
}

enum class PsdKind {
    PositiveDefinite,
    PositiveSemidefiniteSingular,
    Indefinite,
    NegativeSemidefinite,
    NegativeDefinite,
    Zero,
};

inline const char* to_string(PsdKind k) {
    switch (k) {
        case PsdKind::PositiveDefinite: return "PositiveDefinite";
        case PsdKind::PositiveSemidefiniteSingular: return "PositiveSemidefiniteSingular";
        case PsdKind::Indefinite: return "Indefinite";
        case PsdKind::NegativeSemidefinite: return "NegativeSemidefinite";
        case PsdKind::NegativeDefinite: return "NegativeDefinite";
        case PsdKind::Zero: return "Zero";
    }
    return "Unknown";
}

struct PsdClass {
    PsdKind kind;
    double min_eigenvalue;
    double max_eigenvalue;

    bool is_positive_definite() const { return kind == PsdKind::PositiveDefinite; }

    /// Positive semidefinite and not the zero matrix.
    bool is_psd_nonzero() const {
        return kind == PsdKind::PositiveDefinite ||
               kind == PsdKind::PositiveSemidefiniteSingular;
    }

    bool is_not_psd() const {
        return kind == PsdKind::Indefinite || kind == PsdKind::NegativeSemidefinite ||
               kind == PsdKind::NegativeDefinite;
    }
};

/// Classifies by the spectrum against the relative threshold
/// tol * max(1, |lambda|_max). Eigenvalues inside the band count as zero.
inline PsdClass classify(const SymMatrix& m, double tol = kDefaultTol) {
    if (!(tol > 0.0)) throw std::invalid_argument("classify: tol must be positive");
    const SpectralDecomposition d = eig(m);
    const double hi = d.eigenvalues(0);
    const double lo = d.eigenvalues(m.dim() - 1);
    const double thr = tol * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
    PsdKind kind;
    if (std::abs(lo) <= thr && std::abs(hi) <= thr)
        kind = PsdKind::Zero;
    else if (lo > thr)
        kind = PsdKind::PositiveDefinite;
    else if (hi < -thr)
        kind = PsdKind::NegativeDefinite;
    else if (lo >= -thr)
        kind = PsdKind::PositiveSemidefiniteSingular;
    else if (hi <= thr)
        kind = PsdKind::NegativeSemidefinite;
    else
        kind = PsdKind::Indefinite;
    return PsdClass{kind, lo, hi};
}

/// Signed rank-one terms of A = sum_i signs[i] * vectors[i] vectors[i]^t,
/// one term per eigenvalue outside the zero band.
struct RankDecomposition {
    std::vector<Eigen::VectorXd> vectors;
    std::vector<int> signs;

    int rank() const { return static_cast<int>(vectors.size()); }
};

inline RankDecomposition rank_decompose(const SymMatrix& a, double tol = kDefaultTol) {
    if (!(tol > 0.0)) throw std::invalid_argument("rank_decompose: tol must be positive");
    const SpectralDecomposition d = eig(a);
    const int n = a.dim();
    double amax = 0.0;
    for (int i = 0; i < n; ++i) amax = std::max(amax, std::abs(d.eigenvalues(i)));
    const double thr = tol * std::max(1.0, amax);
    RankDecomposition out;
    for (int k = 0; k < n; ++k) {
        const double lam = d.eigenvalues(k);
        if (std::abs(lam) <= thr) continue;
        out.vectors.push_back(std::sqrt(std::abs(lam)) * d.eigenvectors.col(k));
        out.signs.push_back(lam > 0.0 ? 1 : -1);
    }
    return out;
}

/// Frobenius inner product trace(A * B).
inline double trace_inner(const SymMatrix& a, const SymMatrix& b) {
    if (a.dim() != b.dim()) throw DimensionMismatch("trace_inner: dimension mismatch");
    return a.mat().cwiseProduct(b.mat()).sum();
}

inline int svec_size(int n) { return n * (n + 1) / 2; }

/// Packs the upper triangle row by row: (0,0), (0,1), ..., (0,n-1), (1,1), ...
/// Off-diagonal entries carry a sqrt(2) factor so that
/// dot(svec(A), svec(B)) == trace_inner(A, B).
inline Eigen::VectorXd svec(const SymMatrix& m) {
    const int n = m.dim();
    Eigen::VectorXd v(svec_size(n));
    const double s = std::sqrt(2.0);
    int idx = 0;
    for (int i = 0; i < n; ++i) {
        v(idx++) = m(i, i);
        for (int j = i + 1; j < n; ++j) v(idx++) = s * m(i, j);
    }
    return v;
}

/// Inverse packing. The sqrt(2) division is correctly rounded, so a
/// svec/unsvec round trip reproduces the diagonal exactly and each
/// off-diagonal entry to within one ulp.
inline SymMatrix unsvec(const Eigen::VectorXd& v, int n) {
    if (n < 1 || v.size() != svec_size(n))
        throw DimensionMismatch("unsvec: length does not match n(n+1)/2");
    Eigen::MatrixXd m(n, n);
    const double s = std::sqrt(2.0);
    int idx = 0;
    for (int i = 0; i < n; ++i) {
        m(i, i) = v(idx++);
        for (int j = i + 1; j < n; ++j) {
            const double x = v(idx++) / s;
            m(i, j) = x;
            m(j, i) = x;
        }
    }
    return SymMatrix(std::move(m));
}

} // namespace pdpkit
