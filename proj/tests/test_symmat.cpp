#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>

#include "pdpkit/symmat.hpp"
#include "test_support.hpp"

using namespace pdpkit;
using testkit::random_not_psd;
using testkit::random_pd;
using testkit::random_psd_nonzero;
using testkit::random_symmetric;

namespace {

bool within_one_ulp(double a, double b) {
    if (a == b) return true;
    const double inf = std::numeric_limits<double>::infinity();
    return b >= std::nextafter(a, -inf) && b <= std::nextafter(a, inf);
}

SymMatrix sym2(double a, double b, double d) {
    Eigen::MatrixXd m(2, 2);
    m << a, b, b, d;
    return SymMatrix(m);
}

} // namespace

TEST_CASE("SymMatrix symmetrizes and validates its input") {
    Eigen::MatrixXd m(2, 2);
    m << 1.0, 2.0, 0.0, 1.0;
    const SymMatrix a(m);
    CHECK(a(0, 1) == 1.0);
    CHECK(a(1, 0) == 1.0);
    CHECK(a(0, 0) == 1.0);

    CHECK_THROWS_AS(SymMatrix(Eigen::MatrixXd(0, 0)), DimensionMismatch);
    CHECK_THROWS_AS(SymMatrix(Eigen::MatrixXd::Zero(2, 3)), DimensionMismatch);
}

TEST_CASE("factories produce the expected entries") {
    const SymMatrix z = SymMatrix::Zero(3);
    CHECK(z.frobenius_norm() == 0.0);

    const SymMatrix id = SymMatrix::Identity(3);
    CHECK(id(0, 0) == 1.0);
    CHECK(id(0, 1) == 0.0);

    Eigen::VectorXd d(2);
    d << 4.0, -1.0;
    const SymMatrix dg = SymMatrix::Diagonal(d);
    CHECK(dg(0, 0) == 4.0);
    CHECK(dg(1, 1) == -1.0);

    const SymMatrix e00 = SymMatrix::BasisElement(2, 0, 0);
    CHECK(e00(0, 0) == 1.0);
    CHECK(e00(1, 1) == 0.0);

    const SymMatrix e01 = SymMatrix::BasisElement(2, 0, 1);
    CHECK(e01(0, 1) == 1.0);
    CHECK(e01(1, 0) == 1.0);
    CHECK(e01(0, 0) == 0.0);

    CHECK_THROWS_AS(SymMatrix::BasisElement(2, 0, 2), DimensionMismatch);
}

TEST_CASE("arithmetic operators act entrywise") {
    const SymMatrix a = sym2(1.0, 2.0, 3.0);
    const SymMatrix b = sym2(0.5, -1.0, 2.0);
    const SymMatrix s = a + b;
    CHECK(s(0, 0) == 1.5);
    CHECK(s(0, 1) == 1.0);
    const SymMatrix d = a - b;
    CHECK(d(1, 1) == 1.0);
    const SymMatrix t = 2.0 * a;
    CHECK(t(0, 1) == 4.0);
}

TEST_CASE("eig returns a nonincreasing spectrum with a fixed sign convention") {
    const SpectralDecomposition sd = eig(SymMatrix::Diagonal([] {
        Eigen::VectorXd d(2);
        d << 1.0, 3.0;
        return d;
    }()));
    CHECK(sd.eigenvalues(0) == Catch::Approx(3.0).margin(1e-14));
    CHECK(sd.eigenvalues(1) == Catch::Approx(1.0).margin(1e-14));
    CHECK(sd.eigenvectors(1, 0) == Catch::Approx(1.0).margin(1e-14));

    const SpectralDecomposition sw = eig(sym2(0.0, 1.0, 0.0));
    const double h = std::sqrt(0.5);
    CHECK(sw.eigenvalues(0) == Catch::Approx(1.0).margin(1e-14));
    CHECK(sw.eigenvalues(1) == Catch::Approx(-1.0).margin(1e-14));
    // first nonzero component of every eigenvector is positive
    CHECK(sw.eigenvectors(0, 0) == Catch::Approx(h).margin(1e-14));
    CHECK(sw.eigenvectors(1, 0) == Catch::Approx(h).margin(1e-14));
    CHECK(sw.eigenvectors(0, 1) == Catch::Approx(h).margin(1e-14));
    CHECK(sw.eigenvectors(1, 1) == Catch::Approx(-h).margin(1e-14));
}

TEST_CASE("eig reconstructs the matrix and is deterministic") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(trial % 5);
        const SymMatrix a = random_symmetric(n, rng);
        const SpectralDecomposition sd = eig(a);

        for (int i = 0; i + 1 < n; ++i) REQUIRE(sd.eigenvalues(i) >= sd.eigenvalues(i + 1));

        const Eigen::MatrixXd rebuilt =
            sd.eigenvectors * sd.eigenvalues.asDiagonal() * sd.eigenvectors.transpose();
        REQUIRE((rebuilt - a.mat()).norm() <= 1e-12 * std::max(1.0, a.mat().norm()));

        const Eigen::MatrixXd gram = sd.eigenvectors.transpose() * sd.eigenvectors;
        REQUIRE((gram - Eigen::MatrixXd::Identity(n, n)).norm() <= 1e-12);

        for (int j = 0; j < n; ++j) {
            int lead = 0;
            while (lead < n && sd.eigenvectors(lead, j) == 0.0) ++lead;
            REQUIRE(lead < n);
            REQUIRE(sd.eigenvectors(lead, j) > 0.0);
        }

        const SpectralDecomposition again = eig(a);
        REQUIRE((again.eigenvalues - sd.eigenvalues).norm() == 0.0);
        REQUIRE((again.eigenvectors - sd.eigenvectors).norm() == 0.0);
    }
}

TEST_CASE("classify separates the definiteness classes") {
    auto kind = [](const SymMatrix& a) { return classify(a).kind; };

    CHECK(kind(sym2(1.0, 0.0, 2.0)) == PsdKind::PositiveDefinite);
    CHECK(kind(sym2(1.0, 0.0, 0.0)) == PsdKind::PositiveSemidefiniteSingular);
    CHECK(kind(sym2(1.0, 0.0, -1.0)) == PsdKind::Indefinite);
    CHECK(kind(sym2(0.0, 0.0, -1.0)) == PsdKind::NegativeSemidefinite);
    CHECK(kind(sym2(-1.0, 0.0, -2.0)) == PsdKind::NegativeDefinite);
    CHECK(kind(SymMatrix::Zero(2)) == PsdKind::Zero);
    CHECK(kind(sym2(1e-12, 2e-13, -3e-12)) == PsdKind::Zero);

    // the threshold scales with the largest eigenvalue magnitude
    CHECK(kind(sym2(1e10, 0.0, -5.0)) == PsdKind::PositiveSemidefiniteSingular);
    CHECK(kind(sym2(1e10, 0.0, -50.0)) == PsdKind::Indefinite);

    const PsdClass c = classify(sym2(1.0, 0.0, -1.0));
    CHECK(c.min_eigenvalue == Catch::Approx(-1.0).margin(1e-14));
    CHECK(c.max_eigenvalue == Catch::Approx(1.0).margin(1e-14));
    CHECK(c.is_not_psd());
    CHECK_FALSE(c.is_positive_definite());
    CHECK_FALSE(c.is_psd_nonzero());

    CHECK(classify(sym2(2.0, 0.0, 3.0)).is_positive_definite());
    CHECK(classify(sym2(2.0, 0.0, 3.0)).is_psd_nonzero());
    CHECK(classify(sym2(1.0, 0.0, 0.0)).is_psd_nonzero());
    CHECK_FALSE(classify(SymMatrix::Zero(2)).is_psd_nonzero());

    CHECK_THROWS_AS(classify(sym2(1.0, 0.0, 1.0), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(classify(sym2(1.0, 0.0, 1.0), -1e-9), std::invalid_argument);
}

TEST_CASE("to_string names every definiteness class") {
    CHECK(std::string(to_string(PsdKind::PositiveDefinite)) == "PositiveDefinite");
    CHECK(std::string(to_string(PsdKind::PositiveSemidefiniteSingular)) ==
          "PositiveSemidefiniteSingular");
    CHECK(std::string(to_string(PsdKind::Indefinite)) == "Indefinite");
    CHECK(std::string(to_string(PsdKind::NegativeSemidefinite)) == "NegativeSemidefinite");
    CHECK(std::string(to_string(PsdKind::NegativeDefinite)) == "NegativeDefinite");
    CHECK(std::string(to_string(PsdKind::Zero)) == "Zero");
}

TEST_CASE("rank_decompose on a fixed indefinite matrix") {
    Eigen::VectorXd d(2);
    d << 1.0, -4.0;
    const RankDecomposition rd = rank_decompose(SymMatrix::Diagonal(d));
    REQUIRE(rd.rank() == 2);
    // eigenvalues are ordered nonincreasing, so +1 comes first
    CHECK(rd.signs[0] == 1);
    CHECK(rd.signs[1] == -1);
    CHECK(rd.vectors[0](0) == Catch::Approx(1.0).margin(1e-14));
    CHECK(rd.vectors[0](1) == 0.0);
    CHECK(rd.vectors[1](0) == 0.0);
    CHECK(rd.vectors[1](1) == Catch::Approx(2.0).margin(1e-14));
}

TEST_CASE("rank_decompose drops negligible directions") {
    Eigen::VectorXd d(3);
    d << 2.0, 1e-15, 0.0;
    const RankDecomposition rd = rank_decompose(SymMatrix::Diagonal(d));
    CHECK(rd.rank() == 1);
    CHECK(rd.signs[0] == 1);

    CHECK(rank_decompose(SymMatrix::Zero(3)).rank() == 0);
}

TEST_CASE("rank_decompose reconstructs random matrices") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 2 + static_cast<int>(trial % 5);
        const SymMatrix a = random_symmetric(n, rng);
        const RankDecomposition rd = rank_decompose(a);
        Eigen::MatrixXd rebuilt = Eigen::MatrixXd::Zero(n, n);
        for (std::size_t i = 0; i < rd.vectors.size(); ++i)
            rebuilt += rd.signs[i] * rd.vectors[i] * rd.vectors[i].transpose();
        REQUIRE((rebuilt - a.mat()).norm() <= 1e-9 * std::max(1.0, a.mat().norm()));
    }
}

TEST_CASE("rank_decompose of a PSD matrix uses only positive signs") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const RankDecomposition rd = rank_decompose(random_psd_nonzero(3, rng));
        REQUIRE(rd.rank() >= 1);
        for (const int s : rd.signs) REQUIRE(s == 1);
    }
}

TEST_CASE("trace_inner on fixed matrices") {
    Eigen::VectorXd d1(2), d2(2);
    d1 << 1.0, 2.0;
    d2 << 3.0, -1.0;
    CHECK(trace_inner(SymMatrix::Diagonal(d1), SymMatrix::Diagonal(d2)) == 1.0);
    CHECK(trace_inner(SymMatrix::Identity(3), SymMatrix::Identity(3)) == 3.0);
    CHECK_THROWS_AS(trace_inner(SymMatrix::Identity(2), SymMatrix::Identity(3)),
                    DimensionMismatch);
}

TEST_CASE("trace_inner agrees with the trace of the product") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(trial % 4);
        const SymMatrix a = random_symmetric(n, rng);
        const SymMatrix b = random_symmetric(n, rng);
        const double direct = (a.mat() * b.mat()).trace();
        const double scale = std::max(1.0, std::abs(direct));
        REQUIRE(std::abs(trace_inner(a, b) - direct) <= 1e-12 * scale);
    }
}

TEST_CASE("trace_inner of PD against nonzero PSD is strictly positive") {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 2 + static_cast<int>(trial % 5);
        const SymMatrix a = random_pd(n, rng);
        const SymMatrix b = random_psd_nonzero(n, rng);
        REQUIRE(trace_inner(a, b) > 0.0);
    }
}

TEST_CASE("svec on fixed matrices") {
    CHECK(svec_size(2) == 3);
    CHECK(svec_size(4) == 10);

    const Eigen::VectorXd si = svec(SymMatrix::Identity(2));
    CHECK(si(0) == 1.0);
    CHECK(si(1) == 0.0);
    CHECK(si(2) == 1.0);

    const Eigen::VectorXd sx = svec(sym2(0.0, 1.0, 0.0));
    CHECK(sx(0) == 0.0);
    CHECK(sx(1) == std::sqrt(2.0));
    CHECK(sx(2) == 0.0);

    // row-by-row upper triangle ordering for a 3x3 with distinct entries
    Eigen::MatrixXd m(3, 3);
    m << 1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0;
    const Eigen::VectorXd s3 = svec(SymMatrix(m));
    const double r2 = std::sqrt(2.0);
    CHECK(s3(0) == 1.0);
    CHECK(s3(1) == 2.0 * r2);
    CHECK(s3(2) == 3.0 * r2);
    CHECK(s3(3) == 4.0);
    CHECK(s3(4) == 5.0 * r2);
    CHECK(s3(5) == 6.0);
}

TEST_CASE("svec is an isometry for the trace inner product") {
    std::mt19937_64 rng(16);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(trial % 5);
        const SymMatrix a = random_symmetric(n, rng);
        const SymMatrix b = random_symmetric(n, rng);
        const double dot = svec(a).dot(svec(b));
        const double ref = trace_inner(a, b);
        REQUIRE(std::abs(dot - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));

        const double nsq = svec(a).squaredNorm();
        const double fsq = a.mat().squaredNorm();
        REQUIRE(std::abs(nsq - fsq) <= 1e-12 * std::max(1.0, fsq));
    }
}

TEST_CASE("unsvec inverts svec to within one ulp per entry") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 2 + static_cast<int>(trial % 5);
        const SymMatrix a = random_symmetric(n, rng);
        const SymMatrix back = unsvec(svec(a), n);
        for (int i = 0; i < n; ++i) {
            REQUIRE(back(i, i) == a(i, i)); // diagonal survives exactly
            for (int j = i + 1; j < n; ++j) REQUIRE(within_one_ulp(a(i, j), back(i, j)));
        }
    }
}

TEST_CASE("unsvec validates the coordinate length") {
    CHECK_THROWS_AS(unsvec(Eigen::VectorXd::Zero(4), 2), DimensionMismatch);
    CHECK_THROWS_AS(unsvec(Eigen::VectorXd::Zero(3), 0), DimensionMismatch);
}
