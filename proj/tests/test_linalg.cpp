#include <doctest.h>

#include <cmath>

#include "d2st/linalg.hpp"
#include "d2st/rng.hpp"

using namespace d2st;
using linalg::EigenDecomposition;

namespace {

Matrix random_symmetric(std::size_t n, Rng& rng) {
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            a(i, j) = rng.uniform(-2.0, 2.0);
            a(j, i) = a(i, j);
        }
    return a;
}

Matrix random_spd(std::size_t n, Rng& rng) {
    Matrix b(n, n);
    for (double& v : b.flat()) v = rng.uniform(-1.0, 1.0);
    Matrix a = matmul(transpose(b), b);
    for (std::size_t i = 0; i < n; ++i) a(i, i) += 0.5; // safely positive definite
    return a;
}

double reconstruction_error(const Matrix& a, const EigenDecomposition& eig) {
    const std::size_t n = a.rows();
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                s += eig.eigenvectors(i, k) * eig.eigenvalues[k] * eig.eigenvectors(j, k);
            worst = std::max(worst, std::abs(s - a(i, j)));
        }
    return worst;
}

double orthonormality_error(const Matrix& v) {
    const std::size_t n = v.rows();
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += v(k, i) * v(k, j);
            worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
        }
    return worst;
}

} // namespace

TEST_CASE("sym_eigen identity") {
    const auto eig = linalg::sym_eigen(Matrix::identity(3));
    for (double l : eig.eigenvalues) CHECK(l == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sym_eigen diagonal") {
    Matrix a(2, 2);
    a(0, 0) = 3.0;
    a(1, 1) = 1.0;
    const auto eig = linalg::sym_eigen(a);
    CHECK(eig.eigenvalues[0] == doctest::Approx(3.0));
    CHECK(eig.eigenvalues[1] == doctest::Approx(1.0));
    // eigenvectors are +-axis units
    CHECK(std::abs(eig.eigenvectors(0, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(eig.eigenvectors(1, 1)) == doctest::Approx(1.0));
    CHECK(std::abs(eig.eigenvectors(1, 0)) == doctest::Approx(0.0));
}

TEST_CASE("sym_eigen random reconstruction and invariants") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        const Matrix a = random_symmetric(5, rng);
        const auto eig = linalg::sym_eigen(a);

        CHECK(std::is_sorted(eig.eigenvalues.rbegin(), eig.eigenvalues.rend()));
        CHECK(reconstruction_error(a, eig) <= 1e-8 * (1.0 + a.max_abs()));
        CHECK(orthonormality_error(eig.eigenvectors) <= 1e-8);

        double trace = 0.0, lambda_sum = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) trace += a(i, i);
        for (double l : eig.eigenvalues) lambda_sum += l;
        CHECK(lambda_sum == doctest::Approx(trace).epsilon(1e-8));
    }
}

TEST_CASE("sym_eigen rejects bad input") {
    Matrix rect(2, 3);
    CHECK_THROWS_AS(linalg::sym_eigen(rect), contract_error);

    Matrix skew(2, 2);
    skew(0, 1) = 1.0;
    skew(1, 0) = -1.0;
    CHECK_THROWS_AS(linalg::sym_eigen(skew), contract_error);
}

TEST_CASE("solve_spd identity and diagonal") {
    const std::vector<double> b{1.0, 2.0};
    const auto x = linalg::solve_spd(Matrix::identity(2), b);
    CHECK(x[0] == doctest::Approx(1.0));
    CHECK(x[1] == doctest::Approx(2.0));

    Matrix d(2, 2);
    d(0, 0) = 2.0;
    d(1, 1) = 4.0;
    const auto y = linalg::solve_spd(d, std::vector<double>{2.0, 4.0});
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(1.0));
}

TEST_CASE("solve_spd residual sweep") {
    Rng rng(11);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.below(49));
        const Matrix a = random_spd(n, rng);
        std::vector<double> b(n);
        for (double& v : b) v = rng.uniform(-3.0, 3.0);

        const auto x = linalg::solve_spd(a, b);
        const auto ax = matvec(a, x);
        double res = 0.0, bnorm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            res += (ax[i] - b[i]) * (ax[i] - b[i]);
            bnorm += b[i] * b[i];
        }
        CHECK(std::sqrt(res) <= 1e-8 * (1.0 + std::sqrt(bnorm)));
    }
}

TEST_CASE("solve_spd rejects indefinite matrices") {
    Matrix a(2, 2);
    a(0, 0) = 1.0;
    a(1, 1) = -1.0;
    CHECK_THROWS_AS(linalg::solve_spd(a, std::vector<double>{1.0, 1.0}), numeric_error);
}

TEST_CASE("pca_fit recovers a dominant direction") {
    Rng rng(3);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    Matrix z(200, 2);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const double t = rng.normal();
        z(i, 0) = t * inv_sqrt2 + 1e-4 * rng.normal();
        z(i, 1) = t * inv_sqrt2 + 1e-4 * rng.normal();
    }
    const auto pca = linalg::pca_fit(z, 1);
    CHECK_FALSE(pca.degenerate);
    // sign convention makes both entries positive
    CHECK(pca.projection(0, 0) == doctest::Approx(inv_sqrt2).epsilon(1e-2));
    CHECK(pca.projection(0, 1) == doctest::Approx(inv_sqrt2).epsilon(1e-2));
}

TEST_CASE("pca_fit full rank preserves distances") {
    Rng rng(5);
    Matrix z(40, 4);
    for (double& v : z.flat()) v = rng.uniform(-1.0, 1.0);
    const auto pca = linalg::pca_fit(z, 4);
    const Matrix projected = linalg::pca_project(z, pca.projection);

    for (std::size_t i = 0; i < z.rows(); i += 7)
        for (std::size_t j = i + 1; j < z.rows(); j += 5) {
            double orig = 0.0, proj = 0.0;
            for (std::size_t k = 0; k < 4; ++k) {
                orig += (z(i, k) - z(j, k)) * (z(i, k) - z(j, k));
                proj += (projected(i, k) - projected(j, k)) * (projected(i, k) - projected(j, k));
            }
            CHECK(std::sqrt(proj) == doctest::Approx(std::sqrt(orig)).epsilon(1e-8));
        }
}

TEST_CASE("pca_fit constant data is degenerate, not an error") {
    Matrix z(10, 3, 2.5);
    const auto pca = linalg::pca_fit(z, 2);
    CHECK(pca.degenerate);
    for (double l : pca.eigenvalues) CHECK(l == doctest::Approx(0.0));
}

TEST_CASE("pca_fit round trip reproduces centered data") {
    Rng rng(17);
    Matrix z(30, 5);
    for (double& v : z.flat()) v = rng.normal();
    const auto pca = linalg::pca_fit(z, 5);

    const auto mu = column_means(z);
    Matrix centered = z;
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < z.cols(); ++j) centered(i, j) -= mu[j];

    const Matrix back = matmul(linalg::pca_project(centered, pca.projection),
                               pca.projection);
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < z.cols(); ++j)
            CHECK(back(i, j) == doctest::Approx(centered(i, j)).epsilon(1e-8));
}

TEST_CASE("pca_fit k out of range") {
    Matrix z(5, 3);
    for (std::size_t i = 0; i < 5; ++i) z(i, 0) = static_cast<double>(i);
    CHECK_THROWS_AS(linalg::pca_fit(z, 0), contract_error);
    CHECK_THROWS_AS(linalg::pca_fit(z, 4), contract_error);
}
