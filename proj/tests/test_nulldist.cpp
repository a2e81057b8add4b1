#include <doctest.h>

#include <cmath>
#include <numbers>

#include "d2st/nulldist.hpp"
#include "d2st/rng.hpp"
#include "d2st/teststats.hpp"

using namespace d2st;
using teststats::FeaturizedSample;

namespace {

// Imhof-type characteristic-function inversion for P(sum lambda_i xi_i^2 > x);
// test-side oracle only.
double imhof_survival(double x, const std::vector<double>& lambdas) {
    auto theta = [&](double u) {
        double s = 0.0;
        for (double l : lambdas) s += std::atan(l * u);
        return 0.5 * s - 0.5 * x * u;
    };
    auto rho = [&](double u) {
        double s = 0.0;
        for (double l : lambdas) s += 0.25 * std::log1p(l * l * u * u);
        return std::exp(s);
    };
    auto integrand = [&](double u) { return std::sin(theta(u)) / (u * rho(u)); };

    // composite Simpson over stretched panels; the envelope decays like
    // u^{-(k/2+1)} so the tail past 1e4 is negligible for k >= 2
    const double panels[][2] = {{1e-8, 1.0}, {1.0, 10.0}, {10.0, 100.0}, {100.0, 1e4}};
    const int steps[] = {20000, 40000, 90000, 990000};
    double integral = 0.0;
    for (int p = 0; p < 4; ++p) {
        const double a = panels[p][0], b = panels[p][1];
        const int n = steps[p];
        const double h = (b - a) / n;
        double s = integrand(a) + integrand(b);
        for (int i = 1; i < n; ++i) s += integrand(a + h * i) * (i % 2 ? 4.0 : 2.0);
        integral += s * h / 3.0;
    }
    return 0.5 + integral / std::numbers::pi;
}

Matrix gaussian_features(std::size_t n, std::size_t h, Rng& rng) {
    Matrix m(n, h);
    for (double& v : m.flat()) v = rng.normal();
    return m;
}

} // namespace

TEST_CASE("permutation estimator formula at the extremes") {
    Rng rng(1);
    // well-separated clusters: the identity split dominates all
    // permutation splits, so p lands at the smoothed minimum
    Matrix pooled(16, 1);
    for (std::size_t i = 0; i < 8; ++i) pooled(i, 0) = 100.0 + rng.normal();
    for (std::size_t i = 8; i < 16; ++i) pooled(i, 0) = -100.0 + rng.normal();
    const auto p_min = nulldist::permutation_pvalue(pooled, 8, 8, teststats::dmmd_statistic,
                                                    {199, 7});
    CHECK(p_min.value == doctest::Approx(1.0 / 200.0));

    // constant rows: every permuted statistic ties the observed one
    Matrix flat(10, 1, 3.0);
    const auto p_one = nulldist::permutation_pvalue(flat, 5, 5, teststats::dmmd_statistic,
                                                    {99, 3});
    CHECK(p_one.value == 1.0);
}

TEST_CASE("permutation p-values are deterministic in the seed") {
    Rng rng(2);
    const Matrix pooled = gaussian_features(30, 2, rng);
    const auto a = nulldist::permutation_pvalue(pooled, 15, 15, teststats::dmmd_statistic, {200, 5});
    const auto b = nulldist::permutation_pvalue(pooled, 15, 15, teststats::dmmd_statistic, {200, 5});
    CHECK(a.value == b.value);
    const auto c = nulldist::permutation_pvalue(pooled, 15, 15, teststats::dmmd_statistic, {200, 6});
    CHECK(a.value != c.value); // different stream, almost surely different count
}

TEST_CASE("permutation null is calibrated and super-uniform under H0") {
    Rng rng(1234);
    const std::size_t reps = 2000;
    const nulldist::PermutationPlan plan_base{200, 0};
    std::vector<double> pvals;
    pvals.reserve(reps);
    for (std::size_t r = 0; r < reps; ++r) {
        const Matrix pooled = gaussian_features(50, 3, rng);
        nulldist::PermutationPlan plan = plan_base;
        plan.seed = derive_stream(9000, r);
        pvals.push_back(
            nulldist::permutation_pvalue(pooled, 25, 25, teststats::dmmd_statistic, plan).value);
    }
    for (double alpha : {0.01, 0.05, 0.1}) {
        std::size_t hits = 0;
        for (double p : pvals)
            if (p <= alpha) ++hits;
        const double rate = static_cast<double>(hits) / static_cast<double>(reps);
        const double half_width =
            1.96 * std::sqrt(alpha * (1.0 - alpha) / static_cast<double>(reps));
        CHECK(rate <= alpha + 3.0 * half_width); // never anti-conservative
        if (alpha == 0.05) {
            CHECK(rate >= 0.05 - 3.0 * half_width);
        }
    }
}

TEST_CASE("chi2_cdf pinned values") {
    CHECK(nulldist::chi2_cdf(0.0, 1) == 0.0);
    CHECK(nulldist::chi2_cdf(0.0, 10) == 0.0);
    CHECK(nulldist::chi2_cdf(5.991464547, 2) == doctest::Approx(0.95).epsilon(1e-9));
    // k = 1: 2 Phi(sqrt(x)) - 1 = erf(sqrt(x/2))
    CHECK(nulldist::chi2_cdf(1.0, 1) == doctest::Approx(0.682689492137).epsilon(1e-10));
    CHECK_THROWS_AS(nulldist::chi2_cdf(-0.5, 2), contract_error);
}

TEST_CASE("chi2_cdf closed forms on a grid") {
    for (int i = 0; i <= 1000; ++i) {
        const double x = 100.0 * i / 1000.0;
        CHECK(std::abs(nulldist::chi2_cdf(x, 2) - (1.0 - std::exp(-x / 2.0))) <= 1e-12);
        const double k1 = std::erf(std::sqrt(x / 2.0));
        CHECK(std::abs(nulldist::chi2_cdf(x, 1) - k1) <= 1e-10);
    }
}

TEST_CASE("chi2_cdf is monotone and maps into [0,1]") {
    for (std::size_t k : {1, 3, 7, 20}) {
        double prev = -1.0;
        for (int i = 0; i <= 300; ++i) {
            const double c = nulldist::chi2_cdf(0.5 * i, k);
            CHECK(c >= prev);
            CHECK(c >= 0.0);
            CHECK(c <= 1.0);
            prev = c;
        }
    }
}

TEST_CASE("dfda p-value basics") {
    CHECK(nulldist::dfda_pvalue(0.0, 3).value == 1.0);
    CHECK(nulldist::dfda_pvalue(5.991464547, 2).value == doctest::Approx(0.05).epsilon(1e-8));
    double prev = 2.0;
    for (double t = 0.0; t < 30.0; t += 0.5) {
        const double p = nulldist::dfda_pvalue(t, 4).value;
        CHECK(p <= prev);
        prev = p;
    }
    CHECK(nulldist::dfda_pvalue(1e6, 2).value >= 1e-300);
}

TEST_CASE("weighted chi-square with unit weights reduces to chi2") {
    for (const std::size_t k : {1, 3, 6}) {
        const std::vector<double> lambdas(k, 1.0);
        for (const double x : {0.5, 2.0, 5.0, 9.0}) {
            const auto mc = nulldist::weighted_chi2_survival(x, lambdas, 200000, 17);
            const double exact = 1.0 - nulldist::chi2_cdf(x, k);
            CHECK(std::abs(mc.value - exact) <= 3.0 * mc.std_error);
        }
    }
}

TEST_CASE("weighted chi-square scaling by a single weight") {
    const auto mc = nulldist::weighted_chi2_survival(3.0, {2.0}, 200000, 29);
    const double exact = 1.0 - nulldist::chi2_cdf(1.5, 1);
    CHECK(std::abs(mc.value - exact) <= 3.0 * mc.std_error);
}

TEST_CASE("weighted chi-square matches the inversion oracle") {
    const std::vector<double> lambdas{1.0, 2.0, 3.0};
    const double oracle = imhof_survival(6.0, lambdas);
    const auto mc = nulldist::weighted_chi2_survival(6.0, lambdas, 400000, 41);
    CHECK(std::abs(mc.value - oracle) <= 3.0 * mc.std_error);
}

TEST_CASE("weighted chi-square contract checks") {
    CHECK_THROWS_AS(nulldist::weighted_chi2_survival(1.0, {1.0}, 10, 0), contract_error);
    CHECK_THROWS_AS(nulldist::weighted_chi2_survival(1.0, {-1.0, 2.0}, 2000, 0), contract_error);
    CHECK_THROWS_AS(nulldist::weighted_chi2_survival(1.0, {0.0, 0.0}, 2000, 0), numeric_error);
}

TEST_CASE("dmmd asymptotic null: identical samples give p = 1") {
    Rng rng(3);
    const Matrix f = gaussian_features(40, 3, rng);
    const FeaturizedSample fs(f, f);
    const auto p = nulldist::dmmd_asymptotic_pvalue(0.0, fs, 2000, 11);
    CHECK(p.value == 1.0);
}

TEST_CASE("dmmd asymptotic null drops tiny eigenvalues") {
    Rng rng(4);
    // rank-1 features: second eigenvalue is numerically zero but the
    // p-value machinery still works
    Matrix fx(20, 2), fy(20, 2);
    for (std::size_t i = 0; i < 20; ++i) {
        const double a = rng.normal(), b = rng.normal();
        fx(i, 0) = a;
        fx(i, 1) = 2.0 * a;
        fy(i, 0) = b;
        fy(i, 1) = 2.0 * b;
    }
    const FeaturizedSample fs(fx, fy);
    const double s = teststats::dmmd_statistic(fs);
    CHECK_NOTHROW(nulldist::dmmd_asymptotic_pvalue(s, fs, 2000, 3));
}
