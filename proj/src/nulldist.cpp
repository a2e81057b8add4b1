#include "d2st/nulldist.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "d2st/errors.hpp"
#include "d2st/linalg.hpp"
#include "d2st/rng.hpp"

namespace d2st::nulldist {

void PermutationPlan::validate() const {
    if (permutations < 1)
        throw contract_error("PermutationPlan: M must be >= 1");
}

std::string to_string(PValueMethod method) {
    switch (method) {
    case PValueMethod::permutation: return "permutation";
    case PValueMethod::chi2: return "chi2";
    case PValueMethod::weighted_chi2: return "weighted_chi2";
    }
    return "?";
}

PValue permutation_pvalue_indices(
    std::size_t total, std::size_t n, const PermutationPlan& plan,
    const std::function<double(std::span<const std::size_t>, std::span<const std::size_t>)>& statistic) {
    plan.validate();
    if (n < 1 || n >= total)
        throw contract_error("permutation: group sizes must be positive");

    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    const std::span<const std::size_t> all(idx);
    const double observed = statistic(all.subspan(0, n), all.subspan(n));

    Rng rng(derive_stream(plan.seed, 0x7065726dULL));
    std::size_t at_least = 0;
    for (std::size_t rep = 0; rep < plan.permutations; ++rep) {
        rng.shuffle(idx);
        if (statistic(all.subspan(0, n), all.subspan(n)) >= observed) ++at_least;
    }
    const double p = static_cast<double>(1 + at_least) /
                     static_cast<double>(plan.permutations + 1);
    return {p, PValueMethod::permutation,
            std::sqrt(p * (1.0 - p) / static_cast<double>(plan.permutations))};
}

PValue permutation_pvalue(const Matrix& pooled, std::size_t n, std::size_t m,
                          const std::function<double(const teststats::FeaturizedSample&)>& statistic,
                          const PermutationPlan& plan) {
    if (pooled.rows() != n + m)
        throw contract_error("permutation_pvalue: pooled rows != n + m");
    if (n < 2 || m < 2)
        throw contract_error("permutation_pvalue: need n >= 2 and m >= 2");
    const std::size_t h = pooled.cols();

    Matrix fx(n, h), fy(m, h);
    auto eval = [&](std::span<const std::size_t> left, std::span<const std::size_t> right) {
        for (std::size_t i = 0; i < left.size(); ++i)
            for (std::size_t j = 0; j < h; ++j) fx(i, j) = pooled(left[i], j);
        for (std::size_t i = 0; i < right.size(); ++i)
            for (std::size_t j = 0; j < h; ++j) fy(i, j) = pooled(right[i], j);
        return statistic(teststats::FeaturizedSample(fx, fy));
    };
    return permutation_pvalue_indices(n + m, n, plan, eval);
}

namespace {

// regularized lower incomplete gamma P(a, x) by series / continued fraction
double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0)
        throw contract_error("gamma_p: domain error");
    if (x == 0.0) return 0.0;

    const double log_gamma_a = std::lgamma(a);
    if (x < a + 1.0) {
        // series: P(a,x) = e^{-x + a ln x - ln G(a)} sum x^k / (a)_{k+1}
        double term = 1.0 / a;
        double sum = term;
        double ap = a;
        for (int k = 0; k < 500; ++k) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-16)
                break;
        }
        return sum * std::exp(-x + a * std::log(x) - log_gamma_a);
    }
    // Lentz continued fraction for Q(a,x)
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double frac = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        frac *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    const double q = frac * std::exp(-x + a * std::log(x) - log_gamma_a);
    return 1.0 - q;
}

} // namespace

double chi2_cdf(double x, std::size_t k) {
    if (x < 0.0)
        throw contract_error("chi2_cdf: x must be >= 0");
    if (k < 1)
        throw contract_error("chi2_cdf: k must be >= 1");
    return std::clamp(gamma_p(static_cast<double>(k) / 2.0, x / 2.0), 0.0, 1.0);
}

PValue dfda_pvalue(double t_statistic, std::size_t hhat) {
    if (t_statistic < 0.0)
        throw contract_error("dfda_pvalue: statistic must be >= 0");
    const double p = std::max(1.0 - chi2_cdf(t_statistic, hhat), 1e-300);
    return {p, PValueMethod::chi2, 0.0};
}

PValue weighted_chi2_survival(double x, const std::vector<double>& lambdas, std::size_t draws,
                              std::uint64_t seed) {
    if (draws < 1000)
        throw contract_error("weighted_chi2_survival: need at least 1000 draws");
    if (lambdas.empty())
        throw contract_error("weighted_chi2_survival: empty weight list");
    bool any_positive = false;
    for (double l : lambdas) {
        if (l < 0.0)
            throw contract_error("weighted_chi2_survival: negative weight");
        any_positive = any_positive || l > 0.0;
    }
    if (!any_positive)
        throw numeric_error("weighted_chi2_survival: all weights are zero");

    Rng rng(derive_stream(seed, 0x77636833ULL));
    std::size_t at_least = 0;
    for (std::size_t i = 0; i < draws; ++i) {
        double sum = 0.0;
        for (double l : lambdas) {
            const double xi = rng.normal();
            sum += l * xi * xi;
        }
        if (sum >= x) ++at_least;
    }
    const double p = static_cast<double>(1 + at_least) / static_cast<double>(draws + 1);
    return {p, PValueMethod::weighted_chi2,
            std::sqrt(p * (1.0 - p) / static_cast<double>(draws))};
}

PValue dmmd_asymptotic_pvalue(double s_statistic, const teststats::FeaturizedSample& fs,
                              std::size_t draws, std::uint64_t seed) {
    if (s_statistic < 0.0)
        throw contract_error("dmmd_asymptotic_pvalue: statistic must be >= 0");

    // ridge-free pooled covariance: only the spectrum is needed
    const std::size_t total = fs.n() + fs.m();
    const std::size_t h = fs.feature_dim();
    const Matrix pooled = vstack(fs.fx, fs.fy);
    const std::vector<double> mu = column_means(pooled);
    Matrix sigma(h, h);
    for (std::size_t r = 0; r < total; ++r)
        for (std::size_t i = 0; i < h; ++i) {
            const double zi = pooled(r, i) - mu[i];
            for (std::size_t j = i; j < h; ++j)
                sigma(i, j) += zi * (pooled(r, j) - mu[j]);
        }
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = i; j < h; ++j) {
            sigma(i, j) /= static_cast<double>(total - 1);
            sigma(j, i) = sigma(i, j);
        }

    const linalg::EigenDecomposition eig = linalg::sym_eigen(sigma);
    const double lambda_max = eig.eigenvalues.empty() ? 0.0 : eig.eigenvalues.front();
    std::vector<double> lambdas;
    for (double l : eig.eigenvalues)
        if (l > 1e-12 * lambda_max && l > 0.0) lambdas.push_back(l);
    if (lambdas.empty())
        throw numeric_error("dmmd_asymptotic_pvalue: covariance spectrum is degenerate");
    return weighted_chi2_survival(s_statistic, lambdas, draws, seed);
}

} // namespace d2st::nulldist
