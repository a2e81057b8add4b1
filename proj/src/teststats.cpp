#include "d2st/teststats.hpp"

#include <cmath>
#include <string>

#include "d2st/errors.hpp"
#include "d2st/linalg.hpp"

namespace d2st::teststats {

FeaturizedSample::FeaturizedSample(Matrix fx_, Matrix fy_)
    : fx(std::move(fx_)), fy(std::move(fy_)) {
    if (fx.rows() < 2 || fy.rows() < 2)
        throw contract_error("FeaturizedSample: need n >= 2 and m >= 2, got n = " +
                             std::to_string(fx.rows()) + ", m = " + std::to_string(fy.rows()));
    if (fx.cols() != fy.cols())
        throw contract_error("FeaturizedSample: feature dimensions differ (" +
                             std::to_string(fx.cols()) + " vs " + std::to_string(fy.cols()) + ")");
    if (!fx.all_finite() || !fy.all_finite())
        throw contract_error("FeaturizedSample: non-finite feature");
}

std::vector<double> mean_difference(const FeaturizedSample& fs) {
    std::vector<double> diff = column_means(fs.fx);
    const std::vector<double> my = column_means(fs.fy);
    for (std::size_t j = 0; j < diff.size(); ++j) diff[j] -= my[j];
    return diff;
}

double dmmd_statistic(const FeaturizedSample& fs) {
    const std::vector<double> d = mean_difference(fs);
    double s = 0.0;
    for (double v : d) s += v * v;
    const double n = static_cast<double>(fs.n());
    const double m = static_cast<double>(fs.m());
    return n * m / (n + m) * s;
}

PooledCovariance pooled_covariance(const FeaturizedSample& fs, const RidgePolicy& ridge) {
    if (!(ridge.c > 0.0))
        throw contract_error("pooled_covariance: ridge constant must be > 0");
    const std::size_t total = fs.n() + fs.m();
    if (total < 3)
        throw contract_error("pooled_covariance: need n + m >= 3");
    const std::size_t h = fs.feature_dim();

    std::vector<double> mu(h, 0.0);
    for (std::size_t i = 0; i < fs.n(); ++i)
        for (std::size_t j = 0; j < h; ++j) mu[j] += fs.fx(i, j);
    for (std::size_t i = 0; i < fs.m(); ++i)
        for (std::size_t j = 0; j < h; ++j) mu[j] += fs.fy(i, j);
    for (double& v : mu) v /= static_cast<double>(total);

    Matrix sigma(h, h);
    auto accumulate = [&](const Matrix& block) {
        for (std::size_t r = 0; r < block.rows(); ++r)
            for (std::size_t i = 0; i < h; ++i) {
                const double zi = block(r, i) - mu[i];
                for (std::size_t j = i; j < h; ++j)
                    sigma(i, j) += zi * (block(r, j) - mu[j]);
            }
    };
    accumulate(fs.fx);
    accumulate(fs.fy);

    double trace = 0.0;
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = i; j < h; ++j) {
            sigma(i, j) /= static_cast<double>(total - 1);
            sigma(j, i) = sigma(i, j);
        }
        trace += sigma(i, i);
    }

    const double rho = ridge.c * std::max(trace / static_cast<double>(h), 1e-12) /
                       std::sqrt(static_cast<double>(total));
    for (std::size_t i = 0; i < h; ++i) sigma(i, i) += rho;
    return {std::move(sigma), rho};
}

std::size_t choose_hhat(std::size_t n, std::size_t m, std::size_t feature_dim) {
    if (n < 1 || m < 1 || feature_dim < 1)
        throw contract_error("choose_hhat: n, m, H must all be >= 1");
    const double raw = std::sqrt(static_cast<double>(n + m) / 2.0);
    const auto rounded = static_cast<std::size_t>(std::llround(raw));
    return std::max<std::size_t>(1, std::min(rounded, feature_dim));
}

DfdaResult dfda_statistic(const FeaturizedSample& fs, const RidgePolicy& ridge, std::size_t hhat) {
    const std::size_t h = fs.feature_dim();
    if (hhat < 1 || hhat > h)
        throw contract_error("dfda_statistic: hhat = " + std::to_string(hhat) +
                             " out of range [1, " + std::to_string(h) + "]");

    const Matrix pooled = vstack(fs.fx, fs.fy);
    const linalg::PcaResult pca = linalg::pca_fit(pooled, hhat);

    DfdaResult out;
    out.hhat_used = hhat;
    out.degenerate = pca.degenerate;
    if (pca.degenerate)
        return out; // constant features: D = 0, so T = 0

    const FeaturizedSample reduced(linalg::pca_project(fs.fx, pca.projection),
                                   linalg::pca_project(fs.fy, pca.projection));
    const std::vector<double> d = mean_difference(reduced);
    const PooledCovariance cov = pooled_covariance(reduced, ridge);
    const std::vector<double> x = linalg::solve_spd(cov.sigma, d);

    double quad = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) quad += d[j] * x[j];
    const double n = static_cast<double>(fs.n());
    const double m = static_cast<double>(fs.m());
    out.statistic = std::max(0.0, n * m / (n + m) * quad);
    return out;
}

} // namespace d2st::teststats
