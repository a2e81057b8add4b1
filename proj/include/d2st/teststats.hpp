#pragma once

#include <cstddef>
#include <vector>

#include "d2st/matrix.hpp"

namespace d2st::teststats {

// Featurized two-sample input: fx holds phi(X_i) rows, fy holds phi(Y_j)
// rows. Both samples need at least two observations.
struct FeaturizedSample {
    Matrix fx;
    Matrix fy;

    FeaturizedSample(Matrix fx_, Matrix fy_);

    std::size_t n() const { return fx.rows(); }
    std::size_t m() const { return fy.rows(); }
    std::size_t feature_dim() const { return fx.cols(); }
};

struct RidgePolicy {
    // rho = c * max(trace(scatter)/H, 1e-12) / sqrt(n+m); decays like
    // (n+m)^{-1/2} so the ridge vanishes asymptotically.
    double c = 1e-3;
};

// mean(fx rows) - mean(fy rows)
std::vector<double> mean_difference(const FeaturizedSample& fs);

// S = (n m / (n+m)) ||D||^2
double dmmd_statistic(const FeaturizedSample& fs);

struct PooledCovariance {
    Matrix sigma; // pooled scatter/(n+m-1) + rho I
    double rho;
};

PooledCovariance pooled_covariance(const FeaturizedSample& fs, const RidgePolicy& ridge);

// Hhat = min(round(sqrt((n+m)/2)), H), floored at 1
std::size_t choose_hhat(std::size_t n, std::size_t m, std::size_t feature_dim);

struct DfdaResult {
    double statistic = 0.0; // T = (n m / (n+m)) D^T Sigma^{-1} D in PCA space
    std::size_t hhat_used = 0;
    bool degenerate = false; // pooled features were constant
};

// PCA is fitted on the pooled (n+m) x H features, both samples are
// projected to hhat dimensions, and D / Sigma are formed in that space.
DfdaResult dfda_statistic(const FeaturizedSample& fs, const RidgePolicy& ridge, std::size_t hhat);

} // namespace d2st::teststats
