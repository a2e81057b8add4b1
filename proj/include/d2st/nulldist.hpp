#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "d2st/matrix.hpp"
#include "d2st/teststats.hpp"

namespace d2st::nulldist {

struct PermutationPlan {
    std::size_t permutations = 1000; // M
    std::uint64_t seed = 0;

    void validate() const;
};

enum class PValueMethod { permutation, chi2, weighted_chi2 };

std::string to_string(PValueMethod method);

struct PValue {
    double value = 1.0; // in (0, 1]
    PValueMethod method = PValueMethod::permutation;
    double std_error = 0.0; // nonzero only for Monte-Carlo estimates
};

// Monte-Carlo permutation null over relabelings of pooled rows. Uses the
// add-one estimator p = (1 + #{perm >= observed}) / (M + 1); ties count
// toward rejection. The permutation stream depends only on plan.seed.
PValue permutation_pvalue(const Matrix& pooled, std::size_t n, std::size_t m,
                          const std::function<double(const teststats::FeaturizedSample&)>& statistic,
                          const PermutationPlan& plan);

// Index-level variant: the statistic sees the permuted row indices of the
// two groups. Used by kernel tests that reindex a precomputed matrix.
PValue permutation_pvalue_indices(
    std::size_t total, std::size_t n, const PermutationPlan& plan,
    const std::function<double(std::span<const std::size_t>, std::span<const std::size_t>)>& statistic);

// Regularized lower incomplete gamma P(k/2, x/2); absolute error <= 1e-10.
double chi2_cdf(double x, std::size_t k);

// 1 - chi2_cdf(T, hhat), clamped below at 1e-300.
PValue dfda_pvalue(double t_statistic, std::size_t hhat);

// Monte-Carlo survival of sum_i lambda_i xi_i^2 at x, with add-one
// smoothing; std_error = sqrt(p (1-p) / draws).
PValue weighted_chi2_survival(double x, const std::vector<double>& lambdas, std::size_t draws,
                              std::uint64_t seed);

// Null of the DMMD statistic: eigenvalues of the ridge-free pooled
// covariance feed the weighted chi-square survival. Eigenvalues below
// 1e-12 * lambda_max are dropped.
PValue dmmd_asymptotic_pvalue(double s_statistic, const teststats::FeaturizedSample& fs,
                              std::size_t draws, std::uint64_t seed);

} // namespace d2st::nulldist
