#pragma once

#include <cstdint>
#include <vector>

#include "d2st/matrix.hpp"
#include "d2st/nulldist.hpp"

namespace d2st::baselines {

struct KernelSpec {
    double bandwidth = 1.0; // sigma of exp(-||z1 - z2||^2 / (2 sigma^2))
};

// Median of all unordered pairwise Euclidean distances. A zero median
// falls back to the smallest nonzero distance; all-identical points are
// a degenerate-bandwidth error.
double median_heuristic(const Matrix& pooled);

double gaussian_kernel(std::span<const double> a, std::span<const double> b,
                       const KernelSpec& kernel);

// Biased (V-statistic) estimator:
// (1/n^2) sum k(x,x') + (1/m^2) sum k(y,y') - (2/nm) sum k(x,y).
double gaussian_mmd2_biased(const Matrix& x, const Matrix& y, const KernelSpec& kernel);

struct BaselineOutcome {
    double statistic = 0.0;
    nulldist::PValue pvalue;
    double bandwidth = 0.0; // 0 when no kernel is involved
};

// Gaussian-kernel MMD with the median-heuristic bandwidth; the pooled
// kernel matrix is computed once and permutations reindex it.
BaselineOutcome mmd_test(const Matrix& x, const Matrix& y, const nulldist::PermutationPlan& plan);

// Same machinery on featurized inputs (deep-kernel MMD).
BaselineOutcome kdmmd_test(const Matrix& fx, const Matrix& fy,
                           const nulldist::PermutationPlan& plan);

struct C2STConfig {
    double split_fraction = 0.5; // share of each class used for training
    std::size_t epochs = 300;
    double learning_rate = 0.1;
    double l2_penalty = 1e-3;
    std::uint64_t seed = 0;

    void validate() const;
};

struct C2STOutcome {
    double accuracy = 0.0; // held-out accuracy, the test statistic
    double p_value = 1.0;  // one-sided normal approximation
    std::size_t test_points = 0;
    std::vector<double> loss_trace; // training loss per epoch
};

// Classifier two-sample test: logistic regression on a stratified split,
// p = 1 - Phi((acc - 1/2) / sqrt(1/(4 n_te))).
C2STOutcome c2st_test(const Matrix& fx, const Matrix& fy, const C2STConfig& cfg);

// Standard normal CDF via the error function.
double normal_cdf(double z);

} // namespace d2st::baselines
