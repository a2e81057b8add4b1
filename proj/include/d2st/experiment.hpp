#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "d2st/baselines.hpp"
#include "d2st/data.hpp"
#include "d2st/featmap.hpp"
#include "d2st/matrix.hpp"

namespace d2st::experiment {

enum class TestMethod { dmmd_perm, dmmd_asymptotic, dfda_chi2, mmd_med, kdmmd, c2st };

TestMethod parse_method(const std::string& name);
std::string to_string(TestMethod method);

struct TestResult {
    TestMethod method = TestMethod::dmmd_perm;
    double statistic = 0.0;
    double p_value = 1.0;
    bool reject = false; // p_value <= alpha
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t feature_dim = 0;  // H of the space the statistic ran in
    std::size_t hhat_used = 0;    // 0 when no PCA reduction applies
    double alpha = 0.05;
    std::uint64_t seed = 0;
    double wall_time_ms = 0.0;
};

// single-line JSON, keys in declaration order
std::string to_json_line(const TestResult& result);

struct TestOptions {
    double alpha = 0.05;
    std::size_t permutations = 1000;
    std::size_t asymptotic_draws = 100000;
    std::uint64_t seed = 0;
    // when set, inputs are raw observations mapped through the net;
    // otherwise inputs are treated as already-featurized embeddings
    const featmap::FeatureNet* net = nullptr;
    baselines::C2STConfig c2st{};
};

// Dispatch one two-sample test. mmd_med always runs on the raw inputs.
TestResult run_test(TestMethod method, const Matrix& x, const Matrix& y,
                    const TestOptions& options);

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

double normal_quantile(double p);

// Wilson score interval; zero (or full) counts additionally apply the
// rule-of-three bound 3/trials.
Interval wilson_interval(std::size_t successes, std::size_t trials, double confidence);

struct NetOptions {
    std::size_t depth = 3;
    double beta = 0.0; // 0 means the default 10 sqrt(d)
};

double default_beta(std::size_t input_dim);

struct ExperimentConfig {
    data::GeneratorSpec generator;
    std::vector<std::size_t> sample_sizes;
    std::size_t repetitions = 200;
    double alpha = 0.05;
    std::size_t permutations = 1000;
    std::size_t asymptotic_draws = 20000;
    std::vector<TestMethod> methods;
    std::uint64_t base_seed = 0;
    featmap::TrainConfig train;
    NetOptions net;
    bool fixed_net = false;
    std::size_t threads = 1;

    void validate() const; // throws config_error listing every bad field
};

ExperimentConfig config_from_json(const std::string& text);

enum class ErrorType { type1, type2 };

struct SweepRow {
    TestMethod method;
    std::size_t n;
    std::size_t m;
    ErrorType error_type;
    std::size_t errors;      // type1: rejections under H0; type2: misses under H1
    std::size_t repetitions;
    double alpha;

    double rate() const { return static_cast<double>(errors) / static_cast<double>(repetitions); }
};

// R replicates per (method, sample size, error type), each with its own
// derived seed; replicates run on cfg.threads workers and aggregation is
// order-independent, so output does not depend on the thread count.
std::vector<SweepRow> run_experiment(const ExperimentConfig& cfg);

// columns: method,n,m,error_type,rate,ci_lo,ci_hi,R,alpha
std::string sweep_csv(const std::vector<SweepRow>& rows);

} // namespace d2st::experiment
