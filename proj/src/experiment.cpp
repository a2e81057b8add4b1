#include "d2st/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "d2st/errors.hpp"
#include "d2st/nulldist.hpp"
#include "d2st/rng.hpp"
#include "d2st/teststats.hpp"

namespace d2st::experiment {

TestMethod parse_method(const std::string& name) {
    if (name == "dmmd_perm") return TestMethod::dmmd_perm;
    if (name == "dmmd_asymptotic") return TestMethod::dmmd_asymptotic;
    if (name == "dfda_chi2") return TestMethod::dfda_chi2;
    if (name == "mmd_med") return TestMethod::mmd_med;
    if (name == "kdmmd") return TestMethod::kdmmd;
    if (name == "c2st") return TestMethod::c2st;
    throw config_error("unknown test method '" + name + "'");
}

std::string to_string(TestMethod method) {
    switch (method) {
    case TestMethod::dmmd_perm: return "dmmd_perm";
    case TestMethod::dmmd_asymptotic: return "dmmd_asymptotic";
    case TestMethod::dfda_chi2: return "dfda_chi2";
    case TestMethod::mmd_med: return "mmd_med";
    case TestMethod::kdmmd: return "kdmmd";
    case TestMethod::c2st: return "c2st";
    }
    return "?";
}

std::string to_json_line(const TestResult& r) {
    nlohmann::ordered_json doc;
    doc["method"] = to_string(r.method);
    doc["statistic"] = r.statistic;
    doc["p_value"] = r.p_value;
    doc["reject"] = r.reject;
    doc["n"] = r.n;
    doc["m"] = r.m;
    doc["H"] = r.feature_dim;
    doc["hhat_used"] = r.hhat_used;
    doc["alpha"] = r.alpha;
    doc["seed"] = r.seed;
    doc["wall_time_ms"] = r.wall_time_ms;
    return doc.dump();
}

double default_beta(std::size_t input_dim) {
    return 10.0 * std::sqrt(static_cast<double>(input_dim));
}

namespace {

Matrix featurize(const Matrix& raw, const featmap::FeatureNet* net) {
    return net ? featmap::forward_batch(*net, raw) : raw;
}

} // namespace

TestResult run_test(TestMethod method, const Matrix& x, const Matrix& y,
                    const TestOptions& options) {
    if (!(options.alpha > 0.0) || !(options.alpha < 1.0))
        throw contract_error("run_test: alpha must be in (0, 1)");

    const auto start = std::chrono::steady_clock::now();
    TestResult result;
    result.method = method;
    result.n = x.rows();
    result.m = y.rows();
    result.alpha = options.alpha;
    result.seed = options.seed;

    const nulldist::PermutationPlan plan{options.permutations,
                                         derive_stream(options.seed, 1)};

    switch (method) {
    case TestMethod::mmd_med: {
        result.feature_dim = x.cols();
        const baselines::BaselineOutcome out = baselines::mmd_test(x, y, plan);
        result.statistic = out.statistic;
        result.p_value = out.pvalue.value;
        break;
    }
    case TestMethod::kdmmd: {
        const Matrix fx = featurize(x, options.net);
        const Matrix fy = featurize(y, options.net);
        result.feature_dim = fx.cols();
        const baselines::BaselineOutcome out = baselines::kdmmd_test(fx, fy, plan);
        result.statistic = out.statistic;
        result.p_value = out.pvalue.value;
        break;
    }
    case TestMethod::c2st: {
        const Matrix fx = featurize(x, options.net);
        const Matrix fy = featurize(y, options.net);
        result.feature_dim = fx.cols();
        baselines::C2STConfig cfg = options.c2st;
        cfg.seed = derive_stream(options.seed, 2);
        const baselines::C2STOutcome out = baselines::c2st_test(fx, fy, cfg);
        result.statistic = out.accuracy;
        result.p_value = out.p_value;
        break;
    }
    case TestMethod::dmmd_perm: {
        const teststats::FeaturizedSample fs(featurize(x, options.net),
                                             featurize(y, options.net));
        result.feature_dim = fs.feature_dim();
        result.statistic = teststats::dmmd_statistic(fs);
        const Matrix pooled = vstack(fs.fx, fs.fy);
        result.p_value =
            nulldist::permutation_pvalue(pooled, fs.n(), fs.m(), teststats::dmmd_statistic, plan)
                .value;
        break;
    }
    case TestMethod::dmmd_asymptotic: {
        const teststats::FeaturizedSample fs(featurize(x, options.net),
                                             featurize(y, options.net));
        result.feature_dim = fs.feature_dim();
        result.statistic = teststats::dmmd_statistic(fs);
        result.p_value = nulldist::dmmd_asymptotic_pvalue(result.statistic, fs,
                                                          options.asymptotic_draws,
                                                          derive_stream(options.seed, 3))
                             .value;
        break;
    }
    case TestMethod::dfda_chi2: {
        const teststats::FeaturizedSample fs(featurize(x, options.net),
                                             featurize(y, options.net));
        result.feature_dim = fs.feature_dim();
        const std::size_t hhat = teststats::choose_hhat(fs.n(), fs.m(), fs.feature_dim());
        const teststats::DfdaResult out = teststats::dfda_statistic(fs, {}, hhat);
        result.statistic = out.statistic;
        result.hhat_used = out.hhat_used;
        result.p_value = nulldist::dfda_pvalue(out.statistic, out.hhat_used).value;
        break;
    }
    }

    result.reject = result.p_value <= result.alpha;
    result.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    return result;
}

double normal_quantile(double p) {
    if (!(p > 0.0) || !(p < 1.0))
        throw contract_error("normal_quantile: p must be in (0, 1)");

    // Acklam's rational approximation, then one Halley step against the
    // exact CDF.
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double e = baselines::normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

Interval wilson_interval(std::size_t successes, std::size_t trials, double confidence) {
    if (trials < 1)
        throw contract_error("wilson_interval: trials must be >= 1");
    if (successes > trials)
        throw contract_error("wilson_interval: successes > trials");
    if (!(confidence > 0.0) || !(confidence < 1.0))
        throw contract_error("wilson_interval: confidence must be in (0, 1)");

    const double z = normal_quantile(0.5 + confidence / 2.0);
    const double n = static_cast<double>(trials);
    const double phat = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (phat + z2 / (2.0 * n)) / denom;
    const double halfwidth =
        z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;

    Interval out{std::max(0.0, center - halfwidth), std::min(1.0, center + halfwidth)};
    if (successes == 0) out.hi = std::min(out.hi, 3.0 / n);
    if (successes == trials) out.lo = std::max(out.lo, 1.0 - 3.0 / n);
    return out;
}

void ExperimentConfig::validate() const {
    std::vector<std::string> bad;
    try {
        generator.validate();
    } catch (const config_error& e) {
        bad.emplace_back(e.what());
    }
    if (sample_sizes.empty()) bad.emplace_back("sample_sizes: must be non-empty");
    for (std::size_t i = 0; i < sample_sizes.size(); ++i) {
        if (sample_sizes[i] < 4) {
            bad.emplace_back("sample_sizes: entries must be >= 4");
            break;
        }
        if (i > 0 && sample_sizes[i] <= sample_sizes[i - 1]) {
            bad.emplace_back("sample_sizes: must be strictly ascending");
            break;
        }
    }
    if (repetitions < 1) bad.emplace_back("repetitions: must be >= 1");
    if (!(alpha > 0.0) || !(alpha < 1.0)) bad.emplace_back("alpha: must be in (0, 1)");
    if (permutations < 1) bad.emplace_back("permutations: must be >= 1");
    if (asymptotic_draws < 1000) bad.emplace_back("asymptotic_draws: must be >= 1000");
    if (methods.empty()) bad.emplace_back("methods: must be non-empty");
    if (net.depth < 2) bad.emplace_back("net.depth: must be >= 2");
    if (net.beta < 0.0) bad.emplace_back("net.beta: must be >= 0 (0 selects the default)");
    if (threads < 1) bad.emplace_back("threads: must be >= 1");
    try {
        train.validate();
    } catch (const contract_error& e) {
        bad.emplace_back(e.what());
    }
    if (!bad.empty()) {
        std::string msg = "invalid experiment config:";
        for (const std::string& b : bad) msg += "\n  - " + b;
        throw config_error(msg);
    }
}

namespace {

template <typename T>
T get_or(const nlohmann::json& doc, const char* key, T fallback) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw config_error(std::string(key) + ": wrong type");
    }
}

} // namespace

ExperimentConfig config_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("config JSON parse failed: ") + e.what());
    }
    if (!doc.is_object())
        throw config_error("config: top level must be a JSON object");

    ExperimentConfig cfg;
    if (doc.contains("generator")) {
        const auto& g = doc.at("generator");
        cfg.generator.kind = data::parse_generator_kind(get_or<std::string>(g, "kind", "gaussian_shift"));
        cfg.generator.dim = get_or<std::size_t>(g, "d", 1);
        cfg.generator.shift = get_or<double>(g, "shift", 1.0);
        cfg.generator.scale = get_or<double>(g, "scale", 2.0);
        cfg.generator.grid = get_or<std::size_t>(g, "grid", 3);
        cfg.generator.ratio = get_or<double>(g, "ratio", 4.0);
        cfg.generator.transfer_delta = get_or<double>(g, "transfer_delta", 0.0);
    } else {
        throw config_error("generator: missing");
    }
    cfg.sample_sizes = get_or<std::vector<std::size_t>>(doc, "sample_sizes", {});
    cfg.repetitions = get_or<std::size_t>(doc, "repetitions", get_or<std::size_t>(doc, "R", 200));
    cfg.alpha = get_or<double>(doc, "alpha", 0.05);
    cfg.permutations =
        get_or<std::size_t>(doc, "permutations", get_or<std::size_t>(doc, "M", 1000));
    cfg.asymptotic_draws = get_or<std::size_t>(doc, "asymptotic_draws", 20000);
    cfg.base_seed = get_or<std::uint64_t>(doc, "base_seed", 0);
    cfg.fixed_net = get_or<bool>(doc, "fixed_net", false);
    cfg.threads = get_or<std::size_t>(doc, "threads", 1);

    std::vector<std::string> method_names =
        get_or<std::vector<std::string>>(doc, "methods", {});
    for (const std::string& name : method_names)
        cfg.methods.push_back(parse_method(name));

    if (doc.contains("train")) {
        const auto& t = doc.at("train");
        cfg.train.epochs = get_or<std::size_t>(t, "epochs", cfg.train.epochs);
        cfg.train.learning_rate = get_or<double>(t, "learning_rate", cfg.train.learning_rate);
        cfg.train.batch_size = get_or<std::size_t>(t, "batch_size", cfg.train.batch_size);
        cfg.train.eta = get_or<double>(t, "eta", cfg.train.eta);
        cfg.train.patience = get_or<std::size_t>(t, "patience", cfg.train.patience);
        cfg.train.seed = get_or<std::uint64_t>(t, "seed", cfg.train.seed);
    }
    if (doc.contains("net")) {
        const auto& n = doc.at("net");
        cfg.net.depth = get_or<std::size_t>(n, "depth", cfg.net.depth);
        cfg.net.beta = get_or<double>(n, "beta", cfg.net.beta);
    }
    cfg.validate();
    return cfg;
}

namespace {

bool needs_net(TestMethod method) {
    return method != TestMethod::mmd_med;
}

struct ReplicateSetup {
    const ExperimentConfig& cfg;
    TestMethod method;
    std::size_t size;
    ErrorType error_type;
    const featmap::FeatureNet* shared_net; // non-null in fixed-net mode
};

featmap::FeatureNet train_replicate_net(const ExperimentConfig& cfg, std::size_t size,
                                        std::uint64_t seed) {
    const double beta =
        cfg.net.beta > 0.0 ? cfg.net.beta : default_beta(cfg.generator.dim);
    const Matrix xp =
        data::generate(cfg.generator, size, data::SampleRole::p_transfer, derive_stream(seed, 10));
    const Matrix yp =
        data::generate(cfg.generator, size, data::SampleRole::q_transfer, derive_stream(seed, 11));
    featmap::FeatureNet net =
        featmap::init_net(cfg.generator.dim, cfg.net.depth, beta, derive_stream(seed, 12));
    featmap::TrainConfig tc = cfg.train;
    tc.seed = derive_stream(seed, 13);
    return featmap::train(net, xp, yp, tc).net;
}

// One replicate; returns true when the test erred (type1: false
// rejection, type2: miss).
bool run_replicate(const ReplicateSetup& setup, std::uint64_t seed) {
    const ExperimentConfig& cfg = setup.cfg;

    featmap::FeatureNet local_net;
    const featmap::FeatureNet* net = setup.shared_net;
    if (needs_net(setup.method) && net == nullptr) {
        local_net = train_replicate_net(cfg, setup.size, seed);
        net = &local_net;
    }

    const Matrix x =
        data::generate(cfg.generator, setup.size, data::SampleRole::p, derive_stream(seed, 20));
    const data::SampleRole y_role =
        setup.error_type == ErrorType::type1 ? data::SampleRole::p : data::SampleRole::q;
    const Matrix y = data::generate(cfg.generator, setup.size, y_role, derive_stream(seed, 21));

    TestOptions options;
    options.alpha = cfg.alpha;
    options.permutations = cfg.permutations;
    options.asymptotic_draws = cfg.asymptotic_draws;
    options.seed = derive_stream(seed, 22);
    options.net = needs_net(setup.method) ? net : nullptr;

    const TestResult result = run_test(setup.method, x, y, options);
    return setup.error_type == ErrorType::type1 ? result.reject : !result.reject;
}

std::size_t count_errors(const ReplicateSetup& setup, std::uint64_t group_seed) {
    const std::size_t reps = setup.cfg.repetitions;
    const std::size_t workers = std::min(setup.cfg.threads, reps);

    if (workers <= 1) {
        std::size_t errors = 0;
        for (std::size_t r = 0; r < reps; ++r)
            if (run_replicate(setup, derive_stream(group_seed, r))) ++errors;
        return errors;
    }

    std::vector<std::size_t> partial(workers, 0);
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                std::size_t local = 0;
                for (std::size_t r = w; r < reps; r += workers)
                    if (run_replicate(setup, derive_stream(group_seed, r))) ++local;
                partial[w] = local;
            } catch (...) {
                const std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    std::size_t errors = 0;
    for (std::size_t v : partial) errors += v;
    return errors;
}

} // namespace

std::vector<SweepRow> run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const bool has_alternative = !cfg.generator.null_only();

    std::vector<SweepRow> rows;
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        const TestMethod method = cfg.methods[mi];
        for (std::size_t si = 0; si < cfg.sample_sizes.size(); ++si) {
            const std::size_t size = cfg.sample_sizes[si];
            const std::uint64_t cell_seed =
                derive_stream(derive_stream(cfg.base_seed, mi), si);

            featmap::FeatureNet fixed;
            const featmap::FeatureNet* shared = nullptr;
            if (cfg.fixed_net && needs_net(method)) {
                fixed = train_replicate_net(cfg, size, derive_stream(cell_seed, 99));
                shared = &fixed;
            }

            std::vector<ErrorType> kinds{ErrorType::type1};
            if (has_alternative) kinds.push_back(ErrorType::type2);
            for (ErrorType kind : kinds) {
                const ReplicateSetup setup{cfg, method, size, kind, shared};
                const std::uint64_t group_seed =
                    derive_stream(cell_seed, kind == ErrorType::type1 ? 1 : 2);
                rows.push_back(SweepRow{method, size, size, kind,
                                        count_errors(setup, group_seed), cfg.repetitions,
                                        cfg.alpha});
            }
        }
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "method,n,m,error_type,rate,ci_lo,ci_hi,R,alpha\n";
    char buf[40];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    for (const SweepRow& row : rows) {
        const Interval ci = wilson_interval(row.errors, row.repetitions, 0.95);
        os << to_string(row.method) << ',' << row.n << ',' << row.m << ','
           << (row.error_type == ErrorType::type1 ? "type1" : "type2") << ','
           << num(row.rate()) << ',' << num(ci.lo) << ',' << num(ci.hi) << ','
           << row.repetitions << ',' << num(row.alpha) << '\n';
    }
    return os.str();
}

} // namespace d2st::experiment
