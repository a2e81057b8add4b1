// d2st: two-sample testing with learned feature maps.
//
// Subcommands:
//   train       fit a feature net on a transfer sample pair
//   test        run one two-sample test and print a JSON result line
//   experiment  sweep sample sizes, estimating type-1/type-2 error rates
//   synth       write synthetic samples to a matrix file

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "d2st/data.hpp"
#include "d2st/errors.hpp"
#include "d2st/experiment.hpp"
#include "d2st/featmap.hpp"
#include "d2st/rng.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct TrainArgs {
    std::string x_path, y_path, out_path, trace_path, format = "csv";
    std::size_t depth = 3;
    double beta = 0.0; // 0 selects 10 sqrt(d)
    d2st::featmap::TrainConfig cfg;
};

int cmd_train(const TrainArgs& args) {
    using namespace d2st;
    const data::FileFormat format = data::parse_format(args.format);
    const Matrix xp = data::load_matrix(args.x_path, format);
    const Matrix yp = data::load_matrix(args.y_path, format);
    if (xp.cols() != yp.cols())
        throw contract_error("train: transfer samples have different dimensions (" +
                             std::to_string(xp.cols()) + " vs " + std::to_string(yp.cols()) + ")");

    const double beta = args.beta > 0.0 ? args.beta : experiment::default_beta(xp.cols());
    const featmap::FeatureNet start =
        featmap::init_net(xp.cols(), args.depth, beta, args.cfg.seed);
    const featmap::TrainOutcome outcome = featmap::train(start, xp, yp, args.cfg);

    featmap::save_net(outcome.net, args.out_path);
    if (!args.trace_path.empty()) {
        std::ofstream trace(args.trace_path, std::ios::trunc);
        if (!trace) throw io_error("cannot open " + args.trace_path + " for writing");
        trace << "epoch,best_objective\n";
        char buf[40];
        for (std::size_t e = 0; e < outcome.trace.size(); ++e) {
            std::snprintf(buf, sizeof buf, "%.17g", outcome.trace[e]);
            trace << e + 1 << ',' << buf << '\n';
        }
    }
    std::printf("final_objective %.17g\n", featmap::objective(outcome.net, xp, yp));
    return kExitOk;
}

struct TestArgs {
    std::string x_path, y_path, method, net_path, format = "csv";
    double alpha = 0.05;
    std::size_t permutations = 1000;
    std::size_t draws = 100000;
    std::uint64_t seed = 0;
};

int cmd_test(const TestArgs& args) {
    using namespace d2st;
    const data::FileFormat format = data::parse_format(args.format);
    const Matrix x = data::load_matrix(args.x_path, format);
    const Matrix y = data::load_matrix(args.y_path, format);
    const experiment::TestMethod method = experiment::parse_method(args.method);

    featmap::FeatureNet net;
    experiment::TestOptions options;
    options.alpha = args.alpha;
    options.permutations = args.permutations;
    options.asymptotic_draws = args.draws;
    options.seed = args.seed;
    if (!args.net_path.empty()) {
        net = featmap::load_net(args.net_path);
        options.net = &net;
    }

    const experiment::TestResult result = experiment::run_test(method, x, y, options);
    std::cout << experiment::to_json_line(result) << '\n';
    return kExitOk;
}

struct ExperimentArgs {
    std::string config_path, out_path;
    std::size_t threads = 0; // 0: keep config value
    bool fixed_net = false;
};

int cmd_experiment(const ExperimentArgs& args) {
    using namespace d2st;
    std::ifstream in(args.config_path);
    if (!in) throw io_error("cannot open " + args.config_path);
    std::ostringstream ss;
    ss << in.rdbuf();

    experiment::ExperimentConfig cfg = experiment::config_from_json(ss.str());
    if (args.threads > 0) cfg.threads = args.threads;
    if (args.fixed_net) cfg.fixed_net = true;

    const std::vector<experiment::SweepRow> rows = experiment::run_experiment(cfg);
    const std::string csv = experiment::sweep_csv(rows);
    if (args.out_path.empty() || args.out_path == "-") {
        std::cout << csv;
    } else {
        std::ofstream out(args.out_path, std::ios::trunc | std::ios::binary);
        if (!out) throw io_error("cannot open " + args.out_path + " for writing");
        out << csv;
        if (!out) throw io_error("write failed: " + args.out_path);
    }
    return kExitOk;
}

struct SynthArgs {
    std::string kind = "gaussian_shift", role = "p", out_path, format = "csv";
    std::size_t dim = 1, n = 100, grid = 3;
    double shift = 1.0, scale = 2.0, ratio = 4.0, transfer_delta = 0.0;
    std::uint64_t seed = 0;
    bool overwrite = false;
};

int cmd_synth(const SynthArgs& args) {
    using namespace d2st;
    data::GeneratorSpec spec;
    spec.kind = data::parse_generator_kind(args.kind);
    spec.dim = args.dim;
    spec.shift = args.shift;
    spec.scale = args.scale;
    spec.grid = args.grid;
    spec.ratio = args.ratio;
    spec.transfer_delta = args.transfer_delta;

    const Matrix m = data::generate(spec, args.n, data::parse_sample_role(args.role), args.seed);
    data::save_matrix(m, args.out_path, data::parse_format(args.format), args.overwrite);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-sample testing with learned feature maps"};
    app.require_subcommand(1);

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train a feature net on transfer data");
    train->add_option("x", train_args.x_path, "transfer sample X' matrix file")->required();
    train->add_option("y", train_args.y_path, "transfer sample Y' matrix file")->required();
    train->add_option("--out", train_args.out_path, "output net JSON path")->required();
    train->add_option("--trace", train_args.trace_path, "optional training-trace CSV path");
    train->add_option("--format", train_args.format, "input format: csv or d2b");
    train->add_option("--depth", train_args.depth, "network depth D (weight matrices: D-1)");
    train->add_option("--beta", train_args.beta, "Frobenius-product bound (default 10 sqrt(d))");
    train->add_option("--epochs", train_args.cfg.epochs);
    train->add_option("--lr", train_args.cfg.learning_rate);
    train->add_option("--batch", train_args.cfg.batch_size);
    train->add_option("--eta", train_args.cfg.eta, "early-stopping leniency");
    train->add_option("--patience", train_args.cfg.patience);
    train->add_option("--seed", train_args.cfg.seed);

    TestArgs test_args;
    CLI::App* test = app.add_subcommand("test", "run a single two-sample test");
    test->add_option("x", test_args.x_path, "sample X matrix file")->required();
    test->add_option("y", test_args.y_path, "sample Y matrix file")->required();
    test->add_option("--method", test_args.method,
                     "dmmd_perm | dmmd_asymptotic | dfda_chi2 | mmd_med | kdmmd | c2st")
        ->required();
    test->add_option("--net", test_args.net_path,
                     "feature net JSON; without it inputs are treated as embeddings");
    test->add_option("--format", test_args.format, "input format: csv or d2b");
    test->add_option("--alpha", test_args.alpha);
    test->add_option("--permutations", test_args.permutations);
    test->add_option("--draws", test_args.draws, "Monte-Carlo draws for the asymptotic null");
    test->add_option("--seed", test_args.seed);

    ExperimentArgs exp_args;
    CLI::App* exp = app.add_subcommand("experiment", "error-rate sweep from a JSON config");
    exp->add_option("config", exp_args.config_path, "experiment config JSON")->required();
    exp->add_option("--out", exp_args.out_path, "output CSV path ('-' for stdout)");
    exp->add_option("--threads", exp_args.threads, "worker threads (overrides config)");
    exp->add_flag("--fixed-net", exp_args.fixed_net, "train one net per cell instead of per replicate");

    SynthArgs synth_args;
    CLI::App* synth = app.add_subcommand("synth", "generate synthetic samples");
    synth->add_option("--kind", synth_args.kind, "gaussian_shift | gaussian_scale | blobs");
    synth->add_option("--d", synth_args.dim);
    synth->add_option("--n", synth_args.n)->required();
    synth->add_option("--role", synth_args.role, "p | q | p_transfer | q_transfer");
    synth->add_option("--shift", synth_args.shift);
    synth->add_option("--scale", synth_args.scale);
    synth->add_option("--grid", synth_args.grid);
    synth->add_option("--ratio", synth_args.ratio);
    synth->add_option("--transfer-delta", synth_args.transfer_delta);
    synth->add_option("--seed", synth_args.seed);
    synth->add_option("--out", synth_args.out_path, "output matrix path")->required();
    synth->add_option("--format", synth_args.format, "csv or d2b");
    synth->add_flag("--overwrite", synth_args.overwrite, "replace an existing output file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (train->parsed()) return cmd_train(train_args);
        if (test->parsed()) return cmd_test(test_args);
        if (exp->parsed()) return cmd_experiment(exp_args);
        if (synth->parsed()) return cmd_synth(synth_args);
    } catch (const d2st::config_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const d2st::contract_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
