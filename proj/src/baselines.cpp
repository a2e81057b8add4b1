#include "d2st/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "d2st/errors.hpp"
#include "d2st/rng.hpp"

namespace d2st::baselines {

double median_heuristic(const Matrix& pooled) {
    const std::size_t n = pooled.rows();
    if (n < 2)
        throw contract_error("median_heuristic: need at least 2 points");

    std::vector<double> dist;
    dist.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < pooled.cols(); ++k) {
                const double d = pooled(i, k) - pooled(j, k);
                s += d * d;
            }
            dist.push_back(std::sqrt(s));
        }
    std::sort(dist.begin(), dist.end());

    const std::size_t count = dist.size();
    double median = count % 2 == 1 ? dist[count / 2]
                                   : 0.5 * (dist[count / 2 - 1] + dist[count / 2]);
    if (median == 0.0) {
        const auto first_nonzero = std::find_if(dist.begin(), dist.end(),
                                                [](double d) { return d > 0.0; });
        if (first_nonzero == dist.end())
            throw numeric_error("median_heuristic: all points identical, bandwidth degenerate");
        median = *first_nonzero;
    }
    return median;
}

double gaussian_kernel(std::span<const double> a, std::span<const double> b,
                       const KernelSpec& kernel) {
    if (a.size() != b.size())
        throw contract_error("gaussian_kernel: dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return std::exp(-s / (2.0 * kernel.bandwidth * kernel.bandwidth));
}

double gaussian_mmd2_biased(const Matrix& x, const Matrix& y, const KernelSpec& kernel) {
    if (x.cols() != y.cols())
        throw contract_error("gaussian_mmd2_biased: dimension mismatch");
    if (!(kernel.bandwidth > 0.0))
        throw contract_error("gaussian_mmd2_biased: bandwidth must be > 0");
    const double n = static_cast<double>(x.rows());
    const double m = static_cast<double>(y.rows());

    double xx = 0.0, yy = 0.0, xy = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.rows(); ++j) xx += gaussian_kernel(x.row(i), x.row(j), kernel);
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.rows(); ++j) yy += gaussian_kernel(y.row(i), y.row(j), kernel);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < y.rows(); ++j) xy += gaussian_kernel(x.row(i), y.row(j), kernel);

    return xx / (n * n) + yy / (m * m) - 2.0 * xy / (n * m);
}

namespace {

BaselineOutcome kernel_permutation_test(const Matrix& x, const Matrix& y,
                                        const nulldist::PermutationPlan& plan) {
    const std::size_t n = x.rows();
    const std::size_t m = y.rows();
    const Matrix pooled = vstack(x, y);
    const KernelSpec kernel{median_heuristic(pooled)};

    // one kernel matrix; permutations only reindex it
    const std::size_t total = n + m;
    Matrix gram(total, total);
    for (std::size_t i = 0; i < total; ++i) {
        gram(i, i) = 1.0;
        for (std::size_t j = i + 1; j < total; ++j) {
            const double k = gaussian_kernel(pooled.row(i), pooled.row(j), kernel);
            gram(i, j) = k;
            gram(j, i) = k;
        }
    }

    auto stat = [&](std::span<const std::size_t> left, std::span<const std::size_t> right) {
        double xx = 0.0, yy = 0.0, xy = 0.0;
        for (std::size_t a : left)
            for (std::size_t b : left) xx += gram(a, b);
        for (std::size_t a : right)
            for (std::size_t b : right) yy += gram(a, b);
        for (std::size_t a : left)
            for (std::size_t b : right) xy += gram(a, b);
        const double dn = static_cast<double>(left.size());
        const double dm = static_cast<double>(right.size());
        return xx / (dn * dn) + yy / (dm * dm) - 2.0 * xy / (dn * dm);
    };

    BaselineOutcome out;
    out.bandwidth = kernel.bandwidth;
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    const std::span<const std::size_t> all(idx);
    out.statistic = stat(all.subspan(0, n), all.subspan(n));
    out.pvalue = nulldist::permutation_pvalue_indices(total, n, plan, stat);
    return out;
}

} // namespace

BaselineOutcome mmd_test(const Matrix& x, const Matrix& y, const nulldist::PermutationPlan& plan) {
    return kernel_permutation_test(x, y, plan);
}

BaselineOutcome kdmmd_test(const Matrix& fx, const Matrix& fy,
                           const nulldist::PermutationPlan& plan) {
    return kernel_permutation_test(fx, fy, plan);
}

void C2STConfig::validate() const {
    if (!(split_fraction > 0.0) || !(split_fraction < 1.0))
        throw contract_error("C2STConfig: split_fraction must be in (0, 1)");
    if (epochs < 1) throw contract_error("C2STConfig: epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw contract_error("C2STConfig: learning_rate must be > 0");
    if (l2_penalty < 0.0) throw contract_error("C2STConfig: l2_penalty must be >= 0");
}

double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// numerically stable -log likelihood term: log(1 + exp(-t * margin))
double log_loss(double margin, double label01) {
    const double t = 2.0 * label01 - 1.0;
    const double z = -t * margin;
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

} // namespace

C2STOutcome c2st_test(const Matrix& fx, const Matrix& fy, const C2STConfig& cfg) {
    cfg.validate();
    if (fx.cols() != fy.cols())
        throw contract_error("c2st_test: feature dimensions differ");
    const std::size_t h = fx.cols();

    // stratified split, class X labeled 1, class Y labeled 0
    Rng rng(derive_stream(cfg.seed, 0x63327374ULL));
    auto split = [&](std::size_t count) {
        std::vector<std::size_t> idx(count);
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        const auto train = static_cast<std::size_t>(
            std::llround(cfg.split_fraction * static_cast<double>(count)));
        return std::pair{idx, train};
    };
    const auto [x_idx, x_train] = split(fx.rows());
    const auto [y_idx, y_train] = split(fy.rows());
    if (x_train < 2 || y_train < 2 || fx.rows() - x_train < 2 || fy.rows() - y_train < 2)
        throw contract_error("c2st_test: split leaves fewer than 2 points per class per side");

    std::vector<double> w(h, 0.0);
    double bias = 0.0;
    const std::size_t n_train = x_train + y_train;

    auto margin = [&](std::span<const double> f) {
        double z = bias;
        for (std::size_t j = 0; j < h; ++j) z += w[j] * f[j];
        return z;
    };

    C2STOutcome out;
    std::vector<double> grad_w(h);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::fill(grad_w.begin(), grad_w.end(), 0.0);
        double grad_b = 0.0;
        double loss = 0.0;
        auto accumulate = [&](std::span<const double> f, double label) {
            const double z = margin(f);
            loss += log_loss(z, label);
            const double err = sigmoid(z) - label;
            for (std::size_t j = 0; j < h; ++j) grad_w[j] += err * f[j];
            grad_b += err;
        };
        for (std::size_t i = 0; i < x_train; ++i) accumulate(fx.row(x_idx[i]), 1.0);
        for (std::size_t i = 0; i < y_train; ++i) accumulate(fy.row(y_idx[i]), 0.0);

        double penalty = 0.0;
        for (double v : w) penalty += v * v;
        out.loss_trace.push_back(loss / static_cast<double>(n_train) +
                                 0.5 * cfg.l2_penalty * penalty);

        for (std::size_t j = 0; j < h; ++j) {
            const double g = grad_w[j] / static_cast<double>(n_train) + cfg.l2_penalty * w[j];
            w[j] -= cfg.learning_rate * g;
        }
        bias -= cfg.learning_rate * grad_b / static_cast<double>(n_train);
    }

    std::size_t correct = 0;
    std::size_t held_out = 0;
    for (std::size_t i = x_train; i < fx.rows(); ++i, ++held_out)
        if (margin(fx.row(x_idx[i])) > 0.0) ++correct;
    for (std::size_t i = y_train; i < fy.rows(); ++i, ++held_out)
        if (!(margin(fy.row(y_idx[i])) > 0.0)) ++correct;

    out.test_points = held_out;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(held_out);
    const double z = (out.accuracy - 0.5) /
                     std::sqrt(1.0 / (4.0 * static_cast<double>(held_out)));
    out.p_value = std::max(1.0 - normal_cdf(z), 1e-300);
    return out;
}

} // namespace d2st::baselines
