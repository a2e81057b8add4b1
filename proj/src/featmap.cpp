#include "d2st/featmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "d2st/errors.hpp"
#include "d2st/rng.hpp"

namespace d2st::featmap {

namespace {

// largest double below 1; keeps forward outputs inside the open interval
// even when tanh saturates to 1.0 in floating point
const double kTanhCap = std::nextafter(1.0, 0.0);

double safe_tanh(double x) { return std::clamp(std::tanh(x), -kTanhCap, kTanhCap); }

void check_net(const FeatureNet& net, const char* who) {
    if (net.weights.size() + 1 != net.depth)
        throw contract_error(std::string(who) + ": net holds " +
                             std::to_string(net.weights.size()) + " weight matrices, expected " +
                             std::to_string(net.depth - 1));
}

} // namespace

double FeatureNet::weight_norm_product() const {
    double p = 1.0;
    for (const Matrix& w : weights) p *= w.frobenius_norm();
    return p;
}

bool FeatureNet::satisfies_beta() const {
    return weight_norm_product() <= beta * (1.0 + 1e-9);
}

void TrainConfig::validate() const {
    if (epochs < 1) throw contract_error("TrainConfig: epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw contract_error("TrainConfig: learning_rate must be > 0");
    if (batch_size < 1) throw contract_error("TrainConfig: batch_size must be >= 1");
    if (!(eta >= 0.0)) throw contract_error("TrainConfig: eta must be >= 0");
    if (patience < 1) throw contract_error("TrainConfig: patience must be >= 1");
}

FeatureNet init_net(std::size_t input_dim, std::size_t depth, double beta, std::uint64_t seed) {
    if (input_dim < 1) throw contract_error("init_net: input_dim must be >= 1");
    if (depth < 2) throw contract_error("init_net: depth must be >= 2");
    if (!(beta > 0.0)) throw contract_error("init_net: beta must be > 0");

    FeatureNet net;
    net.input_dim = input_dim;
    net.depth = depth;
    net.beta = beta;
    const std::size_t h = net.width();

    Rng rng(seed);
    for (std::size_t layer = 0; layer + 1 < depth; ++layer) {
        const std::size_t fan_in = layer == 0 ? input_dim : h;
        Matrix w(h, fan_in);
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + h));
        for (double& v : w.flat()) v = rng.uniform(-a, a);
        net.weights.push_back(std::move(w));
    }
    return project_weights(net, beta);
}

std::vector<double> forward(const FeatureNet& net, std::span<const double> z) {
    check_net(net, "forward");
    if (z.size() != net.input_dim)
        throw contract_error("forward: input length " + std::to_string(z.size()) +
                             " does not match net dimension " + std::to_string(net.input_dim));
    for (double v : z)
        if (!std::isfinite(v)) throw contract_error("forward: non-finite input");

    std::vector<double> act(z.begin(), z.end());
    for (std::size_t layer = 0; layer < net.weights.size(); ++layer) {
        act = matvec(net.weights[layer], act);
        const bool last = layer + 1 == net.weights.size();
        for (double& v : act) v = last ? safe_tanh(v) : std::max(0.0, v);
    }
    return act;
}

Matrix forward_batch(const FeatureNet& net, const Matrix& z) {
    if (z.cols() != net.input_dim)
        throw contract_error("forward_batch: input has " + std::to_string(z.cols()) +
                             " columns, net expects " + std::to_string(net.input_dim));
    Matrix out(z.rows(), net.width());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const std::vector<double> f = forward(net, z.row(i));
        for (std::size_t j = 0; j < f.size(); ++j) out(i, j) = f[j];
    }
    return out;
}

double objective(const FeatureNet& net, const Matrix& xp, const Matrix& yp) {
    if (xp.cols() != net.input_dim || yp.cols() != net.input_dim)
        throw contract_error("objective: sample dimension does not match net");
    const std::size_t h = net.width();
    // separate accumulators: identical samples cancel exactly
    std::vector<double> sum_x(h, 0.0), sum_y(h, 0.0);
    for (std::size_t i = 0; i < xp.rows(); ++i) {
        const std::vector<double> f = forward(net, xp.row(i));
        for (std::size_t j = 0; j < h; ++j) sum_x[j] += f[j];
    }
    for (std::size_t i = 0; i < yp.rows(); ++i) {
        const std::vector<double> f = forward(net, yp.row(i));
        for (std::size_t j = 0; j < h; ++j) sum_y[j] += f[j];
    }
    const double n_total = static_cast<double>(xp.rows() + yp.rows());
    double s = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
        const double v = (sum_x[j] - sum_y[j]) / n_total;
        s += v * v;
    }
    return std::sqrt(s);
}

FeatureNet project_weights(const FeatureNet& net, double beta) {
    check_net(net, "project_weights");
    if (!(beta > 0.0)) throw contract_error("project_weights: beta must be > 0");

    FeatureNet out = net;
    out.beta = beta;
    const double product = out.weight_norm_product();
    if (!std::isfinite(product))
        throw numeric_error("project_weights: weight norms are not finite");
    if (product <= beta) return out;

    for (const Matrix& w : out.weights)
        if (w.frobenius_norm() == 0.0)
            throw numeric_error("project_weights: zero-norm layer in a net exceeding beta");

    const double factor =
        std::pow(beta / product, 1.0 / static_cast<double>(out.weights.size()));
    for (Matrix& w : out.weights)
        for (double& v : w.flat()) v *= factor;
    return out;
}

namespace {

struct BatchWorkspace {
    // per-sample pre-activations and activations for every layer
    std::vector<std::vector<std::vector<double>>> pre;
    std::vector<std::vector<std::vector<double>>> act;
    std::vector<double> mean_dir; // v = (1/B) sum t_i phi_i
};

// Gradient of || (1/B) sum_i t_i phi(z_i) || with respect to every weight
// matrix, accumulated over the batch. Subgradients at relu kinks and at
// v = 0 are taken as 0.
void batch_gradient(const FeatureNet& net, const Matrix& pooled,
                    const std::vector<int>& labels, std::span<const std::size_t> batch,
                    std::vector<Matrix>& grads, BatchWorkspace& ws) {
    const std::size_t layer_count = net.weights.size();
    const std::size_t h = net.width();
    const std::size_t b = batch.size();

    ws.pre.assign(b, {});
    ws.act.assign(b, {});
    ws.mean_dir.assign(h, 0.0);

    for (std::size_t s = 0; s < b; ++s) {
        const auto row = pooled.row(batch[s]);
        std::vector<double> a(row.begin(), row.end());
        ws.pre[s].resize(layer_count);
        ws.act[s].resize(layer_count);
        for (std::size_t l = 0; l < layer_count; ++l) {
            ws.pre[s][l] = matvec(net.weights[l], a);
            a = ws.pre[s][l];
            const bool last = l + 1 == layer_count;
            for (double& v : a) v = last ? safe_tanh(v) : std::max(0.0, v);
            ws.act[s][l] = a;
        }
        const double t = labels[batch[s]];
        for (std::size_t j = 0; j < h; ++j) ws.mean_dir[j] += t * a[j] / static_cast<double>(b);
    }

    for (Matrix& g : grads)
        for (double& v : g.flat()) v = 0.0;

    double norm = 0.0;
    for (double v : ws.mean_dir) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) return;

    for (std::size_t s = 0; s < b; ++s) {
        const double t = labels[batch[s]];
        // delta at the tanh output layer
        std::vector<double> delta(h);
        for (std::size_t j = 0; j < h; ++j) {
            const double phi = ws.act[s][layer_count - 1][j];
            delta[j] = (t / static_cast<double>(b)) * (ws.mean_dir[j] / norm) * (1.0 - phi * phi);
        }
        for (std::size_t l = layer_count; l-- > 0;) {
            const std::span<const double> below =
                l == 0 ? pooled.row(batch[s]) : std::span<const double>(ws.act[s][l - 1]);
            Matrix& g = grads[l];
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j)
                    g(i, j) += delta[i] * below[j];
            if (l == 0) break;
            std::vector<double> next(net.weights[l].cols(), 0.0);
            for (std::size_t i = 0; i < net.weights[l].rows(); ++i)
                for (std::size_t j = 0; j < net.weights[l].cols(); ++j)
                    next[j] += net.weights[l](i, j) * delta[i];
            for (std::size_t j = 0; j < next.size(); ++j)
                if (!(ws.pre[s][l - 1][j] > 0.0)) next[j] = 0.0;
            delta = std::move(next);
        }
    }
}

void project_in_place(FeatureNet& net, std::size_t epoch) {
    const double product = net.weight_norm_product();
    if (!std::isfinite(product))
        throw numeric_error("train: diverged at epoch " + std::to_string(epoch) +
                            " (weight norms overflowed)");
    if (product <= net.beta) return;
    for (const Matrix& w : net.weights)
        if (w.frobenius_norm() == 0.0)
            throw numeric_error("train: zero-norm layer in a net exceeding beta");
    const double factor =
        std::pow(net.beta / product, 1.0 / static_cast<double>(net.weights.size()));
    for (Matrix& w : net.weights)
        for (double& v : w.flat()) v *= factor;
}

} // namespace

std::vector<Matrix> objective_gradient(const FeatureNet& net, const Matrix& xp,
                                       const Matrix& yp) {
    check_net(net, "objective_gradient");
    if (xp.cols() != net.input_dim || yp.cols() != net.input_dim)
        throw contract_error("objective_gradient: sample dimension does not match net");

    const Matrix pooled = vstack(xp, yp);
    std::vector<int> labels(pooled.rows(), 1);
    for (std::size_t i = xp.rows(); i < pooled.rows(); ++i) labels[i] = -1;
    std::vector<std::size_t> all(pooled.rows());
    std::iota(all.begin(), all.end(), 0);

    std::vector<Matrix> grads;
    for (const Matrix& w : net.weights) grads.emplace_back(w.rows(), w.cols());
    BatchWorkspace ws;
    batch_gradient(net, pooled, labels, all, grads, ws);
    return grads;
}

TrainOutcome train(const FeatureNet& start, const Matrix& xp, const Matrix& yp,
                   const TrainConfig& cfg) {
    check_net(start, "train");
    cfg.validate();
    if (xp.cols() != start.input_dim || yp.cols() != start.input_dim)
        throw contract_error("train: sample dimension does not match net");

    constexpr double momentum = 0.9;

    FeatureNet net = project_weights(start, start.beta);
    const Matrix pooled = vstack(xp, yp);
    std::vector<int> labels(pooled.rows(), 1);
    for (std::size_t i = xp.rows(); i < pooled.rows(); ++i) labels[i] = -1;

    std::vector<Matrix> velocity;
    std::vector<Matrix> grads;
    for (const Matrix& w : net.weights) {
        velocity.emplace_back(w.rows(), w.cols());
        grads.emplace_back(w.rows(), w.cols());
    }

    Rng rng(derive_stream(cfg.seed, 0x7261696eULL));
    std::vector<std::size_t> order(pooled.rows());
    std::iota(order.begin(), order.end(), 0);

    FeatureNet best = net;
    double best_obj = objective(net, xp, yp);
    double improvement_ref = best_obj;
    std::size_t stall = 0;

    TrainOutcome out;
    BatchWorkspace ws;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, order.size());
            batch_gradient(net, pooled, labels,
                           std::span<const std::size_t>(order).subspan(begin, end - begin),
                           grads, ws);
            for (std::size_t l = 0; l < net.weights.size(); ++l) {
                auto v = velocity[l].flat();
                auto g = grads[l].flat();
                auto w = net.weights[l].flat();
                for (std::size_t i = 0; i < w.size(); ++i) {
                    v[i] = momentum * v[i] + g[i];
                    w[i] += cfg.learning_rate * v[i];
                    if (!std::isfinite(w[i]))
                        throw numeric_error("train: diverged at epoch " + std::to_string(epoch));
                }
            }
            project_in_place(net, epoch);
        }

        const double obj = objective(net, xp, yp);
        if (obj > best_obj) {
            best_obj = obj;
            best = net;
        }
        out.trace.push_back(best_obj);

        if (best_obj > improvement_ref + cfg.eta) {
            improvement_ref = best_obj;
            stall = 0;
        } else if (++stall >= cfg.patience) {
            break;
        }
    }

    out.net = std::move(best);
    return out;
}

std::string to_json(const FeatureNet& net) {
    check_net(net, "to_json");
    char buf[40];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    std::ostringstream os;
    os << "{\"d\":" << net.input_dim << ",\"depth\":" << net.depth
       << ",\"beta\":" << num(net.beta) << ",\"weights\":[";
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        const Matrix& w = net.weights[l];
        if (l) os << ',';
        os << '[';
        for (std::size_t i = 0; i < w.rows(); ++i) {
            if (i) os << ',';
            os << '[';
            for (std::size_t j = 0; j < w.cols(); ++j) {
                if (j) os << ',';
                os << num(w(i, j));
            }
            os << ']';
        }
        os << ']';
    }
    os << "]}";
    return os.str();
}

FeatureNet from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("net JSON parse failed: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("d") || !doc.contains("depth") ||
        !doc.contains("beta") || !doc.contains("weights"))
        throw io_error("net JSON: expected keys d, depth, beta, weights");

    FeatureNet net;
    try {
        net.input_dim = doc.at("d").get<std::size_t>();
        net.depth = doc.at("depth").get<std::size_t>();
        net.beta = doc.at("beta").get<double>();
        const auto& layers = doc.at("weights");
        if (!layers.is_array() || layers.size() + 1 != net.depth)
            throw io_error("net JSON: weight count does not match depth");
        const std::size_t h = net.input_dim + 1;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& rows = layers[l];
            const std::size_t expect_cols = l == 0 ? net.input_dim : h;
            if (!rows.is_array() || rows.size() != h)
                throw io_error("net JSON: layer " + std::to_string(l) + " has wrong row count");
            Matrix w(h, expect_cols);
            for (std::size_t i = 0; i < h; ++i) {
                const auto& row = rows[i];
                if (!row.is_array() || row.size() != expect_cols)
                    throw io_error("net JSON: layer " + std::to_string(l) + " row " +
                                   std::to_string(i) + " has wrong length");
                for (std::size_t j = 0; j < expect_cols; ++j)
                    w(i, j) = row[j].get<double>();
            }
            if (!w.all_finite())
                throw io_error("net JSON: non-finite weight in layer " + std::to_string(l));
            net.weights.push_back(std::move(w));
        }
    } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("net JSON: ") + e.what());
    }
    if (net.input_dim < 1 || net.depth < 2 || !(net.beta > 0.0))
        throw io_error("net JSON: invalid d, depth, or beta");
    if (!net.satisfies_beta())
        throw io_error("net JSON: weights violate the beta constraint");
    return net;
}

void save_net(const FeatureNet& net, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << to_json(net) << '\n';
    if (!out) throw io_error("write failed: " + path.string());
}

FeatureNet load_net(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

} // namespace d2st::featmap
