#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "d2st/matrix.hpp"

namespace d2st::featmap {

// Bias-free ReLU network with a final tanh: z -> tanh(W_{D-1} relu(... relu(W_1 z))).
// W_1 is H x d with H = d + 1; deeper weights are H x H. The product of
// Frobenius norms is kept <= beta; with no biases the pre-tanh map is
// positively homogeneous, so a uniform rescale of the layers rescales
// the pre-tanh output exactly.
struct FeatureNet {
    std::size_t input_dim = 0; // d
    std::size_t depth = 2;     // D; the net holds D-1 weight matrices
    double beta = 1.0;
    std::vector<Matrix> weights;

    std::size_t width() const { return input_dim + 1; } // H

    double weight_norm_product() const;
    bool satisfies_beta() const; // product <= beta * (1 + 1e-9)
};

struct TrainConfig {
    std::size_t epochs = 200;
    double learning_rate = 0.2;
    std::size_t batch_size = 32;
    double eta = 1e-4;          // early-stopping leniency
    std::size_t patience = 25;  // epochs without > eta improvement before stopping
    std::uint64_t seed = 0;

    void validate() const;
};

// Glorot-uniform initialization (scale sqrt(6 / (fan_in + fan_out))),
// then projected onto the beta constraint. Deterministic in the seed.
FeatureNet init_net(std::size_t input_dim, std::size_t depth, double beta, std::uint64_t seed);

std::vector<double> forward(const FeatureNet& net, std::span<const double> z);
Matrix forward_batch(const FeatureNet& net, const Matrix& z);

// || (1/N) (sum_i phi(x'_i) - sum_i phi(y'_i)) ||, N = n' + m'.
// Bounded by sqrt(H).
double objective(const FeatureNet& net, const Matrix& xp, const Matrix& yp);

// Backpropagated gradient of the objective with respect to every weight
// matrix. Subgradients at relu kinks and at a zero mean difference are 0.
std::vector<Matrix> objective_gradient(const FeatureNet& net, const Matrix& xp,
                                       const Matrix& yp);

// Rescale all layers by (beta / P)^(1/(D-1)) when the norm product P
// exceeds beta; otherwise returns the net unchanged.
FeatureNet project_weights(const FeatureNet& net, double beta);

struct TrainOutcome {
    FeatureNet net;            // best net seen, by full-data objective
    std::vector<double> trace; // best-so-far objective after each epoch
};

// Minibatch gradient ascent (SGD, momentum 0.9) on the objective, with
// the beta projection applied after every update. Stops early once the
// best objective has not improved by more than eta for `patience`
// consecutive epochs.
TrainOutcome train(const FeatureNet& net, const Matrix& xp, const Matrix& yp,
                   const TrainConfig& cfg);

// JSON document {d, depth, beta, weights}; numbers carry 17 significant
// digits so the round-trip is lossless.
std::string to_json(const FeatureNet& net);
FeatureNet from_json(const std::string& text);
void save_net(const FeatureNet& net, const std::filesystem::path& path);
FeatureNet load_net(const std::filesystem::path& path);

} // namespace d2st::featmap
