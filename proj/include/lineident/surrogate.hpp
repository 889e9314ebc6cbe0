#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lineident/dataset.hpp"

namespace lineident {

// Fully connected network with ReLU hidden layers and a linear scalar
// output. Inputs are z-scored with the training statistics stored in the
// model, so predict() takes raw predictor vectors.
struct MlpModel {
    std::vector<int> dims;                  // [input, hidden..., 1]
    std::vector<Eigen::MatrixXd> weights;   // layer l: dims[l+1] x dims[l]
    std::vector<Eigen::VectorXd> biases;
    Eigen::VectorXd feat_mean, feat_std;

    double predict(std::span<const double> x) const;
    void predict_rows(const std::vector<std::vector<double>>& rows,
                      std::vector<double>& out) const;
};

struct TrainConfig {
    std::vector<int> hidden;  // empty -> default_hidden_sizes(m)
    int max_iterations = 500;
    double grad_tolerance = 1e-6;
    int history = 10;
    std::uint64_t seed = 0;
    bool verbose = false;
};

// (64, 32) up to four machines, (64, 32, 32) for longer lines.
std::vector<int> default_hidden_sizes(int m);

struct TrainReport {
    double train_mse = 0.0;
    int iterations = 0;
    bool converged = false;
    bool used_fallback = false;
};

// Trains one network on raw predictor rows X (row per sample) against y.
// Glorot-uniform initialization, full-batch MSE loss, L-BFGS optimizer.
MlpModel train_model(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const std::vector<int>& hidden, const TrainConfig& cfg,
                     TrainReport* report = nullptr);

// MSE and its gradient for a parameter vector packed as
// [W1 (row-major), b1, W2, b2, ...]; exposed for gradient verification.
double mlp_loss_gradient(const std::vector<int>& dims, const Eigen::VectorXd& theta,
                         const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         Eigen::VectorXd& grad);
int mlp_parameter_count(const std::vector<int>& dims);

// One independent model per objective metric (PL4 is measured but not
// modeled). metric_ids follows the objective metric order.
struct SurrogateBundle {
    int m = 0;
    std::vector<std::string> metric_ids;
    std::vector<MlpModel> models;

    // Evaluates every model at one predictor vector (length 4M + M-1).
    void predict_all(std::span<const double> predictors, std::span<double> out) const;
};

SurrogateBundle train_bundle(const Dataset& train, const TrainConfig& cfg, int threads = 0,
                             std::vector<TrainReport>* reports = nullptr);

struct MetricErrorSummary {
    std::string metric_id;
    double mean_error = 0.0;
    bool percent = false;
    long fallback_rows = 0;  // rows where a relative error degraded to absolute
};

// Held-out accuracy per metric: PR and B0 relative percent, WIP percent of
// the buffer capacity, probabilities absolute.
std::vector<MetricErrorSummary> evaluate_bundle(const SurrogateBundle& bundle,
                                                const Dataset& test, int threads = 0);

// JSON bundle with a content checksum; loading verifies shape consistency
// and the checksum.
void save_bundle(const SurrogateBundle& bundle, const std::string& path);
SurrogateBundle load_bundle(const std::string& path);

}  // namespace lineident
