#include "lineident/surrogate.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lineident/lbfgs.hpp"
#include "lineident/manifest.hpp"
#include "lineident/parallel.hpp"
#include "lineident/rng.hpp"

namespace lineident {

namespace {

void check_dims(const std::vector<int>& dims) {
    if (dims.size() < 2) throw std::invalid_argument("mlp: need at least input and output layers");
    for (int d : dims)
        if (d < 1) throw std::invalid_argument("mlp: layer sizes must be positive");
    if (dims.back() != 1) throw std::invalid_argument("mlp: output layer must be scalar");
}

// Column of the full (PL4-including) response layout backing objective
// metric i.
std::size_t full_response_column([[maybe_unused]] int m, int objective_index) {
    if (objective_index == 0) return 0;
    const int j = (objective_index - 1) / 7;       // buffer, 0-based
    const int within = (objective_index - 1) % 7;  // WIP,P0,PN,PL1,PL2,PL3,B0
    return 1 + 8 * static_cast<std::size_t>(j) + (within == 6 ? 7 : within);
}

}  // namespace

int mlp_parameter_count(const std::vector<int>& dims) {
    check_dims(dims);
    int count = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
        count += dims[l + 1] * dims[l] + dims[l + 1];
    return count;
}

std::vector<int> default_hidden_sizes(int m) {
    if (m < 2) throw std::invalid_argument("default_hidden_sizes: m must be >= 2");
    if (m >= 5) return {64, 32, 32};
    return {64, 32};
}

namespace {

void unpack_theta(const std::vector<int>& dims, const Eigen::VectorXd& theta,
                  std::vector<Eigen::MatrixXd>& weights, std::vector<Eigen::VectorXd>& biases) {
    const std::size_t layers = dims.size() - 1;
    weights.resize(layers);
    biases.resize(layers);
    int pos = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        const int rows = dims[l + 1], cols = dims[l];
        weights[l].resize(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) weights[l](r, c) = theta[pos++];
        biases[l].resize(rows);
        for (int r = 0; r < rows; ++r) biases[l](r) = theta[pos++];
    }
}

void pack_theta(const std::vector<Eigen::MatrixXd>& weights,
                const std::vector<Eigen::VectorXd>& biases, Eigen::VectorXd& theta) {
    int pos = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        for (int r = 0; r < weights[l].rows(); ++r)
            for (int c = 0; c < weights[l].cols(); ++c) theta[pos++] = weights[l](r, c);
        for (int r = 0; r < biases[l].size(); ++r) theta[pos++] = biases[l](r);
    }
}

}  // namespace

double mlp_loss_gradient(const std::vector<int>& dims, const Eigen::VectorXd& theta,
                         const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         Eigen::VectorXd& grad) {
    check_dims(dims);
    if (X.cols() != dims.front())
        throw std::invalid_argument("mlp_loss_gradient: input width mismatch");
    if (X.rows() != y.size())
        throw std::invalid_argument("mlp_loss_gradient: sample count mismatch");
    if (theta.size() != mlp_parameter_count(dims))
        throw std::invalid_argument("mlp_loss_gradient: parameter vector length mismatch");

    const std::size_t layers = dims.size() - 1;
    const long n = X.rows();
    std::vector<Eigen::MatrixXd> W;
    std::vector<Eigen::VectorXd> b;
    unpack_theta(dims, theta, W, b);

    // Forward pass; activations[l] feeds layer l.
    std::vector<Eigen::MatrixXd> activations(layers + 1);
    activations[0] = X;
    for (std::size_t l = 0; l < layers; ++l) {
        Eigen::MatrixXd z = activations[l] * W[l].transpose();
        z.rowwise() += b[l].transpose();
        if (l + 1 < layers) z = z.cwiseMax(0.0);  // ReLU on hidden layers
        activations[l + 1] = std::move(z);
    }

    const Eigen::VectorXd residual = activations[layers].col(0) - y;
    const double loss = residual.squaredNorm() / static_cast<double>(n);

    // Backward pass.
    std::vector<Eigen::MatrixXd> dW(layers);
    std::vector<Eigen::VectorXd> db(layers);
    Eigen::MatrixXd delta = (2.0 / static_cast<double>(n)) * residual;
    for (std::size_t l = layers; l-- > 0;) {
        dW[l].noalias() = delta.transpose() * activations[l];
        db[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            Eigen::MatrixXd next = delta * W[l];
            // activations[l] is post-ReLU, so its positivity encodes relu'.
            delta = next.cwiseProduct(
                (activations[l].array() > 0.0).cast<double>().matrix());
        }
    }

    grad.resize(theta.size());
    pack_theta(dW, db, grad);
    return loss;
}

namespace {

Eigen::VectorXd glorot_init(const std::vector<int>& dims, std::uint64_t seed) {
    Eigen::VectorXd theta(mlp_parameter_count(dims));
    int pos = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Rng rng(mix_seed(seed, l));
        const int fan_in = dims[l], fan_out = dims[l + 1];
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (int i = 0; i < fan_out * fan_in; ++i) theta[pos++] = rng.uniform(-limit, limit);
        for (int i = 0; i < fan_out; ++i) theta[pos++] = 0.0;
    }
    return theta;
}

}  // namespace

MlpModel train_model(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const std::vector<int>& hidden, const TrainConfig& cfg,
                     TrainReport* report) {
    if (X.rows() < 1) throw std::invalid_argument("train_model: empty training set");
    if (X.rows() != y.size()) throw std::invalid_argument("train_model: sample count mismatch");

    std::vector<int> dims;
    dims.push_back(static_cast<int>(X.cols()));
    for (int hsz : hidden) dims.push_back(hsz);
    dims.push_back(1);
    check_dims(dims);

    // z-score standardization from the training rows; constant features get
    // unit scale so the transform stays well defined.
    Eigen::VectorXd mean = X.colwise().mean();
    Eigen::VectorXd var = (X.rowwise() - mean.transpose()).array().square().colwise().mean();
    Eigen::VectorXd stdev = var.array().sqrt();
    for (long i = 0; i < stdev.size(); ++i)
        if (!(stdev[i] > 1e-12)) stdev[i] = 1.0;
    Eigen::MatrixXd Xs = (X.rowwise() - mean.transpose()).array().rowwise() /
                         stdev.transpose().array();

    Eigen::VectorXd theta = glorot_init(dims, cfg.seed);

    LbfgsOptions opt;
    opt.max_iterations = cfg.max_iterations;
    opt.grad_tolerance = cfg.grad_tolerance;
    opt.history = cfg.history;
    opt.verbose = cfg.verbose;
    LbfgsReport lr;
    if (cfg.max_iterations > 0) {
        lr = lbfgs_minimize(
            [&](const Eigen::VectorXd& t, Eigen::VectorXd& g) {
                return mlp_loss_gradient(dims, t, Xs, y, g);
            },
            theta, opt);
    } else {
        Eigen::VectorXd g;
        lr.final_value = mlp_loss_gradient(dims, theta, Xs, y, g);
    }

    MlpModel model;
    model.dims = dims;
    unpack_theta(dims, theta, model.weights, model.biases);
    model.feat_mean = std::move(mean);
    model.feat_std = std::move(stdev);
    if (report) {
        report->train_mse = lr.final_value;
        report->iterations = lr.iterations;
        report->converged = lr.converged;
        report->used_fallback = lr.used_fallback;
    }
    return model;
}

double MlpModel::predict(std::span<const double> x) const {
    if (static_cast<long>(x.size()) != feat_mean.size())
        throw std::invalid_argument("MlpModel::predict: input width mismatch");
    thread_local Eigen::VectorXd a, z;
    a.resize(feat_mean.size());
    for (long i = 0; i < a.size(); ++i) a[i] = (x[i] - feat_mean[i]) / feat_std[i];
    const std::size_t layers = weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        z.noalias() = weights[l] * a;
        z += biases[l];
        if (l + 1 < layers) z = z.cwiseMax(0.0);
        a.swap(z);
    }
    return a[0];
}

void MlpModel::predict_rows(const std::vector<std::vector<double>>& rows,
                            std::vector<double>& out) const {
    out.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = predict(rows[i]);
}

void SurrogateBundle::predict_all(std::span<const double> predictors,
                                  std::span<double> out) const {
    if (out.size() != models.size())
        throw std::invalid_argument("SurrogateBundle::predict_all: output span size mismatch");
    for (std::size_t i = 0; i < models.size(); ++i) out[i] = models[i].predict(predictors);
}

SurrogateBundle train_bundle(const Dataset& train, const TrainConfig& cfg, int threads,
                             std::vector<TrainReport>* reports) {
    if (train.rows() == 0) throw std::invalid_argument("train_bundle: empty training set");
    const int m = train.m;
    const int k = objective_metric_count(m);
    const std::size_t n = train.rows();
    const std::size_t width = train.predictors[0].size();
    if (width != static_cast<std::size_t>(5 * m - 1))
        throw std::invalid_argument("train_bundle: predictor width mismatch");

    Eigen::MatrixXd X(n, width);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < width; ++c) X(r, c) = train.predictors[r][c];

    const std::vector<int> hidden = cfg.hidden.empty() ? default_hidden_sizes(m) : cfg.hidden;

    SurrogateBundle bundle;
    bundle.m = m;
    bundle.metric_ids = metric_names(m, false);
    bundle.models.resize(k);
    if (reports) reports->assign(k, {});

    parallel_for(k, threads, [&](int i) {
        const std::size_t col = full_response_column(m, i);
        Eigen::VectorXd y(n);
        for (std::size_t r = 0; r < n; ++r) y[r] = train.responses[r][col];
        TrainConfig model_cfg = cfg;
        model_cfg.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(i));
        TrainReport rep;
        bundle.models[i] = train_model(X, y, hidden, model_cfg, &rep);
        if (reports) (*reports)[i] = rep;
    });
    return bundle;
}

std::vector<MetricErrorSummary> evaluate_bundle(const SurrogateBundle& bundle,
                                                const Dataset& test, int threads) {
    if (test.rows() == 0) throw std::invalid_argument("evaluate_bundle: empty test set");
    if (test.m != bundle.m) throw std::invalid_argument("evaluate_bundle: machine count mismatch");
    const int m = bundle.m;
    const int k = objective_metric_count(m);
    std::vector<MetricErrorSummary> out(k);

    parallel_for(k, threads, [&](int i) {
        const MetricKind kind = metric_kind(m, i);
        const std::size_t col = full_response_column(m, i);
        const std::size_t cap_col =
            kind == MetricKind::wip ? 4 * m + (i - 1) / 7 : 0;
        double total = 0.0;
        long fallbacks = 0;
        bool percent = false;
        for (std::size_t r = 0; r < test.rows(); ++r) {
            const double est = bundle.models[i].predict(test.predictors[r]);
            const double truth = test.responses[r][col];
            const double cap = kind == MetricKind::wip ? test.predictors[r][cap_col] : 0.0;
            const MetricError err = metric_error(kind, est, truth, cap);
            total += err.value;
            if (err.absolute_fallback) ++fallbacks;
            percent = percent || err.percent;
        }
        out[i].metric_id = bundle.metric_ids[i];
        out[i].mean_error = total / static_cast<double>(test.rows());
        out[i].percent = percent;
        out[i].fallback_rows = fallbacks;
    });
    return out;
}

namespace {

nlohmann::json model_to_json(const MlpModel& model) {
    nlohmann::json j;
    j["dims"] = model.dims;
    nlohmann::json weights = nlohmann::json::array();
    for (const Eigen::MatrixXd& W : model.weights) {
        nlohmann::json rows = nlohmann::json::array();
        for (int r = 0; r < W.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (int c = 0; c < W.cols(); ++c) row.push_back(W(r, c));
            rows.push_back(std::move(row));
        }
        weights.push_back(std::move(rows));
    }
    j["weights"] = std::move(weights);
    nlohmann::json biases = nlohmann::json::array();
    for (const Eigen::VectorXd& b : model.biases) {
        nlohmann::json row = nlohmann::json::array();
        for (int r = 0; r < b.size(); ++r) row.push_back(b(r));
        biases.push_back(std::move(row));
    }
    j["biases"] = std::move(biases);
    nlohmann::json mean = nlohmann::json::array(), stdev = nlohmann::json::array();
    for (int i = 0; i < model.feat_mean.size(); ++i) mean.push_back(model.feat_mean[i]);
    for (int i = 0; i < model.feat_std.size(); ++i) stdev.push_back(model.feat_std[i]);
    j["feat_mean"] = std::move(mean);
    j["feat_std"] = std::move(stdev);
    return j;
}

MlpModel model_from_json(const nlohmann::json& j) {
    MlpModel model;
    model.dims = j.at("dims").get<std::vector<int>>();
    check_dims(model.dims);
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    const std::size_t layers = model.dims.size() - 1;
    if (weights.size() != layers || biases.size() != layers)
        throw std::runtime_error("bundle: layer count mismatch");
    model.weights.resize(layers);
    model.biases.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        const int rows = model.dims[l + 1], cols = model.dims[l];
        if (static_cast<int>(weights[l].size()) != rows)
            throw std::runtime_error("bundle: weight row count mismatch");
        model.weights[l].resize(rows, cols);
        for (int r = 0; r < rows; ++r) {
            if (static_cast<int>(weights[l][r].size()) != cols)
                throw std::runtime_error("bundle: weight column count mismatch");
            for (int c = 0; c < cols; ++c) model.weights[l](r, c) = weights[l][r][c].get<double>();
        }
        if (static_cast<int>(biases[l].size()) != rows)
            throw std::runtime_error("bundle: bias length mismatch");
        model.biases[l].resize(rows);
        for (int r = 0; r < rows; ++r) model.biases[l](r) = biases[l][r].get<double>();
    }
    const auto& mean = j.at("feat_mean");
    const auto& stdev = j.at("feat_std");
    if (static_cast<int>(mean.size()) != model.dims.front() ||
        static_cast<int>(stdev.size()) != model.dims.front())
        throw std::runtime_error("bundle: standardization length mismatch");
    model.feat_mean.resize(mean.size());
    model.feat_std.resize(stdev.size());
    for (std::size_t i = 0; i < mean.size(); ++i) model.feat_mean[i] = mean[i].get<double>();
    for (std::size_t i = 0; i < stdev.size(); ++i) {
        model.feat_std[i] = stdev[i].get<double>();
        if (!(model.feat_std[i] > 0.0))
            throw std::runtime_error("bundle: standardization scale must be positive");
    }
    return model;
}

}  // namespace

void save_bundle(const SurrogateBundle& bundle, const std::string& path) {
    if (bundle.models.size() != bundle.metric_ids.size())
        throw std::invalid_argument("save_bundle: inconsistent bundle");
    nlohmann::json models = nlohmann::json::object();
    for (std::size_t i = 0; i < bundle.models.size(); ++i)
        models[bundle.metric_ids[i]] = model_to_json(bundle.models[i]);
    nlohmann::json j;
    j["format_version"] = 1;
    j["m"] = bundle.m;
    j["metric_order"] = bundle.metric_ids;
    j["checksum"] = "fnv1a64:" + fnv1a64_hex(models.dump());
    j["models"] = std::move(models);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_bundle: cannot open " + path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("save_bundle: write failed for " + path);
}

SurrogateBundle load_bundle(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_bundle: cannot open " + path);
    nlohmann::json j;
    in >> j;
    if (j.at("format_version").get<int>() != 1)
        throw std::runtime_error("load_bundle: unsupported format version");
    SurrogateBundle bundle;
    bundle.m = j.at("m").get<int>();
    if (bundle.m < 2) throw std::runtime_error("load_bundle: invalid machine count");
    bundle.metric_ids = j.at("metric_order").get<std::vector<std::string>>();
    const std::vector<std::string> expected = metric_names(bundle.m, false);
    if (bundle.metric_ids != expected)
        throw std::runtime_error("load_bundle: metric order mismatch");

    const auto& models = j.at("models");
    const std::string checksum = "fnv1a64:" + fnv1a64_hex(models.dump());
    if (j.at("checksum").get<std::string>() != checksum)
        throw std::runtime_error("load_bundle: checksum mismatch (corrupted bundle)");

    const int input_dim = 5 * bundle.m - 1;
    bundle.models.reserve(bundle.metric_ids.size());
    for (const std::string& id : bundle.metric_ids) {
        if (!models.contains(id))
            throw std::runtime_error("load_bundle: missing model for " + id);
        MlpModel model = model_from_json(models.at(id));
        if (model.dims.front() != input_dim)
            throw std::runtime_error("load_bundle: model input width disagrees with m");
        bundle.models.push_back(std::move(model));
    }
    return bundle;
}

}  // namespace lineident
