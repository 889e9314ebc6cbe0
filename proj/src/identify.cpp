#include "lineident/identify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "lineident/parallel.hpp"

namespace lineident {

ObservedMetrics observed_from_metrics(const MetricsVector& metrics,
                                      std::vector<int> capacities) {
    if (static_cast<int>(capacities.size()) != metrics.m() - 1)
        throw std::invalid_argument("observed_from_metrics: capacity count mismatch");
    ObservedMetrics t;
    t.m = metrics.m();
    t.capacities = std::move(capacities);
    t.values = metrics.objective_vector();
    return t;
}

std::string to_string(IdentifyMode mode) {
    switch (mode) {
        case IdentifyMode::standard: return "standard";
        case IdentifyMode::exponential: return "exponential";
        case IdentifyMode::averages: return "averages";
    }
    throw std::logic_error("to_string: unknown identify mode");
}

IdentifyMode identify_mode_from_string(const std::string& name) {
    if (name == "standard") return IdentifyMode::standard;
    if (name == "exponential") return IdentifyMode::exponential;
    if (name == "averages") return IdentifyMode::averages;
    throw std::invalid_argument("unknown identify mode: " + name);
}

Box identification_box(int m, const IdentifyBounds& b, IdentifyMode mode) {
    if (m < 2) throw std::invalid_argument("identification_box: m must be >= 2");
    if (!(b.e_lo > 0.0) || !(b.e_hi < 1.0) || !(b.e_lo <= b.e_hi) || !(b.td_lo > 0.0) ||
        !(b.td_lo <= b.td_hi) || !(b.cv_lo > 0.0) || !(b.cv_lo <= b.cv_hi))
        throw std::invalid_argument("identification_box: malformed bounds");
    Box box;
    auto block = [&box](double lo, double hi, int count) {
        for (int i = 0; i < count; ++i) {
            box.lower.push_back(lo);
            box.upper.push_back(hi);
        }
    };
    block(b.e_lo, b.e_hi, m);
    block(b.td_lo, b.td_hi, m);
    if (mode != IdentifyMode::exponential) block(b.cv_lo, b.cv_hi, 2 * m);
    return box;
}

std::vector<double> expand_search_vector(std::span<const double> x, int m, IdentifyMode mode) {
    if (mode == IdentifyMode::exponential) {
        if (static_cast<int>(x.size()) != 2 * m)
            throw std::invalid_argument("expand_search_vector: expected 2M values");
        std::vector<double> full(static_cast<std::size_t>(4 * m), 1.0);
        std::copy(x.begin(), x.end(), full.begin());
        return full;
    }
    if (static_cast<int>(x.size()) != 4 * m)
        throw std::invalid_argument("expand_search_vector: expected 4M values");
    return std::vector<double>(x.begin(), x.end());
}

std::vector<double> residual_vector(const SurrogateBundle& bundle,
                                    std::span<const double> params,
                                    const ObservedMetrics& targets) {
    const int m = bundle.m;
    if (targets.m != m) throw std::invalid_argument("residual_vector: machine count mismatch");
    const int k = objective_metric_count(m);
    if (static_cast<int>(targets.values.size()) != k)
        throw std::invalid_argument("residual_vector: target length mismatch");
    if (static_cast<int>(targets.capacities.size()) != m - 1)
        throw std::invalid_argument("residual_vector: capacity count mismatch");
    if (static_cast<int>(params.size()) != 4 * m)
        throw std::invalid_argument("residual_vector: expected 4M parameters");

    thread_local std::vector<double> predictors, predictions;
    predictors.assign(params.begin(), params.end());
    for (int n : targets.capacities) predictors.push_back(static_cast<double>(n));
    predictions.resize(k);
    bundle.predict_all(predictors, predictions);

    std::vector<double> residuals(k);
    for (int i = 0; i < k; ++i) {
        double r = predictions[i] - targets.values[i];
        if (metric_kind(m, i) == MetricKind::wip)
            r /= static_cast<double>(targets.capacities[(i - 1) / 7]);
        residuals[i] = r;
    }
    return residuals;
}

double objective_value(const SurrogateBundle& bundle, std::span<const double> params,
                       const ObservedMetrics& targets) {
    const std::vector<double> r = residual_vector(bundle, params, targets);
    double ss = 0.0;
    for (double v : r) ss += v * v;
    return ss / static_cast<double>(r.size());
}

namespace {

struct AggregatePair {
    double mean_td = 0.0;
    double mean_cv = 0.0;
};

AggregatePair aggregates_of(std::span<const double> full, int m) {
    AggregatePair a;
    for (int i = 0; i < m; ++i) a.mean_td += full[m + i];
    a.mean_td /= m;
    for (int i = 0; i < 2 * m; ++i) a.mean_cv += full[2 * m + i];
    a.mean_cv /= 2 * m;
    return a;
}

std::vector<MetricErrorSummary> summarize_errors(
    const std::vector<std::vector<MetricError>>& rows, const std::vector<std::string>& names) {
    std::vector<MetricErrorSummary> out;
    if (rows.empty()) return out;
    out.resize(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
        out[i].metric_id = names[i];
        for (const auto& row : rows) {
            out[i].mean_error += row[i].value;
            out[i].percent = out[i].percent || row[i].percent;
            if (row[i].absolute_fallback) ++out[i].fallback_rows;
        }
        out[i].mean_error /= static_cast<double>(rows.size());
    }
    return out;
}

}  // namespace

IdentifyResult identify(const SurrogateBundle& bundle, const ObservedMetrics& targets,
                        const IdentifyOptions& opt, std::uint64_t seed) {
    const int m = bundle.m;
    if (targets.m != m) throw std::invalid_argument("identify: machine count mismatch");
    const int k = objective_metric_count(m);
    if (static_cast<int>(targets.values.size()) != k)
        throw std::invalid_argument("identify: target length mismatch");
    if (opt.mode == IdentifyMode::averages && !(opt.lambda >= 0.0))
        throw std::invalid_argument("identify: lambda must be non-negative");

    const Box box = identification_box(m, opt.bounds, opt.mode);
    std::vector<int> tighten_dims(m);
    for (int i = 0; i < m; ++i) tighten_dims[i] = i;

    const IdentifyMode mode = opt.mode;
    Objective objective = [&bundle, &targets, m, mode, &opt](std::span<const double> x) {
        thread_local std::vector<double> full;
        full = expand_search_vector(x, m, mode);
        double f = objective_value(bundle, full, targets);
        if (mode == IdentifyMode::averages) {
            const AggregatePair a = aggregates_of(full, m);
            const double dt = a.mean_td - opt.t_bar;
            const double dc = a.mean_cv - opt.cv_bar;
            f += opt.lambda * (dt * dt + dc * dc);
        }
        return f;
    };

    const MpsoResult mres = mpso(objective, box, opt.pso, seed, tighten_dims);

    IdentifyResult result;
    result.m = m;
    result.mode = mode;
    result.seed = seed;
    result.capacities = targets.capacities;
    result.targets = targets.values;
    result.bounds = opt.bounds;
    result.validity_tol = opt.validity_tol;
    result.t_bar = opt.t_bar;
    result.cv_bar = opt.cv_bar;
    result.lambda = mode == IdentifyMode::averages ? opt.lambda : 0.0;
    result.aggregate_tol = opt.aggregate_tol;
    result.tightening_applied = mres.tightening_applied;
    result.tighten_means = mres.tighten_means;

    std::vector<std::vector<MetricError>> nn_error_rows;
    result.solutions.reserve(mres.solutions.size());
    for (const MpsoSolution& sol : mres.solutions) {
        IdentifySolution s;
        s.search_x = sol.x;
        s.x = expand_search_vector(sol.x, m, mode);
        s.f_obj = objective_value(bundle, s.x, targets);
        const AggregatePair a = aggregates_of(s.x, m);
        s.mean_td = a.mean_td;
        s.mean_cv = a.mean_cv;
        s.iterations = sol.iterations;
        s.stop_reason = sol.stop_reason;
        s.tightened = sol.tightened;
        // Validity is judged against the original (untightened) box; the
        // tightened efficiency bounds may poke slightly outside it.
        s.valid = box.contains(s.search_x, 1e-9) && s.f_obj < opt.validity_tol;
        if (mode == IdentifyMode::averages)
            s.accepted = s.valid && std::fabs(s.mean_td - opt.t_bar) < opt.aggregate_tol &&
                         std::fabs(s.mean_cv - opt.cv_bar) < opt.aggregate_tol;
        if (s.valid) {
            ++result.num_valid;
            std::vector<double> predictors(s.x);
            for (int n : targets.capacities) predictors.push_back(static_cast<double>(n));
            std::vector<double> predictions(k);
            bundle.predict_all(predictors, predictions);
            nn_error_rows.push_back(
                metric_errors(predictions, targets.values, targets.capacities));
        }
        if (s.accepted) ++result.num_accepted;
        result.solutions.push_back(std::move(s));
    }
    result.errors_nn = summarize_errors(nn_error_rows, bundle.metric_ids);

    if (opt.rescore && result.num_valid > 0) {
        std::vector<int> valid_idx;
        for (std::size_t i = 0; i < result.solutions.size(); ++i)
            if (result.solutions[i].valid) valid_idx.push_back(static_cast<int>(i));
        std::vector<std::vector<MetricError>> sim_error_rows(valid_idx.size());
        parallel_for(static_cast<int>(valid_idx.size()), opt.pso.threads, [&](int i) {
            IdentifySolution& s = result.solutions[valid_idx[i]];
            const LineConfig line = line_from_params(s.x, targets.capacities);
            SimConfig cfg = *opt.rescore;
            cfg.base_seed = mix_seed(opt.rescore->base_seed,
                                     static_cast<std::uint64_t>(valid_idx[i]));
            const MetricsVector mv = simulate_metrics(line, cfg);
            const std::vector<double> sim_values = mv.objective_vector();
            double ss = 0.0;
            for (int q = 0; q < k; ++q) {
                double r = sim_values[q] - targets.values[q];
                if (metric_kind(m, q) == MetricKind::wip)
                    r /= static_cast<double>(targets.capacities[(q - 1) / 7]);
                ss += r * r;
            }
            s.sim_f_obj = ss / static_cast<double>(k);
            sim_error_rows[i] = metric_errors(sim_values, targets.values, targets.capacities);
        });
        result.errors_sim = summarize_errors(sim_error_rows, bundle.metric_ids);
    }

    if (opt.require_valid && result.num_valid == 0)
        throw NoValidSolutionError("identify: no valid solution found");
    return result;
}

IdentifyResult identify_exponential(const SurrogateBundle& bundle,
                                    const ObservedMetrics& targets, IdentifyOptions options,
                                    std::uint64_t seed) {
    options.mode = IdentifyMode::exponential;
    return identify(bundle, targets, options, seed);
}

IdentifyResult identify_with_averages(const SurrogateBundle& bundle,
                                      const ObservedMetrics& targets, double t_bar,
                                      double cv_bar, IdentifyOptions options,
                                      std::uint64_t seed) {
    options.mode = IdentifyMode::averages;
    options.t_bar = t_bar;
    options.cv_bar = cv_bar;
    return identify(bundle, targets, options, seed);
}

std::vector<bool> validity_at(const IdentifyResult& result, double threshold) {
    const Box box = identification_box(result.m, result.bounds, result.mode);
    std::vector<bool> flags;
    flags.reserve(result.solutions.size());
    for (const IdentifySolution& s : result.solutions)
        flags.push_back(box.contains(s.search_x, 1e-9) && s.f_obj < threshold);
    return flags;
}

namespace {

nlohmann::json errors_to_json(const std::vector<MetricErrorSummary>& errors) {
    nlohmann::json arr = nlohmann::json::array();
    for (const MetricErrorSummary& e : errors)
        arr.push_back({{"metric", e.metric_id},
                       {"mean_error", e.mean_error},
                       {"percent", e.percent},
                       {"fallback_rows", e.fallback_rows}});
    return arr;
}

std::vector<MetricErrorSummary> errors_from_json(const nlohmann::json& arr) {
    std::vector<MetricErrorSummary> out;
    for (const auto& e : arr) {
        MetricErrorSummary s;
        s.metric_id = e.at("metric").get<std::string>();
        s.mean_error = e.at("mean_error").get<double>();
        s.percent = e.at("percent").get<bool>();
        s.fallback_rows = e.at("fallback_rows").get<long>();
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

std::string targets_to_json(const ObservedMetrics& targets) {
    const std::vector<std::string> names = metric_names(targets.m, false);
    if (names.size() != targets.values.size())
        throw std::invalid_argument("targets_to_json: value count mismatch");
    nlohmann::json metrics = nlohmann::json::object();
    for (std::size_t i = 0; i < names.size(); ++i) metrics[names[i]] = targets.values[i];
    nlohmann::json j;
    j["format_version"] = 1;
    j["m"] = targets.m;
    j["n"] = targets.capacities;
    j["metrics"] = std::move(metrics);
    return j.dump(2) + "\n";
}

ObservedMetrics targets_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    ObservedMetrics t;
    t.m = j.at("m").get<int>();
    if (t.m < 2) throw std::invalid_argument("targets: m must be >= 2");
    t.capacities = j.at("n").get<std::vector<int>>();
    if (static_cast<int>(t.capacities.size()) != t.m - 1)
        throw std::invalid_argument("targets: expected M-1 capacities");
    const auto& metrics = j.at("metrics");
    for (const std::string& name : metric_names(t.m, false)) {
        if (!metrics.contains(name))
            throw std::invalid_argument("targets: missing metric " + name);
        t.values.push_back(metrics.at(name).get<double>());
    }
    return t;
}

std::string identify_result_to_json(const IdentifyResult& r) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["m"] = r.m;
    j["mode"] = to_string(r.mode);
    j["seed"] = r.seed;
    j["n"] = r.capacities;
    j["targets"] = r.targets;
    j["bounds"] = {{"e", {r.bounds.e_lo, r.bounds.e_hi}},
                   {"t_down", {r.bounds.td_lo, r.bounds.td_hi}},
                   {"cv", {r.bounds.cv_lo, r.bounds.cv_hi}}};
    j["validity_tol"] = r.validity_tol;
    if (r.mode == IdentifyMode::averages)
        j["averages"] = {{"t_bar", r.t_bar},
                         {"cv_bar", r.cv_bar},
                         {"lambda", r.lambda},
                         {"tol", r.aggregate_tol}};
    j["tightening"] = {{"applied", r.tightening_applied}, {"means", r.tighten_means}};
    nlohmann::json solutions = nlohmann::json::array();
    for (const IdentifySolution& s : r.solutions) {
        nlohmann::json sj;
        sj["x"] = s.x;
        sj["search_x"] = s.search_x;
        sj["f_obj"] = s.f_obj;
        if (s.sim_f_obj >= 0.0)
            sj["sim_f_obj"] = s.sim_f_obj;
        else
            sj["sim_f_obj"] = nullptr;
        sj["valid"] = s.valid;
        sj["accepted"] = s.accepted;
        sj["mean_td"] = s.mean_td;
        sj["mean_cv"] = s.mean_cv;
        sj["iterations"] = s.iterations;
        sj["stop_reason"] = s.stop_reason;
        sj["tightened"] = s.tightened;
        solutions.push_back(std::move(sj));
    }
    j["solutions"] = std::move(solutions);
    j["num_valid"] = r.num_valid;
    j["num_accepted"] = r.num_accepted;
    j["errors_nn"] = errors_to_json(r.errors_nn);
    j["errors_sim"] = errors_to_json(r.errors_sim);
    return j.dump(2) + "\n";
}

IdentifyResult identify_result_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != 1)
        throw std::runtime_error("identify result: unsupported format version");
    IdentifyResult r;
    r.m = j.at("m").get<int>();
    r.mode = identify_mode_from_string(j.at("mode").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.capacities = j.at("n").get<std::vector<int>>();
    r.targets = j.at("targets").get<std::vector<double>>();
    const auto& b = j.at("bounds");
    r.bounds.e_lo = b.at("e").at(0).get<double>();
    r.bounds.e_hi = b.at("e").at(1).get<double>();
    r.bounds.td_lo = b.at("t_down").at(0).get<double>();
    r.bounds.td_hi = b.at("t_down").at(1).get<double>();
    r.bounds.cv_lo = b.at("cv").at(0).get<double>();
    r.bounds.cv_hi = b.at("cv").at(1).get<double>();
    r.validity_tol = j.at("validity_tol").get<double>();
    if (j.contains("averages")) {
        r.t_bar = j.at("averages").at("t_bar").get<double>();
        r.cv_bar = j.at("averages").at("cv_bar").get<double>();
        r.lambda = j.at("averages").at("lambda").get<double>();
        r.aggregate_tol = j.at("averages").at("tol").get<double>();
    }
    r.tightening_applied = j.at("tightening").at("applied").get<bool>();
    r.tighten_means = j.at("tightening").at("means").get<std::vector<double>>();
    for (const auto& sj : j.at("solutions")) {
        IdentifySolution s;
        s.x = sj.at("x").get<std::vector<double>>();
        s.search_x = sj.at("search_x").get<std::vector<double>>();
        s.f_obj = sj.at("f_obj").get<double>();
        s.sim_f_obj = sj.at("sim_f_obj").is_null() ? -1.0 : sj.at("sim_f_obj").get<double>();
        s.valid = sj.at("valid").get<bool>();
        s.accepted = sj.at("accepted").get<bool>();
        s.mean_td = sj.at("mean_td").get<double>();
        s.mean_cv = sj.at("mean_cv").get<double>();
        s.iterations = sj.at("iterations").get<long>();
        s.stop_reason = sj.at("stop_reason").get<std::string>();
        s.tightened = sj.at("tightened").get<bool>();
        r.solutions.push_back(std::move(s));
    }
    r.num_valid = j.at("num_valid").get<int>();
    r.num_accepted = j.at("num_accepted").get<int>();
    r.errors_nn = errors_from_json(j.at("errors_nn"));
    r.errors_sim = errors_from_json(j.at("errors_sim"));
    return r;
}

}  // namespace lineident
