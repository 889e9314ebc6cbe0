// lineident: command-line front end for the production-line identification
// toolkit. Every command is batch, fully seeded, and writes a manifest with
// content digests next to its outputs.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lineident/analysis.hpp"
#include "lineident/dataset.hpp"
#include "lineident/identify.hpp"
#include "lineident/manifest.hpp"
#include "lineident/parallel.hpp"
#include "lineident/surrogate.hpp"

namespace {

using nlohmann::json;
using namespace lineident;

constexpr const char* kToolVersion = "0.1.0";

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path);
}

// Collects inputs/outputs and writes the manifest next to the main output.
class ManifestBuilder {
  public:
    ManifestBuilder(std::string command, std::vector<std::string> args, std::uint64_t seed)
        : start_(std::chrono::steady_clock::now()) {
        man_.tool_version = kToolVersion;
        man_.command = std::move(command);
        man_.args = std::move(args);
        man_.seed = seed;
    }

    void config(const json& j) { man_.config_json = j.dump(); }
    void input(const std::string& path) {
        if (!path.empty()) man_.inputs[path] = file_digest(path);
    }
    void output(const std::string& path) {
        if (!path.empty()) man_.outputs[path] = file_digest(path);
    }

    void write(const std::string& main_output) {
        using sec = std::chrono::duration<double>;
        man_.wall_clock_s = sec(std::chrono::steady_clock::now() - start_).count();
        const std::string path = main_output + ".manifest.json";
        write_manifest(man_, path);
    }

  private:
    RunManifest man_;
    std::chrono::steady_clock::time_point start_;
};

std::vector<int> parse_int_list(const std::string& text, const char* what) {
    std::vector<int> values;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t pos = 0;
            values.push_back(std::stoi(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument("");
        } catch (...) {
            throw std::invalid_argument(std::string(what) + ": bad integer '" + tok + "'");
        }
    }
    if (values.empty()) throw std::invalid_argument(std::string(what) + ": empty list");
    return values;
}

json ranges_to_json(const SamplingRanges& r) {
    return json{{"e_lo", r.e_lo},           {"e_hi", r.e_hi},
                {"td_lo", r.td_lo},         {"td_hi", r.td_hi},
                {"cv_lo", r.cv_lo},         {"cv_hi", r.cv_hi},
                {"n_mult_lo", r.n_mult_lo}, {"n_mult_hi", r.n_mult_hi}};
}

void apply_ranges_json(const json& j, SamplingRanges& r) {
    auto get_pair = [&](const char* key, double& lo, double& hi) {
        if (!j.contains(key)) return;
        const json& v = j.at(key);
        if (!v.is_array() || v.size() != 2)
            throw std::invalid_argument(std::string("ranges: '") + key +
                                        "' must be a [lo, hi] pair");
        lo = v[0].get<double>();
        hi = v[1].get<double>();
    };
    get_pair("e", r.e_lo, r.e_hi);
    get_pair("t_down", r.td_lo, r.td_hi);
    get_pair("cv", r.cv_lo, r.cv_hi);
    get_pair("n_multiplier", r.n_mult_lo, r.n_mult_hi);
    auto get = [&](const char* key, double& slot) {
        if (j.contains(key)) slot = j.at(key).get<double>();
    };
    get("e_lo", r.e_lo);
    get("e_hi", r.e_hi);
    get("td_lo", r.td_lo);
    get("td_hi", r.td_hi);
    get("cv_lo", r.cv_lo);
    get("cv_hi", r.cv_hi);
    get("n_mult_lo", r.n_mult_lo);
    get("n_mult_hi", r.n_mult_hi);
}

json sim_to_json(const SimConfig& c) {
    return json{{"warmup", c.warmup},
                {"horizon", c.horizon},
                {"replications", c.replications},
                {"base_seed", c.base_seed}};
}

json pso_to_json(const PsoConfig& p) {
    return json{{"particles", p.particles},
                {"neighborhood_increment", p.neighborhood_increment},
                {"inertia_init", p.inertia_init},
                {"inertia_max", p.inertia_max},
                {"inertia_min", p.inertia_min},
                {"accel_self", p.accel_self},
                {"accel_social", p.accel_social},
                {"improvement_tol", p.improvement_tol},
                {"stall_patience", p.stall_patience},
                {"max_iterations", p.max_iterations},
                {"max_seconds", p.max_seconds},
                {"starts", p.starts},
                {"tighten_after", p.tighten_after},
                {"tighten_percent", p.tighten_percent}};
}

void apply_pso_json(const json& j, PsoConfig& p) {
    auto geti = [&](const char* key, auto& slot) {
        if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
    };
    geti("particles", p.particles);
    geti("neighborhood_increment", p.neighborhood_increment);
    geti("inertia_init", p.inertia_init);
    geti("inertia_max", p.inertia_max);
    geti("inertia_min", p.inertia_min);
    geti("accel_self", p.accel_self);
    geti("accel_social", p.accel_social);
    geti("improvement_tol", p.improvement_tol);
    geti("stall_patience", p.stall_patience);
    geti("max_iterations", p.max_iterations);
    geti("max_seconds", p.max_seconds);
    geti("starts", p.starts);
    geti("tighten_after", p.tighten_after);
    geti("tighten_percent", p.tighten_percent);
}

json bounds_to_json(const IdentifyBounds& b) {
    return json{{"e_lo", b.e_lo},   {"e_hi", b.e_hi},   {"td_lo", b.td_lo},
                {"td_hi", b.td_hi}, {"cv_lo", b.cv_lo}, {"cv_hi", b.cv_hi}};
}

json fit_to_json(const OlsFit& f) {
    json j{{"b0", f.b0},     {"b1", f.b1},         {"r2", f.r2},
           {"se_b1", f.se_b1}, {"p_value", f.p_value}, {"n", f.n}};
    j["t_stat"] = std::isfinite(f.t_stat) ? json(f.t_stat) : json(nullptr);
    return j;
}

LineConfig load_line_row(const std::string& path, int row) {
    const std::vector<LineConfig> lines = load_lines_csv(path);
    if (row < 0 || row >= static_cast<int>(lines.size()))
        throw std::invalid_argument("row " + std::to_string(row) + " out of range for " + path);
    return lines[static_cast<std::size_t>(row)];
}

// ---------------------------------------------------------------- commands

struct GenLinesOpts {
    int m = 0;
    int count = 0;
    std::uint64_t seed = 1;
    std::string out;
    std::string ranges_file;
    std::optional<double> e_lo, e_hi, td_lo, td_hi, cv_lo, cv_hi, n_mult_lo, n_mult_hi;
};

void run_gen_lines(const GenLinesOpts& o, const std::vector<std::string>& args) {
    ManifestBuilder man("gen-lines", args, o.seed);
    SamplingRanges ranges;
    if (!o.ranges_file.empty()) {
        apply_ranges_json(json::parse(read_text_file(o.ranges_file)), ranges);
        man.input(o.ranges_file);
    }
    auto apply = [](const std::optional<double>& v, double& slot) {
        if (v) slot = *v;
    };
    apply(o.e_lo, ranges.e_lo);
    apply(o.e_hi, ranges.e_hi);
    apply(o.td_lo, ranges.td_lo);
    apply(o.td_hi, ranges.td_hi);
    apply(o.cv_lo, ranges.cv_lo);
    apply(o.cv_hi, ranges.cv_hi);
    apply(o.n_mult_lo, ranges.n_mult_lo);
    apply(o.n_mult_hi, ranges.n_mult_hi);

    const std::vector<LineConfig> lines = generate_lines(o.m, o.count, ranges, o.seed);
    save_lines_csv(lines, o.out);

    DatasetMeta meta;
    meta.kind = "lines";
    meta.m = o.m;
    meta.rows = o.count;
    meta.seed = o.seed;
    meta.ranges = ranges;
    meta.has_ranges = true;
    const std::string meta_path = o.out + ".meta.json";
    write_text_file(meta_path, dataset_meta_to_json(meta));

    man.config(json{{"m", o.m}, {"count", o.count}, {"seed", o.seed},
                    {"ranges", ranges_to_json(ranges)}});
    man.output(o.out);
    man.output(meta_path);
    man.write(o.out);
}

struct BuildDatasetOpts {
    std::string lines;
    std::string out;
    SimConfig sim;
    int threads = 0;
};

void run_build_dataset(const BuildDatasetOpts& o, const std::vector<std::string>& args) {
    ManifestBuilder man("build-dataset", args, o.sim.base_seed);
    const std::vector<LineConfig> lines = load_lines_csv(o.lines);
    man.input(o.lines);
    const Dataset data = build_dataset(lines, o.sim, o.threads);
    save_dataset_csv(data, o.out);

    DatasetMeta meta;
    meta.kind = "dataset";
    meta.m = data.m;
    meta.rows = static_cast<std::int64_t>(data.rows());
    meta.seed = o.sim.base_seed;
    meta.sim = o.sim;
    meta.has_sim = true;
    const std::string meta_path = o.out + ".meta.json";
    write_text_file(meta_path, dataset_meta_to_json(meta));

    man.config(json{{"lines", o.lines}, {"sim", sim_to_json(o.sim)}});
    man.output(o.out);
    man.output(meta_path);
    man.write(o.out);
}

struct TrainOpts {
    std::string dataset;
    std::string out_bundle;
    std::string report;
    double split = 0.75;
    std::uint64_t seed = 1;
    int max_iterations = 500;
    std::string hidden;
    int threads = 0;
    bool verbose = false;
};

void run_train(const TrainOpts& o, const std::vector<std::string>& args) {
    if (!(o.split > 0.0 && o.split <= 1.0))
        throw std::invalid_argument("--split must lie in (0, 1]");
    ManifestBuilder man("train", args, o.seed);
    const Dataset data = load_dataset_csv(o.dataset);
    man.input(o.dataset);
    auto [train_part, test_part] = split_dataset(data, o.split, mix_seed(o.seed, 0));

    TrainConfig cfg;
    cfg.max_iterations = o.max_iterations;
    cfg.seed = o.seed;
    cfg.verbose = o.verbose;
    if (!o.hidden.empty()) cfg.hidden = parse_int_list(o.hidden, "--hidden");

    std::vector<TrainReport> reports;
    const SurrogateBundle bundle = train_bundle(train_part, cfg, o.threads, &reports);
    for (std::size_t i = 0; i < reports.size(); ++i)
        if (!std::isfinite(reports[i].train_mse))
            throw std::runtime_error("training diverged on metric " + bundle.metric_ids[i]);
    save_bundle(bundle, o.out_bundle);

    json rj;
    rj["format_version"] = 1;
    rj["m"] = bundle.m;
    rj["rows_train"] = train_part.rows();
    rj["rows_test"] = test_part.rows();
    rj["split"] = o.split;
    rj["seed"] = o.seed;
    json metrics = json::array();
    std::vector<MetricErrorSummary> test_errors;
    if (test_part.rows() > 0) test_errors = evaluate_bundle(bundle, test_part, o.threads);
    for (std::size_t i = 0; i < bundle.metric_ids.size(); ++i) {
        json mj;
        mj["metric"] = bundle.metric_ids[i];
        mj["train_mse"] = reports[i].train_mse;
        mj["iterations"] = reports[i].iterations;
        mj["converged"] = reports[i].converged;
        mj["used_fallback"] = reports[i].used_fallback;
        if (!test_errors.empty()) {
            mj["test_error"] = {{"value", test_errors[i].mean_error},
                                {"percent", test_errors[i].percent},
                                {"fallback_rows", test_errors[i].fallback_rows}};
        } else {
            mj["test_error"] = nullptr;
        }
        metrics.push_back(std::move(mj));
    }
    rj["metrics"] = std::move(metrics);
    const std::string report_path = o.report.empty() ? o.out_bundle + ".report.json" : o.report;
    write_text_file(report_path, rj.dump(2) + "\n");

    man.config(json{{"dataset", o.dataset},
                    {"split", o.split},
                    {"seed", o.seed},
                    {"max_iterations", o.max_iterations},
                    {"hidden", o.hidden.empty() ? json(nullptr) : json(o.hidden)}});
    man.output(o.out_bundle);
    man.output(report_path);
    man.write(o.out_bundle);
}

struct IdentifyOpts {
    std::string bundle;
    std::string targets;
    std::string out;
    std::string n_override;
    std::string pso_config;
    std::uint64_t seed = 1;
    bool exponential = false;
    std::optional<double> t_bar, cv_bar;
    std::optional<double> e_lo, e_hi, td_lo, td_hi, cv_lo, cv_hi;
    std::optional<int> starts, particles, tighten_after, stall_patience;
    std::optional<long> pso_max_iterations;
    std::optional<double> max_seconds, lambda, aggregate_tol, validity_tol;
    bool rescore = false;
    SimConfig rescore_sim;
    bool rescore_seed_set = false;
    bool require_valid = false;
    int threads = 0;
};

void run_identify(const IdentifyOpts& o, const std::vector<std::string>& args) {
    if (o.t_bar.has_value() != o.cv_bar.has_value())
        throw std::invalid_argument("--t-bar and --cv-bar must be given together");
    if (o.exponential && o.t_bar)
        throw std::invalid_argument("--exponential and --t-bar/--cv-bar are exclusive");

    ManifestBuilder man("identify", args, o.seed);
    const SurrogateBundle bundle = load_bundle(o.bundle);
    man.input(o.bundle);
    ObservedMetrics targets = targets_from_json(read_text_file(o.targets));
    man.input(o.targets);
    if (!o.n_override.empty()) {
        const std::vector<int> n = parse_int_list(o.n_override, "--n");
        if (static_cast<int>(n.size()) != targets.m - 1)
            throw std::invalid_argument("--n: expected " + std::to_string(targets.m - 1) +
                                        " capacities");
        for (int v : n)
            if (v < 1) throw std::invalid_argument("--n: capacities must be positive");
        targets.capacities = n;
    }

    IdentifyOptions opt;
    if (!o.pso_config.empty()) {
        apply_pso_json(json::parse(read_text_file(o.pso_config)), opt.pso);
        man.input(o.pso_config);
    }
    auto apply = [](const auto& v, auto& slot) {
        if (v) slot = *v;
    };
    apply(o.e_lo, opt.bounds.e_lo);
    apply(o.e_hi, opt.bounds.e_hi);
    apply(o.td_lo, opt.bounds.td_lo);
    apply(o.td_hi, opt.bounds.td_hi);
    apply(o.cv_lo, opt.bounds.cv_lo);
    apply(o.cv_hi, opt.bounds.cv_hi);
    apply(o.starts, opt.pso.starts);
    apply(o.particles, opt.pso.particles);
    apply(o.pso_max_iterations, opt.pso.max_iterations);
    apply(o.max_seconds, opt.pso.max_seconds);
    apply(o.tighten_after, opt.pso.tighten_after);
    apply(o.stall_patience, opt.pso.stall_patience);
    apply(o.lambda, opt.lambda);
    apply(o.aggregate_tol, opt.aggregate_tol);
    apply(o.validity_tol, opt.validity_tol);
    opt.pso.threads = o.threads;
    opt.require_valid = o.require_valid;
    if (o.rescore) {
        SimConfig rs = o.rescore_sim;
        if (!o.rescore_seed_set) rs.base_seed = mix_seed(o.seed, 0x7e5c04e5eedULL);
        opt.rescore = rs;
    }

    IdentifyResult result;
    if (o.exponential) {
        opt.mode = IdentifyMode::exponential;
        result = identify_exponential(bundle, targets, opt, o.seed);
    } else if (o.t_bar) {
        opt.mode = IdentifyMode::averages;
        result = identify_with_averages(bundle, targets, *o.t_bar, *o.cv_bar, opt, o.seed);
    } else {
        result = identify(bundle, targets, opt, o.seed);
    }
    write_text_file(o.out, identify_result_to_json(result));

    json cfg{{"mode", to_string(opt.mode)},
             {"seed", o.seed},
             {"bounds", bounds_to_json(opt.bounds)},
             {"pso", pso_to_json(opt.pso)},
             {"validity_tol", opt.validity_tol},
             {"require_valid", o.require_valid}};
    if (o.t_bar)
        cfg["averages"] = {{"t_bar", *o.t_bar},
                           {"cv_bar", *o.cv_bar},
                           {"lambda", opt.lambda},
                           {"aggregate_tol", opt.aggregate_tol}};
    if (opt.rescore) cfg["rescore"] = sim_to_json(*opt.rescore);
    man.config(cfg);
    man.output(o.out);
    man.write(o.out);

    std::cerr << "identify: " << result.num_valid << "/" << result.solutions.size()
              << " valid solutions\n";
}

struct AnalyzeOpts {
    std::string results;
    std::string out;
    std::string points_csv;
    bool include_invalid = false;
};

void run_analyze(const AnalyzeOpts& o, const std::vector<std::string>& args) {
    ManifestBuilder man("analyze", args, 0);
    const IdentifyResult result = identify_result_from_json(read_text_file(o.results));
    man.input(o.results);

    const std::vector<FitPoint> points = relationship_points(result, o.include_invalid);
    if (points.size() < 3)
        throw std::runtime_error("analysis needs at least three usable solutions, have " +
                                 std::to_string(points.size()));

    json j;
    j["format_version"] = 1;
    j["m"] = result.m;
    j["mode"] = to_string(result.mode);
    j["num_solutions"] = result.solutions.size();
    j["num_valid"] = result.num_valid;
    j["include_invalid"] = o.include_invalid;
    j["points_used"] = points.size();

    OlsFit overall;
    try {
        overall = fit_overall_relationship(result, o.include_invalid);
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("overall fit failed: ") + e.what());
    }
    j["overall_fit"] = fit_to_json(overall);

    const int m = result.m;
    json machine_fits = json::array();
    for (int i = 0; i < m; ++i) {
        std::vector<double> xs, ys;
        for (const IdentifySolution& s : result.solutions) {
            if (!o.include_invalid && !s.valid) continue;
            xs.push_back(s.x[m + i]);
            ys.push_back(0.5 * (s.x[2 * m + i] + s.x[3 * m + i]));
        }
        try {
            machine_fits.push_back(fit_to_json(ols_fit(xs, ys)));
        } catch (const std::invalid_argument&) {
            machine_fits.push_back(nullptr);
        }
    }
    j["machine_fits"] = std::move(machine_fits);

    const FeasibilityResult feas =
        exp_feasibility(overall.b0, overall.b1, result.bounds.td_lo, result.bounds.td_hi);
    j["exp_feasibility"] = {
        {"t_at_cv1", std::isfinite(feas.t_at_cv1) ? json(feas.t_at_cv1) : json(nullptr)},
        {"feasible", feas.feasible},
        {"note", feas.note},
        {"td_lo", result.bounds.td_lo},
        {"td_hi", result.bounds.td_hi}};

    write_text_file(o.out, j.dump(2) + "\n");
    man.config(json{{"results", o.results}, {"include_invalid", o.include_invalid}});
    man.output(o.out);

    if (!o.points_csv.empty()) {
        std::ostringstream csv;
        csv << "solution,mean_td,mean_cv,f_obj,valid\n";
        char buf[96];
        for (const FitPoint& p : points) {
            const IdentifySolution& s = result.solutions[p.solution_index];
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%d\n", p.solution_index,
                          p.t_bar, p.cv_bar, s.f_obj, s.valid ? 1 : 0);
            csv << buf;
        }
        write_text_file(o.points_csv, csv.str());
        man.output(o.points_csv);
    }
    man.write(o.out);
}

struct SensitivityOpts {
    std::string true_line;
    int row = 0;
    std::string results;
    std::string scenarios;
    std::string sim_config;
    SimConfig sim;
    std::string out;
    bool include_invalid = false;
    int threads = 0;
};

void run_sensitivity(const SensitivityOpts& o, const std::vector<std::string>& args) {
    ManifestBuilder man("sensitivity", args, o.sim.base_seed);
    const LineConfig true_line = load_line_row(o.true_line, o.row);
    man.input(o.true_line);
    const IdentifyResult result = identify_result_from_json(read_text_file(o.results));
    man.input(o.results);
    if (result.m != true_line.m())
        throw std::invalid_argument("results and true line disagree on machine count");

    std::vector<std::vector<double>> estimates;
    for (const IdentifySolution& s : result.solutions)
        if (s.valid || o.include_invalid) estimates.push_back(s.x);
    if (estimates.empty()) throw std::runtime_error("no usable solutions in " + o.results);

    std::vector<Scenario> scenarios;
    {
        std::stringstream ss(o.scenarios);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) scenarios.push_back(scenario_from_string(tok));
    }
    if (scenarios.empty()) throw std::invalid_argument("--scenarios: empty list");

    SimConfig sim = o.sim;
    if (!o.sim_config.empty()) {
        const json sj = json::parse(read_text_file(o.sim_config));
        if (sj.contains("warmup")) sim.warmup = sj.at("warmup").get<int>();
        if (sj.contains("horizon")) sim.horizon = sj.at("horizon").get<int>();
        if (sj.contains("replications")) sim.replications = sj.at("replications").get<int>();
        if (sj.contains("base_seed")) sim.base_seed = sj.at("base_seed").get<std::uint64_t>();
        man.input(o.sim_config);
    }

    const std::vector<SensitivityCell> cells =
        evaluate_sensitivity(true_line, estimates, scenarios, sim, o.threads);

    const std::vector<std::string> names = metric_names(true_line.m(), false);
    std::ostringstream csv;
    csv << "scenario,estimate,f_obj";
    for (const std::string& n : names) csv << ',' << n;
    csv << '\n';
    char buf[64];
    for (const SensitivityCell& cell : cells) {
        csv << cell.scenario << ',' << cell.estimate_index;
        std::snprintf(buf, sizeof buf, ",%.17g", cell.f_obj);
        csv << buf;
        for (const MetricErrorSummary& e : cell.errors) {
            std::snprintf(buf, sizeof buf, ",%.17g", e.mean_error);
            csv << buf;
        }
        csv << '\n';
    }
    write_text_file(o.out, csv.str());

    std::vector<std::string> scenario_names;
    for (const Scenario& sc : scenarios) scenario_names.push_back(to_string(sc));
    man.config(json{{"true_line", o.true_line},
                    {"row", o.row},
                    {"results", o.results},
                    {"scenarios", scenario_names},
                    {"sim", sim_to_json(sim)},
                    {"include_invalid", o.include_invalid},
                    {"estimates", estimates.size()}});
    man.output(o.out);
    man.write(o.out);
}

struct TraceOpts {
    std::string line;
    int row = 0;
    int warmup = 10000;
    int horizon = 10000;
    std::uint64_t seed = 0;
    int replication = 0;
    std::string out;
    std::string metrics_out;
};

void run_trace(const TraceOpts& o, const std::vector<std::string>& args) {
    ManifestBuilder man("trace", args, o.seed);
    const LineConfig line = load_line_row(o.line, o.row);
    man.input(o.line);
    SimConfig cfg;
    cfg.warmup = o.warmup;
    cfg.horizon = o.horizon;
    cfg.replications = 1;
    cfg.base_seed = o.seed;
    const PartsFlowTrace trace = simulate(line, cfg, o.replication);
    {
        std::ofstream out(o.out, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + o.out);
        write_trace_csv(trace, out);
    }
    man.config(json{{"line", o.line},
                    {"row", o.row},
                    {"warmup", o.warmup},
                    {"horizon", o.horizon},
                    {"seed", o.seed},
                    {"replication", o.replication}});
    man.output(o.out);
    if (!o.metrics_out.empty()) {
        const MetricsVector metrics = compute_metrics(trace);
        const std::vector<double> flat = metrics.flat();
        const std::vector<std::string> names = metric_names(line.m(), true);
        json mj;
        mj["format_version"] = 1;
        mj["m"] = line.m();
        mj["n"] = line.buffers;
        json values;
        for (std::size_t i = 0; i < names.size(); ++i) values[names[i]] = flat[i];
        mj["metrics"] = std::move(values);
        write_text_file(o.metrics_out, mj.dump(2) + "\n");
        man.output(o.metrics_out);
    }
    man.write(o.out);
}

struct MakeTargetsOpts {
    std::string line;
    int row = 0;
    SimConfig sim;
    std::string out;
};

void run_make_targets(const MakeTargetsOpts& o, const std::vector<std::string>& args) {
    ManifestBuilder man("make-targets", args, o.sim.base_seed);
    const LineConfig line = load_line_row(o.line, o.row);
    man.input(o.line);
    const MetricsVector metrics = simulate_metrics(line, o.sim);
    const ObservedMetrics targets = observed_from_metrics(metrics, line.buffers);
    write_text_file(o.out, targets_to_json(targets));
    man.config(json{{"line", o.line}, {"row", o.row}, {"sim", sim_to_json(o.sim)}});
    man.output(o.out);
    man.write(o.out);
}

struct GroupsOpts {
    std::string group;
    int m = 0;
    std::string bundle;
    std::string out_json;
    std::string out_csv;
    std::uint64_t seed = 1;
    SimConfig sim;
    std::optional<int> starts, particles, tighten_after, stall_patience;
    std::optional<double> max_seconds;
    int threads = 0;
    bool list_only = false;
};

void run_groups(const GroupsOpts& o, const std::vector<std::string>& args) {
    if (o.list_only) {
        for (const GroupCase& gc : group_cases(o.group, o.m)) std::cout << gc.label << '\n';
        return;
    }
    if (o.bundle.empty() || o.out_json.empty() || o.out_csv.empty())
        throw std::invalid_argument("--bundle, --out-json and --out-csv are required");
    ManifestBuilder man("groups", args, o.seed);
    const SurrogateBundle bundle = load_bundle(o.bundle);
    man.input(o.bundle);

    IdentifyOptions opt;
    auto apply = [](const auto& v, auto& slot) {
        if (v) slot = *v;
    };
    apply(o.starts, opt.pso.starts);
    apply(o.particles, opt.pso.particles);
    apply(o.tighten_after, opt.pso.tighten_after);
    apply(o.stall_patience, opt.pso.stall_patience);
    apply(o.max_seconds, opt.pso.max_seconds);
    opt.pso.threads = o.threads;

    const GroupReport report =
        run_group_experiments(o.group, o.m, bundle, o.sim, opt, o.seed);
    write_text_file(o.out_json, group_report_json(report));
    write_text_file(o.out_csv, group_report_csv(report));

    man.config(json{{"group", o.group},
                    {"m", o.m},
                    {"seed", o.seed},
                    {"sim", sim_to_json(o.sim)},
                    {"pso", pso_to_json(opt.pso)}});
    man.output(o.out_json);
    man.output(o.out_csv);
    man.write(o.out_json);
}

int guarded(int domain_code, const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const NoValidSolutionError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 5;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return domain_code;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Serial production line simulation, surrogate training and "
                 "parameter identification toolkit"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    std::vector<std::string> args(argv + 1, argv + argc);
    int exit_code = 0;

    // gen-lines -----------------------------------------------------------
    GenLinesOpts gl;
    CLI::App* c_gl = app.add_subcommand("gen-lines", "Sample random line configurations");
    c_gl->add_option("--m", gl.m, "Number of machines")->required()->check(CLI::Range(2, 100));
    c_gl->add_option("--count", gl.count, "Number of lines")
        ->required()
        ->check(CLI::PositiveNumber);
    c_gl->add_option("--seed", gl.seed, "Base RNG seed")->capture_default_str();
    c_gl->add_option("--out", gl.out, "Output CSV path")->required();
    c_gl->add_option("--ranges-file", gl.ranges_file, "JSON file overriding sampling ranges");
    c_gl->add_option("--e-lo", gl.e_lo, "Efficiency lower bound");
    c_gl->add_option("--e-hi", gl.e_hi, "Efficiency upper bound");
    c_gl->add_option("--td-lo", gl.td_lo, "Mean downtime lower bound");
    c_gl->add_option("--td-hi", gl.td_hi, "Mean downtime upper bound");
    c_gl->add_option("--cv-lo", gl.cv_lo, "CV lower bound");
    c_gl->add_option("--cv-hi", gl.cv_hi, "CV upper bound");
    c_gl->add_option("--n-mult-lo", gl.n_mult_lo, "Capacity multiplier lower bound");
    c_gl->add_option("--n-mult-hi", gl.n_mult_hi, "Capacity multiplier upper bound");
    c_gl->callback([&] { exit_code = guarded(2, [&] { run_gen_lines(gl, args); }); });

    // build-dataset -------------------------------------------------------
    BuildDatasetOpts bd;
    CLI::App* c_bd = app.add_subcommand("build-dataset", "Simulate lines into a metric dataset");
    c_bd->add_option("--lines", bd.lines, "Line table CSV")->required();
    c_bd->add_option("--out", bd.out, "Output dataset CSV")->required();
    c_bd->add_option("--warmup", bd.sim.warmup, "Warmup cycles")->capture_default_str();
    c_bd->add_option("--horizon", bd.sim.horizon, "Recorded cycles")->capture_default_str();
    c_bd->add_option("--reps", bd.sim.replications, "Replications per line")
        ->capture_default_str();
    c_bd->add_option("--seed", bd.sim.base_seed, "Base RNG seed")->capture_default_str();
    c_bd->add_option("--threads", bd.threads, "Worker threads (0 = auto)")
        ->capture_default_str();
    c_bd->callback([&] { exit_code = guarded(3, [&] { run_build_dataset(bd, args); }); });

    // train ---------------------------------------------------------------
    TrainOpts tr;
    CLI::App* c_tr = app.add_subcommand("train", "Train the surrogate bundle");
    c_tr->add_option("--dataset", tr.dataset, "Dataset CSV")->required();
    c_tr->add_option("--out-bundle", tr.out_bundle, "Output bundle JSON")->required();
    c_tr->add_option("--report", tr.report, "Accuracy report path (default <bundle>.report.json)");
    c_tr->add_option("--split", tr.split, "Training fraction")->capture_default_str();
    c_tr->add_option("--seed", tr.seed, "Split and initialization seed")->capture_default_str();
    c_tr->add_option("--max-iterations", tr.max_iterations, "Optimizer iteration cap")
        ->capture_default_str();
    c_tr->add_option("--hidden", tr.hidden, "Hidden layer sizes, e.g. 64,32");
    c_tr->add_option("--threads", tr.threads, "Worker threads (0 = auto)")
        ->capture_default_str();
    c_tr->add_flag("--verbose", tr.verbose, "Log optimizer progress");
    c_tr->callback([&] { exit_code = guarded(4, [&] { run_train(tr, args); }); });

    // identify ------------------------------------------------------------
    IdentifyOpts id;
    CLI::App* c_id = app.add_subcommand("identify", "Identify machine parameters from metrics");
    c_id->add_option("--bundle", id.bundle, "Surrogate bundle JSON")->required();
    c_id->add_option("--targets", id.targets, "Observed metrics JSON")->required();
    c_id->add_option("--out", id.out, "Output result JSON")->required();
    c_id->add_option("--n", id.n_override, "Buffer capacities override, e.g. 12,15");
    c_id->add_option("--pso-config", id.pso_config, "JSON file overriding optimizer settings");
    c_id->add_option("--seed", id.seed, "Base RNG seed")->capture_default_str();
    c_id->add_flag("--exponential", id.exponential, "Pin both CVs to 1 (2M-dimensional search)");
    c_id->add_option("--t-bar", id.t_bar, "Known mean downtime (averages mode)");
    c_id->add_option("--cv-bar", id.cv_bar, "Known mean CV (averages mode)");
    c_id->add_option("--e-lo", id.e_lo, "Efficiency lower bound");
    c_id->add_option("--e-hi", id.e_hi, "Efficiency upper bound");
    c_id->add_option("--td-lo", id.td_lo, "Mean downtime lower bound");
    c_id->add_option("--td-hi", id.td_hi, "Mean downtime upper bound");
    c_id->add_option("--cv-lo", id.cv_lo, "CV lower bound");
    c_id->add_option("--cv-hi", id.cv_hi, "CV upper bound");
    c_id->add_option("--starts", id.starts, "Number of optimizer runs");
    c_id->add_option("--particles", id.particles, "Swarm size");
    c_id->add_option("--pso-max-iterations", id.pso_max_iterations, "Iteration cap per run");
    c_id->add_option("--max-seconds", id.max_seconds, "Time budget per run");
    c_id->add_option("--tighten-after", id.tighten_after,
                     "Runs before efficiency-bound tightening (0 = off)");
    c_id->add_option("--stall-patience", id.stall_patience,
                     "Consecutive sub-tolerance improvements before stopping");
    c_id->add_option("--lambda", id.lambda, "Aggregate penalty weight (averages mode)");
    c_id->add_option("--aggregate-tol", id.aggregate_tol,
                     "Acceptance band on aggregate residuals (averages mode)");
    c_id->add_option("--validity-tol", id.validity_tol, "Objective threshold for validity");
    c_id->add_flag("--rescore", id.rescore, "Re-score valid solutions by simulation");
    c_id->add_option("--rescore-warmup", id.rescore_sim.warmup, "Re-score warmup cycles")
        ->capture_default_str();
    c_id->add_option("--rescore-horizon", id.rescore_sim.horizon, "Re-score recorded cycles")
        ->capture_default_str();
    c_id->add_option("--rescore-reps", id.rescore_sim.replications, "Re-score replications")
        ->capture_default_str();
    c_id->add_option("--rescore-seed", id.rescore_sim.base_seed,
                     "Re-score base seed (default derived from --seed)")
        ->each([&](const std::string&) { id.rescore_seed_set = true; });
    c_id->add_flag("--require-valid", id.require_valid,
                   "Fail (exit 5) when no valid solution is found");
    c_id->add_option("--threads", id.threads, "Worker threads (0 = auto)")
        ->capture_default_str();
    c_id->callback([&] { exit_code = guarded(5, [&] { run_identify(id, args); }); });

    // analyze -------------------------------------------------------------
    AnalyzeOpts an;
    CLI::App* c_an = app.add_subcommand("analyze", "Regression and feasibility analysis");
    c_an->add_option("--results", an.results, "Identification result JSON")->required();
    c_an->add_option("--out", an.out, "Output analysis JSON")->required();
    c_an->add_option("--points-csv", an.points_csv, "Optional CSV of the fitted points");
    c_an->add_flag("--include-invalid", an.include_invalid, "Use invalid solutions too");
    c_an->callback([&] { exit_code = guarded(6, [&] { run_analyze(an, args); }); });

    // sensitivity ---------------------------------------------------------
    SensitivityOpts se;
    CLI::App* c_se = app.add_subcommand("sensitivity", "What-if robustness of estimates");
    c_se->add_option("--true-line", se.true_line, "True line CSV")->required();
    c_se->add_option("--row", se.row, "Row in the line CSV")->capture_default_str();
    c_se->add_option("--results", se.results, "Identification result JSON")->required();
    c_se->add_option("--scenarios", se.scenarios,
                     "Comma list: double-all-n, double-n:J, half-all-td, half-td:I"
                     " (optional +hold-tup suffix)")
        ->required();
    c_se->add_option("--sim-config", se.sim_config, "JSON file overriding simulation settings");
    c_se->add_option("--warmup", se.sim.warmup, "Warmup cycles")->capture_default_str();
    c_se->add_option("--horizon", se.sim.horizon, "Recorded cycles")->capture_default_str();
    c_se->add_option("--reps", se.sim.replications, "Replications")->capture_default_str();
    c_se->add_option("--seed", se.sim.base_seed, "Base RNG seed")->capture_default_str();
    c_se->add_option("--out", se.out, "Output CSV")->required();
    c_se->add_flag("--include-invalid", se.include_invalid, "Use invalid solutions too");
    c_se->add_option("--threads", se.threads, "Worker threads (0 = auto)")
        ->capture_default_str();
    c_se->callback([&] { exit_code = guarded(6, [&] { run_sensitivity(se, args); }); });

    // trace ---------------------------------------------------------------
    TraceOpts tc;
    CLI::App* c_tc = app.add_subcommand("trace", "Dump one replication's parts-flow trace");
    c_tc->add_option("--line", tc.line, "Line table CSV")->required();
    c_tc->add_option("--row", tc.row, "Row in the line CSV")->capture_default_str();
    c_tc->add_option("--warmup", tc.warmup, "Warmup cycles")->capture_default_str();
    c_tc->add_option("--horizon", tc.horizon, "Recorded cycles")->capture_default_str();
    c_tc->add_option("--seed", tc.seed, "Base RNG seed")->capture_default_str();
    c_tc->add_option("--replication", tc.replication, "Replication index")
        ->capture_default_str();
    c_tc->add_option("--out", tc.out, "Output trace CSV")->required();
    c_tc->add_option("--metrics-out", tc.metrics_out, "Optional metrics JSON for the trace");
    c_tc->callback([&] { exit_code = guarded(3, [&] { run_trace(tc, args); }); });

    // make-targets --------------------------------------------------------
    MakeTargetsOpts mt;
    CLI::App* c_mt = app.add_subcommand("make-targets",
                                        "Simulate a line and write its observed metrics");
    c_mt->add_option("--line", mt.line, "Line table CSV")->required();
    c_mt->add_option("--row", mt.row, "Row in the line CSV")->capture_default_str();
    c_mt->add_option("--warmup", mt.sim.warmup, "Warmup cycles")->capture_default_str();
    c_mt->add_option("--horizon", mt.sim.horizon, "Recorded cycles")->capture_default_str();
    c_mt->add_option("--reps", mt.sim.replications, "Replications")->capture_default_str();
    c_mt->add_option("--seed", mt.sim.base_seed, "Base RNG seed")->capture_default_str();
    c_mt->add_option("--out", mt.out, "Output targets JSON")->required();
    c_mt->callback([&] { exit_code = guarded(3, [&] { run_make_targets(mt, args); }); });

    // groups --------------------------------------------------------------
    GroupsOpts gr;
    CLI::App* c_gr = app.add_subcommand("groups", "Run a named experiment family");
    c_gr->add_option("--group", gr.group, "Family id: 1.1, 1.2, 2, 3 or 4")->required();
    c_gr->add_option("--m", gr.m, "Number of machines")->required()->check(CLI::Range(2, 100));
    c_gr->add_option("--bundle", gr.bundle, "Surrogate bundle JSON");
    c_gr->add_option("--out-json", gr.out_json, "Output report JSON");
    c_gr->add_option("--out-csv", gr.out_csv, "Output per-solution CSV");
    c_gr->add_option("--seed", gr.seed, "Base RNG seed")->capture_default_str();
    c_gr->add_option("--warmup", gr.sim.warmup, "Target warmup cycles")->capture_default_str();
    c_gr->add_option("--horizon", gr.sim.horizon, "Target recorded cycles")
        ->capture_default_str();
    c_gr->add_option("--reps", gr.sim.replications, "Target replications")
        ->capture_default_str();
    c_gr->add_option("--starts", gr.starts, "Optimizer runs per case");
    c_gr->add_option("--particles", gr.particles, "Swarm size");
    c_gr->add_option("--max-seconds", gr.max_seconds, "Time budget per run");
    c_gr->add_option("--tighten-after", gr.tighten_after,
                     "Runs before efficiency-bound tightening (0 = off)");
    c_gr->add_option("--stall-patience", gr.stall_patience,
                     "Consecutive sub-tolerance improvements before stopping");
    c_gr->add_option("--threads", gr.threads, "Worker threads (0 = auto)")
        ->capture_default_str();
    c_gr->add_flag("--list", gr.list_only, "Print the case labels and exit");
    c_gr->callback([&] { exit_code = guarded(6, [&] { run_groups(gr, args); }); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    return exit_code;
}
