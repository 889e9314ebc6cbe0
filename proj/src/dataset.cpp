#include "lineident/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lineident/parallel.hpp"

namespace lineident {

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> predictor_names(int m) {
    std::vector<std::string> names;
    auto block = [&](const char* prefix, int count) {
        for (int i = 1; i <= count; ++i) names.push_back(prefix + std::to_string(i));
    };
    block("e_", m);
    block("td_", m);
    block("cvu_", m);
    block("cvd_", m);
    block("n_", m - 1);
    return names;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

double parse_double(const std::string& s) {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("malformed numeric field: " + s);
    return v;
}

int infer_m_from_header(const std::vector<std::string>& header) {
    int m = 0;
    for (const std::string& name : header)
        if (name.rfind("e_", 0) == 0) ++m;
    if (m < 2) throw std::invalid_argument("CSV header does not describe a line table");
    return m;
}

}  // namespace

std::pair<int, int> buffer_capacity_bounds(double td_a, double td_b, const SamplingRanges& ranges) {
    const double td = std::max(td_a, td_b);
    if (!(td > 0.0)) throw std::invalid_argument("buffer_capacity_bounds: downtimes must be positive");
    int lo = static_cast<int>(std::ceil(ranges.n_mult_lo * td));
    int hi = static_cast<int>(std::floor(ranges.n_mult_hi * td));
    if (lo < 1) lo = 1;
    if (lo > hi)
        throw std::invalid_argument("buffer_capacity_bounds: empty capacity range");
    return {lo, hi};
}

std::vector<LineConfig> generate_lines(int m, int count, const SamplingRanges& ranges,
                                       std::uint64_t seed) {
    if (m < 2) throw std::invalid_argument("generate_lines: m must be >= 2");
    if (count < 0) throw std::invalid_argument("generate_lines: count must be >= 0");
    if (!(ranges.e_lo > 0.0) || !(ranges.e_hi < 1.0) || !(ranges.e_lo <= ranges.e_hi) ||
        !(ranges.td_lo > 0.0) || !(ranges.td_lo <= ranges.td_hi) ||
        !(ranges.cv_lo > 0.0) || !(ranges.cv_lo <= ranges.cv_hi) ||
        !(ranges.n_mult_lo > 0.0) || !(ranges.n_mult_lo <= ranges.n_mult_hi))
        throw std::invalid_argument("generate_lines: malformed sampling ranges");

    std::vector<LineConfig> lines;
    lines.reserve(count);
    for (int idx = 0; idx < count; ++idx) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(idx)));
        std::vector<double> e(m), td(m), cvu(m), cvd(m);
        for (int i = 0; i < m; ++i) e[i] = rng.uniform(ranges.e_lo, ranges.e_hi);
        for (int i = 0; i < m; ++i) td[i] = rng.uniform(ranges.td_lo, ranges.td_hi);
        for (int i = 0; i < m; ++i) cvu[i] = rng.uniform(ranges.cv_lo, ranges.cv_hi);
        for (int i = 0; i < m; ++i) cvd[i] = rng.uniform(ranges.cv_lo, ranges.cv_hi);
        std::vector<MachineParams> machines;
        machines.reserve(m);
        for (int i = 0; i < m; ++i) machines.emplace_back(e[i], td[i], cvu[i], cvd[i]);
        std::vector<int> buffers(m - 1);
        for (int j = 0; j < m - 1; ++j) {
            const auto [lo, hi] = buffer_capacity_bounds(td[j], td[j + 1], ranges);
            buffers[j] = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
        }
        lines.emplace_back(std::move(machines), std::move(buffers));
    }
    return lines;
}

Dataset build_dataset(const std::vector<LineConfig>& lines, const SimConfig& cfg, int threads) {
    if (lines.empty()) throw std::invalid_argument("build_dataset: no lines");
    const int m = lines[0].m();
    for (const LineConfig& line : lines)
        if (line.m() != m) throw std::invalid_argument("build_dataset: mixed machine counts");

    Dataset data;
    data.m = m;
    data.predictors.resize(lines.size());
    data.responses.resize(lines.size());
    parallel_for(static_cast<int>(lines.size()), threads, [&](int i) {
        SimConfig line_cfg = cfg;
        line_cfg.base_seed = mix_seed(cfg.base_seed, static_cast<std::uint64_t>(i));
        const MetricsVector mv = simulate_metrics(lines[i], line_cfg);
        data.predictors[i] = to_predictor_vector(lines[i]);
        data.responses[i] = mv.flat();
    });
    return data;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction,
                                          std::uint64_t seed) {
    if (!(train_fraction >= 0.0) || !(train_fraction <= 1.0))
        throw std::invalid_argument("split_dataset: train_fraction must lie in [0, 1]");
    const std::size_t n = data.rows();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0));
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(order[i - 1], order[j]);
    }
    const std::size_t train_count =
        static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
    Dataset train, test;
    train.m = test.m = data.m;
    for (std::size_t i = 0; i < n; ++i) {
        Dataset& dst = i < train_count ? train : test;
        dst.predictors.push_back(data.predictors[order[i]]);
        dst.responses.push_back(data.responses[order[i]]);
    }
    return {std::move(train), std::move(test)};
}

void save_dataset_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dataset_csv: cannot open " + path);
    std::vector<std::string> names = predictor_names(data.m);
    for (const std::string& s : metric_names(data.m, true)) names.push_back(s);
    for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
    out << '\n';
    for (std::size_t r = 0; r < data.rows(); ++r) {
        bool first = true;
        for (double v : data.predictors[r]) {
            out << (first ? "" : ",") << format_double(v);
            first = false;
        }
        for (double v : data.responses[r]) out << ',' << format_double(v);
        out << '\n';
    }
    if (!out) throw std::runtime_error("save_dataset_csv: write failed for " + path);
}

Dataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_dataset_csv: empty file");
    const auto header = split_csv_line(line);
    const int m = infer_m_from_header(header);
    const std::size_t n_pred = static_cast<std::size_t>(4 * m + m - 1);
    const std::size_t n_resp = static_cast<std::size_t>(1 + 8 * (m - 1));
    if (header.size() != n_pred + n_resp)
        throw std::runtime_error("load_dataset_csv: unexpected column count");

    Dataset data;
    data.m = m;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != n_pred + n_resp)
            throw std::runtime_error("load_dataset_csv: row width mismatch");
        std::vector<double> pred(n_pred), resp(n_resp);
        for (std::size_t i = 0; i < n_pred; ++i) pred[i] = parse_double(fields[i]);
        for (std::size_t i = 0; i < n_resp; ++i) resp[i] = parse_double(fields[n_pred + i]);
        data.predictors.push_back(std::move(pred));
        data.responses.push_back(std::move(resp));
    }
    return data;
}

void save_lines_csv(const std::vector<LineConfig>& lines, const std::string& path) {
    if (lines.empty()) throw std::invalid_argument("save_lines_csv: no lines");
    const int m = lines[0].m();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_lines_csv: cannot open " + path);
    const auto names = predictor_names(m);
    for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
    out << '\n';
    for (const LineConfig& lc : lines) {
        if (lc.m() != m) throw std::invalid_argument("save_lines_csv: mixed machine counts");
        bool first = true;
        for (double v : to_predictor_vector(lc)) {
            out << (first ? "" : ",") << format_double(v);
            first = false;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("save_lines_csv: write failed for " + path);
}

std::vector<LineConfig> load_lines_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_lines_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_lines_csv: empty file");
    const auto header = split_csv_line(line);
    const int m = infer_m_from_header(header);
    const std::size_t n_pred = static_cast<std::size_t>(4 * m + m - 1);
    if (header.size() != n_pred)
        throw std::runtime_error("load_lines_csv: unexpected column count");

    std::vector<LineConfig> lines;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != n_pred)
            throw std::runtime_error("load_lines_csv: row width mismatch");
        std::vector<double> x(static_cast<std::size_t>(4 * m));
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = parse_double(fields[i]);
        std::vector<int> buffers(m - 1);
        for (int j = 0; j < m - 1; ++j) {
            const double raw = parse_double(fields[4 * m + j]);
            buffers[j] = static_cast<int>(std::lround(raw));
            if (std::fabs(raw - buffers[j]) > 1e-9)
                throw std::runtime_error("load_lines_csv: non-integer buffer capacity");
        }
        lines.push_back(line_from_params(x, std::move(buffers)));
    }
    return lines;
}

std::string dataset_meta_to_json(const DatasetMeta& meta) {
    nlohmann::json j;
    j["format_version"] = meta.format_version;
    j["kind"] = meta.kind;
    j["m"] = meta.m;
    j["rows"] = meta.rows;
    j["seed"] = meta.seed;
    if (meta.has_sim) {
        j["sim"] = {{"warmup", meta.sim.warmup},
                    {"horizon", meta.sim.horizon},
                    {"replications", meta.sim.replications},
                    {"base_seed", meta.sim.base_seed}};
    }
    if (meta.has_ranges) {
        const SamplingRanges& r = meta.ranges;
        j["ranges"] = {{"e", {r.e_lo, r.e_hi}},
                       {"t_down", {r.td_lo, r.td_hi}},
                       {"cv", {r.cv_lo, r.cv_hi}},
                       {"n_multiplier", {r.n_mult_lo, r.n_mult_hi}}};
    }
    return j.dump(2) + "\n";
}

DatasetMeta dataset_meta_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    DatasetMeta meta;
    meta.format_version = j.at("format_version").get<int>();
    meta.kind = j.at("kind").get<std::string>();
    meta.m = j.at("m").get<int>();
    meta.rows = j.at("rows").get<std::int64_t>();
    meta.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("sim")) {
        const auto& s = j.at("sim");
        meta.sim.warmup = s.at("warmup").get<int>();
        meta.sim.horizon = s.at("horizon").get<int>();
        meta.sim.replications = s.at("replications").get<int>();
        meta.sim.base_seed = s.at("base_seed").get<std::uint64_t>();
        meta.has_sim = true;
    }
    if (j.contains("ranges")) {
        const auto& r = j.at("ranges");
        meta.ranges.e_lo = r.at("e").at(0).get<double>();
        meta.ranges.e_hi = r.at("e").at(1).get<double>();
        meta.ranges.td_lo = r.at("t_down").at(0).get<double>();
        meta.ranges.td_hi = r.at("t_down").at(1).get<double>();
        meta.ranges.cv_lo = r.at("cv").at(0).get<double>();
        meta.ranges.cv_hi = r.at("cv").at(1).get<double>();
        meta.ranges.n_mult_lo = r.at("n_multiplier").at(0).get<double>();
        meta.ranges.n_mult_hi = r.at("n_multiplier").at(1).get<double>();
        meta.has_ranges = true;
    }
    return meta;
}

}  // namespace lineident
