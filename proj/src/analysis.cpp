#include "lineident/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "lineident/parallel.hpp"
#include "lineident/stats.hpp"

namespace lineident {

AggregateStats aggregate(const LineConfig& line) {
    return aggregate_from_params(to_param_vector(line), line.m());
}

AggregateStats aggregate_from_params(std::span<const double> params, int m) {
    if (static_cast<int>(params.size()) != 4 * m)
        throw std::invalid_argument("aggregate_from_params: expected 4M values");
    AggregateStats a;
    for (int i = 0; i < m; ++i) a.t_bar += params[m + i];
    a.t_bar /= m;
    for (int i = 0; i < 2 * m; ++i) a.cv_bar += params[2 * m + i];
    a.cv_bar /= 2 * m;
    return a;
}

OlsFit ols_fit(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("ols_fit: length mismatch");
    const long n = static_cast<long>(xs.size());
    if (n < 3) throw std::invalid_argument("ols_fit: need at least three points");
    double mx = 0.0, my = 0.0;
    for (long i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (long i = 0; i < n; ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("ols_fit: degenerate predictor (all x equal)");

    OlsFit fit;
    fit.n = n;
    fit.b1 = sxy / sxx;
    fit.b0 = my - fit.b1 * mx;
    double ss_res = 0.0;
    for (long i = 0; i < n; ++i) {
        const double r = ys[i] - (fit.b0 + fit.b1 * xs[i]);
        ss_res += r * r;
    }
    if (ss_res < 0.0) ss_res = 0.0;
    fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    const double nu = static_cast<double>(n - 2);
    fit.se_b1 = std::sqrt(ss_res / nu / sxx);
    if (fit.se_b1 > 0.0) {
        fit.t_stat = fit.b1 / fit.se_b1;
        fit.p_value = two_sided_p_from_t(fit.t_stat, nu);
    } else {
        // Exact fit: the slope is either certainly zero or certainly not.
        fit.t_stat = fit.b1 == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        fit.p_value = fit.b1 == 0.0 ? 1.0 : 0.0;
    }
    return fit;
}

std::vector<FitPoint> relationship_points(const IdentifyResult& result, bool include_invalid) {
    std::vector<FitPoint> points;
    for (std::size_t i = 0; i < result.solutions.size(); ++i) {
        const IdentifySolution& s = result.solutions[i];
        if (!include_invalid && !s.valid) continue;
        points.push_back({s.mean_td, s.mean_cv, static_cast<int>(i)});
    }
    return points;
}

OlsFit fit_overall_relationship(const IdentifyResult& result, bool include_invalid) {
    const std::vector<FitPoint> points = relationship_points(result, include_invalid);
    std::vector<double> xs, ys;
    xs.reserve(points.size());
    ys.reserve(points.size());
    for (const FitPoint& p : points) {
        xs.push_back(p.t_bar);
        ys.push_back(p.cv_bar);
    }
    return ols_fit(xs, ys);
}

std::vector<OlsFit> fit_machine_relationships(const IdentifyResult& result,
                                              bool include_invalid) {
    const int m = result.m;
    std::vector<OlsFit> fits;
    fits.reserve(m);
    for (int i = 0; i < m; ++i) {
        std::vector<double> xs, ys;
        for (const IdentifySolution& s : result.solutions) {
            if (!include_invalid && !s.valid) continue;
            xs.push_back(s.x[m + i]);
            ys.push_back(0.5 * (s.x[2 * m + i] + s.x[3 * m + i]));
        }
        fits.push_back(ols_fit(xs, ys));
    }
    return fits;
}

FeasibilityResult exp_feasibility(double b0, double b1, double td_lo, double td_hi) {
    if (!(td_lo <= td_hi))
        throw std::invalid_argument("exp_feasibility: downtime bounds inverted");
    FeasibilityResult res;
    if (b1 == 0.0) {
        res.t_at_cv1 = std::numeric_limits<double>::quiet_NaN();
        res.feasible = false;
        res.note = "zero slope: fitted mean CV never reaches 1";
        return res;
    }
    res.t_at_cv1 = (1.0 - b0) / b1;
    res.feasible = res.t_at_cv1 >= td_lo && res.t_at_cv1 <= td_hi;
    if (!res.feasible) res.note = "mean downtime at CV=1 outside the search range";
    return res;
}

LineConfig apply_scenario(const LineConfig& line, const Scenario& sc) {
    const int m = line.m();
    auto check_index = [&](int count, const char* what) {
        if (sc.index < 1 || sc.index > count)
            throw std::invalid_argument(std::string("apply_scenario: ") + what +
                                        " index out of range");
    };
    auto halve_machine = [&](const MachineParams& mp) {
        const double new_td = mp.t_down / 2.0;
        if (sc.td_mode == Scenario::TdMode::hold_e)
            return MachineParams(mp.e, new_td, mp.cv_up, mp.cv_down);
        const double tup = mp.t_up();
        return MachineParams(tup / (tup + new_td), new_td, mp.cv_up, mp.cv_down);
    };

    std::vector<MachineParams> machines = line.machines;
    std::vector<int> buffers = line.buffers;
    switch (sc.kind) {
        case Scenario::Kind::double_all_n:
            for (int& n : buffers) n *= 2;
            break;
        case Scenario::Kind::double_one_n:
            check_index(m - 1, "buffer");
            buffers[sc.index - 1] *= 2;
            break;
        case Scenario::Kind::half_all_td:
            for (MachineParams& mp : machines) mp = halve_machine(mp);
            break;
        case Scenario::Kind::half_one_td:
            check_index(m, "machine");
            machines[sc.index - 1] = halve_machine(machines[sc.index - 1]);
            break;
    }
    return LineConfig(std::move(machines), std::move(buffers));
}

std::string to_string(const Scenario& sc) {
    std::string base;
    switch (sc.kind) {
        case Scenario::Kind::double_all_n: base = "double-all-n"; break;
        case Scenario::Kind::double_one_n: base = "double-n:" + std::to_string(sc.index); break;
        case Scenario::Kind::half_all_td: base = "half-all-td"; break;
        case Scenario::Kind::half_one_td: base = "half-td:" + std::to_string(sc.index); break;
    }
    if (sc.td_mode == Scenario::TdMode::hold_tup &&
        (sc.kind == Scenario::Kind::half_all_td || sc.kind == Scenario::Kind::half_one_td))
        base += "+hold-tup";
    return base;
}

Scenario scenario_from_string(const std::string& text) {
    Scenario sc;
    std::string body = text;
    const std::string suffix = "+hold-tup";
    if (body.size() > suffix.size() &&
        body.compare(body.size() - suffix.size(), suffix.size(), suffix) == 0) {
        sc.td_mode = Scenario::TdMode::hold_tup;
        body = body.substr(0, body.size() - suffix.size());
    }
    auto parse_index = [&](const std::string& s) {
        try {
            std::size_t pos = 0;
            const int v = std::stoi(s, &pos);
            if (pos != s.size() || v < 1) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw std::invalid_argument("scenario_from_string: bad index in '" + text + "'");
        }
    };
    if (body == "double-all-n") {
        sc.kind = Scenario::Kind::double_all_n;
    } else if (body.rfind("double-n:", 0) == 0) {
        sc.kind = Scenario::Kind::double_one_n;
        sc.index = parse_index(body.substr(9));
    } else if (body == "half-all-td") {
        sc.kind = Scenario::Kind::half_all_td;
    } else if (body.rfind("half-td:", 0) == 0) {
        sc.kind = Scenario::Kind::half_one_td;
        sc.index = parse_index(body.substr(8));
    } else {
        throw std::invalid_argument("scenario_from_string: unknown scenario '" + text + "'");
    }
    if (sc.td_mode == Scenario::TdMode::hold_tup && sc.kind != Scenario::Kind::half_all_td &&
        sc.kind != Scenario::Kind::half_one_td)
        throw std::invalid_argument("scenario_from_string: hold-tup applies to downtime scenarios");
    return sc;
}

std::vector<SensitivityCell> evaluate_sensitivity(
    const LineConfig& true_line, const std::vector<std::vector<double>>& estimates,
    std::span<const Scenario> scenarios, const SimConfig& cfg, int threads) {
    if (estimates.empty()) throw std::invalid_argument("evaluate_sensitivity: no estimates");
    if (scenarios.empty()) throw std::invalid_argument("evaluate_sensitivity: no scenarios");
    const int m = true_line.m();
    const int k = objective_metric_count(m);
    for (const auto& est : estimates)
        if (static_cast<int>(est.size()) != 4 * m)
            throw std::invalid_argument("evaluate_sensitivity: estimate length mismatch");

    const int ns = static_cast<int>(scenarios.size());
    const int ne = static_cast<int>(estimates.size());

    // Reference metrics of the transformed true line, one per scenario.
    std::vector<std::vector<double>> reference(ns);
    std::vector<std::vector<int>> reference_caps(ns);
    parallel_for(ns, threads, [&](int si) {
        const LineConfig transformed = apply_scenario(true_line, scenarios[si]);
        SimConfig c = cfg;
        c.base_seed = mix_seed(mix_seed(cfg.base_seed, si), 0xFFFFFFFFULL);
        reference[si] = simulate_metrics(transformed, c).objective_vector();
        reference_caps[si] = transformed.buffers;
    });

    std::vector<SensitivityCell> cells(static_cast<std::size_t>(ns) * ne);
    parallel_for(ns * ne, threads, [&](int idx) {
        const int si = idx / ne;
        const int ei = idx % ne;
        const LineConfig est_line = line_from_params(estimates[ei], true_line.buffers);
        const LineConfig transformed = apply_scenario(est_line, scenarios[si]);
        SimConfig c = cfg;
        c.base_seed = mix_seed(mix_seed(cfg.base_seed, si), static_cast<std::uint64_t>(ei));
        const std::vector<double> est = simulate_metrics(transformed, c).objective_vector();

        SensitivityCell& cell = cells[idx];
        cell.estimate_index = ei;
        cell.scenario = to_string(scenarios[si]);
        double ss = 0.0;
        for (int q = 0; q < k; ++q) {
            double r = est[q] - reference[si][q];
            if (metric_kind(m, q) == MetricKind::wip)
                r /= static_cast<double>(reference_caps[si][(q - 1) / 7]);
            ss += r * r;
        }
        cell.f_obj = ss / k;
        const std::vector<MetricError> errs =
            metric_errors(est, reference[si], reference_caps[si]);
        const std::vector<std::string> names = metric_names(m, false);
        cell.errors.resize(errs.size());
        for (std::size_t q = 0; q < errs.size(); ++q) {
            cell.errors[q].metric_id = names[q];
            cell.errors[q].mean_error = errs[q].value;
            cell.errors[q].percent = errs[q].percent;
            cell.errors[q].fallback_rows = errs[q].absolute_fallback ? 1 : 0;
        }
    });
    return cells;
}

namespace {

LineConfig uniform_line(int m, double e, double td, double cv, int n) {
    std::vector<MachineParams> machines;
    for (int i = 0; i < m; ++i) machines.emplace_back(e, td, cv, cv);
    return LineConfig(std::move(machines), std::vector<int>(m - 1, n));
}

LineConfig line_from_sets(double e, std::span<const double> td, std::span<const double> cv,
                          std::vector<int> buffers) {
    const int m = static_cast<int>(td.size());
    std::vector<MachineParams> machines;
    for (int i = 0; i < m; ++i) machines.emplace_back(e, td[i], cv[i], cv[m + i]);
    return LineConfig(std::move(machines), std::move(buffers));
}

std::string trim_number(double v) {
    std::ostringstream ss;
    ss << v;
    return ss.str();
}

std::vector<GroupCase> group1_cases(const std::string& group_id, int m) {
    std::vector<GroupCase> cases;
    const double tds11[] = {6, 9, 12};
    const double tds12[] = {6, 12};
    const double cvs[] = {0.3, 0.6, 0.9};
    if (group_id == "1.1") {
        for (double td : tds11)
            for (double cv : cvs)
                cases.push_back({"Td" + trim_number(td) + "_CV" + trim_number(cv),
                                 uniform_line(m, 0.85, td, cv, 15)});
    } else {
        for (double td : tds12)
            for (double cv : cvs)
                for (int kf = 2; kf <= 3; ++kf)
                    cases.push_back(
                        {"Td" + trim_number(td) + "_CV" + trim_number(cv) + "_k" +
                             std::to_string(kf),
                         uniform_line(m, 0.85, td, cv, kf * static_cast<int>(td))});
    }
    return cases;
}

std::vector<GroupCase> group2_cases(int m) {
    struct Named {
        const char* label;
        std::vector<double> values;
    };
    std::vector<Named> tds, cvs;
    if (m == 3) {
        tds = {{"Td1.1", {7, 6, 5}},    {"Td1.2", {5, 6, 7}},
               {"Td2.1", {6, 8, 10}},   {"Td2.2", {11, 7, 6}},
               {"Td3.1", {10, 9, 11}},  {"Td3.2", {8, 10, 12}},
               {"Td4.1", {12, 10, 14}}, {"Td4.2", {11, 13, 12}}};
        cvs = {{"CV1.1", {0.6, 0.7, 0.45, 0.35, 0.4, 0.5}},
               {"CV1.2", {0.45, 0.3, 0.75, 0.5, 0.35, 0.65}},
               {"CV2.1", {0.7, 0.85, 0.8, 0.95, 0.65, 0.55}},
               {"CV2.2", {0.55, 0.7, 0.65, 0.75, 1, 0.85}}};
    } else if (m == 5) {
        tds = {{"Td1.1", {6, 5, 7, 7, 5}},      {"Td1.2", {6, 8, 7, 4, 5}},
               {"Td2.1", {6, 8, 10, 7, 9}},     {"Td2.2", {6, 12, 9, 6, 7}},
               {"Td3.1", {9, 12, 6, 10, 13}},   {"Td3.2", {9, 7, 12, 10, 12}},
               {"Td4.1", {10, 12, 13, 11, 14}}, {"Td4.2", {13, 9, 12, 14, 12}}};
        cvs = {{"CV1.1", {0.5, 0.45, 0.4, 0.65, 0.55, 0.5, 0.4, 0.8, 0.4, 0.35}},
               {"CV1.2", {0.6, 0.5, 0.45, 0.55, 0.4, 0.35, 0.7, 0.55, 0.6, 0.3}},
               {"CV2.1", {1, 0.75, 0.5, 0.8, 0.85, 0.95, 0.7, 0.9, 0.4, 0.65}},
               {"CV2.2", {0.5, 0.9, 1, 0.65, 0.45, 0.85, 0.6, 0.75, 0.8, 1}}};
    } else {
        throw std::invalid_argument("group_cases: group 2 is defined for m = 3 or 5");
    }
    std::vector<GroupCase> cases;
    for (const Named& td : tds)
        for (const Named& cv : cvs)
            cases.push_back({std::string(td.label) + "_" + cv.label,
                             line_from_sets(0.85, td.values, cv.values,
                                            std::vector<int>(m - 1, 15))});
    return cases;
}

std::vector<GroupCase> group3_cases(int m) {
    struct Named {
        const char* label;
        std::vector<double> values;
    };
    std::vector<Named> tds, cvs;
    if (m == 3) {
        tds = {{"Td1", {6, 12, 6}},
               {"Td2", {6, 9, 12}},
               {"Td3", {12, 9, 6}},
               {"Td4", {12, 6, 12}}};
        cvs = {{"CVlow1", {0.41, 0.32, 0.33, 0.35, 0.47, 0.35}},
               {"CVlow2", {0.32, 0.40, 0.50, 0.37, 0.42, 0.34}},
               {"CVlow3", {0.45, 0.35, 0.40, 0.44, 0.48, 0.50}},
               {"CVmed1", {0.82, 0.8, 0.3, 0.35, 0.7, 0.66}},
               {"CVmed2", {0.8, 0.35, 0.7, 0.72, 0.83, 0.37}},
               {"CVmed3", {0.73, 0.32, 0.84, 0.80, 0.91, 0.35}},
               {"CVhigh1", {0.87, 0.77, 0.81, 0.87, 0.88, 0.82}},
               {"CVhigh2", {0.96, 0.84, 0.81, 0.90, 0.93, 0.82}},
               {"CVhigh3", {0.97, 0.90, 0.98, 0.79, 0.96, 0.84}}};
    } else if (m == 5) {
        tds = {{"Td1", {6, 8, 7, 10, 9}},
               {"Td2", {8, 12, 10, 6, 9}},
               {"Td3", {8, 6, 10, 9, 12}},
               {"Td4", {9, 7, 12, 10, 12}}};
        cvs = {{"CVlow1", {0.38, 0.30, 0.37, 0.41, 0.40, 0.30, 0.42, 0.45, 0.32, 0.35}},
               {"CVlow2", {0.46, 0.34, 0.36, 0.30, 0.39, 0.47, 0.43, 0.42, 0.41, 0.47}},
               {"CVlow3", {0.48, 0.50, 0.42, 0.48, 0.48, 0.47, 0.46, 0.45, 0.44, 0.30}},
               {"CVmed1", {0.46, 0.77, 0.37, 0.87, 0.38, 0.54, 0.39, 0.52, 0.70, 0.40}},
               {"CVmed2", {0.52, 0.42, 0.51, 0.54, 0.79, 0.78, 0.55, 0.32, 0.79, 0.89}},
               {"CVmed3", {0.52, 0.76, 0.59, 0.42, 0.72, 0.65, 0.91, 0.82, 0.60, 0.76}},
               {"CVhigh1", {0.80, 0.82, 0.87, 0.80, 0.96, 0.80, 0.80, 0.79, 0.80, 0.86}},
               {"CVhigh2", {0.75, 0.98, 0.98, 0.95, 0.77, 0.81, 0.83, 0.92, 0.78, 0.93}},
               {"CVhigh3", {0.99, 0.98, 0.76, 0.94, 0.81, 0.85, 0.89, 0.99, 0.85, 1.00}}};
    } else {
        throw std::invalid_argument("group_cases: group 3 is defined for m = 3 or 5");
    }
    std::vector<GroupCase> cases;
    for (const Named& td : tds)
        for (const Named& cv : cvs)
            cases.push_back({std::string(td.label) + "_" + cv.label,
                             line_from_sets(0.85, td.values, cv.values,
                                            std::vector<int>(m - 1, 15))});
    return cases;
}

std::vector<GroupCase> group4_cases(int m) {
    std::vector<GroupCase> cases;
    if (m == 3) {
        const MachineParams a(0.9, 10, 0.6, 0.4), b(0.85, 12, 0.9, 0.5), c(0.8, 8, 0.5, 0.8);
        const std::vector<int> buffers{15, 20};
        const std::vector<std::pair<std::string, std::vector<MachineParams>>> orders = {
            {"increasing", {c, b, a}},
            {"invert_bowl", {c, a, b}},
            {"bowl", {a, c, b}},
            {"decreasing", {a, b, c}}};
        for (const auto& [label, machines] : orders)
            cases.push_back({label, LineConfig(machines, buffers)});
    } else if (m == 5) {
        const MachineParams a(0.95, 11, 0.8, 0.6), b(0.9, 10, 0.6, 0.4), c(0.85, 12, 0.9, 0.5),
            d(0.8, 8, 0.5, 0.8), e(0.75, 9, 0.4, 0.7);
        const std::vector<int> buffers{15, 20, 15, 20};
        const std::vector<std::pair<std::string, std::vector<MachineParams>>> orders = {
            {"increasing", {e, d, c, b, a}},
            {"invert_bowl", {e, b, a, c, d}},
            {"bowl", {a, c, e, d, b}},
            {"decreasing", {a, b, c, d, e}},
            {"oscillating", {a, c, b, e, d}}};
        for (const auto& [label, machines] : orders)
            cases.push_back({label, LineConfig(machines, buffers)});
    } else {
        throw std::invalid_argument("group_cases: group 4 is defined for m = 3 or 5");
    }
    return cases;
}

}  // namespace

std::vector<GroupCase> group_cases(const std::string& group_id, int m) {
    if (m < 2) throw std::invalid_argument("group_cases: m must be >= 2");
    if (group_id == "1.1" || group_id == "1.2") return group1_cases(group_id, m);
    if (group_id == "2") return group2_cases(m);
    if (group_id == "3") return group3_cases(m);
    if (group_id == "4") return group4_cases(m);
    throw std::invalid_argument("group_cases: unknown group '" + group_id + "'");
}

GroupReport run_group_experiments(const std::string& group_id, int m,
                                  const SurrogateBundle& bundle, const SimConfig& target_cfg,
                                  const IdentifyOptions& options, std::uint64_t seed) {
    if (bundle.m != m) throw std::invalid_argument("run_group_experiments: bundle m mismatch");
    const std::vector<GroupCase> cases = group_cases(group_id, m);
    GroupReport report;
    report.group_id = group_id;
    report.m = m;
    report.cases.resize(cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
        GroupCaseResult& out = report.cases[i];
        out.label = cases[i].label;
        out.true_aggregates = aggregate(cases[i].line);
        SimConfig cfg = target_cfg;
        cfg.base_seed = mix_seed(target_cfg.base_seed, i);
        const ObservedMetrics targets =
            observed_from_metrics(simulate_metrics(cases[i].line, cfg), cases[i].line.buffers);
        out.identification = identify(bundle, targets, options, mix_seed(seed, i));
        try {
            out.fit = fit_overall_relationship(out.identification);
            out.fit_ok = true;
        } catch (const std::invalid_argument&) {
            out.fit_ok = false;  // too few valid solutions or a degenerate cloud
        }
    }
    return report;
}

std::string group_report_csv(const GroupReport& report) {
    std::ostringstream out;
    out << "group,case,solution,mean_td,mean_cv,f_obj,valid\n";
    char buf[128];
    for (const GroupCaseResult& gc : report.cases) {
        for (std::size_t s = 0; s < gc.identification.solutions.size(); ++s) {
            const IdentifySolution& sol = gc.identification.solutions[s];
            out << report.group_id << ',' << gc.label << ',' << s << ',';
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", sol.mean_td, sol.mean_cv,
                          sol.f_obj);
            out << buf << ',' << (sol.valid ? 1 : 0) << '\n';
        }
    }
    return out.str();
}

std::string group_report_json(const GroupReport& report) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["group"] = report.group_id;
    j["m"] = report.m;
    nlohmann::json cases = nlohmann::json::array();
    for (const GroupCaseResult& gc : report.cases) {
        nlohmann::json cj;
        cj["case"] = gc.label;
        cj["true"] = {{"t_bar", gc.true_aggregates.t_bar}, {"cv_bar", gc.true_aggregates.cv_bar}};
        cj["num_solutions"] = gc.identification.solutions.size();
        cj["num_valid"] = gc.identification.num_valid;
        if (gc.fit_ok)
            cj["fit"] = {{"b0", gc.fit.b0},     {"b1", gc.fit.b1},
                         {"r2", gc.fit.r2},     {"se_b1", gc.fit.se_b1},
                         {"t_stat", gc.fit.t_stat}, {"p_value", gc.fit.p_value},
                         {"n", gc.fit.n}};
        else
            cj["fit"] = nullptr;
        cases.push_back(std::move(cj));
    }
    j["cases"] = std::move(cases);
    return j.dump(2) + "\n";
}

}  // namespace lineident
