#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lineident/identify.hpp"

namespace lineident {

// Mean downtime and mean CV (up and down pooled) of a line.
struct AggregateStats {
    double t_bar = 0.0;
    double cv_bar = 0.0;
};

AggregateStats aggregate(const LineConfig& line);
AggregateStats aggregate_from_params(std::span<const double> params, int m);

// Ordinary least squares y = b0 + b1 x with the usual t test on the slope
// (two-sided, n-2 degrees of freedom). A zero slope standard error yields
// p = 1 for a zero slope and p = 0 otherwise (exact fit).
struct OlsFit {
    double b0 = 0.0;
    double b1 = 0.0;
    double r2 = 0.0;
    double se_b1 = 0.0;
    double t_stat = 0.0;
    double p_value = 1.0;
    long n = 0;
};

OlsFit ols_fit(std::span<const double> xs, std::span<const double> ys);

// One (mean_td, mean_cv) point per usable solution of an identification
// result.
struct FitPoint {
    double t_bar = 0.0;
    double cv_bar = 0.0;
    int solution_index = -1;
};

std::vector<FitPoint> relationship_points(const IdentifyResult& result,
                                          bool include_invalid = false);

// Regression of mean CV on mean downtime over the solution cloud.
OlsFit fit_overall_relationship(const IdentifyResult& result, bool include_invalid = false);

// Per machine i: CV_avg,i = (cv_up,i + cv_down,i)/2 regressed on td_i.
std::vector<OlsFit> fit_machine_relationships(const IdentifyResult& result,
                                              bool include_invalid = false);

// Whether the fitted relationship admits an exponential model: the mean
// downtime where the fitted mean CV reaches 1 must land inside the downtime
// box.
struct FeasibilityResult {
    double t_at_cv1 = 0.0;
    bool feasible = false;
    std::string note;
};

FeasibilityResult exp_feasibility(double b0, double b1, double td_lo, double td_hi);

// What-if transformations of a line. Halving a downtime keeps the machine
// efficiency fixed by default (uptime shrinks with it); the alternative
// keeps the mean uptime, so efficiency rises.
struct Scenario {
    enum class Kind { double_all_n, double_one_n, half_all_td, half_one_td };
    enum class TdMode { hold_e, hold_tup };

    Kind kind = Kind::double_all_n;
    int index = -1;  // 1-based buffer/machine index for the "one" variants
    TdMode td_mode = TdMode::hold_e;
};

LineConfig apply_scenario(const LineConfig& line, const Scenario& scenario);
std::string to_string(const Scenario& scenario);
// Accepts "double-all-n", "double-n:J", "half-all-td", "half-td:I" with an
// optional "+hold-tup" suffix on the downtime scenarios.
Scenario scenario_from_string(const std::string& text);

// Robustness of estimated parameter sets: every estimate and the true line
// are pushed through each scenario and re-simulated, and the estimated
// metrics are compared against the true ones. f_obj is the mean squared
// scaled residual (same shape as the identification objective).
struct SensitivityCell {
    int estimate_index = -1;
    std::string scenario;
    double f_obj = 0.0;
    std::vector<MetricErrorSummary> errors;
};

std::vector<SensitivityCell> evaluate_sensitivity(
    const LineConfig& true_line, const std::vector<std::vector<double>>& estimates,
    std::span<const Scenario> scenarios, const SimConfig& cfg, int threads = 0);

// Named experiment families over constructed lines; group_cases enumerates
// the lines, run_group_experiments identifies each one against a surrogate
// bundle and fits the overall relationship per case.
struct GroupCase {
    std::string label;
    LineConfig line;
};

std::vector<GroupCase> group_cases(const std::string& group_id, int m);

struct GroupCaseResult {
    std::string label;
    AggregateStats true_aggregates;
    IdentifyResult identification;
    OlsFit fit;
    bool fit_ok = false;
};

struct GroupReport {
    std::string group_id;
    int m = 0;
    std::vector<GroupCaseResult> cases;
};

GroupReport run_group_experiments(const std::string& group_id, int m,
                                  const SurrogateBundle& bundle, const SimConfig& target_cfg,
                                  const IdentifyOptions& options, std::uint64_t seed);

// Long-format points: group,case,solution,mean_td,mean_cv,f_obj,valid.
std::string group_report_csv(const GroupReport& report);
std::string group_report_json(const GroupReport& report);

}  // namespace lineident
