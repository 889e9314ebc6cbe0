#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lineident/mpso.hpp"
#include "lineident/surrogate.hpp"

namespace lineident {

// Identification target: the observed objective metrics (PL4 excluded) of a
// line whose buffer capacities are known.
struct ObservedMetrics {
    int m = 0;
    std::vector<int> capacities;
    std::vector<double> values;  // objective metric order, length 1 + 7(M-1)
};

ObservedMetrics observed_from_metrics(const MetricsVector& metrics,
                                      std::vector<int> capacities);

std::string targets_to_json(const ObservedMetrics& targets);
ObservedMetrics targets_from_json(const std::string& text);

// Machine-parameter search box, identical for every machine.
struct IdentifyBounds {
    double e_lo = 0.7, e_hi = 0.95;
    double td_lo = 2.0, td_hi = 20.0;
    double cv_lo = 0.1, cv_hi = 1.0;
};

enum class IdentifyMode {
    standard,     // e, T_down, CV_up, CV_down free (4M dimensions)
    exponential,  // CVs pinned to 1; e, T_down free (2M dimensions)
    averages,     // standard plus penalized mean-downtime / mean-CV targets
};

std::string to_string(IdentifyMode mode);
IdentifyMode identify_mode_from_string(const std::string& name);

// Search box for a mode; dimension blocks follow the parameter layout.
Box identification_box(int m, const IdentifyBounds& bounds, IdentifyMode mode);

// Expands a search vector to the full 4M parameter layout (inserts unit CVs
// in exponential mode).
std::vector<double> expand_search_vector(std::span<const double> x, int m, IdentifyMode mode);

// Residual between surrogate predictions at x (full 4M layout) and the
// targets: PR first, then per buffer the WIP residual scaled by 1/N_j
// followed by the probability and B0 residuals.
std::vector<double> residual_vector(const SurrogateBundle& bundle,
                                    std::span<const double> params,
                                    const ObservedMetrics& targets);

// Mean squared residual over the K = 1 + 7(M-1) metrics.
double objective_value(const SurrogateBundle& bundle, std::span<const double> params,
                       const ObservedMetrics& targets);

struct IdentifyOptions {
    IdentifyBounds bounds;
    PsoConfig pso;
    IdentifyMode mode = IdentifyMode::standard;
    double validity_tol = 1e-4;  // valid <=> in the original box and f below this

    // averages mode: penalty lambda * ((mean_td - t_bar)^2 + (mean_cv - cv_bar)^2)
    double t_bar = 0.0;
    double cv_bar = 0.0;
    double lambda = 1e3;
    double aggregate_tol = 1e-3;  // acceptance band on both aggregate residuals

    // When set, valid solutions are re-scored by simulation.
    std::optional<SimConfig> rescore;
    bool require_valid = false;
};

struct IdentifySolution {
    std::vector<double> x;       // full 4M parameter layout
    std::vector<double> search_x;  // in the mode's search space
    double f_obj = 0.0;          // surrogate-based metric objective
    double sim_f_obj = -1.0;     // simulation-based, when re-scored (else -1)
    bool valid = false;
    bool accepted = false;       // averages mode: valid and aggregates in band
    double mean_td = 0.0, mean_cv = 0.0;
    long iterations = 0;
    std::string stop_reason;
    bool tightened = false;
};

struct IdentifyResult {
    int m = 0;
    IdentifyMode mode = IdentifyMode::standard;
    std::uint64_t seed = 0;
    std::vector<int> capacities;
    std::vector<double> targets;
    IdentifyBounds bounds;
    double validity_tol = 1e-4;
    double t_bar = 0.0, cv_bar = 0.0, lambda = 0.0, aggregate_tol = 0.0;
    std::vector<IdentifySolution> solutions;
    int num_valid = 0;
    int num_accepted = 0;
    bool tightening_applied = false;
    std::vector<double> tighten_means;
    std::vector<MetricErrorSummary> errors_nn;   // mean over valid solutions
    std::vector<MetricErrorSummary> errors_sim;  // when re-scored
};

// Raised when require_valid is set and the search yields no valid solution.
struct NoValidSolutionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

IdentifyResult identify(const SurrogateBundle& bundle, const ObservedMetrics& targets,
                        const IdentifyOptions& options, std::uint64_t seed);

// Convenience wrappers around identify() for the fixed-CV and penalized
// variants.
IdentifyResult identify_exponential(const SurrogateBundle& bundle,
                                    const ObservedMetrics& targets,
                                    IdentifyOptions options, std::uint64_t seed);
IdentifyResult identify_with_averages(const SurrogateBundle& bundle,
                                      const ObservedMetrics& targets, double t_bar,
                                      double cv_bar, IdentifyOptions options,
                                      std::uint64_t seed);

// Validity flags recomputed at an alternative threshold (monotone in the
// threshold; the box part is unchanged).
std::vector<bool> validity_at(const IdentifyResult& result, double threshold);

std::string identify_result_to_json(const IdentifyResult& result);
IdentifyResult identify_result_from_json(const std::string& text);

}  // namespace lineident
