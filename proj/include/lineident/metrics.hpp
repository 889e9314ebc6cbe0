#pragma once

#include <span>
#include <string>
#include <vector>

#include "lineident/simulator.hpp"

namespace lineident {

// Steady-state measures of one buffer. The occupancy bands split the
// interior levels 0 < h < N into quarters, half-open above:
//   L1: 0 < h <= N/4,  L2: N/4 < h <= N/2,  L3: N/2 < h <= 3N/4,
//   L4: 3N/4 < h < N.
// b0 is the fraction of recorded cycles whose level equals the previous
// recorded cycle's level (window starts at the second recorded cycle).
struct BufferMetrics {
    double wip = 0.0;
    double p0 = 0.0;
    double pn = 0.0;
    double pl1 = 0.0;
    double pl2 = 0.0;
    double pl3 = 0.0;
    double pl4 = 0.0;
    double b0 = 0.0;
};

struct MetricsVector {
    double pr = 0.0;
    std::vector<BufferMetrics> buffers;

    int m() const { return static_cast<int>(buffers.size()) + 1; }

    // Canonical flat layout: PR, then per buffer j:
    // WIP_j, P0_j, PN_j, PL1_j, PL2_j, PL3_j, PL4_j, B0_j. Length 1 + 8(M-1).
    std::vector<double> flat() const;
    static MetricsVector from_flat(std::span<const double> values);

    // Same order with PL4 omitted: the 1 + 7(M-1) metrics the surrogates
    // model and the identification objective matches.
    std::vector<double> objective_vector() const;
};

// Canonical metric names matching the flat layouts above.
std::vector<std::string> metric_names(int m, bool include_pl4);

// Number of objective metrics K = 1 + 7(M-1).
int objective_metric_count(int m);

MetricsVector compute_metrics(const PartsFlowTrace& trace);

// Component-wise mean over replications; shapes must agree. The occupancy
// partition is re-balanced so it still sums to exactly 1.
MetricsVector average_metrics(std::span<const MetricsVector> reps);

// How each objective metric's estimation error is measured:
// PR and B0 relative (percent), WIP relative to the buffer capacity
// (percent), occupancy probabilities absolute.
enum class MetricKind { pr, wip, prob, b0 };

MetricKind metric_kind(int m, int objective_index);

struct MetricError {
    double value = 0.0;
    bool percent = false;
    // True when a relative error fell back to absolute because the
    // reference value is zero.
    bool absolute_fallback = false;
};

MetricError metric_error(MetricKind kind, double estimated, double reference, double capacity);

// Errors for a whole objective vector; capacities are N_1..N_{M-1}.
std::vector<MetricError> metric_errors(std::span<const double> estimated,
                                       std::span<const double> reference,
                                       std::span<const int> capacities);

}  // namespace lineident
