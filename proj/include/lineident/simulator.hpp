#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "lineident/line_model.hpp"

namespace lineident {

// Simulation window. The warmup cycles are discarded; only the horizon
// cycles after warmup are recorded. One slot of the synchronous clock
// equals one machine cycle time.
struct SimConfig {
    int warmup = 10000;
    int horizon = 300000;
    int replications = 15;
    std::uint64_t base_seed = 0;
};

// Per-cycle machine activity of the recorded window; filled only on request
// (diagnostics and invariant tests). Dimensions are M x horizon.
struct FlowRecord {
    std::vector<std::vector<std::uint8_t>> up;
    std::vector<std::vector<std::uint8_t>> works;
    std::vector<std::vector<std::uint8_t>> starved;
    std::vector<std::vector<std::uint8_t>> blocked;
};

struct SimOptions {
    // Pins every machine up for the whole run (test double; no duration
    // sampling happens).
    bool force_always_up = false;
    FlowRecord* flow = nullptr;
};

// Parts-flow record of one replication: buffer levels at the end of each
// recorded cycle plus the cumulative output of the last machine.
struct PartsFlowTrace {
    int m = 0;
    int horizon = 0;
    std::vector<int> capacities;                      // N_1 .. N_{M-1}
    std::vector<std::vector<std::int32_t>> levels;    // (M-1) x horizon
    std::vector<std::uint32_t> output_cum;            // per recorded cycle
    std::uint64_t output_count = 0;
};

// Runs one replication. The replication stream seed is
// mix_seed(cfg.base_seed, replication_index), so replications are
// independent and individually reproducible.
PartsFlowTrace simulate(const LineConfig& line, const SimConfig& cfg,
                        int replication_index, const SimOptions* options = nullptr);

struct MetricsVector;  // metrics.hpp

// Runs cfg.replications replications and averages their metric vectors.
MetricsVector simulate_metrics(const LineConfig& line, const SimConfig& cfg);

// CSV dump: header "t,h_1,...,h_{M-1},out_cum", one row per recorded cycle,
// t starting at 1.
void write_trace_csv(const PartsFlowTrace& trace, std::ostream& out);

}  // namespace lineident
