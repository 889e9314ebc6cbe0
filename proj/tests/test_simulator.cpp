#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "lineident/dataset.hpp"
#include "lineident/metrics.hpp"
#include "lineident/simulator.hpp"

using namespace lineident;

namespace {

LineConfig two_machine(double e1, double e2, double td, double cv, int n) {
    return LineConfig({MachineParams(e1, td, cv, cv), MachineParams(e2, td, cv, cv)}, {n});
}

}  // namespace

TEST_CASE("always-up line flows in lock step") {
    const LineConfig line = two_machine(0.9, 0.8, 5, 1, 5);
    SimConfig cfg;
    cfg.warmup = 50;
    cfg.horizon = 200;
    SimOptions opt;
    opt.force_always_up = true;
    const PartsFlowTrace t = simulate(line, cfg, 0, &opt);
    CHECK(t.output_count == 200);  // PR = 1
    const MetricsVector mv = compute_metrics(t);
    CHECK(mv.pr == 1.0);
    CHECK(mv.buffers[0].b0 == 1.0);
    // Level is frozen at the initial fill.
    for (std::int32_t h : t.levels[0]) CHECK(h == 2);
}

TEST_CASE("trace invariants hold on random lines") {
    const std::vector<LineConfig> lines = generate_lines(3, 10, SamplingRanges{}, 321);
    SimConfig cfg;
    cfg.warmup = 100;
    cfg.horizon = 2000;
    for (const LineConfig& line : lines) {
        const PartsFlowTrace t = simulate(line, cfg, 0);
        REQUIRE(t.m == 3);
        REQUIRE(t.horizon == 2000);
        REQUIRE(t.levels.size() == 2);
        for (int j = 0; j < 2; ++j) {
            const int n = line.buffers[j];
            REQUIRE(static_cast<int>(t.levels[j].size()) == 2000);
            for (int k = 0; k < 2000; ++k) {
                CHECK(t.levels[j][k] >= 0);
                CHECK(t.levels[j][k] <= n);
                if (k > 0) CHECK(std::abs(t.levels[j][k] - t.levels[j][k - 1]) <= 1);
            }
        }
        // Cumulative output is non-decreasing and ends at the total.
        for (int k = 1; k < 2000; ++k) {
            CHECK(t.output_cum[k] >= t.output_cum[k - 1]);
            CHECK(t.output_cum[k] - t.output_cum[k - 1] <= 1);
        }
        CHECK(t.output_cum.back() == t.output_count);
    }
}

TEST_CASE("same seed and replication reproduce the trace bitwise") {
    const LineConfig line = two_machine(0.85, 0.8, 6, 0.7, 8);
    SimConfig cfg;
    cfg.warmup = 500;
    cfg.horizon = 5000;
    cfg.base_seed = 99;
    const PartsFlowTrace a = simulate(line, cfg, 3);
    const PartsFlowTrace b = simulate(line, cfg, 3);
    CHECK(a.levels == b.levels);
    CHECK(a.output_cum == b.output_cum);
    CHECK(a.output_count == b.output_count);
    const PartsFlowTrace c = simulate(line, cfg, 4);
    CHECK(a.levels != c.levels);
}

TEST_CASE("near-decoupled two-machine line approaches the bottleneck rate") {
    const LineConfig line = two_machine(0.9, 0.8, 5, 1, 200);
    SimConfig cfg;
    cfg.warmup = 10000;
    cfg.horizon = 300000;
    cfg.replications = 10;
    cfg.base_seed = 2024;
    const MetricsVector mv = simulate_metrics(line, cfg);
    CHECK(mv.pr > 0.79);
    CHECK(mv.pr < 0.81);
}

TEST_CASE("first machine never starves and last never blocks") {
    const std::vector<LineConfig> lines = generate_lines(3, 5, SamplingRanges{}, 77);
    SimConfig cfg;
    cfg.warmup = 200;
    cfg.horizon = 3000;
    for (const LineConfig& line : lines) {
        FlowRecord flow;
        SimOptions opt;
        opt.flow = &flow;
        simulate(line, cfg, 1, &opt);
        REQUIRE(flow.starved.size() == 3);
        for (int t = 0; t < cfg.horizon; ++t) {
            CHECK(flow.starved[0][t] == 0);
            CHECK(flow.blocked[2][t] == 0);
        }
    }
}

TEST_CASE("flow conservation links working flags to level changes") {
    const std::vector<LineConfig> lines = generate_lines(3, 5, SamplingRanges{}, 500);
    SimConfig cfg;
    cfg.warmup = 100;
    cfg.horizon = 2000;
    for (const LineConfig& line : lines) {
        FlowRecord flow;
        SimOptions opt;
        opt.flow = &flow;
        const PartsFlowTrace t = simulate(line, cfg, 0, &opt);
        for (int j = 0; j < 2; ++j) {
            for (int k = 1; k < cfg.horizon; ++k) {
                const int in = flow.works[j][k] ? 1 : 0;
                const int out = flow.works[j + 1][k] ? 1 : 0;
                CHECK(t.levels[j][k] == t.levels[j][k - 1] + in - out);
            }
        }
        // A machine that works is up and neither starved nor blocked.
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < cfg.horizon; ++k)
                if (flow.works[i][k]) {
                    CHECK(flow.up[i][k] == 1);
                    CHECK(flow.starved[i][k] == 0);
                    CHECK(flow.blocked[i][k] == 0);
                }
    }
}

TEST_CASE("production rate never beats the worst machine by a margin") {
    const std::vector<LineConfig> lines = generate_lines(3, 50, SamplingRanges{}, 2468);
    SimConfig cfg;
    cfg.warmup = 2000;
    cfg.horizon = 20000;
    cfg.replications = 2;
    int idx = 0;
    for (const LineConfig& line : lines) {
        cfg.base_seed = 9000 + idx++;
        const MetricsVector mv = simulate_metrics(line, cfg);
        double emin = 1.0;
        for (const MachineParams& m : line.machines) emin = std::min(emin, m.e);
        CHECK(mv.pr <= emin + 0.01);
    }
}

TEST_CASE("doubling all buffers does not hurt throughput") {
    const std::vector<LineConfig> lines = generate_lines(3, 8, SamplingRanges{}, 1357);
    SimConfig cfg;
    cfg.warmup = 2000;
    cfg.horizon = 50000;
    cfg.replications = 5;
    for (const LineConfig& line : lines) {
        std::vector<int> doubled = line.buffers;
        for (int& n : doubled) n *= 2;
        const LineConfig big(line.machines, doubled);
        const MetricsVector small_mv = simulate_metrics(line, cfg);
        const MetricsVector big_mv = simulate_metrics(big, cfg);
        // Allow three-sigma noise: PR variance over replications is tiny at
        // this horizon; 0.01 is a generous slack.
        CHECK(big_mv.pr >= small_mv.pr - 0.01);
    }
}

TEST_CASE("replication averaging identity") {
    const LineConfig line = two_machine(0.8, 0.85, 7, 0.6, 10);
    SimConfig cfg;
    cfg.warmup = 100;
    cfg.horizon = 2000;
    cfg.replications = 1;
    cfg.base_seed = 5;
    const MetricsVector direct = compute_metrics(simulate(line, cfg, 0));
    const MetricsVector averaged = simulate_metrics(line, cfg);
    CHECK(direct.flat() == averaged.flat());
}

TEST_CASE("trace csv has the documented shape") {
    const LineConfig line = two_machine(0.9, 0.9, 4, 1, 6);
    SimConfig cfg;
    cfg.warmup = 10;
    cfg.horizon = 3;
    const PartsFlowTrace t = simulate(line, cfg, 0);
    std::ostringstream out;
    write_trace_csv(t, out);
    std::istringstream in(out.str());
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,h_1,out_cum");
    int rows = 0;
    std::string row, first;
    while (std::getline(in, row))
        if (!row.empty()) {
            if (rows == 0) first = row;
            ++rows;
        }
    CHECK(rows == 3);
    CHECK(first.rfind("1,", 0) == 0);  // timestamps start at 1
}
