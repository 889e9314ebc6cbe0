#include "lineident/simulator.hpp"

#include <ostream>
#include <stdexcept>

#include "lineident/metrics.hpp"

namespace lineident {

PartsFlowTrace simulate(const LineConfig& line, const SimConfig& cfg,
                        int replication_index, const SimOptions* options) {
    if (cfg.warmup < 0) throw std::invalid_argument("simulate: warmup must be >= 0");
    if (cfg.horizon < 1) throw std::invalid_argument("simulate: horizon must be >= 1");
    if (replication_index < 0)
        throw std::invalid_argument("simulate: replication index must be >= 0");

    const int m = line.m();
    const int nb = m - 1;
    const bool always_up = options && options->force_always_up;
    FlowRecord* flow = options ? options->flow : nullptr;

    std::vector<GammaSpec> up_spec(m), down_spec(m);
    for (int i = 0; i < m; ++i) {
        up_spec[i] = line.machines[i].up_spec();
        down_spec[i] = line.machines[i].down_spec();
    }

    Rng rng(mix_seed(cfg.base_seed, static_cast<std::uint64_t>(replication_index)));

    std::vector<std::uint8_t> up(m, 1), works(m, 0);
    std::vector<double> residual(m, 0.0);
    std::vector<int> h(nb), cap(line.buffers);
    for (int j = 0; j < nb; ++j) h[j] = cap[j] / 2;
    if (!always_up)
        for (int i = 0; i < m; ++i) residual[i] = sample_duration(up_spec[i], rng);

    PartsFlowTrace trace;
    trace.m = m;
    trace.horizon = cfg.horizon;
    trace.capacities = cap;
    trace.levels.assign(nb, {});
    for (auto& v : trace.levels) v.reserve(cfg.horizon);
    trace.output_cum.reserve(cfg.horizon);
    if (flow) {
        flow->up.assign(m, std::vector<std::uint8_t>(cfg.horizon, 0));
        flow->works.assign(m, std::vector<std::uint8_t>(cfg.horizon, 0));
        flow->starved.assign(m, std::vector<std::uint8_t>(cfg.horizon, 0));
        flow->blocked.assign(m, std::vector<std::uint8_t>(cfg.horizon, 0));
    }

    const long total = static_cast<long>(cfg.warmup) + cfg.horizon;
    for (long t = 0; t < total; ++t) {
        // (1) advance the residual up/down clocks across this slot boundary;
        // several short periods may elapse within one slot (negative carry).
        if (!always_up) {
            for (int i = 0; i < m; ++i) {
                residual[i] -= 1.0;
                while (residual[i] <= 0.0) {
                    up[i] ^= 1;
                    residual[i] += sample_duration(up[i] ? up_spec[i] : down_spec[i], rng);
                }
            }
        }

        // (2) decide who processes a part this slot, judged against the
        // levels left by the previous slot. A machine is idled when its
        // input is empty and the upstream machine does not deliver, or its
        // output is full and the downstream machine does not remove. Those
        // conditions depend on the neighbors' activity, so iterate to the
        // fixed point (idleness only spreads, hence this terminates).
        for (int i = 0; i < m; ++i) works[i] = up[i];
        for (bool changed = true; changed;) {
            changed = false;
            for (int i = 0; i < m; ++i) {
                if (!works[i]) continue;
                const bool starved = i > 0 && h[i - 1] == 0 && !works[i - 1];
                const bool blocked = i < m - 1 && h[i] == cap[i] && !works[i + 1];
                if (starved || blocked) {
                    works[i] = 0;
                    changed = true;
                }
            }
        }

        if (flow && t >= cfg.warmup) {
            const long r = t - cfg.warmup;
            for (int i = 0; i < m; ++i) {
                flow->up[i][r] = up[i];
                flow->works[i][r] = works[i];
                if (up[i] && !works[i]) {
                    if (i > 0 && h[i - 1] == 0 && !works[i - 1]) flow->starved[i][r] = 1;
                    if (i < m - 1 && h[i] == cap[i] && !works[i + 1]) flow->blocked[i][r] = 1;
                }
            }
        }

        // (3) simultaneous moves.
        for (int j = 0; j < nb; ++j) h[j] += static_cast<int>(works[j]) - static_cast<int>(works[j + 1]);

        // (4) record the slot outcome.
        if (t >= cfg.warmup) {
            for (int j = 0; j < nb; ++j) trace.levels[j].push_back(h[j]);
            trace.output_count += works[m - 1];
            trace.output_cum.push_back(static_cast<std::uint32_t>(trace.output_count));
        }
    }
    return trace;
}

MetricsVector simulate_metrics(const LineConfig& line, const SimConfig& cfg) {
    if (cfg.replications < 1)
        throw std::invalid_argument("simulate_metrics: replications must be >= 1");
    std::vector<MetricsVector> per_rep;
    per_rep.reserve(cfg.replications);
    for (int r = 0; r < cfg.replications; ++r)
        per_rep.push_back(compute_metrics(simulate(line, cfg, r)));
    return average_metrics(per_rep);
}

void write_trace_csv(const PartsFlowTrace& trace, std::ostream& out) {
    out << "t";
    for (int j = 1; j < trace.m; ++j) out << ",h_" << j;
    out << ",out_cum\n";
    for (int t = 0; t < trace.horizon; ++t) {
        out << (t + 1);
        for (int j = 0; j < trace.m - 1; ++j) out << ',' << trace.levels[j][t];
        out << ',' << trace.output_cum[t] << '\n';
    }
}

}  // namespace lineident
