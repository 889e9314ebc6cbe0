#include "lineident/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace lineident {

std::vector<double> MetricsVector::flat() const {
    std::vector<double> v;
    v.reserve(1 + 8 * buffers.size());
    v.push_back(pr);
    for (const BufferMetrics& b : buffers) {
        v.push_back(b.wip);
        v.push_back(b.p0);
        v.push_back(b.pn);
        v.push_back(b.pl1);
        v.push_back(b.pl2);
        v.push_back(b.pl3);
        v.push_back(b.pl4);
        v.push_back(b.b0);
    }
    return v;
}

MetricsVector MetricsVector::from_flat(std::span<const double> values) {
    if (values.size() < 9 || (values.size() - 1) % 8 != 0)
        throw std::invalid_argument("MetricsVector::from_flat: length must be 1 + 8(M-1)");
    MetricsVector mv;
    mv.pr = values[0];
    const std::size_t nb = (values.size() - 1) / 8;
    mv.buffers.resize(nb);
    for (std::size_t j = 0; j < nb; ++j) {
        const double* p = values.data() + 1 + 8 * j;
        BufferMetrics& b = mv.buffers[j];
        b.wip = p[0];
        b.p0 = p[1];
        b.pn = p[2];
        b.pl1 = p[3];
        b.pl2 = p[4];
        b.pl3 = p[5];
        b.pl4 = p[6];
        b.b0 = p[7];
    }
    return mv;
}

std::vector<double> MetricsVector::objective_vector() const {
    std::vector<double> v;
    v.reserve(1 + 7 * buffers.size());
    v.push_back(pr);
    for (const BufferMetrics& b : buffers) {
        v.push_back(b.wip);
        v.push_back(b.p0);
        v.push_back(b.pn);
        v.push_back(b.pl1);
        v.push_back(b.pl2);
        v.push_back(b.pl3);
        v.push_back(b.b0);
    }
    return v;
}

std::vector<std::string> metric_names(int m, bool include_pl4) {
    if (m < 2) throw std::invalid_argument("metric_names: m must be >= 2");
    std::vector<std::string> names;
    names.push_back("PR");
    for (int j = 1; j < m; ++j) {
        const std::string s = "_" + std::to_string(j);
        names.push_back("WIP" + s);
        names.push_back("P0" + s);
        names.push_back("PN" + s);
        names.push_back("PL1" + s);
        names.push_back("PL2" + s);
        names.push_back("PL3" + s);
        if (include_pl4) names.push_back("PL4" + s);
        names.push_back("B0" + s);
    }
    return names;
}

int objective_metric_count(int m) {
    if (m < 2) throw std::invalid_argument("objective_metric_count: m must be >= 2");
    return 1 + 7 * (m - 1);
}

namespace {

// Closes the occupancy partition so the left-to-right sum over the six bands
// is exactly 1.0: the final band is recomputed as the complement of the
// running sum of the first five. For a running sum in [1/2, 1] the complement
// is exact (Sterbenz), and below 1/2 its rounding error is at most half an
// ulp of 1.0, so adding it back lands on 1.0 with ties resolving to the even
// significand of 1.0. If accumulated rounding pushed the running sum above 1
// (only possible when the true final band is empty), the largest band is
// walked down an ulp at a time first; counts sum to the horizon, so all
// adjustments stay within a few ulps.
void balance_partition(std::array<double*, 6>& p) {
    for (;;) {
        double partial = 0.0;
        for (int k = 0; k < 5; ++k) partial += *p[k];
        if (partial <= 1.0) {
            *p[5] = 1.0 - partial;
            return;
        }
        int widest = 0;
        for (int k = 1; k < 5; ++k)
            if (*p[k] > *p[widest]) widest = k;
        *p[widest] = std::nextafter(*p[widest], 0.0);
    }
}

}  // namespace

MetricsVector compute_metrics(const PartsFlowTrace& trace) {
    const int nb = trace.m - 1;
    if (trace.m < 2 || static_cast<int>(trace.levels.size()) != nb)
        throw std::invalid_argument("compute_metrics: malformed trace");
    const long h = trace.horizon;
    if (h < 1 || static_cast<int>(trace.capacities.size()) != nb)
        throw std::invalid_argument("compute_metrics: malformed trace");
    for (const auto& lv : trace.levels)
        if (static_cast<long>(lv.size()) != h)
            throw std::invalid_argument("compute_metrics: level series shorter than horizon");

    MetricsVector mv;
    mv.pr = static_cast<double>(trace.output_count) / static_cast<double>(h);
    mv.buffers.resize(nb);

    for (int j = 0; j < nb; ++j) {
        const auto& lv = trace.levels[j];
        const long n = trace.capacities[j];
        std::uint64_t level_sum = 0;
        long c0 = 0, cn = 0, c1 = 0, c2 = 0, c3 = 0, c4 = 0, same = 0;
        for (long t = 0; t < h; ++t) {
            const long x = lv[t];
            level_sum += static_cast<std::uint64_t>(x);
            if (x == 0)
                ++c0;
            else if (x == n)
                ++cn;
            else if (4 * x <= n)
                ++c1;
            else if (2 * x <= n)
                ++c2;
            else if (4 * x <= 3 * n)
                ++c3;
            else
                ++c4;
            if (t > 0 && x == lv[t - 1]) ++same;
        }
        BufferMetrics& b = mv.buffers[j];
        const double dh = static_cast<double>(h);
        b.wip = static_cast<double>(level_sum) / dh;
        b.p0 = static_cast<double>(c0) / dh;
        b.pn = static_cast<double>(cn) / dh;
        b.pl1 = static_cast<double>(c1) / dh;
        b.pl2 = static_cast<double>(c2) / dh;
        b.pl3 = static_cast<double>(c3) / dh;
        b.pl4 = static_cast<double>(c4) / dh;
        b.b0 = h > 1 ? static_cast<double>(same) / static_cast<double>(h - 1) : 1.0;
        std::array<double*, 6> parts{&b.p0, &b.pl1, &b.pl2, &b.pl3, &b.pl4, &b.pn};
        balance_partition(parts);
    }
    return mv;
}

MetricsVector average_metrics(std::span<const MetricsVector> reps) {
    if (reps.empty()) throw std::invalid_argument("average_metrics: no replications");
    const std::size_t nb = reps[0].buffers.size();
    for (const MetricsVector& mv : reps)
        if (mv.buffers.size() != nb)
            throw std::invalid_argument("average_metrics: replication shapes differ");

    MetricsVector out;
    out.buffers.resize(nb);
    const double r = static_cast<double>(reps.size());
    for (const MetricsVector& mv : reps) out.pr += mv.pr;
    out.pr /= r;
    for (std::size_t j = 0; j < nb; ++j) {
        BufferMetrics& b = out.buffers[j];
        for (const MetricsVector& mv : reps) {
            const BufferMetrics& s = mv.buffers[j];
            b.wip += s.wip;
            b.p0 += s.p0;
            b.pn += s.pn;
            b.pl1 += s.pl1;
            b.pl2 += s.pl2;
            b.pl3 += s.pl3;
            b.pl4 += s.pl4;
            b.b0 += s.b0;
        }
        b.wip /= r;
        b.p0 /= r;
        b.pn /= r;
        b.pl1 /= r;
        b.pl2 /= r;
        b.pl3 /= r;
        b.pl4 /= r;
        b.b0 /= r;
        std::array<double*, 6> parts{&b.p0, &b.pl1, &b.pl2, &b.pl3, &b.pl4, &b.pn};
        balance_partition(parts);
    }
    return out;
}

MetricKind metric_kind(int m, int objective_index) {
    const int k = objective_metric_count(m);
    if (objective_index < 0 || objective_index >= k)
        throw std::invalid_argument("metric_kind: index out of range");
    if (objective_index == 0) return MetricKind::pr;
    const int within = (objective_index - 1) % 7;
    switch (within) {
        case 0: return MetricKind::wip;
        case 6: return MetricKind::b0;
        default: return MetricKind::prob;
    }
}

MetricError metric_error(MetricKind kind, double estimated, double reference, double capacity) {
    MetricError err;
    const double diff = std::fabs(estimated - reference);
    switch (kind) {
        case MetricKind::pr:
        case MetricKind::b0:
            if (reference != 0.0) {
                err.value = 100.0 * diff / std::fabs(reference);
                err.percent = true;
            } else {
                err.value = diff;
                err.absolute_fallback = true;
            }
            break;
        case MetricKind::wip:
            if (!(capacity > 0.0))
                throw std::invalid_argument("metric_error: capacity must be positive for WIP");
            err.value = 100.0 * diff / capacity;
            err.percent = true;
            break;
        case MetricKind::prob:
            err.value = diff;
            break;
    }
    return err;
}

std::vector<MetricError> metric_errors(std::span<const double> estimated,
                                       std::span<const double> reference,
                                       std::span<const int> capacities) {
    const int m = static_cast<int>(capacities.size()) + 1;
    const std::size_t k = static_cast<std::size_t>(objective_metric_count(m));
    if (estimated.size() != k || reference.size() != k)
        throw std::invalid_argument("metric_errors: expected 1 + 7(M-1) values");
    std::vector<MetricError> out(k);
    for (std::size_t i = 0; i < k; ++i) {
        const MetricKind kind = metric_kind(m, static_cast<int>(i));
        const double cap = kind == MetricKind::wip
                               ? static_cast<double>(capacities[(i - 1) / 7])
                               : 0.0;
        out[i] = metric_error(kind, estimated[i], reference[i], cap);
    }
    return out;
}

}  // namespace lineident
