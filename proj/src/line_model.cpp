#include "lineident/line_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lineident {

GammaSpec gamma_from_moments(double mean, double cv) {
    if (!(mean > 0.0) || !(cv > 0.0))
        throw std::invalid_argument("gamma_from_moments: mean and cv must be positive");
    GammaSpec spec;
    spec.shape = 1.0 / (cv * cv);
    spec.scale = mean * cv * cv;
    return spec;
}

double sample_duration(const GammaSpec& spec, Rng& rng) {
    return rng.gamma(spec.shape, spec.scale);
}

double mean_uptime(double e, double t_down) {
    if (!(e > 0.0) || !(e < 1.0))
        throw std::invalid_argument("mean_uptime: e must lie in (0, 1)");
    if (!(t_down > 0.0))
        throw std::invalid_argument("mean_uptime: t_down must be positive");
    return e * t_down / (1.0 - e);
}

MachineParams::MachineParams(double e_, double t_down_, double cv_up_, double cv_down_)
    : e(e_), t_down(t_down_), cv_up(cv_up_), cv_down(cv_down_) {
    if (!(e > 0.0) || !(e < 1.0))
        throw std::invalid_argument("MachineParams: e must lie in (0, 1), got " + std::to_string(e));
    if (!(t_down > 0.0))
        throw std::invalid_argument("MachineParams: t_down must be positive");
    if (!(cv_up > 0.0) || !(cv_down > 0.0))
        throw std::invalid_argument("MachineParams: cv_up and cv_down must be positive");
    if (!std::isfinite(e) || !std::isfinite(t_down) || !std::isfinite(cv_up) || !std::isfinite(cv_down))
        throw std::invalid_argument("MachineParams: parameters must be finite");
}

LineConfig::LineConfig(std::vector<MachineParams> machines_, std::vector<int> buffers_)
    : machines(std::move(machines_)), buffers(std::move(buffers_)) {
    if (machines.size() < 2)
        throw std::invalid_argument("LineConfig: need at least two machines");
    if (buffers.size() != machines.size() - 1)
        throw std::invalid_argument("LineConfig: expected M-1 buffer capacities");
    for (int n : buffers)
        if (n < 1) throw std::invalid_argument("LineConfig: buffer capacities must be >= 1");
}

std::vector<double> to_param_vector(const LineConfig& line) {
    const int m = line.m();
    std::vector<double> x(static_cast<std::size_t>(4 * m));
    for (int i = 0; i < m; ++i) {
        x[i] = line.machines[i].e;
        x[m + i] = line.machines[i].t_down;
        x[2 * m + i] = line.machines[i].cv_up;
        x[3 * m + i] = line.machines[i].cv_down;
    }
    return x;
}

LineConfig line_from_params(std::span<const double> x, std::vector<int> buffers) {
    if (x.size() % 4 != 0)
        throw std::invalid_argument("line_from_params: parameter vector length must be 4M");
    const int m = static_cast<int>(x.size() / 4);
    if (m < 2)
        throw std::invalid_argument("line_from_params: need at least two machines");
    std::vector<MachineParams> machines;
    machines.reserve(m);
    for (int i = 0; i < m; ++i)
        machines.emplace_back(x[i], x[m + i], x[2 * m + i], x[3 * m + i]);
    return LineConfig(std::move(machines), std::move(buffers));
}

std::vector<double> to_predictor_vector(const LineConfig& line) {
    std::vector<double> x = to_param_vector(line);
    for (int n : line.buffers) x.push_back(static_cast<double>(n));
    return x;
}

}  // namespace lineident
