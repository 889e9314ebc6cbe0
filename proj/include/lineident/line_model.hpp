#pragma once

#include <span>
#include <vector>

#include "lineident/rng.hpp"

namespace lineident {

// Gamma distribution in shape/scale form.
struct GammaSpec {
    double shape = 1.0;
    double scale = 1.0;
};

// Moment matching: mean = shape*scale, cv = 1/sqrt(shape).
GammaSpec gamma_from_moments(double mean, double cv);

double sample_duration(const GammaSpec& spec, Rng& rng);

// Mean uptime implied by efficiency e and mean downtime t_down:
// e = T_up / (T_up + T_down)  =>  T_up = e * T_down / (1 - e).
double mean_uptime(double e, double t_down);

// One machine of a serial line. Up/down durations are gamma distributed;
// the mean uptime is implied by (e, t_down). Construction validates the
// parameters and throws std::invalid_argument for out-of-domain values.
struct MachineParams {
    double e = 0.0;
    double t_down = 0.0;
    double cv_up = 0.0;
    double cv_down = 0.0;

    MachineParams(double e_, double t_down_, double cv_up_, double cv_down_);

    double t_up() const { return mean_uptime(e, t_down); }
    GammaSpec up_spec() const { return gamma_from_moments(t_up(), cv_up); }
    GammaSpec down_spec() const { return gamma_from_moments(t_down, cv_down); }

    bool operator==(const MachineParams&) const = default;
};

// A serial line: M machines and M-1 finite buffers. Validated at
// construction (M >= 2, capacities positive).
struct LineConfig {
    std::vector<MachineParams> machines;
    std::vector<int> buffers;  // capacities N_1 .. N_{M-1}

    LineConfig(std::vector<MachineParams> machines_, std::vector<int> buffers_);

    int m() const { return static_cast<int>(machines.size()); }

    bool operator==(const LineConfig&) const = default;
};

// Flat machine-parameter layout used by datasets and the identification
// search: (e_1..e_M, td_1..td_M, cvu_1..cvu_M, cvd_1..cvd_M), length 4M.
std::vector<double> to_param_vector(const LineConfig& line);
LineConfig line_from_params(std::span<const double> x, std::vector<int> buffers);

// Parameter vector followed by the buffer capacities, length 4M + (M-1).
// This is the predictor layout of dataset rows and surrogate inputs.
std::vector<double> to_predictor_vector(const LineConfig& line);

}  // namespace lineident
