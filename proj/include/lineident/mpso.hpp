#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace lineident {

struct Box {
    std::vector<double> lower, upper;

    int dim() const { return static_cast<int>(lower.size()); }
    bool contains(std::span<const double> x, double tol = 0.0) const;
};

struct PsoConfig {
    int particles = 200;               // K_p
    int neighborhood_increment = 25;   // K_n^(0); also the initial K_n
    double inertia_init = 1.1;         // W
    double inertia_max = 1.1;          // U_w
    double inertia_min = 0.1;          // L_w
    double accel_self = 1.5;           // y_1
    double accel_social = 1.5;         // y_2
    double improvement_tol = 1e-6;     // eps_f
    // Consecutive sub-tolerance improvements required before stopping.
    int stall_patience = 1;
    long max_iterations = 10000;       // J_max
    double max_seconds = 900.0;        // T_max
    int starts = 200;                  // D
    int tighten_after = 20;            // D_n
    double tighten_percent = 1.0;      // eps_e
    int threads = 0;
    bool record_history = false;
};

struct IterRecord {
    double f_best = 0.0;
    double inertia = 0.0;
    int neighborhood = 0;
    int stall = 0;
};

struct PsoRunResult {
    std::vector<double> x;
    double f = 0.0;
    long iterations = 0;
    std::string stop_reason;  // "converged" | "max_iterations" | "time_limit"
    std::vector<IterRecord> history;
};

using Objective = std::function<double(std::span<const double>)>;

// One particle-swarm run. Evaluation order is fixed, so the result is a pure
// function of (objective, box, config, seed). The adaptive scheme: on an
// iteration that improves the swarm best the stall counter decays and the
// inertia doubles (capped) while the counter is low, or halves (floored)
// once it is high; otherwise the counter grows and the neighborhood widens
// by its initial size, up to the full swarm.
PsoRunResult pso_run(const Objective& objective, const Box& box, const PsoConfig& cfg,
                     std::uint64_t seed);

// Position clamp used after each move: out-of-box coordinates snap to the
// nearest bound, and the matching velocity coordinate is zeroed only if it
// also left the velocity box.
void clamp_to_box(std::span<double> x, std::span<double> v, const Box& box,
                  const Box& velocity_box);

// Velocity bounds implied by a position box: |v_k| <= U_k - L_k.
Box velocity_box_for(const Box& box);

struct MpsoSolution {
    std::vector<double> x;
    double f = 0.0;
    long iterations = 0;
    std::string stop_reason;
    bool tightened = false;  // produced under the tightened bounds
};

struct MpsoResult {
    std::vector<MpsoSolution> solutions;  // in start order
    Box tightened_box;
    bool tightening_applied = false;
    std::vector<double> tighten_means;  // per tighten dimension
};

// Multi-start driver: cfg.starts independent runs seeded mix_seed(seed, r).
// If tighten_dims is non-empty, after the first cfg.tighten_after runs the
// bounds of those dimensions contract to mean * (1 -/+ tighten_percent/100)
// for the remaining runs; a degenerate interval is widened to a 1e-4
// half-width. Runs execute in parallel batches without affecting results.
MpsoResult mpso(const Objective& objective, const Box& box, const PsoConfig& cfg,
                std::uint64_t seed, std::span<const int> tighten_dims = {});

}  // namespace lineident
