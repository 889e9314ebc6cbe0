#include "lineident/mpso.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "lineident/parallel.hpp"
#include "lineident/rng.hpp"

namespace lineident {

bool Box::contains(std::span<const double> x, double tol) const {
    if (static_cast<int>(x.size()) != dim()) return false;
    for (int k = 0; k < dim(); ++k)
        if (x[k] < lower[k] - tol || x[k] > upper[k] + tol) return false;
    return true;
}

namespace {

void check_box(const Box& box) {
    if (box.lower.size() != box.upper.size() || box.lower.empty())
        throw std::invalid_argument("mpso: malformed box");
    for (int k = 0; k < box.dim(); ++k)
        if (!(box.lower[k] <= box.upper[k]))
            throw std::invalid_argument("mpso: box bounds inverted");
}

void check_config(const PsoConfig& cfg) {
    if (cfg.particles < 2) throw std::invalid_argument("mpso: need at least two particles");
    if (cfg.neighborhood_increment < 1 || cfg.neighborhood_increment > cfg.particles)
        throw std::invalid_argument("mpso: neighborhood increment out of range");
    if (cfg.max_iterations < 1) throw std::invalid_argument("mpso: max_iterations must be >= 1");
    if (cfg.stall_patience < 1) throw std::invalid_argument("mpso: stall_patience must be >= 1");
    if (!(cfg.inertia_min <= cfg.inertia_max))
        throw std::invalid_argument("mpso: inertia bounds inverted");
}

}  // namespace

Box velocity_box_for(const Box& box) {
    Box v;
    v.lower.resize(box.dim());
    v.upper.resize(box.dim());
    for (int k = 0; k < box.dim(); ++k) {
        const double span = box.upper[k] - box.lower[k];
        v.lower[k] = -span;
        v.upper[k] = span;
    }
    return v;
}

void clamp_to_box(std::span<double> x, std::span<double> v, const Box& box,
                  const Box& velocity_box) {
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (x[k] < box.lower[k] || x[k] > box.upper[k]) {
            // Snap to the nearest bound.
            const double to_lower = std::fabs(x[k] - box.lower[k]);
            const double to_upper = std::fabs(x[k] - box.upper[k]);
            x[k] = to_lower <= to_upper ? box.lower[k] : box.upper[k];
            if (v[k] < velocity_box.lower[k] || v[k] > velocity_box.upper[k]) v[k] = 0.0;
        }
    }
}

PsoRunResult pso_run(const Objective& objective, const Box& box, const PsoConfig& cfg,
                     std::uint64_t seed) {
    check_box(box);
    check_config(cfg);
    const int dim = box.dim();
    const int kp = cfg.particles;
    const Box vbox = velocity_box_for(box);
    const auto t_start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };

    Rng rng(seed);
    auto evaluate = [&](std::span<const double> x) {
        const double f = objective(x);
        if (!std::isfinite(f))
            throw std::runtime_error("pso_run: objective returned a non-finite value");
        return f;
    };

    // Flat kp x dim storage.
    std::vector<double> X(static_cast<std::size_t>(kp) * dim);
    std::vector<double> V(static_cast<std::size_t>(kp) * dim);
    std::vector<double> P(static_cast<std::size_t>(kp) * dim);  // personal bests
    std::vector<double> f_p(kp);
    auto row = [dim](std::vector<double>& buf, int l) {
        return std::span<double>(buf.data() + static_cast<std::size_t>(l) * dim, dim);
    };

    for (int l = 0; l < kp; ++l)
        for (int k = 0; k < dim; ++k) {
            X[static_cast<std::size_t>(l) * dim + k] = rng.uniform(box.lower[k], box.upper[k]);
            V[static_cast<std::size_t>(l) * dim + k] = rng.uniform(vbox.lower[k], vbox.upper[k]);
        }

    // Initial evaluation; every personal best starts at the best initial
    // position.
    int best_l = 0;
    std::vector<double> f_x(kp);
    for (int l = 0; l < kp; ++l) {
        f_x[l] = evaluate(row(X, l));
        if (f_x[l] < f_x[best_l]) best_l = l;
    }
    std::vector<double> d(row(X, best_l).begin(), row(X, best_l).end());
    double f_best = f_x[best_l];
    for (int l = 0; l < kp; ++l) {
        std::copy(d.begin(), d.end(), row(P, l).begin());
        f_p[l] = f_best;
    }

    double w = cfg.inertia_init;
    int stall = 0;        // c
    int kn = cfg.neighborhood_increment;
    int sub_tol_streak = 0;

    PsoRunResult result;
    std::vector<int> pool(kp);

    long j = 0;
    std::string stop_reason = "max_iterations";
    while (j < cfg.max_iterations) {
        for (int l = 0; l < kp; ++l) {
            // Neighborhood: kn distinct particles other than l (partial
            // Fisher-Yates over the remaining indices). kn may formally
            // reach kp; only kp-1 other particles exist.
            const int kn_eff = std::min(kn, kp - 1);
            std::iota(pool.begin(), pool.end(), 0);
            std::swap(pool[l], pool[kp - 1]);
            int g = -1;
            for (int t = 0; t < kn_eff; ++t) {
                const int r = t + static_cast<int>(rng.below(static_cast<std::uint64_t>(kp - 1 - t)));
                std::swap(pool[t], pool[r]);
                if (g < 0 || f_p[pool[t]] < f_p[g]) g = pool[t];
            }

            auto xl = row(X, l);
            auto vl = row(V, l);
            auto pl = row(P, l);
            auto gl = row(P, g);
            for (int k = 0; k < dim; ++k) {
                const double u1 = rng.uniform01();
                const double u2 = rng.uniform01();
                vl[k] = w * vl[k] + cfg.accel_self * u1 * (pl[k] - xl[k]) +
                        cfg.accel_social * u2 * (gl[k] - xl[k]);
                xl[k] += vl[k];
            }
            clamp_to_box(xl, vl, box, vbox);

            const double fx = evaluate(xl);
            if (fx < f_p[l]) {
                f_p[l] = fx;
                std::copy(xl.begin(), xl.end(), pl.begin());
            }
        }

        int arg = 0;
        for (int l = 1; l < kp; ++l)
            if (f_p[l] < f_p[arg]) arg = l;
        const double f_new = f_p[arg];

        if (f_best - f_new > 0.0) {
            stall = std::max(0, stall - 1);
            if (stall < 2) w = std::min(2.0 * w, cfg.inertia_max);
            if (stall > 5) w = std::max(w / 2.0, cfg.inertia_min);
        } else {
            ++stall;
            kn = std::min(kn + cfg.neighborhood_increment, kp);
        }

        const double delta = std::fabs(f_best - f_new);
        f_best = f_new;
        d.assign(row(P, arg).begin(), row(P, arg).end());

        if (cfg.record_history) result.history.push_back({f_best, w, kn, stall});

        if (delta < cfg.improvement_tol) {
            if (++sub_tol_streak >= cfg.stall_patience) {
                ++j;
                stop_reason = "converged";
                break;
            }
        } else {
            sub_tol_streak = 0;
        }
        if (elapsed() >= cfg.max_seconds) {
            ++j;
            stop_reason = "time_limit";
            break;
        }
        ++j;
    }

    result.x = std::move(d);
    result.f = f_best;
    result.iterations = j;
    result.stop_reason = stop_reason;
    return result;
}

MpsoResult mpso(const Objective& objective, const Box& box, const PsoConfig& cfg,
                std::uint64_t seed, std::span<const int> tighten_dims) {
    check_box(box);
    check_config(cfg);
    if (cfg.starts < 1) throw std::invalid_argument("mpso: starts must be >= 1");
    for (int k : tighten_dims)
        if (k < 0 || k >= box.dim())
            throw std::invalid_argument("mpso: tighten dimension out of range");
    const bool tightening = !tighten_dims.empty() && cfg.tighten_after < cfg.starts &&
                            cfg.tighten_after > 0;
    const int first_batch = tightening ? cfg.tighten_after : cfg.starts;

    MpsoResult result;
    result.solutions.resize(cfg.starts);

    auto run_batch = [&](int begin, int end, const Box& batch_box, bool tightened) {
        parallel_for(end - begin, cfg.threads, [&](int i) {
            const int r = begin + i;
            PsoRunResult run = pso_run(objective, batch_box, cfg, mix_seed(seed, r));
            MpsoSolution& sol = result.solutions[r];
            sol.x = std::move(run.x);
            sol.f = run.f;
            sol.iterations = run.iterations;
            sol.stop_reason = std::move(run.stop_reason);
            sol.tightened = tightened;
        });
    };

    run_batch(0, first_batch, box, false);

    if (!tightening) {
        result.tightened_box = box;
        return result;
    }

    Box tight = box;
    result.tighten_means.reserve(tighten_dims.size());
    for (int k : tighten_dims) {
        double mean = 0.0;
        for (int r = 0; r < cfg.tighten_after; ++r) mean += result.solutions[r].x[k];
        mean /= cfg.tighten_after;
        result.tighten_means.push_back(mean);
        double lo = mean - mean * cfg.tighten_percent / 100.0;
        double hi = mean + mean * cfg.tighten_percent / 100.0;
        if (!(lo < hi)) {  // degenerate interval
            std::fprintf(stderr,
                         "mpso: degenerate tightened bounds on dim %d; widening to 1e-4\n", k);
            lo = mean - 1e-4;
            hi = mean + 1e-4;
        }
        tight.lower[k] = lo;
        tight.upper[k] = hi;
    }
    result.tightened_box = tight;
    result.tightening_applied = true;

    run_batch(first_batch, cfg.starts, tight, true);
    return result;
}

}  // namespace lineident
