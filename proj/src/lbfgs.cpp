#include "lineident/lbfgs.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <stdexcept>

namespace lineident {

namespace {

struct Pair {
    Eigen::VectorXd s, y;
    double rho = 0.0;
};

// Two-loop recursion; returns the search direction -H*g.
Eigen::VectorXd lbfgs_direction(const std::deque<Pair>& mem, const Eigen::VectorXd& g) {
    Eigen::VectorXd q = g;
    const int k = static_cast<int>(mem.size());
    std::vector<double> alpha(k);
    for (int i = k - 1; i >= 0; --i) {
        alpha[i] = mem[i].rho * mem[i].s.dot(q);
        q -= alpha[i] * mem[i].y;
    }
    if (k > 0) {
        const Pair& last = mem.back();
        const double gamma = last.s.dot(last.y) / last.y.dot(last.y);
        q *= gamma;
    }
    for (int i = 0; i < k; ++i) {
        const double beta = mem[i].rho * mem[i].y.dot(q);
        q += (alpha[i] - beta) * mem[i].s;
    }
    return -q;
}

struct LineSearchResult {
    double alpha = 0.0;
    double f = 0.0;
    bool ok = false;
};

}  // namespace

LbfgsReport lbfgs_minimize(const ObjectiveGradient& objective, Eigen::VectorXd& x,
                           const LbfgsOptions& opt,
                           const std::function<void(int, double)>& on_iteration) {
    if (x.size() == 0) throw std::invalid_argument("lbfgs_minimize: empty parameter vector");

    LbfgsReport report;
    Eigen::VectorXd g(x.size()), g_new(x.size()), x_trial(x.size()), g_trial(x.size());
    double f = objective(x, g);
    if (!std::isfinite(f)) throw std::runtime_error("lbfgs_minimize: objective not finite at start");

    std::deque<Pair> memory;
    int consecutive_failures = 0;
    bool fallback = false;

    // Strong Wolfe line search along p from x (f0, dphi0 known). Updates
    // x_trial/g_trial with the accepted point.
    auto wolfe_search = [&](const Eigen::VectorXd& p, double f0, double dphi0) -> LineSearchResult {
        LineSearchResult res;
        const double c1 = opt.wolfe_c1, c2 = opt.wolfe_c2;
        double f_trial = 0.0, dphi_trial = 0.0;
        auto eval = [&](double a) {
            x_trial = x + a * p;
            f_trial = objective(x_trial, g_trial);
            dphi_trial = g_trial.dot(p);
        };

        auto zoom = [&](double lo, double f_lo, double dphi_lo, double hi, double f_hi) {
            for (int j = 0; j < opt.max_line_search; ++j) {
                double a;
                {
                    // Quadratic interpolation using (lo, f_lo, dphi_lo) and
                    // (hi, f_hi); fall back to bisection when it misbehaves.
                    const double d = hi - lo;
                    const double denom = 2.0 * (f_hi - f_lo - dphi_lo * d);
                    a = denom != 0.0 ? lo - dphi_lo * d * d / denom : lo + 0.5 * d;
                    const double lo_m = std::min(lo, hi), hi_m = std::max(lo, hi);
                    const double margin = 0.1 * (hi_m - lo_m);
                    if (!(a > lo_m + margin) || !(a < hi_m - margin)) a = lo + 0.5 * d;
                }
                eval(a);
                if (f_trial > f0 + c1 * a * dphi0 || f_trial >= f_lo) {
                    hi = a;
                    f_hi = f_trial;
                } else {
                    if (std::fabs(dphi_trial) <= -c2 * dphi0) {
                        res = {a, f_trial, true};
                        return;
                    }
                    if (dphi_trial * (hi - lo) >= 0.0) {
                        hi = lo;
                        f_hi = f_lo;
                    }
                    lo = a;
                    f_lo = f_trial;
                    dphi_lo = dphi_trial;
                }
                if (std::fabs(hi - lo) < 1e-14 * std::max(1.0, std::fabs(lo))) break;
            }
            // Interval collapsed: keep the best sufficient-decrease point if
            // one exists even though curvature was not certified.
            if (f_lo < f0 + c1 * lo * dphi0 && lo > 0.0) {
                eval(lo);
                res = {lo, f_trial, true};
            }
        };

        double a_prev = 0.0, f_prev = f0, dphi_prev = dphi0;
        double a = 1.0;
        for (int i = 1; i <= opt.max_line_search; ++i) {
            eval(a);
            if (!std::isfinite(f_trial)) {  // overshoot; treat as a too-long step
                zoom(a_prev, f_prev, dphi_prev, a, f0 + 1e30);
                return res;
            }
            if (f_trial > f0 + c1 * a * dphi0 || (i > 1 && f_trial >= f_prev)) {
                zoom(a_prev, f_prev, dphi_prev, a, f_trial);
                return res;
            }
            if (std::fabs(dphi_trial) <= -c2 * dphi0) {
                res = {a, f_trial, true};
                return res;
            }
            if (dphi_trial >= 0.0) {
                zoom(a, f_trial, dphi_trial, a_prev, f_prev);
                return res;
            }
            a_prev = a;
            f_prev = f_trial;
            dphi_prev = dphi_trial;
            a *= 2.0;
            if (a > 1e10) break;
        }
        return res;
    };

    // Armijo backtracking used by the first-order fallback.
    auto backtracking_search = [&](const Eigen::VectorXd& p, double f0, double dphi0) -> LineSearchResult {
        LineSearchResult res;
        double a = 1.0;
        for (int i = 0; i < 60; ++i) {
            x_trial = x + a * p;
            double f_trial = objective(x_trial, g_trial);
            if (std::isfinite(f_trial) && f_trial <= f0 + opt.wolfe_c1 * a * dphi0) {
                res = {a, f_trial, true};
                return res;
            }
            a *= 0.5;
        }
        return res;
    };

    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        report.grad_norm = g.lpNorm<Eigen::Infinity>();
        if (report.grad_norm <= opt.grad_tolerance) {
            report.converged = true;
            break;
        }

        Eigen::VectorXd p;
        if (!fallback) {
            p = lbfgs_direction(memory, g);
            if (g.dot(p) >= 0.0) {  // not a descent direction; restart
                memory.clear();
                p = -g;
            }
        } else {
            const double scale = std::max(1.0, g.lpNorm<Eigen::Infinity>());
            p = -g / scale;
        }

        const double dphi0 = g.dot(p);
        LineSearchResult ls = fallback ? backtracking_search(p, f, dphi0)
                                       : wolfe_search(p, f, dphi0);
        if (!ls.ok && !fallback) {
            ++report.line_search_failures;
            ++consecutive_failures;
            memory.clear();
            if (consecutive_failures >= opt.fallback_after_failures) {
                fallback = true;
                report.used_fallback = true;
                if (opt.verbose)
                    std::fprintf(stderr,
                                 "lbfgs_minimize: line search failed %d times; "
                                 "switching to gradient descent\n",
                                 consecutive_failures);
            }
            // Retry from the same iterate with a fresh (steepest descent or
            // fallback) direction on the next iteration.
            continue;
        }
        if (!ls.ok) break;  // fallback could not decrease: stationary enough

        consecutive_failures = 0;
        g_new = g_trial;
        const Eigen::VectorXd s = ls.alpha * p;
        const Eigen::VectorXd yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-10 * s.norm() * yv.norm()) {
            Pair pair{s, yv, 1.0 / sy};
            memory.push_back(std::move(pair));
            if (static_cast<int>(memory.size()) > opt.history) memory.pop_front();
        }
        x += s;
        f = ls.f;
        g.swap(g_new);
        ++report.iterations;
        if (on_iteration) on_iteration(report.iterations, f);
    }

    report.final_value = f;
    report.grad_norm = g.lpNorm<Eigen::Infinity>();
    if (report.grad_norm <= opt.grad_tolerance) report.converged = true;
    return report;
}

}  // namespace lineident
