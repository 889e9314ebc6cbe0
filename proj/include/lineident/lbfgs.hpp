#pragma once

#include <functional>

#include <Eigen/Core>

namespace lineident {

struct LbfgsOptions {
    int max_iterations = 500;
    double grad_tolerance = 1e-6;  // on the infinity norm of the gradient
    int history = 10;
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
    int max_line_search = 30;
    // After this many consecutive line-search failures the solver drops to
    // plain gradient descent with Armijo backtracking for the rest of the
    // iteration budget.
    int fallback_after_failures = 2;
    bool verbose = false;
};

struct LbfgsReport {
    int iterations = 0;
    double final_value = 0.0;
    double grad_norm = 0.0;  // infinity norm at the final iterate
    bool converged = false;
    int line_search_failures = 0;
    bool used_fallback = false;
};

// Objective: fills grad and returns f(x).
using ObjectiveGradient = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

// Limited-memory BFGS minimization with a strong Wolfe line search.
// Accepted steps never increase the objective. An optional callback receives
// (iteration, f) after every accepted step.
LbfgsReport lbfgs_minimize(const ObjectiveGradient& objective, Eigen::VectorXd& x,
                           const LbfgsOptions& options = {},
                           const std::function<void(int, double)>& on_iteration = {});

}  // namespace lineident
