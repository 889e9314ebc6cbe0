#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "lineident/identify.hpp"
#include "lineident/metrics.hpp"
#include "lineident/surrogate.hpp"

using namespace lineident;

namespace {

// Bundle whose model for metric q returns the constant c[q].
SurrogateBundle constant_bundle(int m, const std::vector<double>& c) {
    SurrogateBundle bundle;
    bundle.m = m;
    bundle.metric_ids = metric_names(m, false);
    const int in_dim = 5 * m - 1;
    for (double value : c) {
        MlpModel model;
        model.dims = {in_dim, 1, 1};
        model.weights = {Eigen::MatrixXd::Zero(1, in_dim), Eigen::MatrixXd::Zero(1, 1)};
        model.biases = {Eigen::VectorXd::Zero(1), (Eigen::VectorXd(1) << value).finished()};
        model.feat_mean = Eigen::VectorXd::Zero(in_dim);
        model.feat_std = Eigen::VectorXd::Ones(in_dim);
        bundle.models.push_back(std::move(model));
    }
    return bundle;
}

// Bundle whose model for metric q returns predictor coordinate pick[q].
// All predictors are positive, so an identity first layer passes them
// through the ReLU unchanged.
SurrogateBundle picker_bundle(int m, const std::vector<int>& pick) {
    SurrogateBundle bundle;
    bundle.m = m;
    bundle.metric_ids = metric_names(m, false);
    const int in_dim = 5 * m - 1;
    for (int p : pick) {
        MlpModel model;
        model.dims = {in_dim, in_dim, 1};
        Eigen::MatrixXd w2 = Eigen::MatrixXd::Zero(1, in_dim);
        w2(0, p) = 1.0;
        model.weights = {Eigen::MatrixXd::Identity(in_dim, in_dim), w2};
        model.biases = {Eigen::VectorXd::Zero(in_dim), Eigen::VectorXd::Zero(1)};
        model.feat_mean = Eigen::VectorXd::Zero(in_dim);
        model.feat_std = Eigen::VectorXd::Ones(in_dim);
        bundle.models.push_back(std::move(model));
    }
    return bundle;
}

// Metric -> parameter-dimension map covering all 4M dimensions (m = 3).
// WIP rows (metric indices 1 and 8) are divided by the buffer capacity, so a
// dimension observed only there would be weakly identified; every dimension
// is therefore routed through at least one unscaled row, and the WIP rows
// repeat already-covered efficiencies.
std::vector<int> full_cover_pick_m3() {
    return {0, 0, 1, 2, 3, 4, 5, 6, 1, 7, 8, 9, 10, 11, 0};
}

ObservedMetrics targets_for(const std::vector<double>& params, const std::vector<int>& caps,
                            const std::vector<int>& pick, int m) {
    std::vector<double> predictors(params);
    for (int n : caps) predictors.push_back(static_cast<double>(n));
    ObservedMetrics t;
    t.m = m;
    t.capacities = caps;
    for (int p : pick) t.values.push_back(predictors[p]);
    return t;
}

// Individual swarm runs can freeze before reaching the optimum (the shared
// initial personal best concentrates the swarm quickly), so tests size the
// swarm and patience for their landscape and assert per-solution validity
// flags rather than expecting every start to converge.
PsoConfig small_pso(int starts) {
    PsoConfig pso;
    pso.particles = 120;
    pso.max_iterations = 1000;
    pso.stall_patience = 75;
    pso.starts = starts;
    pso.tighten_after = 0;
    return pso;
}

}  // namespace

TEST_CASE("observed metrics carry the objective vector and capacities") {
    std::vector<double> flat(1 + 8 * 2);
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = 0.01 * static_cast<double>(i + 1);
    const MetricsVector mv = MetricsVector::from_flat(flat);
    REQUIRE(mv.m() == 3);
    const ObservedMetrics t = observed_from_metrics(mv, {10, 8});
    CHECK(t.m == 3);
    CHECK(t.capacities == std::vector<int>{10, 8});
    CHECK(t.values == mv.objective_vector());
    CHECK_THROWS_AS(observed_from_metrics(mv, {10}), std::invalid_argument);
}

TEST_CASE("targets serialize through JSON") {
    ObservedMetrics t;
    t.m = 2;
    t.capacities = {7};
    t.values = {0.81, 3.5, 0.02, 0.04, 0.3, 0.35, 0.2, 0.6};
    const std::string text = targets_to_json(t);
    const ObservedMetrics back = targets_from_json(text);
    CHECK(back.m == t.m);
    CHECK(back.capacities == t.capacities);
    CHECK(back.values == t.values);

    // A missing metric is rejected.
    std::string broken = text;
    const std::size_t pos = broken.find("\"PR\"");
    REQUIRE(pos != std::string::npos);
    broken.replace(pos, 4, "\"XX\"");
    CHECK_THROWS(targets_from_json(broken));
}

TEST_CASE("mode names round-trip") {
    for (IdentifyMode mode :
         {IdentifyMode::standard, IdentifyMode::exponential, IdentifyMode::averages})
        CHECK(identify_mode_from_string(to_string(mode)) == mode);
    CHECK_THROWS_AS(identify_mode_from_string("bogus"), std::invalid_argument);
}

TEST_CASE("identification box blocks follow the parameter layout") {
    IdentifyBounds b;
    const Box std_box = identification_box(3, b, IdentifyMode::standard);
    REQUIRE(std_box.dim() == 12);
    for (int i = 0; i < 3; ++i) {
        CHECK(std_box.lower[i] == 0.7);
        CHECK(std_box.upper[i] == 0.95);
        CHECK(std_box.lower[3 + i] == 2.0);
        CHECK(std_box.upper[3 + i] == 20.0);
    }
    for (int i = 6; i < 12; ++i) {
        CHECK(std_box.lower[i] == 0.1);
        CHECK(std_box.upper[i] == 1.0);
    }
    const Box exp_box = identification_box(3, b, IdentifyMode::exponential);
    CHECK(exp_box.dim() == 6);
    const Box avg_box = identification_box(3, b, IdentifyMode::averages);
    CHECK(avg_box.dim() == 12);

    IdentifyBounds bad;
    bad.e_hi = 1.0;  // efficiency must stay below one
    CHECK_THROWS_AS(identification_box(3, bad, IdentifyMode::standard), std::invalid_argument);
}

TEST_CASE("search vectors expand to the full layout") {
    const std::vector<double> x = {0.8, 0.9, 6.0, 7.0};
    const std::vector<double> full = expand_search_vector(x, 2, IdentifyMode::exponential);
    CHECK(full == std::vector<double>{0.8, 0.9, 6.0, 7.0, 1.0, 1.0, 1.0, 1.0});
    const std::vector<double> same =
        expand_search_vector(full, 2, IdentifyMode::standard);
    CHECK(same == full);
    CHECK_THROWS_AS(expand_search_vector(x, 3, IdentifyMode::exponential),
                    std::invalid_argument);
    CHECK_THROWS_AS(expand_search_vector(x, 2, IdentifyMode::standard), std::invalid_argument);
}

TEST_CASE("residuals subtract targets and scale WIP rows by capacity") {
    const int m = 3;
    std::vector<double> c(15, 0.0);
    c[0] = 0.8;   // PR prediction
    c[1] = 6.0;   // WIP_1 prediction
    c[8] = 2.0;   // WIP_2 prediction
    const SurrogateBundle bundle = constant_bundle(m, c);
    ObservedMetrics t;
    t.m = m;
    t.capacities = {10, 4};
    t.values.assign(15, 0.0);
    t.values[0] = 0.7;
    t.values[1] = 3.0;
    t.values[8] = 1.0;
    const std::vector<double> params(12, 0.5);
    const std::vector<double> r = residual_vector(bundle, params, t);
    REQUIRE(r.size() == 15);
    CHECK(r[0] == doctest::Approx(0.1).epsilon(1e-12));            // 0.8 - 0.7
    CHECK(r[1] == doctest::Approx(0.3).epsilon(1e-12));            // (6 - 3) / 10
    CHECK(r[8] == doctest::Approx(0.25).epsilon(1e-12));           // (2 - 1) / 4
    for (int q : {2, 3, 4, 5, 6, 7, 9, 10, 11, 12, 13, 14}) CHECK(r[q] == 0.0);
}

TEST_CASE("the objective is the mean squared residual") {
    const int m = 3;
    std::vector<double> c(15, 0.2);
    c[0] = 0.21;  // lone residual of 0.01 on PR
    const SurrogateBundle bundle = constant_bundle(m, c);
    ObservedMetrics t;
    t.m = m;
    t.capacities = {10, 10};
    t.values.assign(15, 0.2);
    const std::vector<double> params(12, 0.5);
    const double f = objective_value(bundle, params, t);
    const double expected = (0.21 - 0.2) * (0.21 - 0.2) / 15.0;
    CHECK(f == doctest::Approx(expected).epsilon(1e-12));
    CHECK(f == doctest::Approx(6.666666666666667e-06).epsilon(1e-9));
}

TEST_CASE("standard identification recovers every parameter of a clean target") {
    const int m = 3;
    const std::vector<int> pick = full_cover_pick_m3();
    const SurrogateBundle bundle = picker_bundle(m, pick);
    const std::vector<double> truth = {0.88, 0.8,  0.92,  // e
                                       5.0,  12.0, 8.0,   // t_down
                                       0.4,  0.9,  0.25,  // cv_up
                                       0.7,  0.3,  0.55};  // cv_down
    const std::vector<int> caps = {10, 14};
    const ObservedMetrics targets = targets_for(truth, caps, pick, m);

    IdentifyOptions opt;
    opt.pso = small_pso(6);
    opt.pso.particles = 200;
    opt.pso.max_iterations = 2000;
    opt.pso.stall_patience = 120;
    opt.pso.tighten_after = 3;  // exercise the efficiency tightening path
    const IdentifyResult res = identify(bundle, targets, opt, 13);

    REQUIRE(res.solutions.size() == 6);
    CHECK(res.num_valid == 6);
    CHECK(res.tightening_applied);
    REQUIRE(res.tighten_means.size() == 3);
    for (int i = 0; i < 3; ++i)
        CHECK(res.tighten_means[i] == doctest::Approx(truth[i]).epsilon(2e-3));
    for (const IdentifySolution& s : res.solutions) {
        CHECK(s.valid);
        CHECK(s.f_obj < 1e-4);
        REQUIRE(s.x.size() == 12);
        for (int d = 0; d < 12; ++d)
            CHECK(s.x[d] == doctest::Approx(truth[d]).epsilon(0.02));
        CHECK(s.mean_td == doctest::Approx((s.x[3] + s.x[4] + s.x[5]) / 3.0).epsilon(1e-12));
        double cv_sum = 0.0;
        for (int d = 6; d < 12; ++d) cv_sum += s.x[d];
        CHECK(s.mean_cv == doctest::Approx(cv_sum / 6.0).epsilon(1e-12));
    }
    REQUIRE(res.errors_nn.size() == 15);
    CHECK(res.errors_nn[0].metric_id == "PR");

    // Determinism: same seed, same everything.
    const IdentifyResult res2 = identify(bundle, targets, opt, 13);
    REQUIRE(res2.solutions.size() == res.solutions.size());
    for (std::size_t i = 0; i < res.solutions.size(); ++i) {
        CHECK(res2.solutions[i].x == res.solutions[i].x);
        CHECK(res2.solutions[i].f_obj == res.solutions[i].f_obj);
    }
}

TEST_CASE("exponential identification pins both CV blocks to one") {
    const int m = 3;
    const std::vector<int> pick = full_cover_pick_m3();
    const SurrogateBundle bundle = picker_bundle(m, pick);
    std::vector<double> truth = {0.85, 0.75, 0.9, 6.0, 10.0, 4.0};
    std::vector<double> full_truth(truth);
    full_truth.resize(12, 1.0);  // exponential line: unit CVs
    const std::vector<int> caps = {8, 8};
    const ObservedMetrics targets = targets_for(full_truth, caps, pick, m);

    IdentifyOptions opt;
    opt.pso = small_pso(4);
    const IdentifyResult res = identify_exponential(bundle, targets, opt, 7);
    CHECK(res.mode == IdentifyMode::exponential);
    REQUIRE(res.solutions.size() == 4);
    CHECK(res.num_valid == 4);
    for (const IdentifySolution& s : res.solutions) {
        REQUIRE(s.search_x.size() == 6);
        REQUIRE(s.x.size() == 12);
        for (int d = 6; d < 12; ++d) CHECK(s.x[d] == 1.0);
        for (int d = 0; d < 6; ++d)
            CHECK(s.x[d] == doctest::Approx(full_truth[d]).epsilon(0.02));
    }
}

TEST_CASE("averages mode with zero penalty matches the standard search") {
    const int m = 3;
    const std::vector<int> pick = full_cover_pick_m3();
    const SurrogateBundle bundle = picker_bundle(m, pick);
    const std::vector<double> truth = {0.8, 0.85, 0.9, 7.0, 9.0, 11.0,
                                       0.5, 0.6,  0.7, 0.4, 0.3, 0.2};
    const ObservedMetrics targets = targets_for(truth, {12, 12}, pick, m);

    IdentifyOptions std_opt;
    std_opt.pso = small_pso(3);
    const IdentifyResult std_res = identify(bundle, targets, std_opt, 99);

    IdentifyOptions avg_opt = std_opt;
    avg_opt.lambda = 0.0;
    const IdentifyResult avg_res =
        identify_with_averages(bundle, targets, 9.0, 0.45, avg_opt, 99);

    REQUIRE(avg_res.solutions.size() == std_res.solutions.size());
    for (std::size_t i = 0; i < std_res.solutions.size(); ++i) {
        CHECK(avg_res.solutions[i].x == std_res.solutions[i].x);
        CHECK(avg_res.solutions[i].f_obj == std_res.solutions[i].f_obj);
    }
}

TEST_CASE("averages mode accepts solutions matching the aggregate targets") {
    const int m = 3;
    // Metrics observe only the efficiencies, leaving downtime and CV free:
    // the aggregate penalty then has a whole manifold of valid solutions to
    // settle on, as it does with trained surrogates.
    std::vector<int> pick(15);
    for (int q = 0; q < 15; ++q) pick[q] = q % 3;
    const SurrogateBundle bundle = picker_bundle(m, pick);
    const std::vector<double> truth = {0.8, 0.85, 0.9, 7.0, 9.0, 11.0,
                                       0.5, 0.6,  0.7, 0.4, 0.3, 0.2};
    const double t_bar = 9.0;   // (7 + 9 + 11) / 3
    const double cv_bar = 0.45;  // mean of all six CVs
    const ObservedMetrics targets = targets_for(truth, {12, 12}, pick, m);

    IdentifyOptions opt;
    opt.pso = small_pso(4);
    opt.pso.particles = 200;
    opt.pso.max_iterations = 2000;
    opt.pso.stall_patience = 120;
    const IdentifyResult res = identify_with_averages(bundle, targets, t_bar, cv_bar, opt, 37);
    CHECK(res.mode == IdentifyMode::averages);
    CHECK(res.t_bar == t_bar);
    CHECK(res.cv_bar == cv_bar);
    CHECK(res.num_accepted >= 3);
    for (const IdentifySolution& s : res.solutions) {
        if (!s.accepted) continue;
        CHECK(s.valid);
        CHECK(std::fabs(s.mean_td - t_bar) < res.aggregate_tol);
        CHECK(std::fabs(s.mean_cv - cv_bar) < res.aggregate_tol);
        // The observed efficiencies are pinned even though the rest is free.
        for (int d = 0; d < 3; ++d)
            CHECK(s.x[d] == doctest::Approx(truth[d]).epsilon(0.01));
    }
    // Acceptance never outnumbers validity.
    CHECK(res.num_accepted <= res.num_valid);
}

TEST_CASE("validity flags are monotone in the threshold") {
    const int m = 3;
    const std::vector<int> pick = full_cover_pick_m3();
    const SurrogateBundle bundle = picker_bundle(m, pick);
    const std::vector<double> truth = {0.8, 0.85, 0.9, 7.0, 9.0, 11.0,
                                       0.5, 0.6,  0.7, 0.4, 0.3, 0.2};
    const ObservedMetrics targets = targets_for(truth, {12, 12}, pick, m);
    IdentifyOptions opt;
    opt.pso = small_pso(4);
    opt.pso.max_iterations = 30;  // stop early so objective values spread out
    opt.pso.stall_patience = 1;
    const IdentifyResult res = identify(bundle, targets, opt, 5);

    const std::vector<double> thresholds = {1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1e6};
    int prev = -1;
    for (double th : thresholds) {
        const std::vector<bool> flags = validity_at(res, th);
        int count = 0;
        for (bool b : flags) count += b ? 1 : 0;
        if (prev >= 0) CHECK(count >= prev);
        prev = count;
    }
    // At a huge threshold every in-box solution is valid.
    CHECK(prev == static_cast<int>(res.solutions.size()));

    // The stored flags agree with a recomputation at the stored threshold.
    const std::vector<bool> stored = validity_at(res, res.validity_tol);
    for (std::size_t i = 0; i < res.solutions.size(); ++i)
        CHECK(stored[i] == res.solutions[i].valid);
}

TEST_CASE("require_valid raises only when nothing is identifiable") {
    const int m = 2;
    // Constant predictions far away from any reachable target.
    const SurrogateBundle bundle = constant_bundle(m, std::vector<double>(8, 5.0));
    ObservedMetrics t;
    t.m = m;
    t.capacities = {6};
    t.values.assign(8, 0.0);

    IdentifyOptions opt;
    opt.pso = small_pso(2);
    opt.pso.particles = 20;
    opt.pso.neighborhood_increment = 10;
    opt.pso.max_iterations = 10;
    const IdentifyResult res = identify(bundle, t, opt, 1);
    CHECK(res.num_valid == 0);

    opt.require_valid = true;
    CHECK_THROWS_AS(identify(bundle, t, opt, 1), NoValidSolutionError);
}

TEST_CASE("re-scoring fills simulation objectives for valid solutions") {
    const int m = 2;
    const std::vector<int> pick = {0, 1, 2, 3, 4, 5, 6, 7};
    const SurrogateBundle bundle = picker_bundle(m, pick);
    const std::vector<double> truth = {0.85, 0.8, 5.0, 4.0, 0.5, 0.6, 0.7, 0.8};
    const ObservedMetrics targets = targets_for(truth, {6}, pick, m);

    IdentifyOptions opt;
    opt.pso = small_pso(3);
    SimConfig sim;
    sim.warmup = 500;
    sim.horizon = 2000;
    sim.replications = 2;
    sim.base_seed = 77;
    opt.rescore = sim;
    const IdentifyResult res = identify(bundle, targets, opt, 13);
    REQUIRE(res.num_valid > 0);
    REQUIRE(res.errors_sim.size() == 8);
    for (const IdentifySolution& s : res.solutions) {
        if (s.valid)
            CHECK(s.sim_f_obj >= 0.0);
        else
            CHECK(s.sim_f_obj == -1.0);
    }
}

TEST_CASE("identification results serialize through JSON") {
    const int m = 3;
    const std::vector<int> pick = full_cover_pick_m3();
    const SurrogateBundle bundle = picker_bundle(m, pick);
    const std::vector<double> truth = {0.8, 0.85, 0.9, 7.0, 9.0, 11.0,
                                       0.5, 0.6,  0.7, 0.4, 0.3, 0.2};
    const ObservedMetrics targets = targets_for(truth, {12, 12}, pick, m);
    IdentifyOptions opt;
    opt.pso = small_pso(3);
    opt.pso.tighten_after = 2;
    const IdentifyResult res = identify_with_averages(bundle, targets, 9.0, 0.45, opt, 404);

    const std::string text = identify_result_to_json(res);
    const IdentifyResult back = identify_result_from_json(text);
    CHECK(back.m == res.m);
    CHECK(back.mode == res.mode);
    CHECK(back.seed == res.seed);
    CHECK(back.capacities == res.capacities);
    CHECK(back.targets == res.targets);
    CHECK(back.validity_tol == res.validity_tol);
    CHECK(back.t_bar == res.t_bar);
    CHECK(back.cv_bar == res.cv_bar);
    CHECK(back.lambda == res.lambda);
    CHECK(back.aggregate_tol == res.aggregate_tol);
    CHECK(back.num_valid == res.num_valid);
    CHECK(back.num_accepted == res.num_accepted);
    CHECK(back.tightening_applied == res.tightening_applied);
    CHECK(back.tighten_means == res.tighten_means);
    REQUIRE(back.solutions.size() == res.solutions.size());
    for (std::size_t i = 0; i < res.solutions.size(); ++i) {
        CHECK(back.solutions[i].x == res.solutions[i].x);
        CHECK(back.solutions[i].search_x == res.solutions[i].search_x);
        CHECK(back.solutions[i].f_obj == res.solutions[i].f_obj);
        CHECK(back.solutions[i].sim_f_obj == res.solutions[i].sim_f_obj);
        CHECK(back.solutions[i].valid == res.solutions[i].valid);
        CHECK(back.solutions[i].accepted == res.solutions[i].accepted);
        CHECK(back.solutions[i].stop_reason == res.solutions[i].stop_reason);
        CHECK(back.solutions[i].tightened == res.solutions[i].tightened);
    }
    CHECK(back.errors_nn.size() == res.errors_nn.size());
    CHECK(back.errors_sim.size() == res.errors_sim.size());
}
