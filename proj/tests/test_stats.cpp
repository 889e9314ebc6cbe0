#include <doctest.h>

#include <cmath>
#include <initializer_list>

#include "lineident/stats.hpp"

using namespace lineident;

// Reference values computed with an independent arbitrary-precision
// implementation of the regularized incomplete beta function and the
// Student t distribution.

TEST_CASE("regularized incomplete beta matches reference values") {
    CHECK(regularized_incomplete_beta(2.0, 3.0, 0.5) ==
          doctest::Approx(0.6875).epsilon(1e-12));
    CHECK(regularized_incomplete_beta(0.5, 0.5, 0.3) ==
          doctest::Approx(0.36901011956554536).epsilon(1e-10));
    CHECK(regularized_incomplete_beta(5.0, 2.0, 0.9) ==
          doctest::Approx(0.88573500000000005).epsilon(1e-12));
    CHECK(regularized_incomplete_beta(1.0, 1.0, 0.25) ==
          doctest::Approx(0.25).epsilon(1e-13));
}

TEST_CASE("incomplete beta endpoints and symmetry") {
    CHECK(regularized_incomplete_beta(2.0, 5.0, 0.0) == 0.0);
    CHECK(regularized_incomplete_beta(2.0, 5.0, 1.0) == 1.0);
    for (double x : {0.1, 0.4, 0.77}) {
        const double lhs = regularized_incomplete_beta(2.0, 3.5, x);
        const double rhs = 1.0 - regularized_incomplete_beta(3.5, 2.0, 1.0 - x);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("student t cdf matches reference values") {
    CHECK(student_t_cdf(1.0, 1.0) == doctest::Approx(0.75).epsilon(1e-10));
    CHECK(student_t_cdf(2.0, 10.0) == doctest::Approx(0.96330598261462974).epsilon(1e-10));
    CHECK(student_t_cdf(-1.5, 7.0) == doctest::Approx(0.088649243494985014).epsilon(1e-10));
    CHECK(student_t_cdf(0.0, 5.0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("two-sided p-values match reference values") {
    CHECK(two_sided_p_from_t(0.0, 8.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(two_sided_p_from_t(1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(two_sided_p_from_t(2.0, 10.0) ==
          doctest::Approx(0.073388034770740393).epsilon(1e-10));
    CHECK(two_sided_p_from_t(2.228, 10.0) ==
          doctest::Approx(0.050011771817111327).epsilon(1e-10));
    // Sign symmetry.
    CHECK(two_sided_p_from_t(-2.0, 10.0) ==
          doctest::Approx(two_sided_p_from_t(2.0, 10.0)).epsilon(1e-14));
}

TEST_CASE("p-value is monotone decreasing in |t|") {
    double last = 1.1;
    for (double t = 0.0; t <= 6.0; t += 0.25) {
        const double p = two_sided_p_from_t(t, 12.0);
        CHECK(p <= last + 1e-15);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        last = p;
    }
}

TEST_CASE("cdf and two-sided p are consistent") {
    for (double t : {0.3, 1.1, 2.7, 4.2}) {
        for (double nu : {1.0, 4.0, 30.0}) {
            const double p = two_sided_p_from_t(t, nu);
            const double via_cdf = 2.0 * (1.0 - student_t_cdf(t, nu));
            CHECK(p == doctest::Approx(via_cdf).epsilon(1e-9));
        }
    }
}
