#pragma once

namespace lineident {

// Regularized incomplete beta function I_x(a, b), evaluated with the
// continued-fraction expansion (modified Lentz), relative tolerance 1e-10.
double regularized_incomplete_beta(double a, double b, double x);

// CDF of Student's t distribution with nu degrees of freedom.
double student_t_cdf(double t, double nu);

// Two-sided p-value of a t statistic: p = I_{nu/(nu+t^2)}(nu/2, 1/2).
double two_sided_p_from_t(double t, double nu);

}  // namespace lineident
