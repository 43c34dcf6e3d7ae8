#pragma once

namespace confbal {

/// P(Z > z) for a standard normal.
double normal_sf(double z);

/// Upper tail of the chi-square distribution with df > 0 degrees of freedom.
double chi_squared_sf(double x, double df);

/// Two-sided p-value for a Student-t statistic with (possibly fractional)
/// degrees of freedom, as produced by the Welch test.
double student_t_two_sided_p(double t, double df);

/// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Regularized upper incomplete gamma Q(a, x).
double upper_incomplete_gamma(double a, double x);

}  // namespace confbal
