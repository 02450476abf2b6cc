#pragma once

namespace gph::stats {

/// Regularized incomplete beta I_x(a, b), via Lentz's continued fraction.
double incomplete_beta(double a, double b, double x);

/// Two-sided p-value of Student's t with `df` degrees of freedom.
double t_two_sided_p(double t, double df);

}  // namespace gph::stats
