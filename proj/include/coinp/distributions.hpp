#pragma once

#include <cstdint>

namespace coinp {

// I_x(a, b), the regularized incomplete beta function, evaluated with a
// modified Lentz continued fraction. Throws std::domain_error unless
// a > 0, b > 0 and 0 <= x <= 1.
double regularized_incomplete_beta(double a, double b, double x);

// Lower-tail CDF of Student's t with df degrees of freedom (df >= 1).
double student_t_cdf(double t, std::uint64_t df);

// Upper tail 1 - CDF, computed without cancellation for large t.
double student_t_sf(double t, std::uint64_t df);

} // namespace coinp
