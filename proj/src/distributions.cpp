#include "coinp/distributions.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace coinp {

namespace {

constexpr int kMaxIterations = 100000;
constexpr double kEpsilon = 1e-16;
constexpr double kTiny = 1e-300;

// Continued fraction for I_x(a, b) (without the x^a y^b / (a B(a,b)) prefactor).
double beta_continued_fraction(double a, double b, double x)
{
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny)
        d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny)
            d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny)
            c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny)
            d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny)
            c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEpsilon)
            return h;
    }
    throw std::runtime_error("incomplete beta continued fraction did not converge (a="
                             + std::to_string(a) + ", b=" + std::to_string(b) + ")");
}

double log_beta(double a, double b)
{
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// x and y = 1 - x are passed separately so callers that know y more
// precisely than 1 - x (the t distribution tails) keep that precision.
double incomplete_beta(double a, double b, double x, double y)
{
    if (x <= 0.0)
        return 0.0;
    if (y <= 0.0)
        return 1.0;
    const double log_x = x < 0.5 ? std::log(x) : std::log1p(-y);
    const double log_y = y < 0.5 ? std::log(y) : std::log1p(-x);
    const double front = std::exp(a * log_x + b * log_y - log_beta(a, b));
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, y) / b;
}

// P(T > |t|) for t != 0
double upper_tail(double t, double nu)
{
    const double t2 = t * t;
    const double x = nu / (nu + t2);
    const double y = t2 / (nu + t2);
    return 0.5 * incomplete_beta(0.5 * nu, 0.5, x, y);
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x)
{
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
        throw std::domain_error("incomplete beta requires a > 0 and b > 0");
    if (!(x >= 0.0 && x <= 1.0))
        throw std::domain_error("incomplete beta requires 0 <= x <= 1");
    return incomplete_beta(a, b, x, 1.0 - x);
}

double student_t_cdf(double t, std::uint64_t df)
{
    if (df == 0)
        throw std::domain_error("student t requires df >= 1");
    if (std::isnan(t))
        return std::numeric_limits<double>::quiet_NaN();
    if (t == 0.0)
        return 0.5;
    if (std::isinf(t))
        return t > 0 ? 1.0 : 0.0;
    const double tail = upper_tail(t, static_cast<double>(df));
    return t > 0 ? 1.0 - tail : tail;
}

double student_t_sf(double t, std::uint64_t df)
{
    if (df == 0)
        throw std::domain_error("student t requires df >= 1");
    if (std::isnan(t))
        return std::numeric_limits<double>::quiet_NaN();
    if (t == 0.0)
        return 0.5;
    if (std::isinf(t))
        return t > 0 ? 0.0 : 1.0;
    const double tail = upper_tail(t, static_cast<double>(df));
    return t > 0 ? tail : 1.0 - tail;
}

} // namespace coinp
