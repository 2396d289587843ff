#pragma once

#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>

namespace ccprisk {

inline double normal_cdf(double x) {
    if (std::isinf(x))
        return x > 0 ? 1.0 : 0.0;
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

inline double normal_pdf(double x) {
    constexpr double inv_sqrt_2pi = 0.398942280401432677939946059934;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

/// Inverse of the standard normal CDF; maps 0 and 1 to -inf and +inf.
inline double normal_quantile(double p) {
    if (p <= 0.0)
        return -std::numeric_limits<double>::infinity();
    if (p >= 1.0)
        return std::numeric_limits<double>::infinity();
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, p);
}

} // namespace ccprisk
