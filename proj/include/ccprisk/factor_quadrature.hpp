#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "ccprisk/errors.hpp"
#include "ccprisk/normal.hpp"

namespace ccprisk {

/// E[f(Z)] ~= sum_i weights[i] * f(nodes[i]) for a standard normal Z.
struct NormalRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Composite 8-point Gauss-Legendre on equal panels over [-z_max, z_max],
/// weighted by the normal density. `feature_width` is the length scale on
/// which the integrand can turn over (for a copula conditional probability
/// that is sqrt((1 - rho) / rho)); panels are kept at half of it so steep
/// factor loadings stay resolved. A single Gauss-Hermite rule of fixed order
/// loses digits fast once the width drops below its node spacing.
inline NormalRule normal_rule(double feature_width, std::size_t min_nodes = 64, double z_max = 9.0) {
    require<InputError>(feature_width > 0.0, "feature width must be positive");
    using Gauss = boost::math::quadrature::gauss<double, 8>;
    const double width = std::min(0.5, 0.5 * feature_width);
    const auto panels =
        std::max(static_cast<std::size_t>(std::ceil(2.0 * z_max / width)), (min_nodes + 7) / 8);
    const double h = 2.0 * z_max / static_cast<double>(panels);

    // boost stores the non-negative half of the symmetric rule
    std::vector<double> x, w;
    const auto& ax = Gauss::abscissa();
    const auto& aw = Gauss::weights();
    for (std::size_t i = ax.size(); i-- > 0;) {
        x.push_back(-ax[i]);
        w.push_back(aw[i]);
    }
    for (std::size_t i = ax[0] == 0.0 ? 1 : 0; i < ax.size(); ++i) {
        x.push_back(ax[i]);
        w.push_back(aw[i]);
    }

    NormalRule rule;
    rule.nodes.reserve(panels * x.size());
    rule.weights.reserve(panels * x.size());
    for (std::size_t p = 0; p < panels; ++p) {
        const double mid = -z_max + (static_cast<double>(p) + 0.5) * h;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double z = mid + 0.5 * h * x[i];
            rule.nodes.push_back(z);
            rule.weights.push_back(0.5 * h * w[i] * normal_pdf(z));
        }
    }
    return rule;
}

} // namespace ccprisk
