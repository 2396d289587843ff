#pragma once

// Historical estimation of the market parameters: wrong-way factor from a
// stressed EWMA volatility, contagion factor from forward/backward EWMA
// ratios, breach probability from the contagion factor and the Pareto index
// from a tail fit to absolute changes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccprisk/core_model.hpp"
#include "ccprisk/errors.hpp"
#include "ccprisk/normal.hpp"

namespace ccprisk {

struct Observation {
    std::chrono::year_month_day date;
    double level = 0.0;
};

struct PriceSeries {
    std::string name;
    std::vector<Observation> observations;

    std::size_t size() const { return observations.size(); }

    void validate(bool require_positive) const {
        for (std::size_t i = 0; i < observations.size(); ++i) {
            const auto& o = observations[i];
            require<InputError>(o.date.ok(), "invalid date at observation " + std::to_string(i));
            require<InputError>(std::isfinite(o.level), "non-finite level at observation " + std::to_string(i));
            if (require_positive)
                require<InputError>(o.level > 0.0, "log returns need positive levels (observation " +
                                                       std::to_string(i) + ")");
            if (i > 0)
                require<InputError>(std::chrono::sys_days(observations[i - 1].date) < std::chrono::sys_days(o.date),
                                    "dates must be strictly increasing (observation " + std::to_string(i) + ")");
        }
    }
};

enum class ReturnKind { log_return, absolute_change };

struct ReturnSeries {
    int horizon = 5;
    ReturnKind kind = ReturnKind::log_return;
    bool overlap = true;
    std::vector<double> values;
    std::vector<std::size_t> end_index; // observation index at which each return ends

    std::size_t size() const { return values.size(); }
};

inline ReturnSeries make_returns(const PriceSeries& series, int horizon, ReturnKind kind, bool overlap = true) {
    require<InputError>(horizon >= 1, "return horizon must be at least one observation");
    series.validate(kind == ReturnKind::log_return);
    ReturnSeries out;
    out.horizon = horizon;
    out.kind = kind;
    out.overlap = overlap;
    const auto& obs = series.observations;
    const std::size_t h = static_cast<std::size_t>(horizon);
    const std::size_t step = overlap ? 1 : h;
    for (std::size_t i = 0; i + h < obs.size(); i += step) {
        const double a = obs[i].level, b = obs[i + h].level;
        out.values.push_back(kind == ReturnKind::log_return ? std::log(b / a) : b - a);
        out.end_index.push_back(i + h);
    }
    return out;
}

enum class EwmaDirection { backward, forward };

struct VolSeries {
    std::vector<double> vols;
    EwmaDirection direction = EwmaDirection::backward;
    double decay = 0.99;

    std::size_t size() const { return vols.size(); }
};

/// sigma_i^2 = decay sigma_{i-1}^2 + (1 - decay) r_i^2 with sigma_0^2 = seed_var.
inline VolSeries ewma_backward(std::span<const double> returns, double decay, double seed_var) {
    require<InputError>(!returns.empty(), "EWMA needs at least one return");
    require<InputError>(decay >= 0.0 && decay < 1.0, "EWMA decay must lie in [0, 1)");
    require<InputError>(seed_var > 0.0, "EWMA seed variance must be positive");
    VolSeries out{std::vector<double>(returns.size()), EwmaDirection::backward, decay};
    double var = seed_var;
    for (std::size_t i = 0; i < returns.size(); ++i) {
        var = decay * var + (1.0 - decay) * returns[i] * returns[i];
        out.vols[i] = std::sqrt(var);
    }
    return out;
}

/// Mirror image of ewma_backward, run from the last observation to the first.
inline VolSeries ewma_forward(std::span<const double> returns, double decay, double seed_var) {
    require<InputError>(!returns.empty(), "EWMA needs at least one return");
    require<InputError>(decay >= 0.0 && decay < 1.0, "EWMA decay must lie in [0, 1)");
    require<InputError>(seed_var > 0.0, "EWMA seed variance must be positive");
    VolSeries out{std::vector<double>(returns.size()), EwmaDirection::forward, decay};
    double var = seed_var;
    for (std::size_t i = returns.size(); i-- > 0;) {
        var = decay * var + (1.0 - decay) * returns[i] * returns[i];
        out.vols[i] = std::sqrt(var);
    }
    return out;
}

/// Mean squared return over the first (backward) or last (forward) `count`
/// observations.
inline double seed_variance(std::span<const double> returns, EwmaDirection direction, std::size_t count = 20) {
    require<InputError>(!returns.empty(), "EWMA needs at least one return");
    const std::size_t k = std::min(count, returns.size());
    auto window = direction == EwmaDirection::backward ? returns.first(k) : returns.last(k);
    double s = 0.0;
    for (double r : window)
        s += r * r;
    return s / static_cast<double>(k);
}

/// Empirical quantile, linear interpolation between order statistics at
/// position q (n - 1).
inline double empirical_quantile(std::span<const double> values, double q) {
    require<InputError>(!values.empty(), "quantile of an empty series");
    require<InputError>(q >= 0.0 && q <= 1.0, "quantile level must lie in [0, 1]");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double stress_quantile(const VolSeries& vols, double q) { return empirical_quantile(vols.vols, q); }

/// Map from the Gaussian driver to portfolio losses used when converting a
/// volatility ratio into a collateral ratio.
enum class VolMapping { linear, exponential };

inline Real wrong_way_factor(double stress_vol, double current_vol, VolMapping mapping, Probability margin_confidence) {
    if (!(stress_vol > 0.0) || !(current_vol > 0.0))
        throw ModelError("zero volatility: wrong-way factor needs positive stressed and current volatilities");
    if (mapping == VolMapping::linear)
        return stress_vol / current_vol;
    require(margin_confidence > 0.0 && margin_confidence < 1.0, "margin breach probability must lie in (0, 1)");
    const double g = normal_quantile(1.0 - margin_confidence);
    return std::expm1(stress_vol * g) / std::expm1(current_vol * g);
}

inline Real wrong_way_factor(const VolSeries& vols, double current_vol, double q, VolMapping mapping,
                             Probability margin_confidence) {
    return wrong_way_factor(stress_quantile(vols, q), current_vol, mapping, margin_confidence);
}

/// Per-date ratio of forward-looking to backward-looking volatility.
inline std::vector<double> contagion_ratios(const VolSeries& backward, const VolSeries& forward) {
    require<InputError>(backward.size() == forward.size(), "backward and forward vol series are misaligned");
    std::vector<double> r(backward.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (!(backward.vols[i] > 0.0))
            throw ModelError("zero volatility in backward EWMA at index " + std::to_string(i));
        r[i] = forward.vols[i] / backward.vols[i];
    }
    return r;
}

inline Real contagion_factor(const VolSeries& backward, const VolSeries& forward, double q) {
    return empirical_quantile(contagion_ratios(backward, forward), q);
}

/// Probability of losses beyond the stressed margin once volatility has been
/// scaled up by the contagion factor: Phi(Phi^-1(p_M) / gamma).
inline Probability breach_probability(Real contagion, Probability margin_confidence) {
    if (!(contagion >= 1.0))
        throw ModelError("contagion factor must be at least 1");
    require(margin_confidence > 0.0 && margin_confidence < 0.5, "margin breach probability must lie in (0, 0.5)");
    return normal_cdf(normal_quantile(margin_confidence) / contagion);
}

enum class TailSide { both, up, down };
enum class FitSpace { probability, log_probability };

struct TailPoint {
    double level;
    double empirical; // fraction of the sample at or beyond `level`
    double model;
};

struct ParetoFit {
    double alpha = 0.0;
    double anchor_quantile = 0.0;
    double anchor_probability = 0.01;
    double sum_squared_residuals = 0.0;
    double gaussian_reference_alpha = 0.0;
    std::size_t sample_size = 0;
    std::vector<TailPoint> tail;

    double model_exceedance(double x) const { return anchor_probability * std::pow(anchor_quantile / x, alpha); }
};

struct ParetoFitOptions {
    double anchor_probability = 0.01;
    TailSide side = TailSide::both;
    FitSpace space = FitSpace::probability;
    double alpha_min = 1.1;
    double alpha_max = 12.0;
    double tolerance = 1e-3;
    std::size_t min_observations = 500;
    std::size_t min_tail = 10;
};

namespace detail {

/// Loss-side sample: "both" pools every change as a loss for a long and a
/// short position alike.
inline std::vector<double> loss_sample(std::span<const double> changes, TailSide side) {
    std::vector<double> out;
    out.reserve(side == TailSide::both ? 2 * changes.size() : changes.size());
    for (double c : changes) {
        if (side != TailSide::down)
            out.push_back(c);
        if (side != TailSide::up)
            out.push_back(-c);
    }
    return out;
}

template <typename Objective>
double golden_section_minimum(Objective&& f, double lo, double hi, double tol) {
    constexpr double inv_phi = 0.6180339887498949;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

/// Least-squares Pareto index through (anchor, anchor_probability) for the
/// given tail points: coarse scan over [alpha_min, alpha_max], then golden
/// section on the bracketing cell.
inline double fit_pareto_index(std::span<const double> levels, std::span<const double> exceedance, double anchor,
                               const ParetoFitOptions& opt) {
    auto objective = [&](double a) {
        double sse = 0.0;
        for (std::size_t i = 0; i < levels.size(); ++i) {
            const double model = opt.anchor_probability * std::pow(anchor / levels[i], a);
            const double r = opt.space == FitSpace::probability ? exceedance[i] - model
                                                                 : std::log(exceedance[i]) - std::log(model);
            sse += r * r;
        }
        return sse;
    };
    constexpr int grid = 200;
    const double step = (opt.alpha_max - opt.alpha_min) / grid;
    int best = 0;
    double best_value = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= grid; ++i) {
        const double v = objective(opt.alpha_min + i * step);
        if (v < best_value) {
            best_value = v;
            best = i;
        }
    }
    const double lo = opt.alpha_min + std::max(best - 1, 0) * step;
    const double hi = opt.alpha_min + std::min(best + 1, grid) * step;
    return golden_section_minimum(objective, lo, hi, opt.tolerance);
}

} // namespace detail

/// Fits P[X > x] = p (q / x)^alpha to the tail of the loss-side sample,
/// anchored at the empirical (1 - p)-quantile q, by least squares over the
/// observations beyond q.
inline ParetoFit pareto_fit(std::span<const double> changes, const ParetoFitOptions& opt = {}) {
    require<InputError>(opt.anchor_probability > 0.0 && opt.anchor_probability <= 0.1,
                        "anchor probability must lie in (0, 0.1]");
    if (changes.size() < opt.min_observations)
        throw InputError("insufficient data: Pareto fit needs at least " + std::to_string(opt.min_observations) +
                         " observations (got " + std::to_string(changes.size()) + ")");
    auto sample = detail::loss_sample(changes, opt.side);
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());

    ParetoFit fit;
    fit.anchor_probability = opt.anchor_probability;
    fit.sample_size = sample.size();
    fit.anchor_quantile = empirical_quantile(sample, 1.0 - opt.anchor_probability);
    if (!(fit.anchor_quantile > 0.0))
        throw ModelError("tail too thin: loss quantile at the anchor is not positive");

    auto first = std::upper_bound(sample.begin(), sample.end(), fit.anchor_quantile);
    std::vector<double> levels, exceedance;
    for (auto it = first; it != sample.end();) {
        // collapse ties onto one point
        auto next = std::upper_bound(it, sample.end(), *it);
        levels.push_back(*it);
        exceedance.push_back(static_cast<double>(sample.end() - it) / n);
        it = next;
    }
    if (levels.size() < opt.min_tail)
        throw ModelError("tail too thin: only " + std::to_string(levels.size()) +
                         " distinct observations beyond the anchor quantile");

    fit.alpha = detail::fit_pareto_index(levels, exceedance, fit.anchor_quantile, opt);
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const double model = fit.model_exceedance(levels[i]);
        fit.tail.push_back({levels[i], exceedance[i], model});
        const double r = exceedance[i] - model;
        fit.sum_squared_residuals += r * r;
    }

    // Same fit applied to an exact Gaussian tail at the same exceedance levels.
    std::vector<double> gauss_levels(exceedance.size());
    for (std::size_t i = 0; i < exceedance.size(); ++i)
        gauss_levels[i] = normal_quantile(1.0 - exceedance[i]);
    fit.gaussian_reference_alpha =
        detail::fit_pareto_index(gauss_levels, exceedance, normal_quantile(1.0 - opt.anchor_probability), opt);
    return fit;
}

struct CalibrationOptions {
    int horizon_days = 5;
    double decay = 0.99;
    double decay_forward = 0.97;
    double quantile = 0.99;
    VolMapping mapping = VolMapping::linear;
    bool overlap = true;
    Probability margin_confidence = 0.01;
    std::size_t seed_window = 20;
    std::size_t warmup = 100;
    ParetoFitOptions pareto;
    std::optional<std::chrono::year_month_day> as_of; // date of the "current" vol
};

struct CalibrationResult {
    MarketCalibration calibration;
    double current_vol = 0.0;
    double stress_vol = 0.0;
    double max_vol = 0.0;
    VolSeries backward;
    VolSeries forward;
    std::vector<double> ratios; // forward / backward, NaN outside the warmed-up range
    std::vector<std::chrono::year_month_day> dates; // end date of each return
    ParetoFit tail;
    std::vector<std::string> warnings;
    bool w_plausible = false;
    bool gamma_plausible = false;
};

/// Returns, EWMA in both directions, quantiles and the tail fit, assembled
/// into a MarketCalibration.
inline CalibrationResult calibrate_market(const PriceSeries& series, const CalibrationOptions& opt = {}) {
    require<InputError>(opt.quantile > 0.0 && opt.quantile <= 1.0, "quantile level must lie in (0, 1]");
    CalibrationResult out;
    if (series.size() < 2 * 252)
        out.warnings.push_back("less than two years of data (" + std::to_string(series.size()) + " observations)");

    const auto logret = make_returns(series, opt.horizon_days, ReturnKind::log_return, opt.overlap);
    const std::size_t n = logret.size();
    if (n <= 2 * opt.warmup + 1)
        throw InputError("insufficient data: " + std::to_string(n) + " returns, need more than " +
                         std::to_string(2 * opt.warmup + 1));
    for (std::size_t i : logret.end_index)
        out.dates.push_back(series.observations[i].date);

    const double seed_back = seed_variance(logret.values, EwmaDirection::backward, opt.seed_window);
    const double seed_fwd = seed_variance(logret.values, EwmaDirection::forward, opt.seed_window);
    if (!(seed_back > 0.0) || !(seed_fwd > 0.0))
        throw ModelError("zero volatility: returns in the EWMA seed window are all zero");
    out.backward = ewma_backward(logret.values, opt.decay, seed_back);
    out.forward = ewma_forward(logret.values, opt.decay_forward, seed_fwd);

    const std::span<const double> back(out.backward.vols);
    const auto back_warm = back.subspan(opt.warmup);
    out.stress_vol = empirical_quantile(back_warm, opt.quantile);
    out.max_vol = *std::max_element(back_warm.begin(), back_warm.end());

    std::size_t current = n - 1;
    if (opt.as_of) {
        const auto it = std::upper_bound(out.dates.begin(), out.dates.end(), *opt.as_of,
                                         [](const auto& d, const auto& e) {
                                             return std::chrono::sys_days(d) < std::chrono::sys_days(e);
                                         });
        require<InputError>(it != out.dates.begin(), "as-of date precedes the first return");
        current = static_cast<std::size_t>(it - out.dates.begin()) - 1;
    }
    out.current_vol = out.backward.vols[current];

    auto& cal = out.calibration;
    cal.wrong_way_factor = wrong_way_factor(out.stress_vol, out.current_vol, opt.mapping, opt.margin_confidence);

    out.ratios.assign(n, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> warm_ratios;
    for (std::size_t i = opt.warmup; i + opt.warmup < n; ++i) {
        out.ratios[i] = out.forward.vols[i] / out.backward.vols[i];
        warm_ratios.push_back(out.ratios[i]);
    }
    cal.contagion_factor = std::max(1.0, empirical_quantile(warm_ratios, opt.quantile));
    if (empirical_quantile(warm_ratios, opt.quantile) < 1.0)
        out.warnings.push_back("contagion ratio quantile below 1; floored at 1");
    cal.breach_probability = breach_probability(cal.contagion_factor, opt.margin_confidence);

    const auto changes = make_returns(series, opt.horizon_days, ReturnKind::absolute_change, opt.overlap);
    out.tail = pareto_fit(changes.values, opt.pareto);
    cal.pareto_index = out.tail.alpha;
    cal.provenance = {{"wrong_way_factor", "estimated"},
                      {"contagion_factor", "estimated"},
                      {"breach_probability", "derived"},
                      {"pareto_index", "estimated"}};

    out.w_plausible = cal.wrong_way_factor >= 1.2 && cal.wrong_way_factor <= 2.6;
    out.gamma_plausible = cal.contagion_factor >= 1.8 && cal.contagion_factor <= 2.8;
    return out;
}

} // namespace ccprisk
