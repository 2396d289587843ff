#pragma once

// Command implementations behind the `ccprisk` tool. Each command writes a
// human-readable table to `out` and returns the machine-readable report.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ccprisk/calibration.hpp"
#include "ccprisk/core_model.hpp"
#include "ccprisk/io.hpp"
#include "ccprisk/scenario_engine.hpp"

namespace ccprisk {

namespace detail {

template <class T>
std::string fmt(const char* spec, T x) {
    char buf[128];
    std::snprintf(buf, sizeof buf, spec, x);
    return buf;
}

inline std::string pct(double x, int decimals = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f%%", decimals, 100.0 * x);
    return buf;
}

inline std::string bps(double x) { return fmt("%.2fbps", 1e4 * x); }

inline const char* to_string(VolMapping m) { return m == VolMapping::linear ? "linear" : "exp"; }
inline const char* to_string(TailSide s) {
    return s == TailSide::both ? "both" : (s == TailSide::up ? "up" : "down");
}

} // namespace detail

// -------------------------------------------------------------- calibrate

struct CalibrateOptions {
    std::string series_path;
    CalibrationOptions calibration;
    std::optional<std::string> diagnostics_dir;
};

inline Json run_calibrate(const PriceSeries& series, const CalibrateOptions& opt, std::ostream& out) {
    const auto result = calibrate_market(series, opt.calibration);
    const auto& cal = result.calibration;
    const auto& c = opt.calibration;
    const double w_linear = wrong_way_factor(result.stress_vol, result.current_vol, VolMapping::linear,
                                             c.margin_confidence);
    const double w_exp = wrong_way_factor(result.stress_vol, result.current_vol, VolMapping::exponential,
                                          c.margin_confidence);

    out << "calibration of " << series.name << " (" << series.size() << " observations, " << c.horizon_days
        << "-day " << (c.overlap ? "overlapping" : "non-overlapping") << " returns)\n";
    out << "  current vol            " << detail::pct(result.current_vol) << '\n';
    out << "  max vol                " << detail::pct(result.max_vol) << '\n';
    out << "  " << detail::fmt("%-23s", (detail::fmt("%g", 100 * c.quantile) + "% vol").c_str())
        << detail::pct(result.stress_vol) << '\n';
    out << "  wrong-way factor w     " << detail::fmt("%.4f", cal.wrong_way_factor) << "  (" << detail::to_string(c.mapping)
        << " mapping; linear " << detail::fmt("%.4f", w_linear) << ", exp " << detail::fmt("%.4f", w_exp) << ")\n";
    out << "  contagion factor gamma " << detail::fmt("%.4f", cal.contagion_factor) << '\n';
    out << "  breach probability     " << detail::pct(cal.breach_probability) << '\n';
    out << "  Pareto index alpha     " << detail::fmt("%.4f", cal.pareto_index) << "  (Gaussian reference "
        << detail::fmt("%.3f", result.tail.gaussian_reference_alpha) << ", anchor "
        << detail::fmt("%.6g", result.tail.anchor_quantile) << ")\n";
    if (!result.w_plausible)
        out << "  note: w outside the plausibility band [1.2, 2.6]\n";
    if (!result.gamma_plausible)
        out << "  note: gamma outside the plausibility band [1.8, 2.8]\n";
    for (const auto& w : result.warnings)
        out << "  warning: " << w << '\n';

    Json j;
    j["command"] = "calibrate";
    Json inputs;
    inputs["series"] = series.name;
    inputs["observations"] = series.size();
    inputs["horizon_days"] = c.horizon_days;
    inputs["decay"] = c.decay;
    inputs["decay_forward"] = c.decay_forward;
    inputs["quantile"] = c.quantile;
    inputs["mapping"] = detail::to_string(c.mapping);
    inputs["overlap"] = c.overlap;
    inputs["margin_confidence"] = c.margin_confidence;
    inputs["warmup"] = c.warmup;
    inputs["seed_window"] = c.seed_window;
    inputs["tail_side"] = detail::to_string(c.pareto.side);
    inputs["fit_space"] = c.pareto.space == FitSpace::probability ? "probability" : "log_probability";
    inputs["anchor_probability"] = c.pareto.anchor_probability;
    if (c.as_of)
        inputs["as_of"] = format_date(*c.as_of);
    j["inputs"] = inputs;
    j["calibration"] = to_json(cal);
    Json diag;
    diag["current_vol"] = result.current_vol;
    diag["max_vol"] = result.max_vol;
    diag["stress_vol"] = result.stress_vol;
    diag["wrong_way_factor_linear"] = w_linear;
    diag["wrong_way_factor_exponential"] = w_exp;
    diag["anchor_quantile"] = result.tail.anchor_quantile;
    diag["tail_points"] = result.tail.tail.size();
    diag["sum_squared_residuals"] = result.tail.sum_squared_residuals;
    diag["gaussian_reference_alpha"] = result.tail.gaussian_reference_alpha;
    diag["w_plausible"] = result.w_plausible;
    diag["gamma_plausible"] = result.gamma_plausible;
    diag["warnings"] = result.warnings;
    j["diagnostics"] = diag;

    if (opt.diagnostics_dir) {
        namespace fs = std::filesystem;
        fs::create_directories(*opt.diagnostics_dir);
        std::ofstream vol(fs::path(*opt.diagnostics_dir) / "vol_path.csv");
        vol << "date,backward_vol,forward_vol,ratio\n";
        for (std::size_t i = 0; i < result.dates.size(); ++i) {
            vol << format_date(result.dates[i]) << ',' << detail::format_number(result.backward.vols[i]) << ','
                << detail::format_number(result.forward.vols[i]) << ',';
            if (!std::isnan(result.ratios[i]))
                vol << detail::format_number(result.ratios[i]);
            vol << '\n';
        }
        std::ofstream tail(fs::path(*opt.diagnostics_dir) / "tail_fit.csv");
        tail << "level,empirical_exceedance,model_exceedance\n";
        for (const auto& p : result.tail.tail)
            tail << detail::format_number(p.level) << ',' << detail::format_number(p.empirical) << ','
                 << detail::format_number(p.model) << '\n';
        if (!vol || !tail)
            throw InputError("cannot write diagnostics to '" + *opt.diagnostics_dir + "'");
    }
    return j;
}

inline Json run_calibrate(const CalibrateOptions& opt, std::ostream& out) {
    return run_calibrate(load_series(opt.series_path), opt, out);
}

// ---------------------------------------------------------------- epsilon

inline Json run_epsilon(const Roster& roster, const RunConfig& config, std::ostream& out) {
    auto ccp = roster.to_ccp();
    config.apply_to(ccp);
    const auto engine = config.engine();
    const auto r = compute_epsilon(ccp, engine);

    out << "correction term (" << to_string(r.mode) << ", rho " << detail::pct(config.correlation, 0) << ", "
        << config.recap_days << "-day allocation period";
    if (r.mode == EpsilonMode::monte_carlo)
        out << ", " << r.samples << " samples";
    out << ")\n";
    out << detail::fmt("  %-16s", "member") << detail::fmt("%12s", "epsilon") << detail::fmt("%12s", "std err")
        << detail::fmt("%14s", "P(default)") << '\n';
    for (std::size_t k = 1; k < ccp.size(); ++k)
        out << "  " << detail::fmt("%-16s", ccp.members[k].id.c_str()) << detail::fmt("%11.3f%%", 100 * r.epsilon[k])
            << detail::fmt("%11.3f%%", 100 * r.std_error[k]) << detail::fmt("%13.5f%%", 100 * r.marginal_probability[k])
            << '\n';
    if (r.exhausted_samples || r.exhausted_probability > 0)
        out << "  fund-exhausting scenarios excluded: " << r.exhausted_samples << " (probability "
            << detail::fmt("%.3g", r.exhausted_probability) << ")\n";

    Json j;
    j["command"] = "epsilon";
    j["config"] = to_json(config);
    j["roster"] = to_json(roster);
    j["result"] = to_json(ccp, r);
    return j;
}

/// Homogeneous roster used for the correlation sensitivity grid: equal
/// default funds, flat spread and 40% recovery. `members` counts the
/// reporting member unless `others_only` is set.
inline Roster homogeneous_roster(std::size_t members, double spread_bps, bool others_only = false) {
    Roster roster;
    const std::size_t n = others_only ? members + 1 : members;
    for (std::size_t i = 0; i < n; ++i)
        roster.rows.push_back({"CM" + std::to_string(i), 100.0, 10.0, spread_bps, 40.0});
    roster.reporting_member = "CM0";
    return roster;
}

struct Table1Column {
    double recap_days;
    double spread_bps;
};

inline constexpr std::array<Table1Column, 3> table1_columns{{{30, 200}, {10, 200}, {30, 100}}};
inline constexpr std::array<double, 7> table1_correlations{0.0, 0.2, 0.4, 0.6, 0.7, 0.8, 0.9};

struct Table1Cell {
    Table1Column column;
    double correlation;
    double epsilon_mc;
    double std_error;
    std::optional<double> epsilon_exact;
};

inline std::vector<Table1Cell> table1_grid(const RunConfig& config, bool others_only, bool with_exact) {
    std::vector<Table1Cell> cells;
    for (const auto& col : table1_columns) {
        auto ccp = homogeneous_roster(15, col.spread_bps, others_only).to_ccp();
        for (double rho : table1_correlations) {
            auto cfg = config.engine();
            cfg.correlation = rho;
            cfg.recap_days = col.recap_days;
            cfg.mode = EpsilonMode::monte_carlo;
            const auto mc = epsilon_mc(ccp, cfg);
            Table1Cell cell{col, rho, mc.epsilon[1], mc.std_error[1], std::nullopt};
            if (with_exact) {
                cfg.mode = EpsilonMode::exact_enumeration;
                cell.epsilon_exact = epsilon_exact(ccp, cfg).epsilon[1];
            }
            cells.push_back(cell);
        }
    }
    return cells;
}

inline Json run_table1(const RunConfig& config, bool others_only, bool with_exact, std::ostream& out) {
    const auto cells = table1_grid(config, others_only, with_exact);
    out << "correction term sensitivity: " << (others_only ? "15 members besides" : "15 members including")
        << " the reporting member, equal default funds, 40% recovery, " << config.mc_samples << " samples\n";
    out << detail::fmt("  %-12s", "dr (days)");
    for (const auto& c : table1_columns)
        out << detail::fmt("%28.0f", c.recap_days);
    out << '\n' << detail::fmt("  %-12s", "spread (bps)");
    for (const auto& c : table1_columns)
        out << detail::fmt("%28.0f", c.spread_bps);
    out << '\n';
    for (std::size_t r = 0; r < table1_correlations.size(); ++r) {
        out << "  " << detail::fmt("%-12s", detail::pct(table1_correlations[r], 0).c_str());
        for (std::size_t c = 0; c < table1_columns.size(); ++c) {
            const auto& cell = cells[c * table1_correlations.size() + r];
            std::string text = detail::pct(cell.epsilon_mc, 1) + " +- " + detail::pct(cell.std_error, 2);
            if (cell.epsilon_exact)
                text += " (" + detail::pct(*cell.epsilon_exact, 1) + ")";
            out << detail::fmt("%28s", text.c_str());
        }
        out << '\n';
    }
    if (with_exact)
        out << "  values in parentheses: exact enumeration\n";

    Json j;
    j["command"] = "epsilon";
    j["preset"] = "table1";
    j["config"] = to_json(config);
    j["members_include_reporting"] = !others_only;
    Json rows = Json::array();
    for (const auto& cell : cells) {
        Json row;
        row["recap_days"] = cell.column.recap_days;
        row["spread_bps"] = cell.column.spread_bps;
        row["correlation"] = cell.correlation;
        row["epsilon_mc"] = cell.epsilon_mc;
        row["std_error"] = cell.std_error;
        if (cell.epsilon_exact)
            row["epsilon_exact"] = *cell.epsilon_exact;
        rows.push_back(row);
    }
    j["cells"] = rows;
    return j;
}

// ----------------------------------------------------------------- charge

/// Calibration for `charge`: a loaded file (if any) overridden by pins. A
/// pinned contagion factor without a pinned breach probability implies one.
inline MarketCalibration resolve_calibration(std::optional<MarketCalibration> loaded, const RunConfig& config) {
    MarketCalibration cal;
    if (loaded)
        cal = *loaded;
    else
        require<InputError>(config.wrong_way_factor && config.pareto_index &&
                                (config.breach_probability || config.contagion_factor),
                            "charge needs a calibration file or pins for w, alpha and p_hat (or gamma)");
    auto pin = [&](const std::optional<double>& v, double& field, const char* name) {
        if (v) {
            field = *v;
            cal.provenance[name] = "pinned";
        }
    };
    pin(config.wrong_way_factor, cal.wrong_way_factor, "wrong_way_factor");
    pin(config.contagion_factor, cal.contagion_factor, "contagion_factor");
    pin(config.pareto_index, cal.pareto_index, "pareto_index");
    if (config.breach_probability) {
        cal.breach_probability = *config.breach_probability;
        cal.provenance["breach_probability"] = "pinned";
    } else if (config.contagion_factor) {
        cal.breach_probability = breach_probability(cal.contagion_factor, config.margin_confidence);
        cal.provenance["breach_probability"] = "derived";
    }
    cal.validate();
    return cal;
}

inline Json run_charge(const Roster& roster, const MarketCalibration& cal, const RunConfig& config, std::ostream& out) {
    auto ccp = roster.to_ccp();
    config.apply_to(ccp);
    ccp.validate();

    std::vector<Real> eps(ccp.size(), 0.0);
    std::optional<EpsilonResult> eps_result;
    if (config.epsilon) {
        std::fill(eps.begin() + 1, eps.end(), *config.epsilon);
    } else {
        eps_result = compute_epsilon(ccp, config.engine());
        eps = eps_result->epsilon;
    }
    const auto report = total_charge(ccp, cal, eps, DiscountCurve{config.rate}, config.horizon_years);

    out << "CCP risk of " << ccp.reporting_member().id << " over " << config.horizon_years << "y (rate "
        << detail::pct(config.rate) << ")\n";
    out << "  w " << detail::fmt("%.4g", cal.wrong_way_factor) << ", p_hat " << detail::pct(cal.breach_probability)
        << ", alpha " << detail::fmt("%.4g", cal.pareto_index) << ", epsilon "
        << (config.epsilon ? "pinned " + detail::pct(*config.epsilon) : std::string("from scenario engine")) << '\n';
    out << detail::fmt("  %-16s", "member") << detail::fmt("%14s", "U-bar") << detail::fmt("%10s", "epsilon")
        << detail::fmt("%14s", "exposure") << detail::fmt("%16s", "contribution") << '\n';
    for (const auto& m : report.members)
        out << "  " << detail::fmt("%-16s", m.id.c_str()) << detail::fmt("%14.6g", m.expected_tail_loss)
            << detail::fmt("%9.3f%%", 100 * m.epsilon) << detail::fmt("%14.6g", m.exposure)
            << detail::fmt("%16.6g", m.contribution) << '\n';
    out << "  total charge C0(T)           " << detail::fmt("%.6g", report.total_charge) << '\n';
    out << "  protection notional LGD_tot  " << detail::pct(report.lgd_total) << '\n';
    out << "  average hazard lambda-bar    " << detail::bps(report.average_hazard) << '\n';
    out << "  charge / (M + G)             " << detail::bps(report.charge_fraction) << '\n';
    out << "  simplified LGD_tot lambda T  " << detail::bps(report.simplified_charge_fraction) << '\n';

    Json j;
    j["command"] = "charge";
    j["config"] = to_json(config);
    j["roster"] = to_json(roster);
    j["calibration"] = to_json(cal);
    if (eps_result)
        j["epsilon"] = to_json(ccp, *eps_result);
    j["report"] = to_json(report);
    return j;
}

} // namespace ccprisk
