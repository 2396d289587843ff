#pragma once

// CSV ingestion (rosters, price series), run configuration and JSON
// serialisation of results.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ccprisk/calibration.hpp"
#include "ccprisk/core_model.hpp"
#include "ccprisk/errors.hpp"
#include "ccprisk/scenario_engine.hpp"

namespace ccprisk {

using Json = nlohmann::ordered_json;

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos)
            break;
        start = comma + 1;
    }
    return out;
}

inline std::string where(const std::string& source, std::size_t line) {
    return source + ":" + std::to_string(line);
}

inline double parse_number(std::string_view text, const std::string& context) {
    double value = 0.0;
    if (!text.empty() && text.front() == '+')
        text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value))
        throw InputError(context + ": cannot parse number '" + std::string(text) + "'");
    return value;
}

inline std::chrono::year_month_day parse_date(std::string_view text, const std::string& context) {
    int y = 0;
    unsigned m = 0, d = 0;
    auto bad = [&] { return InputError(context + ": invalid ISO-8601 date '" + std::string(text) + "'"); };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-')
        throw bad();
    auto field = [&](std::size_t pos, std::size_t len, auto& out) {
        const auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
        if (ec != std::errc{} || ptr != text.data() + pos + len)
            throw bad();
    };
    field(0, 4, y);
    field(5, 2, m);
    field(8, 2, d);
    const std::chrono::year_month_day date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok())
        throw bad();
    return date;
}

/// Shortest %g representation that parses back to the same double.
inline std::string format_number(double x) {
    char buf[32];
    for (int precision = 1; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, x);
        if (std::strtod(buf, nullptr) == x)
            break;
    }
    return buf;
}

/// Reads non-empty, non-comment lines; returns (line number, content).
inline std::vector<std::pair<std::size_t, std::string>> content_lines(std::istream& in) {
    std::vector<std::pair<std::size_t, std::string>> lines;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        lines.emplace_back(number, std::string(t));
    }
    return lines;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot open '" + path + "'");
    return in;
}

} // namespace detail

inline std::string format_date(const std::chrono::year_month_day& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

// ---------------------------------------------------------------- rosters

struct RosterRow {
    std::string member_id;
    double initial_margin = 0.0;
    double default_fund = 0.0;
    double cds_spread_bps = 0.0;
    double recovery_pct = 40.0;

    bool operator==(const RosterRow&) const = default;
};

struct Roster {
    std::vector<RosterRow> rows;
    std::string reporting_member; // defaults to the first row

    bool operator==(const Roster&) const = default;

    /// Members ordered with the reporting member first; rates converted from
    /// basis points and percent.
    CcpStructure to_ccp() const {
        CcpStructure ccp;
        const RosterRow* reporting = nullptr;
        for (const auto& r : rows)
            if (r.member_id == reporting_member)
                reporting = &r;
        require<InputError>(reporting != nullptr, "reporting member '" + reporting_member + "' not in roster");
        auto convert = [](const RosterRow& r) {
            return ClearingMember::from_spread(r.member_id, r.initial_margin, r.default_fund, r.cds_spread_bps / 1e4,
                                               r.recovery_pct / 100.0);
        };
        ccp.members.push_back(convert(*reporting));
        for (const auto& r : rows)
            if (&r != reporting)
                ccp.members.push_back(convert(r));
        return ccp;
    }
};

inline constexpr std::string_view roster_columns[] = {"member_id", "initial_margin", "default_fund", "cds_spread_bps",
                                                      "recovery_pct"};

inline Roster parse_roster(std::istream& in, const std::string& source = "<roster>",
                           std::optional<std::string> reporting_member = std::nullopt) {
    const auto lines = detail::content_lines(in);
    if (lines.empty())
        throw InputError(source + ": empty roster (header required)");
    const auto header = detail::split_csv(lines.front().second);
    std::size_t col[5];
    for (std::size_t c = 0; c < 5; ++c) {
        const auto it = std::find(header.begin(), header.end(), roster_columns[c]);
        if (it == header.end())
            throw InputError(detail::where(source, lines.front().first) + ": missing column '" +
                             std::string(roster_columns[c]) + "'");
        col[c] = static_cast<std::size_t>(it - header.begin());
    }

    Roster roster;
    std::set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto& [number, text] = lines[i];
        const auto ctx = detail::where(source, number);
        const auto cells = detail::split_csv(text);
        if (cells.size() != header.size())
            throw InputError(ctx + ": expected " + std::to_string(header.size()) + " fields, got " +
                             std::to_string(cells.size()));
        RosterRow row;
        row.member_id = std::string(cells[col[0]]);
        if (row.member_id.empty())
            throw InputError(ctx + ": empty member_id");
        if (!seen.insert(row.member_id).second)
            throw InputError(ctx + ": duplicate member_id '" + row.member_id + "'");
        row.initial_margin = detail::parse_number(cells[col[1]], ctx);
        row.default_fund = detail::parse_number(cells[col[2]], ctx);
        row.cds_spread_bps = detail::parse_number(cells[col[3]], ctx);
        row.recovery_pct = detail::parse_number(cells[col[4]], ctx);
        if (row.initial_margin < 0 || row.default_fund < 0 || row.cds_spread_bps < 0 || row.recovery_pct < 0)
            throw InputError(ctx + ": negative value");
        if (row.recovery_pct >= 100.0)
            throw InputError(ctx + ": recovery_pct must be below 100");
        roster.rows.push_back(std::move(row));
    }
    if (roster.rows.size() < 2)
        throw InputError(source + ": a roster needs at least two members");
    roster.reporting_member = reporting_member.value_or(roster.rows.front().member_id);
    if (!seen.contains(roster.reporting_member))
        throw InputError(source + ": reporting member '" + roster.reporting_member + "' not in roster");
    return roster;
}

inline Roster load_roster(const std::string& path, std::optional<std::string> reporting_member = std::nullopt) {
    auto in = detail::open_input(path);
    return parse_roster(in, path, std::move(reporting_member));
}

/// Writes the roster with the reporting member as the first row.
inline void write_roster(std::ostream& out, const Roster& roster) {
    out << "member_id,initial_margin,default_fund,cds_spread_bps,recovery_pct\n";
    auto row = [&](const RosterRow& r) {
        out << r.member_id << ',' << detail::format_number(r.initial_margin) << ','
            << detail::format_number(r.default_fund) << ',' << detail::format_number(r.cds_spread_bps) << ','
            << detail::format_number(r.recovery_pct) << '\n';
    };
    for (const auto& r : roster.rows)
        if (r.member_id == roster.reporting_member)
            row(r);
    for (const auto& r : roster.rows)
        if (r.member_id != roster.reporting_member)
            row(r);
}

// ----------------------------------------------------------------- series

inline PriceSeries parse_series(std::istream& in, const std::string& source = "<series>") {
    const auto lines = detail::content_lines(in);
    if (lines.empty())
        throw InputError(source + ": empty series (header required)");
    const auto header = detail::split_csv(lines.front().second);
    if (header.size() != 2 || header[0] != "date" || header[1] != "level")
        throw InputError(detail::where(source, lines.front().first) + ": header must be 'date,level'");
    PriceSeries series;
    series.name = source;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto& [number, text] = lines[i];
        const auto ctx = detail::where(source, number);
        const auto cells = detail::split_csv(text);
        if (cells.size() != 2)
            throw InputError(ctx + ": expected 2 fields, got " + std::to_string(cells.size()));
        Observation o{detail::parse_date(cells[0], ctx), detail::parse_number(cells[1], ctx)};
        if (!series.observations.empty() &&
            !(std::chrono::sys_days(series.observations.back().date) < std::chrono::sys_days(o.date)))
            throw InputError(ctx + ": dates must be strictly increasing");
        series.observations.push_back(o);
    }
    if (series.observations.empty())
        throw InputError(source + ": no observations");
    return series;
}

inline PriceSeries load_series(const std::string& path) {
    auto in = detail::open_input(path);
    return parse_series(in, path);
}

inline void write_series(std::ostream& out, const PriceSeries& series) {
    out << "date,level\n";
    for (const auto& o : series.observations)
        out << format_date(o.date) << ',' << detail::format_number(o.level) << '\n';
}

// ------------------------------------------------------------ run config

/// Parameters of one CLI invocation. Pinned parameters bypass estimation.
struct RunConfig {
    double horizon_years = 1.0;
    double rate = 0.0;
    double recap_days = 30.0;
    double liquidation_days = 5.0;
    double margin_confidence = 0.01;
    double equity = 0.0;
    double correlation = 0.0;
    std::size_t mc_samples = 2'000'000;
    std::uint64_t rng_seed = 20111101;
    bool exact = false;
    std::size_t quadrature_points = 64;

    std::optional<double> wrong_way_factor;
    std::optional<double> contagion_factor;
    std::optional<double> breach_probability;
    std::optional<double> pareto_index;
    std::optional<double> epsilon;

    bool operator==(const RunConfig&) const = default;

    ScenarioEngineConfig engine() const {
        ScenarioEngineConfig cfg;
        cfg.correlation = correlation;
        cfg.recap_days = recap_days;
        cfg.mc_samples = mc_samples;
        cfg.rng_seed = rng_seed;
        cfg.mode = exact ? EpsilonMode::exact_enumeration : EpsilonMode::monte_carlo;
        cfg.quadrature_points = quadrature_points;
        return cfg;
    }

    void apply_to(CcpStructure& ccp) const {
        ccp.equity = equity;
        ccp.recap_days = recap_days;
        ccp.liquidation_days = liquidation_days;
        ccp.margin_confidence = margin_confidence;
    }
};

inline Json to_json(const RunConfig& c) {
    Json j;
    j["horizon_years"] = c.horizon_years;
    j["rate"] = c.rate;
    j["recap_days"] = c.recap_days;
    j["liquidation_days"] = c.liquidation_days;
    j["margin_confidence"] = c.margin_confidence;
    j["equity"] = c.equity;
    j["correlation"] = c.correlation;
    j["mc_samples"] = c.mc_samples;
    j["rng_seed"] = c.rng_seed;
    j["exact"] = c.exact;
    j["quadrature_points"] = c.quadrature_points;
    Json pins = Json::object();
    auto pin = [&](const char* key, const std::optional<double>& v) {
        if (v)
            pins[key] = *v;
    };
    pin("wrong_way_factor", c.wrong_way_factor);
    pin("contagion_factor", c.contagion_factor);
    pin("breach_probability", c.breach_probability);
    pin("pareto_index", c.pareto_index);
    pin("epsilon", c.epsilon);
    j["pins"] = pins;
    return j;
}

inline RunConfig run_config_from_json(const Json& j) {
    RunConfig c;
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key))
                field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("horizon_years", c.horizon_years);
        get("rate", c.rate);
        get("recap_days", c.recap_days);
        get("liquidation_days", c.liquidation_days);
        get("margin_confidence", c.margin_confidence);
        get("equity", c.equity);
        get("correlation", c.correlation);
        get("mc_samples", c.mc_samples);
        get("rng_seed", c.rng_seed);
        get("exact", c.exact);
        get("quadrature_points", c.quadrature_points);
        if (j.contains("pins")) {
            const auto& p = j.at("pins");
            auto pin = [&](const char* key, std::optional<double>& field) {
                if (p.contains(key))
                    field = p.at(key).get<double>();
            };
            pin("wrong_way_factor", c.wrong_way_factor);
            pin("contagion_factor", c.contagion_factor);
            pin("breach_probability", c.breach_probability);
            pin("pareto_index", c.pareto_index);
            pin("epsilon", c.epsilon);
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("invalid run configuration: ") + e.what());
    }
    return c;
}

inline Json parse_json(std::istream& in, const std::string& source) {
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(source + ": " + e.what());
    }
}

inline RunConfig load_run_config(const std::string& path) {
    auto in = detail::open_input(path);
    return run_config_from_json(parse_json(in, path));
}

// ------------------------------------------------------- calibration I/O

inline Json to_json(const MarketCalibration& cal) {
    Json j;
    j["wrong_way_factor"] = cal.wrong_way_factor;
    j["contagion_factor"] = cal.contagion_factor;
    j["breach_probability"] = cal.breach_probability;
    j["pareto_index"] = cal.pareto_index;
    Json prov = Json::object();
    for (const auto& [k, v] : cal.provenance)
        prov[k] = v;
    j["provenance"] = prov;
    return j;
}

/// Accepts either a bare calibration object or a `calibrate` report.
inline MarketCalibration calibration_from_json(const Json& doc) {
    const Json& j = doc.contains("calibration") ? doc.at("calibration") : doc;
    MarketCalibration cal;
    try {
        cal.wrong_way_factor = j.at("wrong_way_factor").get<double>();
        cal.contagion_factor = j.value("contagion_factor", 1.0);
        cal.breach_probability = j.at("breach_probability").get<double>();
        cal.pareto_index = j.at("pareto_index").get<double>();
        if (j.contains("provenance"))
            for (const auto& [k, v] : j.at("provenance").items())
                cal.provenance[k] = v.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("invalid calibration: ") + e.what());
    }
    return cal;
}

inline MarketCalibration load_calibration(const std::string& path) {
    auto in = detail::open_input(path);
    return calibration_from_json(parse_json(in, path));
}

inline const char* to_string(EpsilonMode m) {
    return m == EpsilonMode::monte_carlo ? "monte_carlo" : "exact_enumeration";
}

inline Json to_json(const CcpStructure& ccp, const EpsilonResult& r) {
    Json j;
    j["mode"] = to_string(r.mode);
    j["samples"] = r.samples;
    j["exhausted_samples"] = r.exhausted_samples;
    j["exhausted_probability"] = r.exhausted_probability;
    Json rows = Json::array();
    for (std::size_t k = 1; k < ccp.size(); ++k) {
        Json row;
        row["member_id"] = ccp.members[k].id;
        row["epsilon"] = r.epsilon[k];
        row["std_error"] = r.std_error[k];
        row["period_default_probability"] = r.marginal_probability[k];
        if (!r.default_frequency.empty())
            row["default_frequency"] = r.default_frequency[k];
        rows.push_back(row);
    }
    j["members"] = rows;
    return j;
}

inline Json to_json(const RiskReport& r) {
    Json j;
    Json rows = Json::array();
    for (const auto& m : r.members) {
        Json row;
        row["member_id"] = m.id;
        row["expected_tail_loss"] = m.expected_tail_loss;
        row["epsilon"] = m.epsilon;
        row["exposure"] = m.exposure;
        row["contribution"] = m.contribution;
        rows.push_back(row);
    }
    j["members"] = rows;
    Json totals;
    totals["total_charge"] = r.total_charge;
    totals["lgd_total"] = r.lgd_total;
    totals["charge_fraction"] = r.charge_fraction;
    totals["simplified_charge_fraction"] = r.simplified_charge_fraction;
    totals["average_hazard"] = r.average_hazard;
    totals["horizon_years"] = r.horizon;
    totals["average_margin"] = r.average_margin;
    totals["average_fund"] = r.average_fund;
    j["totals"] = totals;
    return j;
}

inline Json to_json(const Roster& roster) {
    Json rows = Json::array();
    for (const auto& r : roster.rows) {
        Json row;
        row["member_id"] = r.member_id;
        row["initial_margin"] = r.initial_margin;
        row["default_fund"] = r.default_fund;
        row["cds_spread_bps"] = r.cds_spread_bps;
        row["recovery_pct"] = r.recovery_pct;
        rows.push_back(row);
    }
    Json j;
    j["reporting_member"] = roster.reporting_member;
    j["rows"] = rows;
    return j;
}

} // namespace ccprisk
