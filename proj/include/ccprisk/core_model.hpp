#pragma once

// Analytic CCP loss model: collateral waterfall, Pareto tail of the
// defaulter's liquidation loss, allocation to the reporting member and the
// discounted charge over a horizon.
//
// Member index 0 is always the reporting member (the one whose risk is
// measured). It is assumed not to default.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccprisk/errors.hpp"

namespace ccprisk {

using Real = double;
using Money = double;
using Rate = double;
using Probability = double;

/// Day count used to turn period lengths in days into year fractions.
inline constexpr Real days_per_year = 365.0;

inline Real year_fraction(Real days) { return days / days_per_year; }

/// Default intensity implied by a flat CDS spread: spread / (1 - recovery).
inline Rate hazard_from_spread(Rate spread, Real recovery) {
    require(recovery >= 0.0 && recovery < 1.0, "recovery must lie in [0, 1)");
    require(spread >= 0.0, "spread must be non-negative");
    return spread / (1.0 - recovery);
}

struct ClearingMember {
    std::string id;
    Money initial_margin = 0.0;
    Money default_fund = 0.0;
    Rate cds_spread = 0.0;
    Real recovery = 0.4;
    Rate hazard = 0.0;

    /// Builds a member whose hazard is derived from its spread and recovery.
    static ClearingMember from_spread(std::string id, Money margin, Money fund, Rate spread, Real recovery) {
        ClearingMember m{std::move(id), margin, fund, spread, recovery, hazard_from_spread(spread, recovery)};
        m.validate();
        return m;
    }

    void validate() const {
        require(initial_margin >= 0.0 && default_fund >= 0.0,
                "member " + id + ": collateral must be non-negative");
        require(initial_margin > 0.0 || default_fund > 0.0, "member " + id + ": no collateral posted");
        require(cds_spread >= 0.0, "member " + id + ": negative spread");
        require(recovery >= 0.0 && recovery < 1.0, "member " + id + ": recovery must lie in [0, 1)");
        require(hazard >= 0.0, "member " + id + ": negative hazard");
    }
};

struct CcpStructure {
    std::vector<ClearingMember> members;
    Money equity = 0.0;
    Real liquidation_days = 5.0;
    Real recap_days = 30.0;
    Probability margin_confidence = 0.01;

    std::size_t size() const { return members.size(); }

    Money total_default_fund() const {
        return std::accumulate(members.begin(), members.end(), Money{0.0},
                               [](Money acc, const ClearingMember& m) { return acc + m.default_fund; });
    }

    const ClearingMember& reporting_member() const { return members.front(); }

    void validate() const {
        require(members.size() >= 2, "a CCP needs at least two members");
        for (const auto& m : members)
            m.validate();
        require(equity >= 0.0, "CCP equity must be non-negative");
        require(liquidation_days > 0.0, "liquidation period must be positive");
        require(recap_days >= liquidation_days, "recapitalisation period must not be shorter than liquidation period");
        require(margin_confidence > 0.0 && margin_confidence < 0.5, "margin breach probability must lie in (0, 0.5)");
    }
};

struct MarketCalibration {
    Real wrong_way_factor = 1.0;
    Real contagion_factor = 1.0;
    Probability breach_probability = 0.01;
    Real pareto_index = 3.0;
    // parameter name -> "estimated" | "pinned" | "derived"
    std::map<std::string, std::string> provenance;

    void validate() const {
        require(wrong_way_factor >= 0.0, "wrong-way factor must be non-negative");
        require(contagion_factor >= 1.0, "contagion factor must be at least 1");
        require(breach_probability >= 0.0 && breach_probability < 1.0, "breach probability must lie in [0, 1)");
        require(pareto_index > 1.0, "infinite mean tail: Pareto index must exceed 1");
    }
};

/// Flat continuously compounded discount curve.
struct DiscountCurve {
    Rate rate = 0.0;

    Real discount(Real t) const { return std::exp(-rate * t); }

    /// Integral of the discount factor over [0, t].
    Real annuity(Real t) const {
        const Real x = rate * t;
        if (std::abs(x) < 1e-8)
            return t * (1.0 - 0.5 * x + x * x / 6.0);
        return -std::expm1(-x) / rate;
    }
};

struct MemberRisk {
    std::string id;
    Money expected_tail_loss = 0.0; // U-bar
    Real epsilon = 0.0;
    Real exposure = 0.0; // E-bar
    Money contribution = 0.0;
};

struct RiskReport {
    std::vector<MemberRisk> members; // one row per non-reporting member
    Money total_charge = 0.0;        // C0(T)
    Real lgd_total = 0.0;
    Real charge_fraction = 0.0;            // C0(T) / (M_avg + G_avg)
    Real simplified_charge_fraction = 0.0; // LGD_tot * lambda_bar * T
    Rate average_hazard = 0.0;             // lambda_bar
    Real horizon = 0.0;
    Money average_margin = 0.0;
    Money average_fund = 0.0;

    Money sum_of_contributions() const {
        Money s = 0.0;
        for (const auto& m : members)
            s += m.contribution;
        return s;
    }
};

/// Loss on the defaulter's portfolio not covered by its own collateral.
inline Money uncollateralised_loss(Money portfolio_loss, Money stressed_margin, Money stressed_fund) {
    return std::max(portfolio_loss - stressed_margin - stressed_fund, 0.0);
}

struct StressedCollateral {
    Money margin = 0.0;
    Money fund = 0.0;
};

inline StressedCollateral stressed_collateral(const ClearingMember& member, Real wrong_way_factor) {
    require(wrong_way_factor >= 0.0, "wrong-way factor must be non-negative");
    return {wrong_way_factor * member.initial_margin, wrong_way_factor * member.default_fund};
}

/// Reporting member's pro-rata share of losses when `defaulted` members have
/// defaulted in the same allocation period. Scaling every contribution by
/// a common factor leaves the share unchanged.
inline Real allocation_fraction(std::span<const Money> default_funds, std::span<const std::size_t> defaulted) {
    require(!defaulted.empty(), "allocation requires at least one defaulted member");
    Money total = 0.0;
    for (Money d : default_funds)
        total += d;
    Money lost = 0.0;
    for (std::size_t j : defaulted) {
        require(j != 0, "the reporting member cannot be in the defaulted set");
        require(j < default_funds.size(), "defaulted index out of range");
        lost += default_funds[j];
    }
    const Money remaining = total - lost;
    if (!(remaining > 0.0))
        throw FundExhaustedError("defaulted members hold the entire default fund");
    return default_funds[0] / remaining;
}

inline std::vector<Money> default_funds(const CcpStructure& ccp) {
    std::vector<Money> d;
    d.reserve(ccp.size());
    for (const auto& m : ccp.members)
        d.push_back(m.default_fund);
    return d;
}

inline Real allocation_fraction(const CcpStructure& ccp, std::span<const std::size_t> defaulted) {
    const auto d = default_funds(ccp);
    return allocation_fraction(std::span<const Money>(d), defaulted);
}

/// P[loss > x] = p_hat (M* / x)^alpha, valid for x >= M*.
inline Probability pareto_tail_prob(Money x, Money stressed_margin, Probability breach_probability, Real alpha) {
    require(stressed_margin > 0.0, "Pareto scale must be positive");
    require(alpha > 0.0, "Pareto index must be positive");
    require(breach_probability >= 0.0 && breach_probability <= 1.0, "breach probability must lie in [0, 1]");
    require(x >= stressed_margin, "Pareto tail is only defined at or beyond the stressed margin");
    if (std::isinf(x))
        return 0.0;
    return breach_probability * std::pow(stressed_margin / x, alpha);
}

/// Expected uncollateralised loss of a defaulting member:
/// w p_hat / (alpha - 1) * (M / (M + D))^alpha * (M + D).
inline Money conditional_expected_tail_loss(const ClearingMember& member, const MarketCalibration& cal) {
    if (!(cal.pareto_index > 1.0))
        throw ModelError("infinite mean tail: Pareto index must exceed 1 (member " + member.id + ")");
    require(member.initial_margin > 0.0, "member " + member.id + ": zero initial margin makes the Pareto scale degenerate");
    const Real alpha = cal.pareto_index;
    const Money collateral = member.initial_margin + member.default_fund;
    const Real lgd = cal.wrong_way_factor * cal.breach_probability / (alpha - 1.0);
    return lgd * std::pow(member.initial_margin / collateral, alpha) * collateral;
}

/// Exposure of the reporting member to `member` per unit of the reporting
/// member's fund contribution and per unit default probability.
inline Real member_exposure(const ClearingMember& member, Money total_fund, const MarketCalibration& cal, Real epsilon) {
    const Money rest = total_fund - member.default_fund;
    if (!(rest > 0.0))
        throw FundExhaustedError("member " + member.id + " holds the entire default fund");
    return conditional_expected_tail_loss(member, cal) / rest * (1.0 + epsilon);
}

inline Real member_exposure(const ClearingMember& member, const CcpStructure& ccp, const MarketCalibration& cal,
                            Real epsilon) {
    return member_exposure(member, ccp.total_default_fund(), cal, epsilon);
}

/// Optional per-member calibration overrides, keyed by member id.
using CalibrationOverrides = std::map<std::string, MarketCalibration>;

/// Discounted expected loss of the reporting member up to `horizon` years,
/// with flat hazards and CCP equity set to zero.
inline RiskReport total_charge(const CcpStructure& ccp, const MarketCalibration& cal, std::span<const Real> epsilon,
                               const DiscountCurve& curve, Real horizon, const CalibrationOverrides& overrides = {}) {
    if (!(horizon > 0.0))
        throw ModelError("horizon must be positive");
    require(epsilon.size() == ccp.size(), "one correction term per member is required");
    require(ccp.size() >= 2, "a CCP needs at least two members");

    const Money total_fund = ccp.total_default_fund();
    const Money own_fund = ccp.reporting_member().default_fund;
    const Real annuity = curve.annuity(horizon);

    RiskReport report;
    report.horizon = horizon;
    Rate hazard_sum = 0.0;
    Money margin_sum = 0.0, fund_sum = 0.0;
    for (const auto& m : ccp.members) {
        margin_sum += m.initial_margin;
        fund_sum += m.default_fund;
    }

    for (std::size_t k = 1; k < ccp.size(); ++k) {
        const auto& member = ccp.members[k];
        require(member.hazard >= 0.0, "member " + member.id + ": negative hazard");
        auto it = overrides.find(member.id);
        const MarketCalibration& c = it == overrides.end() ? cal : it->second;

        MemberRisk row;
        row.id = member.id;
        row.epsilon = epsilon[k];
        row.expected_tail_loss = conditional_expected_tail_loss(member, c);
        row.exposure = member_exposure(member, total_fund, c, epsilon[k]);
        row.contribution = own_fund * row.exposure * member.hazard * annuity;
        report.total_charge += row.contribution;
        report.members.push_back(std::move(row));
        hazard_sum += member.hazard;
    }

    const auto n_all = static_cast<Real>(ccp.size());
    const auto n_others = static_cast<Real>(ccp.size() - 1);
    report.average_margin = margin_sum / n_all;
    report.average_fund = fund_sum / n_all;
    report.average_hazard = hazard_sum / n_others * annuity / horizon;
    report.lgd_total = cal.wrong_way_factor * cal.breach_probability / (cal.pareto_index - 1.0);
    const Money avg_collateral = report.average_margin + report.average_fund;
    report.charge_fraction = avg_collateral > 0.0 ? report.total_charge / avg_collateral : 0.0;
    report.simplified_charge_fraction = report.lgd_total * report.average_hazard * horizon;
    return report;
}

struct SimplifiedCharge {
    Real lgd_total = 0.0;       // w p_hat / (alpha - 1)
    Real charge_fraction = 0.0; // LGD_tot * lambda_bar * T
    Money charge = 0.0;         // charge_fraction * (M + G)
};

/// Homogeneous-member approximation of the charge (D << M, negligible epsilon).
inline SimplifiedCharge simplified_charge(Money margin, Money fund, const MarketCalibration& cal, Rate average_hazard,
                                          Real horizon) {
    if (!(cal.pareto_index > 1.0))
        throw ModelError("infinite mean tail: Pareto index must exceed 1");
    require(margin >= 0.0 && fund >= 0.0 && average_hazard >= 0.0 && horizon >= 0.0,
            "simplified charge inputs must be non-negative");
    SimplifiedCharge out;
    out.lgd_total = cal.wrong_way_factor * cal.breach_probability / (cal.pareto_index - 1.0);
    out.charge_fraction = out.lgd_total * average_hazard * horizon;
    out.charge = out.charge_fraction * (margin + fund);
    return out;
}

} // namespace ccprisk
