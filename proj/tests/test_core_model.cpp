#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ccprisk/core_model.hpp"
#include "oracles/oracles.hpp"

using namespace ccprisk;

namespace {

ClearingMember member(Money m, Money d, Rate hazard = 0.0, std::string id = "X") {
    ClearingMember c;
    c.id = std::move(id);
    c.initial_margin = m;
    c.default_fund = d;
    c.hazard = hazard;
    return c;
}

MarketCalibration cal(Real w, Probability p, Real alpha) {
    MarketCalibration c;
    c.wrong_way_factor = w;
    c.breach_probability = p;
    c.pareto_index = alpha;
    return c;
}

CcpStructure homogeneous(std::size_t n, Money m, Money d, Rate hazard) {
    CcpStructure ccp;
    for (std::size_t i = 0; i < n; ++i)
        ccp.members.push_back(member(m, d, hazard, "CM" + std::to_string(i)));
    return ccp;
}

} // namespace

TEST(Hazard, SpreadOverLossGivenDefault) {
    EXPECT_NEAR(hazard_from_spread(0.02, 0.4), 0.0333333333333333, 1e-15);
    EXPECT_DOUBLE_EQ(hazard_from_spread(0.0, 0.4), 0.0);
    EXPECT_THROW(hazard_from_spread(0.02, 1.0), ModelError);
}

TEST(UncollateralisedLoss, PositivePartBeyondCollateral) {
    EXPECT_DOUBLE_EQ(uncollateralised_loss(150.0, 100.0, 10.0), 40.0);
    EXPECT_DOUBLE_EQ(uncollateralised_loss(90.0, 100.0, 10.0), 0.0);
    EXPECT_DOUBLE_EQ(uncollateralised_loss(110.0, 100.0, 10.0), 0.0);
}

TEST(StressedCollateral, ScalesByWrongWayFactor) {
    const auto s = stressed_collateral(member(100.0, 10.0), 1.7);
    EXPECT_DOUBLE_EQ(s.margin, 170.0);
    EXPECT_DOUBLE_EQ(s.fund, 17.0);
}

TEST(AllocationFraction, SingleAndMultipleDefaults) {
    const std::vector<Money> d{10, 10, 10, 10};
    const std::vector<std::size_t> one{1}, two{1, 2};
    // reporting member's share of the surviving fund
    EXPECT_NEAR(allocation_fraction(d, one), 10.0 / 30.0, 1e-15);
    EXPECT_NEAR(allocation_fraction(d, two), 10.0 / 20.0, 1e-15);
}

TEST(AllocationFraction, Errors) {
    const std::vector<Money> d{10, 10, 10};
    const std::vector<std::size_t> none{}, self{0}, all{1, 2};
    EXPECT_THROW(allocation_fraction(d, none), Error);
    EXPECT_THROW(allocation_fraction(d, self), Error);
    const std::vector<Money> d2{0, 10, 10};
    EXPECT_THROW(allocation_fraction(d2, all), FundExhaustedError);
}

TEST(AllocationFraction, MonotoneInDefaultedSet) {
    const std::vector<Money> d{5, 3, 7, 2, 9, 4};
    std::vector<std::size_t> s{2};
    double prev = allocation_fraction(d, s);
    for (std::size_t j : {4u, 1u, 5u}) {
        s.push_back(j);
        const double next = allocation_fraction(d, s);
        EXPECT_GT(next, prev);
        prev = next;
    }
}

TEST(AllocationFraction, IndependentOfWrongWayScaling) {
    const std::vector<Money> d{5, 3, 7, 2, 9, 4};
    const std::vector<std::size_t> s{1, 3, 4};
    for (double w : {0.3, 1.0, 1.7, 4.0}) {
        std::vector<Money> stressed;
        for (Money x : d)
            stressed.push_back(w * x);
        EXPECT_NEAR(allocation_fraction(stressed, s), allocation_fraction(d, s), 1e-15);
    }
}

TEST(ParetoTailProb, BoundaryAndLimit) {
    EXPECT_DOUBLE_EQ(pareto_tail_prob(100.0, 100.0, 0.14, 3.3), 0.14);
    EXPECT_NEAR(pareto_tail_prob(200.0, 100.0, 0.10, 3.3), 0.0101531549544529453, 1e-17);
    EXPECT_EQ(pareto_tail_prob(INFINITY, 100.0, 0.10, 3.3), 0.0);
    EXPECT_LT(pareto_tail_prob(1e12, 100.0, 0.10, 3.3), 1e-30);
    EXPECT_THROW(pareto_tail_prob(99.0, 100.0, 0.10, 3.3), ModelError);
}

TEST(ParetoTailProb, Monotonicity) {
    double prev = 1.0;
    for (double x = 100.0; x < 1000.0; x += 25.0) {
        const double p = pareto_tail_prob(x, 100.0, 0.1, 2.5);
        EXPECT_LE(p, prev);
        prev = p;
    }
    EXPECT_LT(pareto_tail_prob(150.0, 100.0, 0.05, 2.5), pareto_tail_prob(150.0, 100.0, 0.06, 2.5));
}

TEST(ParetoTailProb, InvertsToTheRightQuantile) {
    // P[X > x] = 0.10 * 2^-3.3 at x = 200; solve the inverse directly.
    const double target = 0.10 * std::pow(2.0, -3.3);
    const double x = 100.0 * std::pow(0.10 / target, 1.0 / 3.3);
    EXPECT_NEAR(x, 200.0, 1e-10);
}

TEST(ExpectedTailLoss, Examples) {
    EXPECT_NEAR(conditional_expected_tail_loss(member(100, 0), cal(1.0, 0.01, 2.0)), 1.0, 1e-14);
    EXPECT_NEAR(conditional_expected_tail_loss(member(100, 10), cal(1.7, 0.14, 3.3)), 8.310859592006249, 1e-12);
}

TEST(ExpectedTailLoss, MatchesNumericalIntegration) {
    const auto c = cal(1.7, 0.14, 3.3);
    const double oracle = oracle::pareto_excess_mean(170.0, 17.0, 0.14, 3.3);
    // tail scale is the stressed margin w M, attachment point w (M + D)
    EXPECT_NEAR(conditional_expected_tail_loss(member(100, 10), c), oracle, 1e-8 * oracle);
}

TEST(ExpectedTailLoss, HomogeneousAndLinear) {
    const auto c = cal(1.3, 0.18, 4.4);
    const double base = conditional_expected_tail_loss(member(80, 7), c);
    for (double s : {0.01, 2.0, 37.5})
        EXPECT_NEAR(conditional_expected_tail_loss(member(80 * s, 7 * s), c), s * base, 1e-12 * s * base);
    EXPECT_NEAR(conditional_expected_tail_loss(member(80, 7), cal(2.6, 0.18, 4.4)), 2.0 * base, 1e-12 * base);
    EXPECT_NEAR(conditional_expected_tail_loss(member(80, 7), cal(1.3, 0.09, 4.4)), 0.5 * base, 1e-12 * base);
}

TEST(ExpectedTailLoss, Errors) {
    EXPECT_THROW(conditional_expected_tail_loss(member(100, 10), cal(1, 0.1, 1.0)), ModelError);
    try {
        conditional_expected_tail_loss(member(100, 10), cal(1, 0.1, 0.8));
        FAIL();
    } catch (const ModelError& e) {
        EXPECT_NE(std::string(e.what()).find("infinite mean tail"), std::string::npos);
    }
    EXPECT_THROW(conditional_expected_tail_loss(member(0, 10), cal(1, 0.1, 3.0)), ModelError);
}

TEST(MemberExposure, Examples) {
    EXPECT_NEAR(member_exposure(member(100, 0), 50.0, cal(1.0, 0.01, 2.0), 0.0), 0.02, 1e-15);
    const double e0 = member_exposure(member(100, 10), 60.0, cal(1.7, 0.14, 3.3), 0.0);
    EXPECT_NEAR(member_exposure(member(100, 10), 60.0, cal(1.7, 0.14, 3.3), 0.2), 1.2 * e0, 1e-15);
    EXPECT_GT(member_exposure(member(100, 10), 50.0, cal(1.7, 0.14, 3.3), 0.0), e0);
    EXPECT_THROW(member_exposure(member(100, 10), 10.0, cal(1.7, 0.14, 3.3), 0.0), FundExhaustedError);
}

TEST(MemberExposure, SymmetricOnHomogeneousRoster) {
    const auto ccp = homogeneous(6, 100.0, 10.0, 0.03);
    const auto c = cal(1.7, 0.14, 3.3);
    const double e1 = member_exposure(ccp.members[1], ccp, c, 0.0);
    for (std::size_t k = 2; k < ccp.size(); ++k)
        EXPECT_DOUBLE_EQ(member_exposure(ccp.members[k], ccp, c, 0.0), e1);
}

TEST(TotalCharge, SingleCounterpartyComposition) {
    // D0 = 10 and one other member whose exposure works out to 0.02.
    CcpStructure ccp;
    ccp.members = {member(100, 10, 0.0, "CM0"), member(100, 0, 0.0333, "CM1")};
    // U-bar = 0.002 * 100 = 0.2 over a surviving fund of 10
    const auto c = cal(1.0, 0.002, 2.0);
    const std::vector<Real> eps{0.0, 0.0};
    const auto r = total_charge(ccp, c, eps, DiscountCurve{0.0}, 1.0);
    EXPECT_NEAR(r.members[0].exposure, 0.02, 1e-15);
    EXPECT_NEAR(r.total_charge, 10.0 * 0.02 * 0.0333, 1e-15);
    EXPECT_NEAR(r.average_hazard, 0.0333, 1e-15);
}

TEST(TotalCharge, ZeroHazardsGiveZero) {
    const auto ccp = homogeneous(5, 100.0, 10.0, 0.0);
    const std::vector<Real> eps(5, 0.1);
    const auto r = total_charge(ccp, cal(1.7, 0.14, 3.3), eps, DiscountCurve{0.02}, 3.0);
    EXPECT_EQ(r.total_charge, 0.0);
}

TEST(TotalCharge, ContributionsSumToTotal) {
    CcpStructure ccp;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.5, 2.0);
    for (int i = 0; i < 9; ++i)
        ccp.members.push_back(member(100 * u(rng), 10 * u(rng), 0.03 * u(rng), "M" + std::to_string(i)));
    std::vector<Real> eps(9, 0.0);
    for (std::size_t k = 1; k < eps.size(); ++k)
        eps[k] = 0.1 * u(rng);
    const auto r = total_charge(ccp, cal(1.7, 0.14, 3.3), eps, DiscountCurve{0.03}, 2.0);
    EXPECT_NEAR(r.sum_of_contributions(), r.total_charge, 1e-14 * r.total_charge);
    EXPECT_EQ(r.members.size(), 8u);
}

TEST(TotalCharge, ReducesToSimplifiedFormWhenFundIsSmall) {
    const auto c = cal(1.7, 0.14, 3.3);
    const double lambda = hazard_from_spread(0.02, 0.4);
    for (std::size_t n : {8u, 16u, 32u}) {
        const auto ccp = homogeneous(n, 100.0, 1e-5, lambda);
        const std::vector<Real> eps(n, 0.0);
        const auto r = total_charge(ccp, c, eps, DiscountCurve{0.0}, 1.0);
        const auto s = simplified_charge(100.0, 1e-5, c, lambda, 1.0);
        EXPECT_NEAR(r.total_charge, s.charge, 1e-4 * s.charge) << "members " << n;
    }
}

TEST(TotalCharge, DecreasingInRateWithSmoothLimit) {
    const auto ccp = homogeneous(6, 100.0, 10.0, 0.03);
    const std::vector<Real> eps(6, 0.05);
    const auto c = cal(1.7, 0.14, 3.3);
    double prev = INFINITY;
    for (double r : {0.0, 0.01, 0.03, 0.08}) {
        const double v = total_charge(ccp, c, eps, DiscountCurve{r}, 5.0).total_charge;
        EXPECT_LT(v, prev);
        prev = v;
    }
    const double at0 = total_charge(ccp, c, eps, DiscountCurve{0.0}, 5.0).total_charge;
    const double tiny = total_charge(ccp, c, eps, DiscountCurve{1e-9}, 5.0).total_charge;
    EXPECT_NEAR(tiny, at0, 1e-6 * at0);
}

TEST(TotalCharge, FlatCurveAverageHazard) {
    const auto ccp = homogeneous(4, 100.0, 10.0, 0.05);
    const std::vector<Real> eps(4, 0.0);
    const auto r = total_charge(ccp, cal(1.7, 0.14, 3.3), eps, DiscountCurve{0.0}, 2.0);
    EXPECT_DOUBLE_EQ(r.average_hazard, 0.05);
    EXPECT_THROW(total_charge(ccp, cal(1.7, 0.14, 3.3), eps, DiscountCurve{0.0}, 0.0), ModelError);
}

TEST(TotalCharge, OverrideChangesOnlyThatMember) {
    const auto ccp = homogeneous(4, 100.0, 10.0, 0.05);
    const std::vector<Real> eps(4, 0.0);
    CalibrationOverrides ov{{"CM2", cal(3.4, 0.14, 3.3)}};
    const auto base = total_charge(ccp, cal(1.7, 0.14, 3.3), eps, DiscountCurve{}, 1.0);
    const auto r = total_charge(ccp, cal(1.7, 0.14, 3.3), eps, DiscountCurve{}, 1.0, ov);
    EXPECT_DOUBLE_EQ(r.members[0].contribution, base.members[0].contribution);
    EXPECT_NEAR(r.members[1].contribution, 2.0 * base.members[1].contribution, 1e-15);
}

TEST(SimplifiedCharge, Examples) {
    const auto a = simplified_charge(100, 10, cal(1.7, 0.14, 3.3), 0.0333, 1.0);
    EXPECT_NEAR(a.lgd_total, 0.1034782608695652, 1e-15);
    EXPECT_NEAR(a.charge_fraction * 1e4, 34.0, 1.0);
    const auto b = simplified_charge(100, 10, cal(1.3, 0.18, 4.4), 0.0333, 1.0);
    EXPECT_NEAR(b.lgd_total, 0.0688235294117647, 1e-15);
    EXPECT_NEAR(b.charge_fraction * 1e4, 23.0, 0.5);
    const auto z = simplified_charge(100, 10, cal(1.0, 0.0, 2.0), 0.0333, 1.0);
    EXPECT_EQ(z.lgd_total, 0.0);
    EXPECT_EQ(z.charge_fraction, 0.0);
    EXPECT_THROW(simplified_charge(100, 10, cal(1.0, 0.1, 1.0), 0.0333, 1.0), ModelError);
}
