#pragma once

// Multi-default correction to the expected allocated loss.
//
// Joint defaults within one allocation period follow a one-factor Gaussian
// copula: member j defaults iff sqrt(rho) Z + sqrt(1 - rho) e_j <= Phi^-1(P_j)
// with P_j = 1 - exp(-lambda_j * dr). The correction for member k is
//
//     eps_k = E[ 1{k in s} B_k(s) ] / P_k,
//     B_k(s) = sum_{j in s, j != k} D_j / (D_tot - sum_{j in s} D_j).
//
// Two evaluators are provided: Monte Carlo (any roster size) and exact
// enumeration of all default subsets with quadrature over Z
// (at most 20 defaultable members).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ccprisk/core_model.hpp"
#include "ccprisk/errors.hpp"
#include "ccprisk/factor_quadrature.hpp"
#include "ccprisk/normal.hpp"

namespace ccprisk {

enum class EpsilonMode { monte_carlo, exact_enumeration };

struct ScenarioEngineConfig {
    Real correlation = 0.0;
    Real recap_days = 30.0;
    std::size_t mc_samples = 2'000'000;
    std::uint64_t rng_seed = 20111101;
    EpsilonMode mode = EpsilonMode::monte_carlo;
    std::size_t quadrature_points = 64; // minimum node count over Z in exact mode
    unsigned threads = 0; // 0 = hardware concurrency; results do not depend on it

    void validate() const {
        require<InputError>(correlation >= 0.0 && correlation < 1.0, "copula correlation must lie in [0, 1)");
        require<InputError>(recap_days > 0.0, "allocation period must be positive");
        if (mode == EpsilonMode::monte_carlo)
            require<InputError>(mc_samples >= 10'000, "at least 10^4 Monte Carlo samples are required");
        else
            require<InputError>(quadrature_points >= 8, "at least 8 quadrature points are required");
    }
};

/// Indices (into CcpStructure::members) of members defaulting in one period.
struct DefaultScenario {
    std::vector<std::size_t> defaulted;

    bool empty() const { return defaulted.empty(); }
    bool contains(std::size_t k) const {
        return std::find(defaulted.begin(), defaulted.end(), k) != defaulted.end();
    }
};

struct EpsilonResult {
    EpsilonMode mode = EpsilonMode::monte_carlo;
    // All vectors are indexed like CcpStructure::members; entry 0 (the
    // reporting member) is always zero.
    std::vector<Real> epsilon;
    std::vector<Real> std_error;
    std::vector<Probability> marginal_probability;
    std::vector<Real> default_frequency; // Monte Carlo only
    std::size_t samples = 0;
    std::size_t exhausted_samples = 0;
    Probability exhausted_probability = 0.0;
};

/// Probability of defaulting within one allocation period of `recap_days`.
inline Probability period_default_probability(Rate hazard, Real recap_days) {
    return -std::expm1(-hazard * year_fraction(recap_days));
}

inline std::vector<Probability> period_default_probabilities(const CcpStructure& ccp, Real recap_days) {
    std::vector<Probability> p(ccp.size(), 0.0);
    for (std::size_t j = 1; j < ccp.size(); ++j)
        p[j] = period_default_probability(ccp.members[j].hazard, recap_days);
    return p;
}

/// B_k(s): uplift of the reporting member's allocation when others default
/// alongside k.
inline Real loss_amplifier(std::span<const Money> default_funds, const DefaultScenario& s, std::size_t k) {
    require(s.contains(k), "loss amplifier requires k to be in the default scenario");
    Money total = 0.0;
    for (Money d : default_funds)
        total += d;
    Money lost = 0.0;
    for (std::size_t j : s.defaulted)
        lost += default_funds[j];
    const Money remaining = total - lost;
    if (!(remaining > 0.0))
        throw FundExhaustedError("default scenario consumes the entire default fund");
    return (lost - default_funds[k]) / remaining;
}

inline Real loss_amplifier(const CcpStructure& ccp, const DefaultScenario& s, std::size_t k) {
    const auto d = default_funds(ccp);
    return loss_amplifier(std::span<const Money>(d), s, k);
}

/// Draws joint defaults of members 1..N under the one-factor copula.
class CopulaSampler {
  public:
    CopulaSampler(std::span<const Probability> period_probabilities, Real correlation)
        : loading_(std::sqrt(correlation)), idio_(std::sqrt(1.0 - correlation)) {
        require<InputError>(correlation >= 0.0 && correlation < 1.0, "copula correlation must lie in [0, 1)");
        thresholds_.reserve(period_probabilities.size());
        for (Probability p : period_probabilities) {
            require(p >= 0.0 && p < 1.0, "period default probability must lie in [0, 1)");
            thresholds_.push_back(normal_quantile(p));
        }
    }

    std::size_t size() const { return thresholds_.size(); }

    /// Defaults given the common factor and idiosyncratic draws; index 0 is
    /// never reported.
    void defaults_given(double common, std::span<const double> idiosyncratic, std::vector<std::size_t>& out) const {
        out.clear();
        const double shift = loading_ * common;
        for (std::size_t j = 1; j < thresholds_.size(); ++j)
            if (shift + idio_ * idiosyncratic[j] <= thresholds_[j])
                out.push_back(j);
    }

    template <typename URBG>
    DefaultScenario sample(URBG& rng) const {
        std::normal_distribution<double> gauss;
        const double common = gauss(rng);
        std::vector<double> e(thresholds_.size(), 0.0);
        for (std::size_t j = 1; j < e.size(); ++j)
            e[j] = gauss(rng);
        DefaultScenario s;
        defaults_given(common, e, s.defaulted);
        return s;
    }

  private:
    double loading_;
    double idio_;
    std::vector<double> thresholds_;
};

template <typename URBG>
DefaultScenario joint_default_sample(const CcpStructure& ccp, Real correlation, Real recap_days, URBG& rng) {
    const auto p = period_default_probabilities(ccp, recap_days);
    return CopulaSampler(p, correlation).sample(rng);
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent stream for one block of the sample index range.
inline std::mt19937_64 block_stream(std::uint64_t seed, std::uint64_t block) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(block + 0x632be59bd9b4e019ULL)));
}

inline constexpr std::size_t pairs_per_block = 4096;

inline unsigned worker_count(unsigned requested, std::size_t blocks) {
    unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(blocks, 1)));
}

/// Runs body(block) for every block on `threads` workers. Each block writes
/// only its own slot, so the merged result is independent of scheduling.
template <typename Body>
void for_each_block(std::size_t blocks, unsigned threads, Body&& body) {
    const unsigned workers = worker_count(threads, blocks);
    if (workers <= 1) {
        for (std::size_t b = 0; b < blocks; ++b)
            body(b);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t b = w; b < blocks; b += workers)
                body(b);
        });
}

struct BlockTally {
    std::vector<double> sum;    // of antithetic pair means of 1{k in s} B_k
    std::vector<double> sum_sq; // of squared pair means
    std::vector<std::uint64_t> defaults;
    std::uint64_t paths = 0;
    std::uint64_t exhausted = 0;

    explicit BlockTally(std::size_t n) : sum(n, 0.0), sum_sq(n, 0.0), defaults(n, 0) {}
};

} // namespace detail

inline EpsilonResult epsilon_mc(const CcpStructure& ccp, const ScenarioEngineConfig& cfg) {
    cfg.validate();
    require<InputError>(cfg.mode == EpsilonMode::monte_carlo, "epsilon_mc requires monte_carlo mode");
    const std::size_t n = ccp.size();
    require(n >= 2, "a CCP needs at least two members");

    const auto probs = period_default_probabilities(ccp, cfg.recap_days);
    const auto funds = default_funds(ccp);
    Money total_fund = 0.0;
    for (Money d : funds)
        total_fund += d;
    const CopulaSampler sampler(probs, cfg.correlation);

    const std::size_t pairs = (cfg.mc_samples + 1) / 2;
    const std::size_t blocks = (pairs + detail::pairs_per_block - 1) / detail::pairs_per_block;
    std::vector<detail::BlockTally> tallies(blocks, detail::BlockTally(n));

    detail::for_each_block(blocks, cfg.threads, [&](std::size_t b) {
        auto rng = detail::block_stream(cfg.rng_seed, b);
        std::normal_distribution<double> gauss;
        auto& t = tallies[b];
        const std::size_t begin = b * detail::pairs_per_block;
        const std::size_t end = std::min(pairs, begin + detail::pairs_per_block);
        std::vector<double> e(n, 0.0);
        std::vector<double> pair(n, 0.0);
        std::vector<std::size_t> touched;
        std::vector<std::size_t> s;

        auto evaluate = [&](double common) {
            sampler.defaults_given(common, e, s);
            ++t.paths;
            if (s.empty())
                return;
            Money lost = 0.0;
            for (std::size_t j : s) {
                lost += funds[j];
                ++t.defaults[j];
            }
            const Money remaining = total_fund - lost;
            if (!(remaining > 0.0)) {
                ++t.exhausted;
                return;
            }
            for (std::size_t k : s) {
                if (pair[k] == 0.0)
                    touched.push_back(k);
                pair[k] += 0.5 * (lost - funds[k]) / remaining;
            }
        };

        for (std::size_t i = begin; i < end; ++i) {
            const double common = gauss(rng);
            for (std::size_t j = 1; j < n; ++j)
                e[j] = gauss(rng);
            touched.clear();
            evaluate(common);
            evaluate(-common);
            for (std::size_t k : touched) {
                t.sum[k] += pair[k];
                t.sum_sq[k] += pair[k] * pair[k];
                pair[k] = 0.0;
            }
        }
    });

    detail::BlockTally total(n);
    for (const auto& t : tallies) {
        for (std::size_t k = 0; k < n; ++k) {
            total.sum[k] += t.sum[k];
            total.sum_sq[k] += t.sum_sq[k];
            total.defaults[k] += t.defaults[k];
        }
        total.paths += t.paths;
        total.exhausted += t.exhausted;
    }

    EpsilonResult out;
    out.mode = EpsilonMode::monte_carlo;
    out.samples = total.paths;
    out.exhausted_samples = total.exhausted;
    out.exhausted_probability = static_cast<double>(total.exhausted) / static_cast<double>(total.paths);
    if (out.exhausted_probability > 1e-3)
        throw ToleranceError("fund-exhaustion rate too high: " + std::to_string(total.exhausted) + " of " +
                             std::to_string(total.paths) + " samples exhaust the default fund");

    out.epsilon.assign(n, 0.0);
    out.std_error.assign(n, 0.0);
    out.default_frequency.assign(n, 0.0);
    out.marginal_probability = probs;
    const auto np = static_cast<double>(pairs);
    for (std::size_t k = 1; k < n; ++k) {
        out.default_frequency[k] = static_cast<double>(total.defaults[k]) / static_cast<double>(total.paths);
        if (probs[k] <= 0.0)
            continue;
        const double mean = total.sum[k] / np;
        const double var = std::max(total.sum_sq[k] / np - mean * mean, 0.0);
        out.epsilon[k] = mean / probs[k];
        out.std_error[k] = std::sqrt(var / (np - 1.0)) / probs[k];
    }
    return out;
}

inline constexpr std::size_t max_enumeration_members = 20;

inline EpsilonResult epsilon_exact(const CcpStructure& ccp, const ScenarioEngineConfig& cfg) {
    cfg.validate();
    require<InputError>(cfg.mode == EpsilonMode::exact_enumeration, "epsilon_exact requires exact_enumeration mode");
    const std::size_t n = ccp.size();
    require(n >= 2, "a CCP needs at least two members");
    const std::size_t m = n - 1; // defaultable members 1..N map to bits 0..N-1
    if (m > max_enumeration_members)
        throw InputError("exact enumeration is limited to " + std::to_string(max_enumeration_members) +
                         " defaultable members (got " + std::to_string(m) + ")");

    const auto probs = period_default_probabilities(ccp, cfg.recap_days);
    const auto funds = default_funds(ccp);
    Money total_fund = 0.0;
    for (Money d : funds)
        total_fund += d;

    const std::size_t subsets = std::size_t{1} << m;
    const double rho = cfg.correlation;
    const double loading = std::sqrt(rho), idio = std::sqrt(1.0 - rho);
    std::vector<double> thresholds(n);
    for (std::size_t j = 1; j < n; ++j)
        thresholds[j] = normal_quantile(probs[j]);

    // Scenario probabilities P(s), accumulated over the common factor.
    std::vector<double> scenario_prob(subsets, 0.0);
    std::vector<double> conditional(subsets);
    auto accumulate = [&](std::span<const double> p_given_z, double weight) {
        conditional[0] = 1.0;
        for (std::size_t bit = 0; bit < m; ++bit) {
            const std::size_t half = std::size_t{1} << bit;
            const double p = p_given_z[bit];
            for (std::size_t s = 0; s < half; ++s) {
                conditional[s | half] = conditional[s] * p;
                conditional[s] *= 1.0 - p;
            }
        }
        for (std::size_t s = 0; s < subsets; ++s)
            scenario_prob[s] += weight * conditional[s];
    };

    std::vector<double> p_given_z(m);
    if (rho == 0.0) {
        for (std::size_t bit = 0; bit < m; ++bit)
            p_given_z[bit] = probs[bit + 1];
        accumulate(p_given_z, 1.0);
    } else {
        const auto rule = normal_rule(idio / loading, cfg.quadrature_points);
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            for (std::size_t bit = 0; bit < m; ++bit)
                p_given_z[bit] = normal_cdf((thresholds[bit + 1] - loading * rule.nodes[q]) / idio);
            accumulate(p_given_z, rule.weights[q]);
        }
    }

    // Default fund lost in each scenario.
    std::vector<double> lost(subsets, 0.0);
    for (std::size_t s = 1; s < subsets; ++s) {
        const std::size_t low = static_cast<std::size_t>(std::countr_zero(s));
        lost[s] = lost[s & (s - 1)] + funds[low + 1];
    }

    EpsilonResult out;
    out.mode = EpsilonMode::exact_enumeration;
    out.epsilon.assign(n, 0.0);
    out.std_error.assign(n, 0.0);
    out.marginal_probability = probs;
    std::vector<double> weighted(n, 0.0);
    for (std::size_t s = 1; s < subsets; ++s) {
        const double remaining = total_fund - lost[s];
        if (!(remaining > 0.0)) {
            out.exhausted_probability += scenario_prob[s];
            continue;
        }
        for (std::size_t bits = s; bits; bits &= bits - 1) {
            const std::size_t k = static_cast<std::size_t>(std::countr_zero(bits)) + 1;
            weighted[k] += scenario_prob[s] * (lost[s] - funds[k]) / remaining;
        }
    }
    if (out.exhausted_probability > 1e-3)
        throw ToleranceError("fund-exhaustion rate too high: scenarios exhausting the default fund carry probability " +
                             std::to_string(out.exhausted_probability));
    for (std::size_t k = 1; k < n; ++k)
        if (probs[k] > 0.0)
            out.epsilon[k] = weighted[k] / probs[k];
    return out;
}

inline EpsilonResult compute_epsilon(const CcpStructure& ccp, const ScenarioEngineConfig& cfg) {
    return cfg.mode == EpsilonMode::monte_carlo ? epsilon_mc(ccp, cfg) : epsilon_exact(ccp, cfg);
}

/// Analytic expected loss allocated to the reporting member over one
/// allocation period, with the period default probability in place of
/// lambda * dr. Equity is taken to be zero.
inline Money expected_period_loss(const CcpStructure& ccp, const MarketCalibration& cal, std::span<const Real> epsilon,
                                  Real recap_days) {
    require(epsilon.size() == ccp.size(), "one correction term per member is required");
    const Money total_fund = ccp.total_default_fund();
    Money loss = 0.0;
    for (std::size_t k = 1; k < ccp.size(); ++k) {
        const auto& member = ccp.members[k];
        loss += member_exposure(member, total_fund, cal, epsilon[k]) *
                period_default_probability(member.hazard, recap_days);
    }
    return ccp.reporting_member().default_fund * loss;
}

struct PeriodLossEstimate {
    Money mean = 0.0;
    Money std_error = 0.0;
    std::size_t samples = 0;
    std::size_t exhausted_samples = 0;
};

/// Brute-force estimate of the expected loss allocated to the reporting
/// member over one period: joint defaults from the copula, Pareto liquidation
/// losses beyond the stressed margin, CCP equity absorbing losses first.
inline PeriodLossEstimate expected_period_loss_mc(const CcpStructure& ccp, const MarketCalibration& cal,
                                                  const ScenarioEngineConfig& cfg) {
    cfg.validate();
    cal.validate();
    const std::size_t n = ccp.size();
    const auto probs = period_default_probabilities(ccp, cfg.recap_days);
    const auto funds = default_funds(ccp);
    Money total_fund = 0.0;
    for (Money d : funds)
        total_fund += d;
    const CopulaSampler sampler(probs, cfg.correlation);
    std::vector<StressedCollateral> stressed(n);
    for (std::size_t j = 0; j < n; ++j)
        stressed[j] = stressed_collateral(ccp.members[j], cal.wrong_way_factor);

    const std::size_t samples = cfg.mc_samples;
    const std::size_t per_block = 2 * detail::pairs_per_block;
    const std::size_t blocks = (samples + per_block - 1) / per_block;
    struct Tally {
        double sum = 0.0, sum_sq = 0.0;
        std::size_t exhausted = 0;
    };
    std::vector<Tally> tallies(blocks);

    detail::for_each_block(blocks, cfg.threads, [&](std::size_t b) {
        auto rng = detail::block_stream(cfg.rng_seed ^ 0x5bd1e995ULL, b);
        std::normal_distribution<double> gauss;
        std::uniform_real_distribution<double> uniform;
        std::vector<double> e(n, 0.0);
        std::vector<std::size_t> s;
        auto& t = tallies[b];
        const std::size_t end = std::min(samples, (b + 1) * per_block);
        for (std::size_t i = b * per_block; i < end; ++i) {
            const double common = gauss(rng);
            for (std::size_t j = 1; j < n; ++j)
                e[j] = gauss(rng);
            sampler.defaults_given(common, e, s);
            if (s.empty())
                continue;
            Money lost = 0.0, excess = 0.0;
            for (std::size_t j : s) {
                lost += funds[j];
                if (uniform(rng) < cal.breach_probability) {
                    const double u = 1.0 - uniform(rng);
                    const Money loss = stressed[j].margin * std::pow(u, -1.0 / cal.pareto_index);
                    excess += uncollateralised_loss(loss, stressed[j].margin, stressed[j].fund);
                }
            }
            const Money remaining = total_fund - lost;
            if (!(remaining > 0.0)) {
                ++t.exhausted;
                continue;
            }
            const Money allocated = funds[0] / remaining * std::max(excess - ccp.equity, 0.0);
            t.sum += allocated;
            t.sum_sq += allocated * allocated;
        }
    });

    PeriodLossEstimate out;
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& t : tallies) {
        sum += t.sum;
        sum_sq += t.sum_sq;
        out.exhausted_samples += t.exhausted;
    }
    const auto ns = static_cast<double>(samples);
    out.samples = samples;
    out.mean = sum / ns;
    out.std_error = std::sqrt(std::max(sum_sq / ns - out.mean * out.mean, 0.0) / (ns - 1.0));
    return out;
}

} // namespace ccprisk
