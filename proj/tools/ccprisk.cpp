// ccprisk: command-line front end for calibration, correction-term and
// charge computations.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "ccprisk/commands.hpp"

namespace {

using namespace ccprisk;

void emit(const Json& report, const std::string& json_path) {
    if (json_path.empty())
        return;
    const std::string text = report.dump(2) + "\n";
    if (json_path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(json_path);
    if (!out)
        throw InputError("cannot write report to '" + json_path + "'");
    out << text;
}

std::uint64_t default_seed() {
    if (const char* env = std::getenv("CCPRISK_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw InputError(std::string("CCPRISK_SEED is not an unsigned integer: '") + env + "'");
        }
    }
    return RunConfig{}.rng_seed;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Clearing-member risk on collateral posted to a central counterparty"};
    app.require_subcommand(1);

    std::string json_path;

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "estimate w, gamma, p_hat and alpha from a price series");
    CalibrateOptions cal_opt;
    std::string mapping = "linear", side = "both", as_of;
    bool no_overlap = false, log_fit = false;
    std::string diag_dir;
    calibrate->add_option("--series", cal_opt.series_path, "CSV with columns date,level")->required();
    calibrate->add_option("--horizon-days", cal_opt.calibration.horizon_days, "return horizon in observations")
        ->capture_default_str();
    calibrate->add_option("--decay", cal_opt.calibration.decay, "backward EWMA decay")->capture_default_str();
    calibrate->add_option("--decay-fwd", cal_opt.calibration.decay_forward, "forward EWMA decay")
        ->capture_default_str();
    calibrate->add_option("--quantile", cal_opt.calibration.quantile, "stress quantile for vols and ratios")
        ->capture_default_str();
    calibrate->add_option("--mapping", mapping, "driver-to-loss map for w")
        ->check(CLI::IsMember({"linear", "exp"}))
        ->capture_default_str();
    calibrate->add_flag("--no-overlap", no_overlap, "use non-overlapping returns");
    calibrate->add_option("--margin-confidence", cal_opt.calibration.margin_confidence, "margin breach probability p_M")
        ->capture_default_str();
    calibrate->add_option("--side", side, "loss side for the Pareto fit")
        ->check(CLI::IsMember({"both", "up", "down"}))
        ->capture_default_str();
    calibrate->add_flag("--log-fit", log_fit, "least squares on log exceedance probabilities");
    calibrate->add_option("--asof", as_of, "date (YYYY-MM-DD) of the current volatility; default last date");
    calibrate->add_option("--diagnostics", diag_dir, "directory for vol path and tail fit CSVs");
    calibrate->add_option("--json", json_path, "write the JSON report to FILE ('-' for stdout)");

    // epsilon
    auto* epsilon = app.add_subcommand("epsilon", "multi-default correction term per member");
    std::string roster_path, reporting;
    RunConfig config;
    std::optional<std::uint64_t> seed;
    bool table1 = false, table1_others = false, table1_exact = false;
    epsilon->add_option("--roster", roster_path, "CSV roster");
    epsilon->add_option("--reporting-member", reporting, "member whose risk is measured; default first row");
    epsilon->add_option("--rho", config.correlation, "Gaussian copula correlation")->capture_default_str();
    epsilon->add_option("--recap-days", config.recap_days, "allocation period in days")->capture_default_str();
    epsilon->add_option("--samples", config.mc_samples, "Monte Carlo samples")->capture_default_str();
    epsilon->add_option("--seed", seed, "RNG seed (overrides CCPRISK_SEED)");
    epsilon->add_option("--quadrature-points", config.quadrature_points, "minimum quadrature nodes over the common factor for --exact")
        ->capture_default_str();
    epsilon->add_flag("--exact", config.exact, "exact scenario enumeration (at most 20 defaultable members)");
    epsilon->add_flag("--table1", table1, "15-member homogeneous correlation grid");
    epsilon->add_flag("--table1-others", table1_others, "grid roster has 15 members besides the reporting member");
    epsilon->add_flag("--table1-exact", table1_exact, "add exact enumeration to every grid cell");
    epsilon->add_option("--json", json_path, "write the JSON report to FILE ('-' for stdout)");

    // charge
    auto* charge = app.add_subcommand("charge", "discounted expected loss over a horizon");
    std::string cal_path, config_path;
    charge->add_option("--roster", roster_path, "CSV roster")->required();
    charge->add_option("--reporting-member", reporting, "member whose risk is measured; default first row");
    charge->add_option("--cal", cal_path, "calibration JSON (bare or a calibrate report)");
    charge->add_option("--config", config_path, "run configuration JSON; flags override it");
    charge->add_option("--w", config.wrong_way_factor, "pin the wrong-way factor");
    charge->add_option("--gamma", config.contagion_factor, "pin the contagion factor");
    charge->add_option("--phat", config.breach_probability, "pin the breach probability");
    charge->add_option("--alpha", config.pareto_index, "pin the Pareto index");
    charge->add_option("--epsilon", config.epsilon, "pin the correction term for every member");
    charge->add_option("--horizon-years", config.horizon_years, "horizon T in years")->capture_default_str();
    charge->add_option("--rate", config.rate, "flat continuously compounded discount rate")->capture_default_str();
    charge->add_option("--rho", config.correlation, "copula correlation when epsilon is not pinned")
        ->capture_default_str();
    charge->add_option("--recap-days", config.recap_days, "allocation period in days")->capture_default_str();
    charge->add_option("--liquidation-days", config.liquidation_days, "liquidation period in days")
        ->capture_default_str();
    charge->add_option("--margin-confidence", config.margin_confidence, "margin breach probability p_M")
        ->capture_default_str();
    charge->add_option("--samples", config.mc_samples, "Monte Carlo samples")->capture_default_str();
    charge->add_option("--seed", seed, "RNG seed (overrides CCPRISK_SEED)");
    charge->add_flag("--exact", config.exact, "exact scenario enumeration for epsilon");
    charge->add_option("--json", json_path, "write the JSON report to FILE ('-' for stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::input_error);
    }

    // Human tables go to stderr when the JSON report is printed to stdout.
    std::ostream& out = json_path == "-" ? std::cerr : std::cout;
    try {
        if (calibrate->parsed()) {
            auto& c = cal_opt.calibration;
            c.mapping = mapping == "exp" ? VolMapping::exponential : VolMapping::linear;
            c.overlap = !no_overlap;
            c.pareto.side = side == "up" ? TailSide::up : (side == "down" ? TailSide::down : TailSide::both);
            c.pareto.space = log_fit ? FitSpace::log_probability : FitSpace::probability;
            if (!as_of.empty())
                c.as_of = detail::parse_date(as_of, "--asof");
            if (!diag_dir.empty())
                cal_opt.diagnostics_dir = diag_dir;
            emit(run_calibrate(cal_opt, out), json_path);
        } else if (epsilon->parsed()) {
            config.rng_seed = seed.value_or(default_seed());
            if (table1) {
                emit(run_table1(config, table1_others, table1_exact, out), json_path);
            } else {
                if (roster_path.empty())
                    throw InputError("--roster is required unless --table1 is given");
                const auto roster = load_roster(roster_path, reporting.empty() ? std::nullopt
                                                                               : std::optional<std::string>(reporting));
                emit(run_epsilon(roster, config, out), json_path);
            }
        } else if (charge->parsed()) {
            if (!config_path.empty()) {
                // re-apply explicit flags on top of the file
                RunConfig file = load_run_config(config_path);
                auto given = [&](const char* name) { return charge->count(name) > 0; };
                if (given("--w")) file.wrong_way_factor = config.wrong_way_factor;
                if (given("--gamma")) file.contagion_factor = config.contagion_factor;
                if (given("--phat")) file.breach_probability = config.breach_probability;
                if (given("--alpha")) file.pareto_index = config.pareto_index;
                if (given("--epsilon")) file.epsilon = config.epsilon;
                if (given("--horizon-years")) file.horizon_years = config.horizon_years;
                if (given("--rate")) file.rate = config.rate;
                if (given("--rho")) file.correlation = config.correlation;
                if (given("--recap-days")) file.recap_days = config.recap_days;
                if (given("--liquidation-days")) file.liquidation_days = config.liquidation_days;
                if (given("--margin-confidence")) file.margin_confidence = config.margin_confidence;
                if (given("--samples")) file.mc_samples = config.mc_samples;
                if (given("--exact")) file.exact = config.exact;
                if (given("--seed")) file.rng_seed = *seed;
                config = file;
            } else {
                config.rng_seed = seed.value_or(default_seed());
            }
            const auto roster = load_roster(roster_path, reporting.empty() ? std::nullopt
                                                                           : std::optional<std::string>(reporting));
            std::optional<MarketCalibration> loaded;
            if (!cal_path.empty())
                loaded = load_calibration(cal_path);
            const auto cal = resolve_calibration(loaded, config);
            emit(run_charge(roster, cal, config, out), json_path);
        }
    } catch (const ccprisk::Error& e) {
        std::cerr << "ccprisk: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "ccprisk: " << e.what() << '\n';
        return static_cast<int>(ExitCode::model_error);
    }
    return 0;
}
