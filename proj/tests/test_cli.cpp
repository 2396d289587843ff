// Runs the ccprisk binary end to end.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "json.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct Run {
    int code;
    std::string out;
};

Run run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + CCPRISK_CLI + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe)
        return {-1, {}};
    std::string out;
    std::array<char, 4096> buf{};
    while (std::size_t n = fread(buf.data(), 1, buf.size(), pipe))
        out.append(buf.data(), n);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string sample(const char* name) { return std::string(CCPRISK_SAMPLES) + "/" + name; }

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "ccprisk_cli_test";
    fs::create_directories(dir);
    return dir / name;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

} // namespace

TEST(Cli, ChargeReproducesPinnedCharges) {
    struct Case {
        double w, phat, alpha, lgd, bps;
    };
    for (const Case& c : {Case{1.7, 0.14, 3.3, 0.103, 34}, Case{2.2, 0.12, 3.3, 0.115, 38},
                          Case{2.5, 0.16, 3.3, 0.174, 58}, Case{1.3, 0.18, 4.4, 0.069, 23}}) {
        char args[256];
        std::snprintf(args, sizeof args, "charge --roster %s --w %g --phat %g --alpha %g --epsilon 0 --json -",
                      sample("roster_homogeneous.csv").c_str(), c.w, c.phat, c.alpha);
        const auto r = run(args);
        ASSERT_EQ(r.code, 0);
        const auto totals = Json::parse(r.out).at("report").at("totals");
        EXPECT_NEAR(totals.at("lgd_total").get<double>(), c.lgd, 0.002);
        EXPECT_NEAR(totals.at("simplified_charge_fraction").get<double>() * 1e4, c.bps, 2.0);
    }
}

TEST(Cli, ChargeWithCalibrationFileAndConfig) {
    const auto cal = scratch("cal.json");
    write(cal, R"({"wrong_way_factor": 1.7, "breach_probability": 0.14, "pareto_index": 3.3})");
    const auto cfg = scratch("cfg.json");
    write(cfg, R"({"correlation": 0.4, "exact": true, "pins": {"pareto_index": 4.4}})");
    const auto r = run("charge --roster " + sample("roster_mixed.csv") + " --cal " + cal.string() + " --config " +
                       cfg.string() + " --json -");
    ASSERT_EQ(r.code, 0);
    const auto j = Json::parse(r.out);
    EXPECT_EQ(j.at("calibration").at("pareto_index").get<double>(), 4.4);
    EXPECT_EQ(j.at("calibration").at("provenance").at("pareto_index"), "pinned");
    EXPECT_EQ(j.at("epsilon").at("mode"), "exact_enumeration");
    EXPECT_EQ(j.at("config").at("correlation").get<double>(), 0.4);

    // an explicit flag beats the config file
    const auto r2 = run("charge --roster " + sample("roster_mixed.csv") + " --cal " + cal.string() + " --config " +
                        cfg.string() + " --rho 0.1 --json -");
    ASSERT_EQ(r2.code, 0);
    EXPECT_EQ(Json::parse(r2.out).at("config").at("correlation").get<double>(), 0.1);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("charge --bogus").code, 2);
    EXPECT_EQ(run("charge --roster /nonexistent.csv --w 1 --phat 0.1 --alpha 3").code, 2);
    const auto empty = scratch("empty.csv");
    write(empty, "");
    EXPECT_EQ(run("epsilon --roster " + empty.string()).code, 2);
    EXPECT_EQ(run("charge --roster " + sample("roster_mixed.csv") + " --w 1 --phat 0.1 --alpha 0.9 --epsilon 0").code,
              3);
    EXPECT_EQ(run("epsilon --roster " + sample("roster_mixed.csv") + " --rho 1.5").code, 2);

    const auto drained = scratch("drained.csv");
    write(drained, "member_id,initial_margin,default_fund,cds_spread_bps,recovery_pct\n"
                   "R,100,0,100,40\nX,100,5,20000,40\nY,100,5,20000,40\n");
    EXPECT_EQ(run("epsilon --roster " + drained.string() + " --rho 0.5 --exact").code, 4);
    EXPECT_EQ(run("epsilon --roster " + drained.string() + " --rho 0.5 --samples 20000").code, 4);
}

TEST(Cli, EpsilonIsDeterministicAndSeedable) {
    const std::string base = "epsilon --roster " + sample("roster_mixed.csv") + " --rho 0.4 --samples 40000 --json -";
    const auto a = run(base);
    const auto b = run(base);
    ASSERT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out);
    const auto env = run(base, "CCPRISK_SEED=5");
    EXPECT_NE(env.out, a.out);
    EXPECT_EQ(run(base + " --seed 5").out, env.out);
    EXPECT_EQ(run(base + " --seed 20111101", "CCPRISK_SEED=5").out, a.out);
    EXPECT_EQ(Json::parse(env.out).at("config").at("rng_seed").get<std::uint64_t>(), 5u);
    EXPECT_EQ(run(base, "CCPRISK_SEED=abc").code, 2);
}

TEST(Cli, EpsilonExactAndReportingMember) {
    const auto r = run("epsilon --roster " + sample("roster_mixed.csv") + " --reporting-member DELTA --rho 0.3 --exact "
                       "--json -");
    ASSERT_EQ(r.code, 0);
    const auto j = Json::parse(r.out);
    const auto& rows = j.at("result").at("members");
    EXPECT_EQ(rows.size(), 7u);
    for (const auto& row : rows)
        EXPECT_NE(row.at("member_id"), "DELTA");
}

TEST(Cli, Table1PresetGrid) {
    const auto r = run("epsilon --table1 --samples 20000 --json -");
    ASSERT_EQ(r.code, 0);
    const auto j = Json::parse(r.out);
    EXPECT_EQ(j.at("cells").size(), 21u);
}

TEST(Cli, CalibrateWritesReportAndDiagnostics) {
    const auto dir = scratch("diag");
    fs::remove_all(dir);
    const auto r = run("calibrate --series " + sample("index_synthetic.csv") + " --diagnostics " + dir.string() +
                       " --json -");
    ASSERT_EQ(r.code, 0);
    const auto j = Json::parse(r.out);
    const auto& cal = j.at("calibration");
    EXPECT_GT(cal.at("wrong_way_factor").get<double>(), 1.0);
    EXPECT_GE(cal.at("contagion_factor").get<double>(), 1.0);
    EXPECT_GT(cal.at("pareto_index").get<double>(), 1.0);
    EXPECT_TRUE(fs::exists(dir / "vol_path.csv"));
    EXPECT_TRUE(fs::exists(dir / "tail_fit.csv"));

    // the report feeds straight back into charge
    const auto report = scratch("calibration_report.json");
    write(report, r.out);
    EXPECT_EQ(run("charge --roster " + sample("roster_mixed.csv") + " --cal " + report.string() + " --epsilon 0").code,
              0);
}

TEST(Cli, CalibrateBadSeries) {
    const auto bad = scratch("bad_series.csv");
    write(bad, "date,level\n2020-01-02,1\n2020-01-01,2\n");
    EXPECT_EQ(run("calibrate --series " + bad.string()).code, 2);
    const auto flat = scratch("flat_series.csv");
    std::string text = "date,level\n";
    for (int i = 0; i < 700; ++i) {
        char line[64];
        std::snprintf(line, sizeof line, "%04d-01-01,100\n", 1300 + i);
        text += line;
    }
    write(flat, text);
    EXPECT_EQ(run("calibrate --series " + flat.string()).code, 3);
}
