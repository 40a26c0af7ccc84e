#include "pclc/pclc.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

const std::string cli = PCLC_CLI_PATH;
const std::string scenarios = PCLC_SCENARIO_DIR;

int run(const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path scratch(const std::string& tag) {
    const auto p = fs::temp_directory_path() / ("pclc_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string write_variant(const fs::path& dir, const std::string& base, const std::function<void(pclc::json&)>& edit) {
    auto j = pclc::parse_json_text(pclc::read_file(scenarios + "/" + base + ".json"));
    edit(j);
    const auto p = dir / (base + "_variant.json");
    pclc::write_file(p, j.dump(2));
    return p.string();
}

} // namespace

TEST(Cli, ValidateReferenceScenarios) {
    for (const char* n : {"ecap_scs", "adbs_parkinsons", "rns_epilepsy"}) {
        EXPECT_EQ(run("validate " + scenarios + "/" + n + ".json"), 0) << n;
    }
}

TEST(Cli, ValidationFailuresExitTwo) {
    const auto dir = scratch("invalid");
    const auto bad_limits = write_variant(dir, "ecap_scs", [](pclc::json& j) { j["limits"]["amp_min_mA"] = 20.0; });
    EXPECT_EQ(run("validate " + bad_limits), 2);
    EXPECT_EQ(run("run " + bad_limits + " --out " + (dir / "o").string()), 2);

    pclc::write_file(dir / "broken.json", "{ \"schema\": 1, ");
    EXPECT_EQ(run("validate " + (dir / "broken.json").string()), 2);
    EXPECT_EQ(run("validate " + (dir / "missing.json").string()), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("run " + scenarios + "/ecap_scs.json"), 2);
    fs::remove_all(dir);
}

TEST(Cli, RunWritesOutputsAndReplays) {
    const auto dir = scratch("run");
    EXPECT_EQ(run("run " + scenarios + "/ecap_scs.json --out " + (dir / "a").string()), 0);
    for (const char* f : {"timeseries.csv", "events.jsonl", "summary.json", "scenario.json"}) {
        EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
    }
    EXPECT_EQ(run("replay " + (dir / "a").string()), 0);

    EXPECT_EQ(run("run " + scenarios + "/ecap_scs.json --seed 5 --out " + (dir / "b").string()), 0);
    const auto summary = pclc::json::parse(pclc::read_file(dir / "b" / "summary.json"));
    EXPECT_EQ(summary["seed"], 5);
    EXPECT_EQ(run("replay " + (dir / "b").string()), 0);

    pclc::write_file(dir / "b" / "timeseries.csv", pclc::read_file(dir / "a" / "timeseries.csv"));
    EXPECT_EQ(run("replay " + (dir / "b").string()), 3);
    fs::remove_all(dir);
}

TEST(Cli, ReplayWithoutStoredScenarioIsAFileError) {
    const auto dir = scratch("empty");
    EXPECT_EQ(run("replay " + dir.string()), 2);
    fs::remove_all(dir);
}

TEST(Cli, CompareAndSweep) {
    const auto dir = scratch("cmp");
    EXPECT_EQ(run("compare " + scenarios + "/ecap_scs.json --out " + (dir / "c").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "c" / "comparison.json"));
    EXPECT_TRUE(fs::exists(dir / "c" / "automated" / "timeseries.csv"));
    EXPECT_TRUE(fs::exists(dir / "c" / "fixed" / "timeseries.csv"));

    const auto short_ecap = write_variant(dir, "ecap_scs", [](pclc::json& j) {
        j["timebase"]["duration_s"] = 5.0;
        j.erase("metrics");
    });
    EXPECT_EQ(run("sweep " + short_ecap + " --seeds 4 --out " + (dir / "s").string()), 0);
    const auto summary = pclc::json::parse(pclc::read_file(dir / "s" / "summary.json"));
    EXPECT_EQ(summary["n_seeds"], 4);
    EXPECT_EQ(summary["all_safety_scans_ok"], true);
    EXPECT_EQ(run("sweep " + short_ecap + " --seeds 0 --out " + (dir / "z").string()), 2);

    const auto manual = write_variant(dir, "ecap_scs", [](pclc::json& j) {
        j["policy"] = {{"kind", "manual_fixed"}, {"dose", j["baseline_dose"]}};
    });
    EXPECT_EQ(run("compare " + manual + " --out " + (dir / "m").string()), 2);
    fs::remove_all(dir);
}
