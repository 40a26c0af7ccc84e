// pclc: command-line front end.
//
//   pclc validate <scenario.json>
//   pclc run <scenario.json> --out <dir> [--seed N]
//   pclc compare <scenario.json> --out <dir>
//   pclc sweep <scenario.json> --seeds N --out <dir> [--threads T]
//   pclc replay <dir>
//
// Exit codes: 0 ok, 2 parse or validation failure, 3 runtime fault (including
// a replay mismatch or a failed safety scan).

#include "pclc/pclc.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int exit_ok = 0;
constexpr int exit_invalid = 2;
constexpr int exit_fault = 3;

void print_findings(const pclc::ValidationReport& rep) {
    for (const auto& f : rep.findings) std::cerr << "  [" << f.item << "] " << f.message << "\n";
}

pclc::Scenario load_valid(const std::string& path) {
    auto s = pclc::load_scenario(path);
    if (auto rep = pclc::validate_scenario(s); !rep.ok) throw pclc::ScenarioInvalid(std::move(rep));
    return s;
}

std::string opt_num(const std::optional<double>& v) { return v ? pclc::format_number(*v) : "n/a"; }

int cmd_validate(const std::string& path) {
    const auto s = pclc::load_scenario(path);
    const auto rep = pclc::validate_scenario(s);
    if (rep.ok) {
        std::cout << s.name << ": ok\n";
        return exit_ok;
    }
    std::cerr << s.name << ": " << rep.findings.size() << " finding(s)\n";
    print_findings(rep);
    return exit_invalid;
}

int cmd_run(const std::string& path, const std::string& out, std::optional<std::uint64_t> seed) {
    auto s = load_valid(path);
    if (seed) s = pclc::with_seed(std::move(s), *seed);
    const auto r = pclc::run_scenario(s);
    pclc::write_run_outputs(out, s, r);
    std::cout << s.name << " seed " << s.seed << ": " << r.rows.size() << " ticks, teed "
              << pclc::format_number(r.metrics.teed_total) << ", fallback "
              << pclc::format_number(r.metrics.fallback_frac) << "\n";
    if (r.faulted) {
        std::cerr << "fault: " << r.fault_message << "\n";
        return exit_fault;
    }
    return exit_ok;
}

int cmd_compare(const std::string& path, const std::string& out) {
    const auto s = load_valid(path);
    if (!pclc::is_automated(s.policy)) {
        std::cerr << s.name << ": compare needs an automated policy, got " << pclc::policy_name(s.policy) << "\n";
        return exit_invalid;
    }
    const auto c = pclc::compare_modes(s);
    pclc::write_compare_outputs(out, c);
    auto line = [&](const char* label, const pclc::RunResult& r) {
        std::cout << "  " << label << ": teed " << pclc::format_number(r.metrics.teed_total) << ", msd "
                  << opt_num(r.metrics.biomarker_msd) << ", in-range " << opt_num(r.metrics.time_in_range_frac)
                  << "\n";
    };
    std::cout << s.name << " seed " << s.seed << " (distance columns "
              << (c.distance_columns_match ? "match" : "DIFFER") << ")\n";
    line("automated", c.automated);
    line("fixed    ", c.fixed);
    return c.automated.faulted || c.fixed.faulted ? exit_fault : exit_ok;
}

int cmd_sweep(const std::string& path, std::size_t n, const std::string& out, unsigned threads) {
    const auto s = load_valid(path);
    const auto rep = pclc::sweep(s, n, std::filesystem::path(out), threads);
    pclc::write_file(std::filesystem::path(out) / "summary.json", pclc::sweep_json(s, rep).dump(2) + "\n");
    std::cout << s.name << ": " << n << " seeds, faults " << (rep.any_fault() ? "yes" : "none") << ", safety scans "
              << (rep.all_safe() ? "clean" : "VIOLATIONS") << "\n";
    return rep.any_fault() || !rep.all_safe() ? exit_fault : exit_ok;
}

int cmd_replay(const std::string& dir) {
    const auto rep = pclc::replay_dir(dir);
    for (const auto& f : rep.checked) {
        const bool bad = std::find(rep.mismatched.begin(), rep.mismatched.end(), f) != rep.mismatched.end();
        std::cout << "  " << f << ": " << (bad ? "MISMATCH" : "identical") << "\n";
    }
    if (rep.scan) {
        std::cout << "  safety scan: " << rep.scan->rows << " rows, " << rep.scan->violations.size() << " violation(s)\n";
        for (const auto& v : rep.scan->violations) std::cout << "    tick " << v.tick << " " << v.kind << ": " << v.detail << "\n";
    }
    std::cout << (rep.ok() ? "replay ok\n" : "replay FAILED\n");
    return rep.ok() ? exit_ok : exit_fault;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Closed-loop neuromodulation simulator"};
    app.require_subcommand(1);

    std::string scenario;
    std::string out;
    std::string dir;
    std::optional<std::uint64_t> seed;
    std::size_t n_seeds = 0;
    unsigned threads = 0;

    auto* validate = app.add_subcommand("validate", "Check a scenario against the design checklist");
    validate->add_option("scenario", scenario, "Scenario JSON file")->required();

    auto* run = app.add_subcommand("run", "Run one scenario");
    run->add_option("scenario", scenario, "Scenario JSON file")->required();
    run->add_option("--out", out, "Output directory")->required();
    run->add_option("--seed", seed, "Override the scenario seed");

    auto* compare = app.add_subcommand("compare", "Automated versus fixed-output comparison, same seed");
    compare->add_option("scenario", scenario, "Scenario JSON file")->required();
    compare->add_option("--out", out, "Output directory")->required();

    auto* sweep = app.add_subcommand("sweep", "Run N independent seeds");
    sweep->add_option("scenario", scenario, "Scenario JSON file")->required();
    sweep->add_option("--seeds", n_seeds, "Number of seeds")->required()->check(CLI::PositiveNumber);
    sweep->add_option("--out", out, "Output directory")->required();
    sweep->add_option("--threads", threads, "Parallel runs (default: hardware threads)");

    auto* replay = app.add_subcommand("replay", "Re-verify stored run outputs");
    replay->add_option("dir", dir, "Run output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? exit_ok : exit_invalid;
    }

    try {
        if (*validate) return cmd_validate(scenario);
        if (*run) return cmd_run(scenario, out, seed);
        if (*compare) return cmd_compare(scenario, out);
        if (*sweep) return cmd_sweep(scenario, n_seeds, out, threads);
        if (*replay) return cmd_replay(dir);
    } catch (const pclc::ScenarioInvalid& e) {
        std::cerr << e.what() << "\n";
        print_findings(e.report());
        return exit_invalid;
    } catch (const pclc::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return exit_invalid;
    } catch (const pclc::ScenarioFileError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_invalid;
    } catch (const pclc::SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return exit_invalid;
    } catch (const pclc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_fault;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_fault;
    }
    return exit_ok;
}
