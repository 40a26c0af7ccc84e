#pragma once

// Run outputs (timeseries.csv, events.jsonl, summary.json, scenario.json),
// the CSV-only post-hoc safety scan, mode comparison, replay verification and
// multi-seed sweeps.

#include "pclc/engine.hpp"
#include "pclc/metrics.hpp"
#include "pclc/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace pclc {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Shortest decimal text that reads back to the same double.
inline std::string format_number(double x) {
    if (x == 0.0) return "0";
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return {buf, r.ptr};
}

inline constexpr const char* timeseries_header =
    "tick,time_s,biomarker_value,biomarker_quality,setpoint_or_threshold,commanded_mA,delivered_mA,"
    "supervisor_mode,distance_mm_or_blank,seizing_flag_or_blank,teed_cum";

inline std::string timeseries_csv(const std::vector<TickRow>& rows) {
    std::string out = timeseries_header;
    out += '\n';
    auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
    for (const auto& r : rows) {
        out += std::to_string(r.tick);
        out += ',' + format_number(r.time_s);
        out += ',' + opt(r.biomarker);
        out += ',' + (r.biomarker ? r.quality.str() : std::string());
        out += ',' + opt(r.setpoint);
        out += ',' + format_number(r.commanded_mA);
        out += ',' + format_number(r.delivered_mA);
        out += ',' + std::string(to_string(r.mode));
        out += ',' + opt(r.distance_mm);
        out += ',' + (r.seizing ? std::string(*r.seizing ? "1" : "0") : std::string());
        out += ',' + format_number(r.teed_cum);
        out += '\n';
    }
    return out;
}

inline ordered_json event_json(const EventRecord& e) {
    ordered_json payload = ordered_json::object();
    for (const auto& [k, v] : e.payload) {
        std::visit([&](const auto& x) { payload[k] = x; }, v);
    }
    return ordered_json{{"tick", e.tick},
                        {"severity", std::string(to_string(e.severity))},
                        {"code", std::string(to_string(e.code))},
                        {"payload", payload}};
}

inline std::string events_jsonl(const EventLog& log) {
    std::string out;
    for (const auto& e : log.records()) {
        out += event_json(e).dump();
        out += '\n';
    }
    return out;
}

inline ordered_json step_response_json(const StepResponse& r) {
    auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
    return ordered_json{{"response_time_s", opt(r.response_time_s)},
                        {"settling_time_s", opt(r.settling_time_s)},
                        {"overshoot_frac", r.overshoot_frac},
                        {"steady_state_dev", r.steady_state_dev},
                        {"attained", r.attained()}};
}

inline ordered_json metrics_json(const Metrics& m) {
    auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
    return ordered_json{{"n_ticks", m.n_ticks},
                        {"teed_total", m.teed_total},
                        {"time_in_range_frac", opt(m.time_in_range_frac)},
                        {"seizure_count", m.seizure_count},
                        {"seizure_ticks_total", m.seizure_ticks_total},
                        {"early_termination_count", m.early_termination_count},
                        {"suppression_decisions", m.suppression_decisions},
                        {"fallback_frac", m.fallback_frac},
                        {"limit_clamp_count", m.limit_clamp_count},
                        {"step_response", m.step_response ? step_response_json(*m.step_response) : ordered_json(nullptr)},
                        {"biomarker_msd", opt(m.biomarker_msd)},
                        {"mean_delivered_mA", m.mean_delivered_mA},
                        {"fault_count", m.fault_count}};
}

inline ordered_json summary_json(const Scenario& s, const RunResult& r) {
    ordered_json counts = ordered_json::object();
    for (int i = 0; i <= static_cast<int>(EventCode::RunFault); ++i) {
        const auto c = static_cast<EventCode>(i);
        if (const auto n = r.events.count(c); n > 0) counts[std::string(to_string(c))] = n;
    }
    return ordered_json{{"schema", scenario_schema_version},
                        {"name", s.name},
                        {"seed", s.seed},
                        {"policy", std::string(policy_name(s.policy))},
                        {"dt_s", s.dt_s},
                        {"faulted", r.faulted},
                        {"fault_message", r.fault_message},
                        {"metrics", metrics_json(r.metrics)},
                        {"event_counts", counts}};
}

inline std::string summary_text(const Scenario& s, const RunResult& r) { return summary_json(s, r).dump(2) + "\n"; }

inline std::string scenario_text(const Scenario& s) { return s.source.dump(2) + "\n"; }

inline void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + p.string() + "'");
    out << text;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ScenarioFileError("cannot read '" + p.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// The files a run produces, keyed by file name. scenario.json is always
/// written because replay needs it.
inline std::vector<std::pair<std::string, std::string>> run_output_files(const Scenario& s, const RunResult& r) {
    const Outputs o = s.outputs.value_or(Outputs{});
    std::vector<std::pair<std::string, std::string>> files{{"scenario.json", scenario_text(s)}};
    if (o.timeseries) files.emplace_back("timeseries.csv", timeseries_csv(r.rows));
    if (o.events) files.emplace_back("events.jsonl", events_jsonl(r.events));
    if (o.summary) files.emplace_back("summary.json", summary_text(s, r));
    return files;
}

inline void write_run_outputs(const fs::path& dir, const Scenario& s, const RunResult& r) {
    fs::create_directories(dir);
    for (const auto& [name, text] : run_output_files(s, r)) write_file(dir / name, text);
}

// ---------------------------------------------------------------------------
// Post-hoc safety scan (reads only the CSV text)
// ---------------------------------------------------------------------------

struct SafetyViolation {
    std::int64_t tick = 0;
    std::string kind; // "amplitude", "slew", "charge"
    std::string detail;
};

struct SafetyScanReport {
    std::int64_t rows = 0;
    std::vector<SafetyViolation> violations;
    [[nodiscard]] bool ok() const { return violations.empty(); }
};

/// Widest pulse any dose in the scenario can carry; charge is checked at it.
inline double max_pulse_width_us(const Scenario& s) {
    double w = 0.0;
    for (const auto& [label, d] : detail::scenario_doses(s)) w = std::max(w, d.pulse_width_us);
    return w;
}

/// Checks delivered amplitude against the limits on every row: inside
/// [amp_min, amp_max] (or exactly 0 in modes that deliver nothing), per-tick
/// change within the slew limit (a drop straight to 0 on entering such a mode
/// is the one exemption), and charge per pulse at `pulse_width_us`.
inline SafetyScanReport safety_scan_csv(const std::string& csv, const DoseLimits& L, double pulse_width_us,
                                        double eps = 1e-9) {
    SafetyScanReport rep;
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw Error("safety scan: empty timeseries");
    std::vector<std::string> header;
    {
        std::stringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header.push_back(cell);
    }
    auto col = [&](const char* name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw Error(std::string("safety scan: missing column ") + name);
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_tick = col("tick");
    const std::size_t c_del = col("delivered_mA");
    const std::size_t c_mode = col("supervisor_mode");

    std::optional<double> prev;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        if (cells.size() != header.size()) throw Error("safety scan: ragged row '" + line + "'");
        const std::int64_t tick = std::stoll(cells[c_tick]);
        const double a = std::stod(cells[c_del]);
        const auto mode = mode_from_string(cells[c_mode]);
        if (!mode) throw Error("safety scan: unknown mode '" + cells[c_mode] + "'");
        ++rep.rows;
        auto flag = [&](const char* kind, std::string d) { rep.violations.push_back({tick, kind, std::move(d)}); };

        if (delivers_nothing(*mode)) {
            if (a != 0.0) flag("amplitude", "nonzero output in " + cells[c_mode]);
        } else if (a < L.amp_min_mA - eps || a > L.amp_max_mA + eps) {
            flag("amplitude", cells[c_del] + " mA outside limits");
        }
        if (prev && std::fabs(a - *prev) > L.max_slew_mA_per_tick + eps && !(delivers_nothing(*mode) && a == 0.0)) {
            flag("slew", format_number(*prev) + " -> " + cells[c_del] + " mA");
        }
        if (a * pulse_width_us * 1e-3 > L.max_charge_per_pulse_uC + eps) {
            flag("charge", cells[c_del] + " mA at " + format_number(pulse_width_us) + " us");
        }
        prev = a;
    }
    return rep;
}

inline SafetyScanReport safety_scan(const Scenario& s, const std::string& csv) {
    if (!s.limits) throw ConfigError("safety scan needs limits");
    return safety_scan_csv(csv, *s.limits, max_pulse_width_us(s));
}

// ---------------------------------------------------------------------------
// Mode comparison
// ---------------------------------------------------------------------------

struct CompareReport {
    Scenario automated_scenario;
    Scenario fixed_scenario;
    RunResult automated;
    RunResult fixed;
    std::optional<double> reference;
    /// Plant disturbance realizations match tick for tick.
    bool distance_columns_match = true;
};

/// Runs the scenario as configured and again open-loop at the baseline dose,
/// same seed. Both arms' metrics are computed against the automated arm's
/// reference and band.
inline CompareReport compare_modes(const Scenario& s) {
    if (!is_automated(s.policy)) throw ConfigError("compare_modes needs an automated policy");
    CompareReport rep{s, with_manual_policy(s, s.baseline_dose), {}, {}, policy_reference(s.policy), true};
    rep.automated = run_scenario(rep.automated_scenario);
    rep.fixed = run_scenario(rep.fixed_scenario);
    rep.fixed.metrics = summarize_metrics(rep.fixed.rows, rep.fixed.events, s, rep.fixed.plant, rep.reference);
    const auto& a = rep.automated.rows;
    const auto& f = rep.fixed.rows;
    rep.distance_columns_match = a.size() == f.size();
    for (std::size_t i = 0; rep.distance_columns_match && i < a.size(); ++i) {
        rep.distance_columns_match = a[i].distance_mm == f[i].distance_mm;
    }
    return rep;
}

inline ordered_json compare_json(const CompareReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
    auto arm = [&](const RunResult& x) {
        return ordered_json{{"teed_total", x.metrics.teed_total},
                            {"biomarker_msd", opt(x.metrics.biomarker_msd)},
                            {"time_in_range_frac", opt(x.metrics.time_in_range_frac)},
                            {"mean_delivered_mA", x.metrics.mean_delivered_mA},
                            {"faulted", x.faulted},
                            {"metrics", metrics_json(x.metrics)}};
    };
    return ordered_json{{"name", r.automated_scenario.name},
                        {"seed", r.automated_scenario.seed},
                        {"reference", opt(r.reference)},
                        {"distance_columns_match", r.distance_columns_match},
                        {"automated", arm(r.automated)},
                        {"fixed", arm(r.fixed)}};
}

inline void write_compare_outputs(const fs::path& dir, const CompareReport& r) {
    write_run_outputs(dir / "automated", r.automated_scenario, r.automated);
    write_run_outputs(dir / "fixed", r.fixed_scenario, r.fixed);
    write_file(dir / "comparison.json", compare_json(r).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

struct ReplayReport {
    std::vector<std::string> checked;
    std::vector<std::string> mismatched;
    std::optional<SafetyScanReport> scan;
    bool faulted = false;

    [[nodiscard]] bool ok() const { return mismatched.empty() && (!scan || scan->ok()) && !faulted; }
};

/// Re-runs the stored scenario.json and compares every stored output byte for
/// byte, then scans the stored timeseries.
inline ReplayReport replay_dir(const fs::path& dir) {
    const Scenario s = parse_scenario_text(read_file(dir / "scenario.json"));
    const RunResult r = run_scenario(s);
    ReplayReport rep;
    rep.faulted = r.faulted;
    for (const auto& [name, text] : run_output_files(s, r)) {
        if (name == "scenario.json") continue;
        const auto p = dir / name;
        rep.checked.push_back(name);
        if (!fs::exists(p) || read_file(p) != text) rep.mismatched.push_back(name);
    }
    if (fs::exists(dir / "timeseries.csv")) rep.scan = safety_scan(s, read_file(dir / "timeseries.csv"));
    return rep;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

struct SweepEntry {
    std::uint64_t seed = 0;
    Metrics metrics;
    bool faulted = false;
    bool safety_ok = true;
};

struct SweepReport {
    std::vector<SweepEntry> entries;
    [[nodiscard]] bool any_fault() const {
        return std::any_of(entries.begin(), entries.end(), [](const SweepEntry& e) { return e.faulted; });
    }
    [[nodiscard]] bool all_safe() const {
        return std::all_of(entries.begin(), entries.end(), [](const SweepEntry& e) { return e.safety_ok; });
    }
};

/// Seeds s.seed, s.seed + 1, ... Each run is independent and owns its own
/// state; runs go in parallel batches. With `out` set, each run writes to
/// out/seed_<seed>/.
inline SweepReport sweep(const Scenario& s, std::size_t n_seeds, const std::optional<fs::path>& out,
                         unsigned threads = 0) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    SweepReport rep;
    rep.entries.resize(n_seeds);
    auto one = [&](std::size_t i) {
        const Scenario si = with_seed(s, s.seed + i);
        const RunResult r = run_scenario(si);
        SweepEntry e{si.seed, r.metrics, r.faulted, safety_scan(si, timeseries_csv(r.rows)).ok()};
        if (out) write_run_outputs(*out / ("seed_" + std::to_string(si.seed)), si, r);
        return e;
    };
    for (std::size_t start = 0; start < n_seeds; start += threads) {
        std::vector<std::future<SweepEntry>> batch;
        const std::size_t end = std::min<std::size_t>(n_seeds, start + threads);
        for (std::size_t i = start; i < end; ++i) batch.push_back(std::async(std::launch::async, one, i));
        for (std::size_t i = start; i < end; ++i) rep.entries[i] = batch[i - start].get();
    }
    return rep;
}

inline ordered_json sweep_json(const Scenario& s, const SweepReport& r) {
    ordered_json runs = ordered_json::array();
    double teed = 0.0;
    double fallback = 0.0;
    double tir = 0.0;
    std::size_t tir_n = 0;
    for (const auto& e : r.entries) {
        runs.push_back(ordered_json{{"seed", e.seed},
                                    {"faulted", e.faulted},
                                    {"safety_scan_ok", e.safety_ok},
                                    {"teed_total", e.metrics.teed_total},
                                    {"time_in_range_frac", e.metrics.time_in_range_frac
                                                               ? ordered_json(*e.metrics.time_in_range_frac)
                                                               : ordered_json(nullptr)},
                                    {"seizure_count", e.metrics.seizure_count},
                                    {"early_termination_count", e.metrics.early_termination_count},
                                    {"fallback_frac", e.metrics.fallback_frac},
                                    {"limit_clamp_count", e.metrics.limit_clamp_count}});
        teed += e.metrics.teed_total;
        fallback += e.metrics.fallback_frac;
        if (e.metrics.time_in_range_frac) {
            tir += *e.metrics.time_in_range_frac;
            ++tir_n;
        }
    }
    const double n = std::max<double>(1.0, static_cast<double>(r.entries.size()));
    return ordered_json{{"name", s.name},
                        {"base_seed", s.seed},
                        {"n_seeds", r.entries.size()},
                        {"any_fault", r.any_fault()},
                        {"all_safety_scans_ok", r.all_safe()},
                        {"mean_teed_total", teed / n},
                        {"mean_fallback_frac", fallback / n},
                        {"mean_time_in_range_frac", tir_n ? ordered_json(tir / static_cast<double>(tir_n)) : ordered_json(nullptr)},
                        {"runs", runs}};
}

} // namespace pclc
