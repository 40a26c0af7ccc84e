// Acceptance gate: one PASS/FAIL line per criterion, each timed against its
// runtime budget. Exits nonzero if any criterion fails.

#include "pclc/pclc.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <future>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace pclc;
namespace fs = std::filesystem;

namespace {

const std::string scenario_dir = PCLC_SCENARIO_DIR;
const std::string cli_path = PCLC_CLI_PATH;

std::string scenario_path(const std::string& name) { return scenario_dir + "/" + name + ".json"; }

json scenario_doc(const std::string& name) { return parse_json_text(read_file(scenario_path(name))); }

struct Outcome {
    bool ok = true;
    std::string detail;
};

// Collects failures without stopping; the first few messages end up in the
// criterion's detail.
struct Check {
    Outcome out;
    int failures = 0;
    void expect(bool cond, const std::string& msg) {
        if (cond) return;
        out.ok = false;
        if (++failures <= 3) out.detail += (out.detail.empty() ? "" : "; ") + msg;
    }
    void note(const std::string& msg) {
        if (out.ok) out.detail += (out.detail.empty() ? "" : "; ") + msg;
    }
};

std::string num(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

// ---------------------------------------------------------------------------
// Oracles written independently of the library.
// ---------------------------------------------------------------------------

double oracle_ll(const std::vector<double>& x) {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i) s += x[i + 1] > x[i] ? x[i + 1] - x[i] : x[i] - x[i + 1];
    return s;
}

double oracle_area(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v < 0.0 ? -v : v;
    return s;
}

double oracle_median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

Outcome feature_oracles() {
    Check c;
    std::mt19937_64 gen(20240601);
    std::normal_distribution<double> val(0.0, 25.0);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> x(64);
        for (auto& v : x) v = val(gen);
        Window w(64);
        for (double v : x) w.push(v);
        c.expect(line_length(w) == oracle_ll(x), "line length differs on window " + std::to_string(t));
        c.expect(area_under_curve(w) == oracle_area(x), "area differs on window " + std::to_string(t));
        const AdaptiveThresholdState st{w, Window(1), 2.0, AdaptiveThreshold{}};
        c.expect(adaptive_threshold(st) == 2.0 * oracle_median(x), "median threshold differs on window " +
                                                                         std::to_string(t));
    }
    c.note("1000 windows, exact");
    return c.out;
}

Outcome parseval() {
    Check c;
    const double fs = 250.0;
    std::vector<double> x(250);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2.0 * std::numbers::pi * 20.0 * static_cast<double>(i) / fs);
    const double beta = band_power(x, 13.0, 30.0, fs);
    const double gamma = band_power(x, 55.0, 75.0, fs);
    c.expect(std::fabs(beta - 0.5) <= 0.025, "beta power " + num(beta));
    c.expect(gamma < 0.02 * beta, "leakage " + num(gamma));
    c.note("beta " + num(beta) + ", 55-75 Hz " + num(gamma));
    return c.out;
}

Outcome ecap_fixed_point() {
    Check c;
    const auto s = load_scenario(scenario_path("ecap_scs"));
    const auto r = run_scenario(s);
    c.expect(!r.faulted, "run faulted: " + r.fault_message);
    if (r.faulted) return c.out;

    const auto* pol = std::get_if<EcapSetpoint>(&s.policy);
    const auto* plant = std::get_if<EcapPlantConfig>(&s.plant);
    c.expect(pol && plant, "ecap_scs is not an ECAP setpoint scenario");
    if (!pol || !plant) return c.out;
    const auto& p = plant->params;
    const double step = s.device.amp_step_mA;
    const double k = p.slope_uV_per_mA_at_ref;
    const double before = p.threshold_mA_at_ref + pol->target_uV / k;
    const double after = p.threshold_mA_at_ref + p.threshold_distance_coeff * 1.0 + pol->target_uV / k;

    // Every tick of the settled stretch before the step and after it.
    auto within = [&](std::size_t a, std::size_t b, double want) {
        double worst = 0.0;
        for (std::size_t i = a; i < b; ++i) worst = std::max(worst, std::fabs(r.rows[i].delivered_mA - want));
        return worst;
    };
    const double e1 = within(800, 1000, before);
    const double e2 = within(1800, 2000, after);
    c.expect(e1 <= step + 1e-9, "pre-step delivered off by " + num(e1));
    c.expect(e2 <= step + 1e-9, "post-step delivered off by " + num(e2));

    double ecap_sum = 0.0;
    for (std::size_t i = 1800; i < 2000; ++i) ecap_sum += r.rows[i].biomarker.value_or(0.0);
    const double ecap_mean = ecap_sum / 200.0;
    c.expect(std::fabs(ecap_mean - pol->target_uV) <= 0.05 * pol->target_uV, "post-step ECAP " + num(ecap_mean));

    const auto& sr = r.metrics.step_response;
    c.expect(sr && sr->settling_time_s && *sr->settling_time_s < 2.0, "settling time missing or >= 2 s");
    c.note("fixed points " + num(before) + " / " + num(after) + " mA within " + num(std::max(e1, e2)) +
           ", settling " + (sr && sr->settling_time_s ? num(*sr->settling_time_s) : "n/a") + " s");
    return c.out;
}

Outcome ecap_variance() {
    Check c;
    const auto cmp = compare_modes(load_scenario(scenario_path("ecap_scs")));
    c.expect(cmp.distance_columns_match, "disturbance realizations differ between arms");
    const auto& a = cmp.automated.metrics.biomarker_msd;
    const auto& f = cmp.fixed.metrics.biomarker_msd;
    c.expect(a && f, "msd missing");
    if (a && f) {
        c.expect(*a < *f, "automated msd " + num(*a) + " not below fixed " + num(*f));
        c.note("msd automated " + num(*a) + " vs fixed " + num(*f));
    }
    return c.out;
}

Outcome therapy_budget() {
    Check c;
    const Dose burst{2.0, 160.0, 200.0, "e1-e2"};
    std::int64_t strings = 0;
    for (int bursts : {1, 2}) {
        for (std::int64_t dur : {1, 2}) {
            const BangBangResponsive cfg{burst, bursts, dur, 5};
            for (int n = 0; n <= 12; ++n) {
                for (unsigned m = 0; m < (1u << n); ++m) {
                    ++strings;
                    PolicyState st;
                    int in_event = 0;
                    bool armed = true; // a fresh event may start a therapy
                    bool prev = false;
                    for (int t = 0; t < n; ++t) {
                        const bool f = (m >> t) & 1u;
                        const auto r = bang_bang_responsive_step(f, st, cfg);
                        if (r.therapy_started) {
                            c.expect(f, "therapy started without detection");
                            c.expect(armed || in_event > 0, "therapy started before re-arm");
                            ++in_event;
                            armed = false;
                        }
                        c.expect(in_event <= 5, "more than five therapies in one event, string " + std::to_string(m));
                        if (!f) {
                            in_event = 0;
                            armed = true;
                        }
                        if (f && !prev) c.expect(r.therapy_started || st.burst_ticks_remaining > 0,
                                                 "new detection did not start a therapy");
                        prev = f;
                        st = r.state;
                    }
                }
            }
        }
    }
    c.note(std::to_string(strings) + " flag strings");
    return c.out;
}

Outcome supervisor_model_check() {
    Check c;
    const DeviceSignals dev{3.7, 3.0, false};
    const Dose safe{1.0, 100.0, 50.0, "c"};
    std::int64_t strings = 0;
    for (int ke = 1; ke <= 3; ++ke) {
        for (int kn = 1; kn <= 3; ++kn) {
            const SupervisorConfig cfg{FixedSafe{safe}, ke, kn};
            for (int n = 0; n <= 16; ++n) {
                for (std::uint32_t m = 0; m < (1u << n); ++m) {
                    ++strings;
                    SupervisorState st;
                    Mode prev = Mode::Automated;
                    int fails = 0;
                    int passes = 0;
                    for (int t = 0; t < n && c.failures == 0; ++t) {
                        const bool pass = (m >> t) & 1u;
                        fails = pass ? 0 : fails + 1;
                        passes = pass ? passes + 1 : 0;
                        st.fail_streak = fails;
                        st.pass_streak = passes;
                        const Verdict v = pass ? Verdict{} : Verdict{TrustCheckSet{TrustCheck::QualityOK}};
                        const auto r = supervisor_step(st, v, false, dev, false, cfg, t);
                        const Mode want = prev == Mode::Automated ? (fails >= ke ? Mode::Fallback : Mode::Automated)
                                                                  : (passes >= kn ? Mode::Automated : Mode::Fallback);
                        c.expect(r.mode == want, "dwell rule broken at ke=" + std::to_string(ke) +
                                                     " kn=" + std::to_string(kn) + " string " + std::to_string(m));
                        prev = r.mode;
                        st = r.state;
                    }
                }
            }
        }
    }

    // Resets absorb every verdict until a clinician reset; a magnet window
    // delivers nothing and resumes the mode it interrupted.
    for (int ke = 1; ke <= 3; ++ke) {
        for (int kn = 1; kn <= 3; ++kn) {
            const SupervisorConfig cfg{FixedSafe{safe}, ke, kn};
            for (std::uint32_t m = 0; m < (1u << 10); ++m) {
                SupervisorState st;
                auto r = supervisor_step(st, Verdict{}, false, DeviceSignals{3.7, 3.0, true}, false, cfg, 0);
                c.expect(r.mode == Mode::DcLeakReset, "DC leak did not reset");
                st = r.state;
                for (int t = 1; t <= 10; ++t) {
                    const bool pass = (m >> (t - 1)) & 1u;
                    const Verdict v = pass ? Verdict{} : Verdict{TrustCheckSet{TrustCheck::QualityOK}};
                    r = supervisor_step(st, v, t % 3 == 0, dev, false, cfg, t);
                    c.expect(r.mode == Mode::DcLeakReset, "reset did not absorb");
                    st = r.state;
                }
                r = supervisor_step(st, Verdict{}, false, dev, true, cfg, 11);
                c.expect(!is_reset(r.mode), "clinician reset did not clear the reset");

                for (Mode start : {Mode::Automated, Mode::Fallback}) {
                    SupervisorState s2;
                    s2.mode = start;
                    auto q = supervisor_step(s2, Verdict{}, true, dev, false, cfg, 0);
                    c.expect(q.mode == Mode::SuspendedMagnet && delivers_nothing(q.mode), "magnet did not suspend");
                    s2 = q.state;
                    s2.fail_streak = 0;
                    s2.pass_streak = 0;
                    q = supervisor_step(s2, Verdict{TrustCheckSet{TrustCheck::QualityOK}}, false, dev, false,
                                        SupervisorConfig{FixedSafe{safe}, 99, 99}, 1);
                    c.expect(q.mode == start, "magnet release did not resume " + std::string(to_string(start)));
                }
            }
        }
    }
    c.note(std::to_string(strings) + " verdict strings");
    return c.out;
}

struct ScanTally {
    std::int64_t runs = 0;
    std::int64_t rows = 0;
    std::int64_t violations = 0;
    std::int64_t faults = 0;
};

Outcome safety_universal() {
    Check c;
    ScanTally tally;
    const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    for (const char* name : {"ecap_scs", "adbs_parkinsons", "rns_epilepsy"}) {
        const auto base = load_scenario(scenario_path(name));
        // Seed 0 offset is the reference run itself; 1..100 are the sweep.
        const std::size_t total = 101;
        for (std::size_t start = 0; start < total; start += threads) {
            std::vector<std::future<std::pair<SafetyScanReport, bool>>> jobs;
            for (std::size_t i = start; i < std::min(total, start + threads); ++i) {
                jobs.push_back(std::async(std::launch::async, [&base, i] {
                    const auto s = i == 0 ? base : with_seed(base, base.seed + i);
                    const auto r = run_scenario(s);
                    return std::make_pair(safety_scan(s, timeseries_csv(r.rows)), r.faulted);
                }));
            }
            for (auto& j : jobs) {
                const auto [scan, faulted] = j.get();
                ++tally.runs;
                tally.rows += scan.rows;
                tally.violations += static_cast<std::int64_t>(scan.violations.size());
                tally.faults += faulted;
                for (const auto& v : scan.violations) {
                    c.expect(false, std::string(name) + " tick " + std::to_string(v.tick) + " " + v.kind + ": " +
                                        v.detail);
                }
                c.expect(!faulted, std::string(name) + " run faulted");
            }
        }
    }
    c.note(std::to_string(tally.runs) + " runs, " + std::to_string(tally.rows) + " rows, " +
           std::to_string(tally.violations) + " violations");
    return c.out;
}

Outcome suppression_statistics() {
    Check c;
    auto j = scenario_doc("rns_epilepsy");
    auto& sz = j["plant"]["seizures"];
    sz["suppression_prob"] = 0.6;
    sz["rate_per_hour"] = 180.0;
    sz["base_duration_ticks"] = 40;
    j["plant"]["device"]["drain_v_per_uC"] = 0.0;
    j["plant"]["device"]["impedance_ramp_ohm_per_tick"] = 0.0;
    j["budgets"]["max_episodes_per_day"] = 100000;
    j["interventions"] = json::object();
    j["timebase"]["duration_s"] = 300000.0;
    const auto s = scenario_from_json(j);
    const auto rep = validate_scenario(s);
    c.expect(rep.ok, "variant scenario does not validate");
    if (!rep.ok) return c.out;
    const auto r = run_scenario(s);
    c.expect(!r.faulted, "run faulted: " + r.fault_message);
    const auto n = r.plant.suppression_decisions;
    const auto k = r.plant.early_terminations;
    c.expect(n >= 10000, "only " + std::to_string(n) + " suppression decisions");
    if (n > 0) {
        const double frac = static_cast<double>(k) / static_cast<double>(n);
        const double sigma = std::sqrt(0.6 * 0.4 / static_cast<double>(n));
        c.expect(std::fabs(frac - 0.6) <= 3.0 * sigma, "fraction " + num(frac) + " outside 3 sigma " + num(sigma));
        c.note(std::to_string(n) + " decisions, fraction " + num(frac) + ", sigma " + num(sigma));
    }
    return c.out;
}

Outcome adbs_energy() {
    Check c;
    const auto cmp = compare_modes(load_scenario(scenario_path("adbs_parkinsons")));
    const auto& a = cmp.automated.metrics;
    const auto& f = cmp.fixed.metrics;
    c.expect(a.teed_total < f.teed_total, "adaptive TEED " + num(a.teed_total) + " not below " + num(f.teed_total));
    c.expect(a.time_in_range_frac && f.time_in_range_frac, "time-in-range missing");
    if (a.time_in_range_frac && f.time_in_range_frac) {
        c.expect(*a.time_in_range_frac >= *f.time_in_range_frac, "time-in-range " + num(*a.time_in_range_frac) +
                                                                     " below " + num(*f.time_in_range_frac));
        c.note("TEED " + num(a.teed_total) + " vs " + num(f.teed_total) + ", in range " +
               num(*a.time_in_range_frac) + " vs " + num(*f.time_in_range_frac));
    }
    return c.out;
}

int shell(const std::string& args) {
    const std::string cmd = "\"" + cli_path + "\" " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome determinism_replay() {
    Check c;
    const auto root = fs::temp_directory_path() / ("pclc_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    for (const char* name : {"ecap_scs", "adbs_parkinsons", "rns_epilepsy"}) {
        const auto a = root / name / "a";
        const auto b = root / name / "b";
        c.expect(shell("run " + scenario_path(name) + " --seed 7 --out " + a.string()) == 0, "first run failed");
        c.expect(shell("run " + scenario_path(name) + " --seed 7 --out " + b.string()) == 0, "second run failed");
        for (const char* f : {"timeseries.csv", "events.jsonl", "summary.json"}) {
            const bool same = fs::exists(a / f) && fs::exists(b / f) && read_file(a / f) == read_file(b / f);
            c.expect(same, std::string(name) + "/" + f + " differs between runs");
        }
        c.expect(shell("replay " + a.string()) == 0, std::string(name) + " replay failed");
    }
    fs::remove_all(root);
    c.note("3 scenarios byte-identical, replay ok");
    return c.out;
}

Outcome dose_response_shapes() {
    Check c;
    const BetaSuppression beta{4.0, 0.8, 1.75, 0.4};
    const double h = 1e-4;
    auto slope = [&](double a) {
        return std::fabs(dose_response_mean(beta, a + h) - dose_response_mean(beta, a - h)) / (2.0 * h);
    };
    double prev = slope(1.75);
    for (int i = 1; i <= 85; ++i) {
        const double a = 1.75 + 0.05 * i;
        const double s = slope(a);
        c.expect(s < prev, "slope not decreasing at " + num(a) + " mA");
        prev = s;
    }

    Rng rng(5, 4);
    const OffsetGain og{1.5, 1.2};
    for (int i = 0; i <= 120; ++i) {
        const double a = 0.01 * i;
        c.expect(dose_response_eval(og, a, rng) == 0.0, "OffsetGain nonzero at " + num(a));
    }

    const NoisyNonMonotonic nn{og, 0.0, 3.0, 1.5};
    for (int i = 0; i <= 600; ++i) {
        const double a = 0.01 * i;
        // Base curve restated: offset-gain up to the peak, then a linear
        // decline floored at zero.
        const double rise = 1.5 * std::max(0.0, std::min(a, 3.0) - 1.2);
        const double want = a <= 3.0 ? rise : std::max(0.0, rise - 1.5 * (a - 3.0));
        c.expect(dose_response_eval(nn, a, rng) == want, "noise-free curve differs at " + num(a));
    }
    c.note("slope strictly decreasing over 1.80-6.00 mA");
    return c.out;
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> fn;
};

} // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "feature oracle equivalence", 5.0, feature_oracles},
        {2, "band power Parseval", 1.0, parseval},
        {3, "ECAP analytic fixed point", 10.0, ecap_fixed_point},
        {4, "ECAP automated vs fixed variance", 20.0, ecap_variance},
        {5, "therapy budget exactness", 5.0, therapy_budget},
        {6, "supervisor model check", 30.0, supervisor_model_check},
        {7, "safety universal", 120.0, safety_universal},
        {8, "seizure suppression statistics", 60.0, suppression_statistics},
        {9, "aDBS energy direction", 30.0, adbs_energy},
        {10, "determinism and replay", 30.0, determinism_replay},
        {11, "dose-response shapes", 5.0, dose_response_shapes},
    };

    int failed = 0;
    for (const auto& cr : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = cr.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs >= cr.budget_s) {
            o.ok = false;
            o.detail += (o.detail.empty() ? "" : "; ") + ("over runtime budget of " + num(cr.budget_s) + " s");
        }
        failed += !o.ok;
        std::printf("%s  %2d  %-34s %8.3f s  %s\n", o.ok ? "PASS" : "FAIL", cr.id, cr.name, secs, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
