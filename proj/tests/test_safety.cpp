#include "pclc/safety.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace pclc;

namespace {

const Dose base{2.0, 100.0, 50.0, "c"};

Verdict pass_v() { return {}; }
Verdict fail_v(TrustCheck c = TrustCheck::QualityOK) { return Verdict{TrustCheckSet{c}}; }

// Streak bookkeeping as trust_check_step would do it, for driving the
// supervisor from a verdict string directly.
SupervisorState apply_verdict(SupervisorState st, bool pass) {
    if (pass) {
        ++st.pass_streak;
        st.fail_streak = 0;
    } else {
        ++st.fail_streak;
        st.pass_streak = 0;
    }
    return st;
}

} // namespace

TEST(Clamp, SlewThenClamp) {
    const DoseLimits lim{0.0, 6.0, 5.0, 100.0};
    const auto r = clamp_and_slew(base.with_amplitude(10.0), lim, base.with_amplitude(2.0));
    EXPECT_DOUBLE_EQ(r.dose.amplitude_mA, 6.0);
    EXPECT_TRUE(r.slew_bound);
    EXPECT_TRUE(r.limit_bound);
    EXPECT_FALSE(r.charge_bound);
    EXPECT_EQ(clamp_events(r, base.with_amplitude(10.0), 3).size(), 2u);
}

TEST(Clamp, IdentityWithinLimits) {
    const DoseLimits lim{0.0, 6.0, 5.0, 100.0};
    const auto r = clamp_and_slew(base.with_amplitude(3.0), lim, base.with_amplitude(2.0));
    EXPECT_EQ(r.dose, base.with_amplitude(3.0));
    EXPECT_TRUE(clamp_events(r, base, 0).empty());
}

TEST(Clamp, RampDownIsSlewLimited) {
    const DoseLimits lim{0.0, 6.0, 1.0, 100.0};
    EXPECT_DOUBLE_EQ(clamp_and_slew(base.with_amplitude(0.0), lim, base.with_amplitude(4.0)).dose.amplitude_mA, 3.0);
}

TEST(Clamp, ChargeLimitCutsAmplitudeAndAlerts) {
    const DoseLimits lim{0.0, 10.0, 10.0, 0.5};
    const auto cmd = base.with_amplitude(8.0);
    const auto r = clamp_and_slew(cmd, lim, base.with_amplitude(8.0));
    EXPECT_TRUE(r.charge_bound);
    EXPECT_NEAR(charge_per_pulse(r.dose), 0.5, 1e-12);
    const auto ev = clamp_events(r, cmd, 9);
    ASSERT_EQ(ev.size(), 1u);
    EXPECT_EQ(ev[0].code, EventCode::ChargeClamp);
    EXPECT_EQ(ev[0].severity, Severity::Alert);
}

TEST(Clamp, ResultAlwaysLegal) {
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> u(0.0, 12.0);
    for (int i = 0; i < 20000; ++i) {
        const DoseLimits lim{1.0, 8.0, 0.5, 0.6};
        const Dose prev = base.with_amplitude(std::clamp(u(gen), 1.0, 6.0));
        const auto r = clamp_and_slew(base.with_amplitude(u(gen)), lim, prev);
        const double a = r.dose.amplitude_mA;
        EXPECT_LE(a, lim.amp_max_mA);
        EXPECT_LE(charge_per_pulse(r.dose), lim.max_charge_per_pulse_uC + 1e-12);
        // With a feasible prev, slew and window hold together.
        EXPECT_GE(a, lim.amp_min_mA);
        EXPECT_LE(std::fabs(a - prev.amplitude_mA), lim.max_slew_mA_per_tick + 1e-12);
    }
}

TEST(EventLog, AppendSemantics) {
    EventLog log;
    log = log_event(std::move(log), {0, Severity::Info, EventCode::DayRollover, {}});
    EXPECT_EQ(log.size(), 1u);
    log.append({5, Severity::Alert, EventCode::SlewClamp, {}});
    log.append({5, Severity::Alert, EventCode::LimitClamp, {}});
    ASSERT_EQ(log.size(), 3u);
    EXPECT_EQ(log.records()[1].code, EventCode::SlewClamp);
    EXPECT_EQ(log.records()[2].code, EventCode::LimitClamp);
    EXPECT_THROW(log.append({4, Severity::Info, EventCode::DayRollover, {}}), InvariantBreach);
}

TEST(EventLog, FaultsSurviveEviction) {
    EventLog log(3);
    log.append({0, Severity::Fault, EventCode::RunFault, {}});
    for (int i = 1; i <= 50; ++i) log.append({i, Severity::Info, EventCode::SlewClamp, {}});
    log.append({51, Severity::Fault, EventCode::RunFault, {}});
    EXPECT_EQ(log.count(EventCode::RunFault), 2u);
    EXPECT_EQ(log.size(), 5u);
    EXPECT_EQ(log.appended(), 52u);
    EXPECT_TRUE(log.has_fault());
}

TEST(Trust, Examples) {
    TrustConfig cfg;
    cfg.checks = {TrustCheck::QualityOK, TrustCheck::EcapNonNegative, TrustCheck::BatteryAboveEos};
    TrustInputs in;
    in.ecap_est_uV = 1.0;
    in.battery_v = 3.7;
    in.eos_threshold_v = 3.0;

    SupervisorState st;
    st.fail_streak = 2;
    auto r = trust_check_step(in, cfg, st);
    EXPECT_TRUE(r.verdict.pass());
    EXPECT_EQ(r.state.pass_streak, 1);
    EXPECT_EQ(r.state.fail_streak, 0);

    in.ecap_est_uV = -0.2;
    r = trust_check_step(in, cfg, r.state);
    EXPECT_EQ(r.verdict.failed, TrustCheckSet{TrustCheck::EcapNonNegative});
    EXPECT_EQ(r.state.pass_streak, 0);
    EXPECT_EQ(r.state.fail_streak, 1);

    in.ecap_est_uV = 1.0;
    in.battery_v = 2.9;
    EXPECT_EQ(trust_check_step(in, cfg, {}).verdict.failed, TrustCheckSet{TrustCheck::BatteryAboveEos});
}

TEST(Trust, DisabledChecksNeverFail) {
    TrustConfig cfg;
    cfg.checks = {TrustCheck::NoDcLeak};
    TrustInputs in;
    in.quality = Quality::Saturated;
    in.ecap_est_uV = -5.0;
    in.battery_v = 0.0;
    in.eos_threshold_v = 3.0;
    EXPECT_TRUE(evaluate_trust(in, cfg).pass());
    in.dc_leak = true;
    EXPECT_EQ(evaluate_trust(in, cfg).failed.str(), "NoDcLeak");
}

TEST(Trust, RangesAndPhysiology) {
    TrustConfig cfg;
    cfg.checks = {TrustCheck::ImpedanceInRange, TrustCheck::BiomarkerInPhysRange};
    cfg.impedance_min_ohm = 200.0;
    cfg.impedance_max_ohm = 2000.0;
    cfg.phys_min = 0.0;
    cfg.phys_max = 10.0;
    TrustInputs in;
    in.impedance_ohm = 800.0;
    in.biomarker = 5.0;
    EXPECT_TRUE(evaluate_trust(in, cfg).pass());
    in.impedance_ohm = 2500.0;
    in.biomarker = std::nan("");
    EXPECT_EQ(evaluate_trust(in, cfg).failed.str(), "ImpedanceInRange|BiomarkerInPhysRange");
}

TEST(Supervisor, DwellExamples) {
    const SupervisorConfig cfg{FixedSafe{base}, 3, 5};
    const DeviceSignals dev{3.7, 3.0, false};
    SupervisorState st;
    Mode m = Mode::Automated;
    for (int i = 0; i < 3; ++i) {
        st = apply_verdict(st, false);
        auto r = supervisor_step(st, fail_v(), false, dev, false, cfg, i);
        st = r.state;
        m = r.mode;
        EXPECT_EQ(m, i < 2 ? Mode::Automated : Mode::Fallback);
    }
    for (int i = 0; i < 5; ++i) {
        st = apply_verdict(st, true);
        auto r = supervisor_step(st, pass_v(), false, dev, false, cfg, 3 + i);
        st = r.state;
        m = r.mode;
        EXPECT_EQ(m, i < 4 ? Mode::Fallback : Mode::Automated);
    }
    EXPECT_EQ(fallback_dose(cfg.fallback, st, base), base);
}

TEST(Supervisor, MagnetSuspendsAndResumes) {
    const SupervisorConfig cfg{FallbackOff{}, 3, 3};
    const DeviceSignals dev{3.7, 3.0, false};
    SupervisorState st;
    st.fail_streak = 2;
    std::int64_t t = 0;
    for (; t < 100; ++t) {
        auto r = supervisor_step(st, pass_v(), true, dev, false, cfg, t);
        st = r.state;
        EXPECT_EQ(r.mode, Mode::SuspendedMagnet);
        EXPECT_TRUE(delivers_nothing(r.mode));
        EXPECT_EQ(r.events.size(), t == 0 ? 1u : 0u);
    }
    EXPECT_EQ(st.fail_streak, 2);
    auto r = supervisor_step(st, pass_v(), false, dev, false, cfg, t);
    EXPECT_EQ(r.mode, Mode::Automated);
    EXPECT_EQ(r.state.fail_streak, 2);

    // Magnet during Fallback resumes Fallback.
    SupervisorState fb;
    fb.mode = Mode::Fallback;
    fb = supervisor_step(fb, pass_v(), true, dev, false, cfg, 0).state;
    EXPECT_EQ(supervisor_step(fb, pass_v(), false, dev, false, cfg, 1).mode, Mode::Fallback);
}

TEST(Supervisor, ResetsAbsorbUntilClinicianReset) {
    const SupervisorConfig cfg{FallbackOff{}, 1, 1};
    SupervisorState st;
    auto r = supervisor_step(st, pass_v(), false, {3.7, 3.0, true}, false, cfg, 0);
    EXPECT_EQ(r.mode, Mode::DcLeakReset);
    st = r.state;
    // Leak clears, magnet comes and goes, battery drops: still absorbed.
    for (std::int64_t t = 1; t < 50; ++t) {
        const bool magnet = t > 10 && t < 20;
        const double batt = t > 30 ? 2.0 : 3.7;
        r = supervisor_step(st, t % 2 ? pass_v() : fail_v(), magnet, {batt, 3.0, false}, false, cfg, t);
        st = r.state;
        ASSERT_EQ(r.mode, Mode::DcLeakReset);
        for (const auto& e : r.events) EXPECT_EQ(e.severity, Severity::Info);
    }
    // Clinician reset with a low battery goes straight to EosReset.
    r = supervisor_step(st, pass_v(), false, {2.0, 3.0, false}, true, cfg, 50);
    EXPECT_EQ(r.mode, Mode::EosReset);
    r = supervisor_step(r.state, pass_v(), false, {3.7, 3.0, false}, true, cfg, 51);
    EXPECT_EQ(r.mode, Mode::Automated);
}

// Every verdict string up to length 16 and K_exit, K_enter in {1,2,3},
// checked against the dwell rules restated from first principles.
TEST(Supervisor, ModelCheckVerdictStrings) {
    const DeviceSignals dev{3.7, 3.0, false};
    for (int ke = 1; ke <= 3; ++ke) {
        for (int kn = 1; kn <= 3; ++kn) {
            const SupervisorConfig cfg{FixedSafe{base}, ke, kn};
            for (int n = 0; n <= 16; ++n) {
                for (std::uint32_t m = 0; m < (1u << n); ++m) {
                    SupervisorState st;
                    Mode prev = Mode::Automated;
                    int fails = 0;
                    int passes = 0;
                    for (int t = 0; t < n; ++t) {
                        const bool pass = (m >> t) & 1u;
                        fails = pass ? 0 : fails + 1;
                        passes = pass ? passes + 1 : 0;
                        st = apply_verdict(st, pass);
                        auto r = supervisor_step(st, pass ? pass_v() : fail_v(), false, dev, false, cfg, t);
                        const Mode want = prev == Mode::Automated ? (fails >= ke ? Mode::Fallback : Mode::Automated)
                                                                  : (passes >= kn ? Mode::Automated : Mode::Fallback);
                        ASSERT_EQ(r.mode, want) << "ke=" << ke << " kn=" << kn << " m=" << m << " t=" << t;
                        std::size_t transitions = 0;
                        for (const auto& e : r.events) {
                            if (mode_for_event(e.code)) ++transitions;
                        }
                        ASSERT_EQ(transitions, r.mode != prev ? 1u : 0u);
                        if (fails >= ke) {
                            ASSERT_NE(r.mode, Mode::Automated);
                        }
                        prev = r.mode;
                        st = r.state;
                    }
                }
            }
        }
    }
}

// Same strings with a magnet window placed at every position: zero-delivery
// modes during the window, and afterwards exactly the trajectory the rules
// predict when the window is treated as a pause that keeps its streaks moving.
TEST(Supervisor, ModelCheckWithMagnetWindows) {
    const DeviceSignals dev{3.7, 3.0, false};
    for (int ke = 1; ke <= 3; ++ke) {
        for (int kn = 1; kn <= 3; ++kn) {
            const SupervisorConfig cfg{LastKnownGood{}, ke, kn};
            const int n = 10;
            for (std::uint32_t m = 0; m < (1u << n); ++m) {
                for (int a = 0; a < n; ++a) {
                    for (int b = a + 1; b <= n; ++b) {
                        SupervisorState st;
                        Mode logical = Mode::Automated;
                        int fails = 0;
                        int passes = 0;
                        for (int t = 0; t < n; ++t) {
                            const bool pass = (m >> t) & 1u;
                            const bool magnet = t >= a && t < b;
                            fails = pass ? 0 : fails + 1;
                            passes = pass ? passes + 1 : 0;
                            st = apply_verdict(st, pass);
                            auto r = supervisor_step(st, pass ? pass_v() : fail_v(), magnet, dev, false, cfg, t);
                            st = r.state;
                            if (magnet) {
                                ASSERT_EQ(r.mode, Mode::SuspendedMagnet);
                                continue;
                            }
                            logical = logical == Mode::Automated ? (fails >= ke ? Mode::Fallback : Mode::Automated)
                                                                 : (passes >= kn ? Mode::Automated : Mode::Fallback);
                            ASSERT_EQ(r.mode, logical);
                        }
                    }
                }
            }
        }
    }
}

TEST(Supervisor, EventLogReplayReconstructsModes) {
    std::mt19937_64 gen(7);
    std::bernoulli_distribution coin(0.6);
    const SupervisorConfig cfg{FallbackOff{}, 2, 3};
    SupervisorState st;
    EventLog log;
    std::vector<Mode> modes;
    for (std::int64_t t = 0; t < 5000; ++t) {
        const bool pass = coin(gen);
        const bool magnet = (t / 300) % 5 == 4;
        st = apply_verdict(st, pass);
        auto r = supervisor_step(st, pass ? pass_v() : fail_v(), magnet, {3.7, 3.0, false}, false, cfg, t);
        st = r.state;
        for (auto& e : r.events) log.append(e);
        modes.push_back(r.mode);
    }
    Mode m = Mode::Automated;
    std::size_t i = 0;
    for (std::int64_t t = 0; t < 5000; ++t) {
        while (i < log.size() && log.records()[i].tick == t) {
            const auto& e = log.records()[i++];
            if (const auto to = mode_for_event(e.code); to && e.severity != Severity::Info) m = *to;
        }
        ASSERT_EQ(m, modes[static_cast<std::size_t>(t)]) << t;
    }
}

TEST(Supervisor, LastKnownGoodCapturedFromPassingDelivery) {
    const SupervisorConfig cfg{LastKnownGood{}, 1, 1};
    SupervisorState st;
    st = record_delivery(st, base.with_amplitude(4.2), pass_v());
    st = record_delivery(st, base.with_amplitude(9.9), fail_v());
    st = apply_verdict(st, false);
    auto r = supervisor_step(st, fail_v(), false, {3.7, 3.0, false}, false, cfg, 0);
    EXPECT_EQ(r.mode, Mode::Fallback);
    EXPECT_DOUBLE_EQ(fallback_dose(cfg.fallback, r.state, base).amplitude_mA, 4.2);
}

TEST(Budgets, FivePerEvent) {
    auto b = make_budgets(5, 100, 1000);
    for (int t = 0; t < 6; ++t) {
        auto r = therapy_and_episode_budget_step(b, true, true, t);
        EXPECT_EQ(r.allow, t < 5);
        b = r.budgets;
    }
    b = therapy_and_episode_budget_step(b, false, false, 6).budgets;
    EXPECT_TRUE(therapy_and_episode_budget_step(b, true, true, 7).allow);
}

TEST(Budgets, DailyEpisodesAndRollover) {
    auto b = make_budgets(5, 2, 100);
    auto run_event = [&](std::int64_t t0) {
        auto r = therapy_and_episode_budget_step(b, true, true, t0);
        b = therapy_and_episode_budget_step(r.budgets, false, false, t0 + 1).budgets;
        return r;
    };
    EXPECT_TRUE(run_event(10).allow);
    EXPECT_TRUE(run_event(20).allow);
    auto third = therapy_and_episode_budget_step(b, true, true, 30);
    EXPECT_FALSE(third.allow);
    b = third.budgets;
    EXPECT_FALSE(therapy_and_episode_budget_step(b, true, true, 31).allow);
    b = therapy_and_episode_budget_step(b, false, false, 32).budgets;
    EXPECT_EQ(b.episodes_today, 2);

    auto next_day = therapy_and_episode_budget_step(b, false, false, 100);
    EXPECT_TRUE(next_day.rolled_over);
    EXPECT_EQ(next_day.budgets.episodes_today, 0);
    b = next_day.budgets;
    EXPECT_TRUE(run_event(110).allow);
}
