#include "pclc/core.hpp"
#include "pclc/rng.hpp"

#include <gtest/gtest.h>

#include <deque>
#include <random>

using namespace pclc;

TEST(TimeBase, TickCountIsFlooredDuration) {
    EXPECT_EQ(make_timebase(0.001, 10.0).n_ticks, 10000);
    EXPECT_EQ(make_timebase(0.5, 0.5).n_ticks, 1);
    EXPECT_EQ(make_timebase(0.001, 86400.0).n_ticks, 86'400'000);
    EXPECT_EQ(make_timebase(0.3, 1.0).n_ticks, 3);
    EXPECT_EQ(make_timebase(0.1, 0.35).n_ticks, 3);
}

TEST(TimeBase, RejectsBadInputs) {
    EXPECT_THROW(make_timebase(0.0, 1.0), InvalidTimebase);
    EXPECT_THROW(make_timebase(-0.1, 1.0), InvalidTimebase);
    EXPECT_THROW(make_timebase(0.5, 0.4), InvalidTimebase);
    EXPECT_THROW(make_timebase(std::nan(""), 1.0), InvalidTimebase);
}

TEST(TimeBase, DurationAndTickConversions) {
    const auto tb = make_timebase(0.02, 60.0);
    EXPECT_EQ(tb.n_ticks, 3000);
    EXPECT_DOUBLE_EQ(tb.duration_s(), 60.0);
    EXPECT_DOUBLE_EQ(tb.time_of(50), 1.0);
    EXPECT_EQ(tb.ticks_for(20.0), 1000);
}

TEST(Dose, ChargePerPulse) {
    EXPECT_DOUBLE_EQ(charge_per_pulse({3.0, 100.0, 50.0, "a"}), 0.3);
    EXPECT_DOUBLE_EQ(charge_per_pulse({0.0, 200.0, 50.0, "a"}), 0.0);
    EXPECT_DOUBLE_EQ(charge_per_pulse({5.0, 500.0, 50.0, "a"}), 2.5);
}

TEST(Dose, TeedRate) {
    EXPECT_DOUBLE_EQ(teed_rate({2.0, 60.0, 130.0, "a"}), 31200.0);
    EXPECT_EQ(teed_rate({0.0, 60.0, 130.0, "a"}), 0.0);
    EXPECT_EQ(teed_rate({2.0, 0.0, 130.0, "a"}), 0.0);
    EXPECT_EQ(teed_rate({2.0, 60.0, 0.0, "a"}), 0.0);
}

TEST(Dose, TeedRateStrictlyIncreasingInAmplitude) {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> amp(1e-3, 20.0);
    std::uniform_real_distribution<double> pos(1.0, 500.0);
    for (int i = 0; i < 10000; ++i) {
        double a1 = amp(gen);
        double a2 = amp(gen);
        if (a1 == a2) continue;
        if (a1 > a2) std::swap(a1, a2);
        const Dose d{a1, pos(gen), pos(gen), "x"};
        EXPECT_GT(teed_rate(d.with_amplitude(a2)), teed_rate(d));
    }
}

TEST(Dose, OffAndValidity) {
    EXPECT_TRUE(Dose({0.0, 60.0, 130.0, "a"}).is_off());
    EXPECT_FALSE(Dose({0.1, 60.0, 130.0, "a"}).is_off());
    EXPECT_TRUE(Dose({1.0, 60.0, 130.0, "a"}).valid());
    EXPECT_FALSE(Dose({-1.0, 60.0, 130.0, "a"}).valid());
    EXPECT_FALSE(Dose({1.0, -60.0, 130.0, "a"}).valid());
    EXPECT_FALSE(Dose({1.0, 60.0, std::numeric_limits<double>::infinity(), "a"}).valid());
}

TEST(DoseLimits, Ordering) {
    EXPECT_TRUE((DoseLimits{0.0, 5.0, 0.1, 1.0}).ordered());
    EXPECT_TRUE((DoseLimits{2.0, 2.0, 0.1, 1.0}).ordered());
    EXPECT_FALSE((DoseLimits{3.0, 2.0, 0.1, 1.0}).ordered());
    EXPECT_FALSE((DoseLimits{-1.0, 2.0, 0.1, 1.0}).ordered());
}

TEST(Window, PushExamples) {
    Window w(3);
    for (double x : {1.0, 2.0, 3.0}) w.push(x);
    w = push_window(w, 4.0);
    EXPECT_EQ(w.values(), (std::vector<double>{2.0, 3.0, 4.0}));

    Window e(3);
    e = push_window(e, 7.0);
    EXPECT_EQ(e.values(), std::vector<double>{7.0});

    Window one(1);
    one.push(9.0);
    one = push_window(one, 0.0);
    EXPECT_EQ(one.values(), std::vector<double>{0.0});
    EXPECT_EQ(one.newest(), 0.0);
}

TEST(Window, MatchesDequeOracle) {
    std::mt19937_64 gen(17);
    std::uniform_int_distribution<std::size_t> cap(1, 40);
    std::normal_distribution<double> val;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t c = cap(gen);
        Window w(c);
        std::deque<double> oracle;
        for (int i = 0; i < 150; ++i) {
            const double x = val(gen);
            const std::size_t before = w.size();
            w.push(x);
            oracle.push_back(x);
            if (oracle.size() > c) oracle.pop_front();
            ASSERT_EQ(w.size(), before == c ? c : before + 1);
            ASSERT_EQ(w.values(), std::vector<double>(oracle.begin(), oracle.end()));
            ASSERT_EQ(w.full(), oracle.size() == c);
        }
    }
}

TEST(Window, ZeroCapacityRejected) { EXPECT_THROW(Window(0), DomainError); }

TEST(Quality, FlagStrings) {
    QualityFlags q;
    EXPECT_TRUE(q.ok());
    EXPECT_EQ(q.str(), "OK");
    q.set(Quality::Flatline).set(Quality::Saturated);
    EXPECT_FALSE(q.ok());
    EXPECT_EQ(q.str(), "Saturated|Flatline");
    EXPECT_TRUE(q.has(Quality::Flatline));
    EXPECT_FALSE(q.has(Quality::Impossible));
}

TEST(Events, CodeStringsAreStable) {
    const std::vector<std::string> expected{"MODE_AUTOMATED",  "MODE_FALLBACK",  "MODE_SUSPEND_MAGNET",
                                            "MODE_EOS_RESET",  "MODE_DC_LEAK_RESET", "LIMIT_CLAMP",
                                            "SLEW_CLAMP",      "CHARGE_CLAMP",   "TRUST_FAIL",
                                            "TRUST_REENTER",   "BUDGET_DENY",    "DAY_ROLLOVER",
                                            "RUN_FAULT"};
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto c = static_cast<EventCode>(i);
        EXPECT_EQ(to_string(c), expected[i]);
        EXPECT_EQ(event_code_from_string(expected[i]), c);
    }
    EXPECT_FALSE(event_code_from_string("NOPE").has_value());
}

TEST(Biomarker, KindRoundTrip) {
    for (auto k : {BiomarkerKind::Reactive1, BiomarkerKind::Reactive2, BiomarkerKind::Reactive3,
                   BiomarkerKind::Predictive}) {
        EXPECT_EQ(biomarker_kind_from_string(to_string(k)), k);
    }
}

TEST(Rng, StreamsAreReproducibleAndIndependent) {
    Rng a(42, 1);
    Rng b(42, 1);
    Rng c(42, 2);
    int same_c = 0;
    for (int i = 0; i < 100; ++i) {
        const double x = a.uniform();
        EXPECT_EQ(x, b.uniform());
        if (x == c.uniform()) ++same_c;
    }
    EXPECT_EQ(same_c, 0);
    Rng d(1, 0);
    EXPECT_EQ(d.normal(3.0, 0.0), 3.0);
}
