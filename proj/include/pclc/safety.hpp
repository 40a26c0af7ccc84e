#pragma once

// Risk-mitigation layer: dose clamping and slew limiting, trust checks with
// dwell-based exit/entrance criteria, the supervisor state machine, therapy
// and episode budgets, and the append-only event log.

#include "pclc/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pclc {

// ---------------------------------------------------------------------------
// Event log
// ---------------------------------------------------------------------------

/// Append-only log. With a nonzero capacity the oldest Info/Alert records are
/// evicted once the retained non-Fault count exceeds it; Fault records are
/// always retained. `appended()` counts every record ever written.
class EventLog {
public:
    EventLog() = default;
    explicit EventLog(std::size_t capacity) : capacity_(capacity) {}

    void append(EventRecord rec) {
        if (!records_.empty() && rec.tick < last_tick_) {
            throw InvariantBreach("event log ticks must be nondecreasing");
        }
        last_tick_ = rec.tick;
        if (rec.severity != Severity::Fault) ++non_fault_;
        records_.push_back(std::move(rec));
        ++appended_;
        if (capacity_ > 0 && non_fault_ > capacity_) {
            const auto it = std::find_if(records_.begin(), records_.end(),
                                         [](const EventRecord& r) { return r.severity != Severity::Fault; });
            records_.erase(it);
            --non_fault_;
        }
    }

    [[nodiscard]] const std::vector<EventRecord>& records() const { return records_; }
    [[nodiscard]] std::size_t appended() const { return appended_; }
    [[nodiscard]] std::size_t size() const { return records_.size(); }
    [[nodiscard]] std::size_t capacity() const { return capacity_; }

    [[nodiscard]] std::size_t count(EventCode code) const {
        return static_cast<std::size_t>(
            std::count_if(records_.begin(), records_.end(), [code](const EventRecord& r) { return r.code == code; }));
    }
    [[nodiscard]] bool has_fault() const {
        return std::any_of(records_.begin(), records_.end(),
                           [](const EventRecord& r) { return r.severity == Severity::Fault; });
    }

private:
    std::vector<EventRecord> records_;
    std::size_t capacity_ = 0;
    std::size_t appended_ = 0;
    std::size_t non_fault_ = 0;
    std::int64_t last_tick_ = 0;
};

inline EventLog log_event(EventLog log, EventRecord rec) {
    log.append(std::move(rec));
    return log;
}

// ---------------------------------------------------------------------------
// Dose limits
// ---------------------------------------------------------------------------

struct ClampResult {
    Dose dose;
    bool slew_bound = false;
    bool limit_bound = false;
    bool charge_bound = false;
};

/// Slew-limit against the previously delivered amplitude, then clamp to the
/// amplitude window, then cut amplitude until the pulse charge complies.
inline ClampResult clamp_and_slew(const Dose& command, const DoseLimits& limits, const Dose& prev_delivered) {
    ClampResult r;
    r.dose = command;
    double a = command.amplitude_mA;
    const double prev = prev_delivered.amplitude_mA;
    if (a > prev + limits.max_slew_mA_per_tick) {
        a = prev + limits.max_slew_mA_per_tick;
        r.slew_bound = true;
    } else if (a < prev - limits.max_slew_mA_per_tick) {
        a = prev - limits.max_slew_mA_per_tick;
        r.slew_bound = true;
    }
    if (a > limits.amp_max_mA) {
        a = limits.amp_max_mA;
        r.limit_bound = true;
    } else if (a < limits.amp_min_mA) {
        a = limits.amp_min_mA;
        r.limit_bound = true;
    }
    if (command.pulse_width_us > 0.0 && a * command.pulse_width_us * 1e-3 > limits.max_charge_per_pulse_uC) {
        a = limits.max_charge_per_pulse_uC * 1e3 / command.pulse_width_us;
        r.charge_bound = true;
    }
    r.dose.amplitude_mA = a;
    return r;
}

inline std::vector<EventRecord> clamp_events(const ClampResult& r, const Dose& command, std::int64_t tick) {
    std::vector<EventRecord> out;
    const Payload p{{"requested_mA", command.amplitude_mA}, {"result_mA", r.dose.amplitude_mA}};
    if (r.slew_bound) out.push_back({tick, Severity::Info, EventCode::SlewClamp, p});
    if (r.limit_bound) out.push_back({tick, Severity::Alert, EventCode::LimitClamp, p});
    if (r.charge_bound) out.push_back({tick, Severity::Alert, EventCode::ChargeClamp, p});
    return out;
}

// ---------------------------------------------------------------------------
// Supervisor types
// ---------------------------------------------------------------------------

enum class Mode : std::uint8_t { Automated, Fallback, SuspendedMagnet, EosReset, DcLeakReset };

inline std::string_view to_string(Mode m) {
    switch (m) {
    case Mode::Automated: return "Automated";
    case Mode::Fallback: return "Fallback";
    case Mode::SuspendedMagnet: return "SuspendedMagnet";
    case Mode::EosReset: return "EosReset";
    case Mode::DcLeakReset: return "DcLeakReset";
    }
    return "?";
}

inline std::optional<Mode> mode_from_string(std::string_view s) {
    for (auto m : {Mode::Automated, Mode::Fallback, Mode::SuspendedMagnet, Mode::EosReset, Mode::DcLeakReset}) {
        if (to_string(m) == s) return m;
    }
    return std::nullopt;
}

inline bool is_reset(Mode m) { return m == Mode::EosReset || m == Mode::DcLeakReset; }

/// Modes in which nothing may be delivered.
inline bool delivers_nothing(Mode m) { return m == Mode::SuspendedMagnet || is_reset(m); }

inline EventCode mode_event_code(Mode m) {
    switch (m) {
    case Mode::Automated: return EventCode::ModeAutomated;
    case Mode::Fallback: return EventCode::ModeFallback;
    case Mode::SuspendedMagnet: return EventCode::ModeSuspendMagnet;
    case Mode::EosReset: return EventCode::ModeEosReset;
    case Mode::DcLeakReset: return EventCode::ModeDcLeakReset;
    }
    return EventCode::ModeAutomated;
}

inline std::optional<Mode> mode_for_event(EventCode c) {
    switch (c) {
    case EventCode::ModeAutomated: return Mode::Automated;
    case EventCode::ModeFallback: return Mode::Fallback;
    case EventCode::ModeSuspendMagnet: return Mode::SuspendedMagnet;
    case EventCode::ModeEosReset: return Mode::EosReset;
    case EventCode::ModeDcLeakReset: return Mode::DcLeakReset;
    default: return std::nullopt;
    }
}

struct FallbackOff {};
struct FixedSafe {
    Dose dose;
};
struct LastKnownGood {};
struct ManualLoop {
    Dose dose;
};

using FallbackKind = std::variant<FallbackOff, FixedSafe, LastKnownGood, ManualLoop>;

inline std::string_view fallback_name(const FallbackKind& k) {
    constexpr std::string_view names[] = {"off", "fixed_safe", "last_known_good", "manual_loop"};
    return names[k.index()];
}

struct SupervisorState {
    Mode mode = Mode::Automated;
    /// Mode to restore when the magnet is removed.
    Mode resume_mode = Mode::Automated;
    int fail_streak = 0;
    int pass_streak = 0;
    Dose last_known_good;
    /// Most recent delivered dose on a tick whose verdict passed.
    std::optional<Dose> last_pass_delivered;
    bool magnet_applied = false;
    bool dc_leak_seen = false;
    bool eos_seen = false;
};

// ---------------------------------------------------------------------------
// Trust checks
// ---------------------------------------------------------------------------

enum class TrustCheck : std::uint8_t {
    QualityOK = 1u << 0,
    EcapNonNegative = 1u << 1,
    BatteryAboveEos = 1u << 2,
    ImpedanceInRange = 1u << 3,
    NoDcLeak = 1u << 4,
    BiomarkerInPhysRange = 1u << 5,
};

inline constexpr TrustCheck all_trust_checks[] = {TrustCheck::QualityOK,        TrustCheck::EcapNonNegative,
                                                  TrustCheck::BatteryAboveEos,  TrustCheck::ImpedanceInRange,
                                                  TrustCheck::NoDcLeak,         TrustCheck::BiomarkerInPhysRange};

inline std::string_view to_string(TrustCheck c) {
    switch (c) {
    case TrustCheck::QualityOK: return "QualityOK";
    case TrustCheck::EcapNonNegative: return "EcapNonNegative";
    case TrustCheck::BatteryAboveEos: return "BatteryAboveEos";
    case TrustCheck::ImpedanceInRange: return "ImpedanceInRange";
    case TrustCheck::NoDcLeak: return "NoDcLeak";
    case TrustCheck::BiomarkerInPhysRange: return "BiomarkerInPhysRange";
    }
    return "?";
}

inline std::optional<TrustCheck> trust_check_from_string(std::string_view s) {
    for (auto c : all_trust_checks) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

/// Bit set of TrustCheck values.
class TrustCheckSet {
public:
    constexpr TrustCheckSet() = default;
    constexpr TrustCheckSet(std::initializer_list<TrustCheck> cs) {
        for (auto c : cs) add(c);
    }
    constexpr TrustCheckSet& add(TrustCheck c) {
        bits_ |= static_cast<std::uint8_t>(c);
        return *this;
    }
    [[nodiscard]] constexpr bool has(TrustCheck c) const { return (bits_ & static_cast<std::uint8_t>(c)) != 0; }
    [[nodiscard]] constexpr bool empty() const { return bits_ == 0; }
    friend constexpr bool operator==(TrustCheckSet, TrustCheckSet) = default;

    [[nodiscard]] std::string str() const {
        std::string out;
        for (auto c : all_trust_checks) {
            if (!has(c)) continue;
            if (!out.empty()) out += '|';
            out += to_string(c);
        }
        return out;
    }

private:
    std::uint8_t bits_ = 0;
};

struct TrustConfig {
    TrustCheckSet checks;
    int exit_after_consecutive_fails = 1;
    int reenter_after_consecutive_passes = 1;
    double impedance_min_ohm = 0.0;
    double impedance_max_ohm = 1e12;
    double phys_min = -1e300;
    double phys_max = 1e300;
};

struct TrustInputs {
    QualityFlags quality;
    std::optional<double> ecap_est_uV;
    double battery_v = 0.0;
    double eos_threshold_v = 0.0;
    double impedance_ohm = 0.0;
    bool dc_leak = false;
    double biomarker = 0.0;
};

struct Verdict {
    TrustCheckSet failed;
    [[nodiscard]] bool pass() const { return failed.empty(); }
};

struct TrustStep {
    SupervisorState state;
    Verdict verdict;
};

inline Verdict evaluate_trust(const TrustInputs& in, const TrustConfig& cfg) {
    Verdict v;
    const auto& c = cfg.checks;
    if (c.has(TrustCheck::QualityOK) && !in.quality.ok()) v.failed.add(TrustCheck::QualityOK);
    if (c.has(TrustCheck::EcapNonNegative) && in.ecap_est_uV && *in.ecap_est_uV < 0.0) {
        v.failed.add(TrustCheck::EcapNonNegative);
    }
    if (c.has(TrustCheck::BatteryAboveEos) && in.battery_v < in.eos_threshold_v) v.failed.add(TrustCheck::BatteryAboveEos);
    if (c.has(TrustCheck::ImpedanceInRange) &&
        (in.impedance_ohm < cfg.impedance_min_ohm || in.impedance_ohm > cfg.impedance_max_ohm)) {
        v.failed.add(TrustCheck::ImpedanceInRange);
    }
    if (c.has(TrustCheck::NoDcLeak) && in.dc_leak) v.failed.add(TrustCheck::NoDcLeak);
    if (c.has(TrustCheck::BiomarkerInPhysRange) &&
        (!std::isfinite(in.biomarker) || in.biomarker < cfg.phys_min || in.biomarker > cfg.phys_max)) {
        v.failed.add(TrustCheck::BiomarkerInPhysRange);
    }
    return v;
}

/// A pass resets the fail streak and vice versa.
inline TrustStep trust_check_step(const TrustInputs& in, const TrustConfig& cfg, SupervisorState st) {
    const Verdict v = evaluate_trust(in, cfg);
    if (v.pass()) {
        ++st.pass_streak;
        st.fail_streak = 0;
    } else {
        ++st.fail_streak;
        st.pass_streak = 0;
    }
    return {std::move(st), v};
}

// ---------------------------------------------------------------------------
// Supervisor
// ---------------------------------------------------------------------------

struct SupervisorConfig {
    FallbackKind fallback = FallbackOff{};
    int k_exit = 1;
    int k_enter = 1;
};

struct DeviceSignals {
    double battery_v = 0.0;
    double eos_threshold_v = 0.0;
    bool dc_leak = false;
};

struct SupervisorStep {
    SupervisorState state;
    Mode mode = Mode::Automated;
    std::vector<EventRecord> events;
};

/// One supervisor tick. Precedence: DC leak, end of service, magnet, then the
/// dwell rules. Reset states only leave through `clinician_reset`; any other
/// attempted transition out of them is logged as Info and ignored. Streak
/// counters are updated by trust_check_step and are never touched by a magnet.
inline SupervisorStep supervisor_step(SupervisorState st, const Verdict& verdict, bool magnet_applied,
                                      const DeviceSignals& dev, bool clinician_reset, const SupervisorConfig& cfg,
                                      std::int64_t tick) {
    SupervisorStep out;
    auto transition = [&](Mode to, std::string reason) {
        out.events.push_back({tick, Severity::Alert, mode_event_code(to),
                              Payload{{"from", std::string(to_string(st.mode))}, {"reason", std::move(reason)}}});
        st.mode = to;
    };
    auto ignored = [&](Mode attempted) {
        out.events.push_back({tick, Severity::Info, mode_event_code(attempted),
                              Payload{{"ignored", 1.0}, {"in", std::string(to_string(st.mode))}}});
    };

    const bool magnet_edge = magnet_applied && !st.magnet_applied;
    const bool dc_edge = dev.dc_leak && !st.dc_leak_seen;
    const bool below_eos = dev.battery_v < dev.eos_threshold_v;
    const bool eos_edge = below_eos && !st.eos_seen;
    st.magnet_applied = magnet_applied;
    st.dc_leak_seen = dev.dc_leak;
    st.eos_seen = below_eos;

    auto finish = [&]() {
        out.mode = st.mode;
        out.state = std::move(st);
        return std::move(out);
    };

    if (is_reset(st.mode)) {
        if (!clinician_reset) {
            if (magnet_edge) ignored(Mode::SuspendedMagnet);
            if (dc_edge && st.mode != Mode::DcLeakReset) ignored(Mode::DcLeakReset);
            if (eos_edge && st.mode != Mode::EosReset) ignored(Mode::EosReset);
            return finish();
        }
        transition(Mode::Automated, "clinician_reset");
        st.resume_mode = Mode::Automated;
        st.fail_streak = 0;
        st.pass_streak = 0;
    }

    if (dev.dc_leak) {
        transition(Mode::DcLeakReset, "dc_leak");
        return finish();
    }
    if (below_eos) {
        transition(Mode::EosReset, "battery_below_eos");
        return finish();
    }
    if (magnet_applied) {
        if (st.mode != Mode::SuspendedMagnet) {
            st.resume_mode = st.mode;
            transition(Mode::SuspendedMagnet, "magnet");
        }
        return finish();
    }
    if (st.mode == Mode::SuspendedMagnet) transition(st.resume_mode, "magnet_removed");

    if (!verdict.pass() && st.fail_streak == 1) {
        out.events.push_back({tick, Severity::Alert, EventCode::TrustFail, Payload{{"failed", verdict.failed.str()}}});
    }
    if (st.mode == Mode::Automated && st.fail_streak >= cfg.k_exit) {
        if (std::holds_alternative<LastKnownGood>(cfg.fallback)) {
            st.last_known_good = st.last_pass_delivered.value_or(st.last_known_good.with_amplitude(0.0));
        }
        transition(Mode::Fallback, std::string(fallback_name(cfg.fallback)));
    } else if (st.mode == Mode::Fallback && st.pass_streak >= cfg.k_enter) {
        out.events.push_back({tick, Severity::Info, EventCode::TrustReenter,
                              Payload{{"pass_streak", static_cast<double>(st.pass_streak)}}});
        transition(Mode::Automated, "entrance_criteria_met");
    }
    return finish();
}

/// Dose commanded while in Fallback. `off_template` supplies the waveform
/// fields for the Off case. Last-known-good with nothing captured yet (trust
/// failed before any passing delivery) degrades to Off.
inline Dose fallback_dose(const FallbackKind& kind, const SupervisorState& st, const Dose& off_template) {
    if (const auto* f = std::get_if<FixedSafe>(&kind)) return f->dose;
    if (const auto* m = std::get_if<ManualLoop>(&kind)) return m->dose;
    if (std::holds_alternative<LastKnownGood>(kind) && !st.last_known_good.contact_set.empty()) {
        return st.last_known_good;
    }
    return off_template.with_amplitude(0.0);
}

/// Tracks the last-known-good candidate after each delivery.
inline SupervisorState record_delivery(SupervisorState st, const Dose& delivered, const Verdict& verdict) {
    if (verdict.pass()) st.last_pass_delivered = delivered;
    return st;
}

// ---------------------------------------------------------------------------
// Therapy and episode budgets
// ---------------------------------------------------------------------------

struct Budgets {
    int max_therapies_per_event = 5;
    int max_episodes_per_day = 1000;
    std::int64_t day_length_ticks = 1;
    int episodes_today = 0;
    /// Tick at which the next day starts.
    std::int64_t day_boundary_tick = 1;
    int therapies_this_event = 0;
    bool event_active = false;
    bool event_denied = false;
};

inline Budgets make_budgets(int max_therapies_per_event, int max_episodes_per_day, std::int64_t day_length_ticks) {
    Budgets b;
    b.max_therapies_per_event = max_therapies_per_event;
    b.max_episodes_per_day = max_episodes_per_day;
    b.day_length_ticks = std::max<std::int64_t>(1, day_length_ticks);
    b.day_boundary_tick = b.day_length_ticks;
    return b;
}

struct BudgetStep {
    Budgets budgets;
    bool allow = true;
    bool rolled_over = false;
};

/// Episodes are counted on event onset. An onset that finds the daily budget
/// spent marks the whole event as denied.
inline BudgetStep therapy_and_episode_budget_step(Budgets b, bool event_active, bool therapy_requested,
                                                  std::int64_t tick) {
    BudgetStep out;
    while (tick >= b.day_boundary_tick) {
        b.episodes_today = 0;
        b.day_boundary_tick += b.day_length_ticks;
        out.rolled_over = true;
    }
    if (event_active && !b.event_active) {
        b.therapies_this_event = 0;
        if (b.episodes_today < b.max_episodes_per_day) {
            ++b.episodes_today;
            b.event_denied = false;
        } else {
            b.event_denied = true;
        }
    }
    if (!event_active) {
        b.therapies_this_event = 0;
        b.event_denied = false;
    }
    b.event_active = event_active;
    if (therapy_requested) {
        if (b.event_denied || b.therapies_this_event >= b.max_therapies_per_event) {
            out.allow = false;
        } else {
            ++b.therapies_this_event;
        }
    }
    out.budgets = b;
    return out;
}

} // namespace pclc
