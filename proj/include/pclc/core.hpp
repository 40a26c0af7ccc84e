#pragma once

// Shared vocabulary for the closed-loop simulator: tick time base, the
// stimulation dose triad, biomarker samples, fixed-capacity windows and
// event records.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pclc {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidTimebase : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

/// Inconsistent or unknown configuration discovered while running.
class ConfigError : public Error {
public:
    using Error::Error;
};

class InvalidPlant : public Error {
public:
    using Error::Error;
};

/// A run-time invariant did not hold. The engine converts this into a Fault
/// event and aborts the run.
class InvariantBreach : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Time base
// ---------------------------------------------------------------------------

struct TimeBase {
    double dt_s = 0.001;
    std::int64_t n_ticks = 0;

    [[nodiscard]] double duration_s() const { return dt_s * static_cast<double>(n_ticks); }
    [[nodiscard]] double time_of(std::int64_t tick) const { return dt_s * static_cast<double>(tick); }
    /// Number of whole ticks covering `seconds` (rounded to nearest).
    [[nodiscard]] std::int64_t ticks_for(double seconds) const {
        return static_cast<std::int64_t>(std::llround(seconds / dt_s));
    }
};

inline TimeBase make_timebase(double dt_s, double duration_s) {
    if (!(dt_s > 0.0) || !std::isfinite(dt_s)) {
        throw InvalidTimebase("dt_s must be positive and finite");
    }
    if (!(duration_s >= dt_s) || !std::isfinite(duration_s)) {
        throw InvalidTimebase("duration_s must be at least one tick");
    }
    // Guard against 10.0 / 0.001 = 9999.999... style truncation.
    const double ratio = duration_s / dt_s;
    auto n = static_cast<std::int64_t>(std::floor(ratio));
    if (std::fabs(ratio - std::round(ratio)) < 1e-9 * std::max(1.0, ratio)) {
        n = static_cast<std::int64_t>(std::llround(ratio));
    }
    return TimeBase{dt_s, n};
}

// ---------------------------------------------------------------------------
// Dose
// ---------------------------------------------------------------------------

/// Stimulation command: amplitude, waveform timing and electrode location.
/// An amplitude of zero means stimulation is off whatever the other fields say.
struct Dose {
    double amplitude_mA = 0.0;
    double pulse_width_us = 0.0;
    double frequency_hz = 0.0;
    std::string contact_set;

    [[nodiscard]] bool is_off() const { return amplitude_mA <= 0.0; }
    [[nodiscard]] Dose with_amplitude(double a) const {
        Dose d = *this;
        d.amplitude_mA = a;
        return d;
    }
    [[nodiscard]] bool valid() const {
        return amplitude_mA >= 0.0 && pulse_width_us >= 0.0 && frequency_hz >= 0.0 &&
               std::isfinite(amplitude_mA) && std::isfinite(pulse_width_us) &&
               std::isfinite(frequency_hz);
    }

    friend bool operator==(const Dose&, const Dose&) = default;
};

struct DoseLimits {
    double amp_min_mA = 0.0;
    double amp_max_mA = 0.0;
    double max_slew_mA_per_tick = 0.0;
    double max_charge_per_pulse_uC = 0.0;

    [[nodiscard]] bool ordered() const { return 0.0 <= amp_min_mA && amp_min_mA <= amp_max_mA; }
};

/// Charge of one rectangular pulse in microcoulombs.
inline double charge_per_pulse(const Dose& d) {
    return d.amplitude_mA * d.pulse_width_us * 1e-3;
}

/// Energy proxy per second: amplitude^2 * pulse width * frequency. Impedance is
/// deliberately left out; the actuator models it separately.
inline double teed_rate(const Dose& d) {
    return d.amplitude_mA * d.amplitude_mA * d.pulse_width_us * d.frequency_hz;
}

// ---------------------------------------------------------------------------
// Biomarkers
// ---------------------------------------------------------------------------

enum class BiomarkerKind : std::uint8_t { Reactive1, Reactive2, Reactive3, Predictive };

inline std::string_view to_string(BiomarkerKind k) {
    switch (k) {
    case BiomarkerKind::Reactive1: return "Reactive1";
    case BiomarkerKind::Reactive2: return "Reactive2";
    case BiomarkerKind::Reactive3: return "Reactive3";
    case BiomarkerKind::Predictive: return "Predictive";
    }
    return "?";
}

inline std::optional<BiomarkerKind> biomarker_kind_from_string(std::string_view s) {
    if (s == "Reactive1") return BiomarkerKind::Reactive1;
    if (s == "Reactive2") return BiomarkerKind::Reactive2;
    if (s == "Reactive3") return BiomarkerKind::Reactive3;
    if (s == "Predictive") return BiomarkerKind::Predictive;
    return std::nullopt;
}

enum class Quality : std::uint8_t {
    Saturated = 1u << 0,
    Flatline = 1u << 1,
    Impossible = 1u << 2,
    ExternalNoise = 1u << 3,
};

/// Set of signal-quality flags. The empty set reads as OK.
class QualityFlags {
public:
    constexpr QualityFlags() = default;
    constexpr QualityFlags(Quality q) : bits_(static_cast<std::uint8_t>(q)) {}

    [[nodiscard]] constexpr bool ok() const { return bits_ == 0; }
    [[nodiscard]] constexpr bool has(Quality q) const {
        return (bits_ & static_cast<std::uint8_t>(q)) != 0;
    }
    constexpr QualityFlags& set(Quality q) {
        bits_ |= static_cast<std::uint8_t>(q);
        return *this;
    }
    constexpr QualityFlags& operator|=(QualityFlags o) {
        bits_ |= o.bits_;
        return *this;
    }
    [[nodiscard]] constexpr std::uint8_t bits() const { return bits_; }

    friend constexpr bool operator==(QualityFlags, QualityFlags) = default;

    /// "OK" or a '|'-joined list in declaration order, e.g. "Saturated|Flatline".
    [[nodiscard]] std::string str() const {
        if (ok()) return "OK";
        std::string out;
        auto add = [&](Quality q, const char* name) {
            if (has(q)) {
                if (!out.empty()) out += '|';
                out += name;
            }
        };
        add(Quality::Saturated, "Saturated");
        add(Quality::Flatline, "Flatline");
        add(Quality::Impossible, "Impossible");
        add(Quality::ExternalNoise, "ExternalNoise");
        return out;
    }

private:
    std::uint8_t bits_ = 0;
};

struct BiomarkerSample {
    std::int64_t tick = 0;
    double value = 0.0;
    BiomarkerKind kind = BiomarkerKind::Reactive1;
    QualityFlags quality;
};

// ---------------------------------------------------------------------------
// Window
// ---------------------------------------------------------------------------

/// Fixed-capacity FIFO; index 0 is the oldest retained sample.
template <typename T>
class BasicWindow {
public:
    BasicWindow() = default;
    explicit BasicWindow(std::size_t capacity) : buf_(capacity) {
        if (capacity == 0) throw DomainError("window capacity must be positive");
    }

    void push(T x) {
        if (buf_.empty()) throw DomainError("window has no capacity");
        buf_[(head_ + size_) % buf_.size()] = std::move(x);
        if (size_ < buf_.size()) {
            ++size_;
        } else {
            head_ = (head_ + 1) % buf_.size();
        }
    }

    [[nodiscard]] std::size_t capacity() const { return buf_.size(); }
    [[nodiscard]] std::size_t size() const { return size_; }
    [[nodiscard]] bool empty() const { return size_ == 0; }
    [[nodiscard]] bool full() const { return size_ == buf_.size() && size_ > 0; }

    [[nodiscard]] const T& operator[](std::size_t i) const { return buf_[(head_ + i) % buf_.size()]; }
    [[nodiscard]] const T& newest() const { return (*this)[size_ - 1]; }

    /// Contiguous copy, oldest first.
    [[nodiscard]] std::vector<T> values() const {
        std::vector<T> out;
        out.reserve(size_);
        for (std::size_t i = 0; i < size_; ++i) out.push_back((*this)[i]);
        return out;
    }

private:
    std::vector<T> buf_;
    std::size_t head_ = 0;
    std::size_t size_ = 0;
};

using Window = BasicWindow<double>;

inline Window push_window(Window w, double x) {
    w.push(x);
    return w;
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

enum class Severity : std::uint8_t { Info, Alert, Fault };

inline std::string_view to_string(Severity s) {
    switch (s) {
    case Severity::Info: return "Info";
    case Severity::Alert: return "Alert";
    case Severity::Fault: return "Fault";
    }
    return "?";
}

enum class EventCode : std::uint8_t {
    ModeAutomated,
    ModeFallback,
    ModeSuspendMagnet,
    ModeEosReset,
    ModeDcLeakReset,
    LimitClamp,
    SlewClamp,
    ChargeClamp,
    TrustFail,
    TrustReenter,
    BudgetDeny,
    DayRollover,
    RunFault,
};

inline std::string_view to_string(EventCode c) {
    switch (c) {
    case EventCode::ModeAutomated: return "MODE_AUTOMATED";
    case EventCode::ModeFallback: return "MODE_FALLBACK";
    case EventCode::ModeSuspendMagnet: return "MODE_SUSPEND_MAGNET";
    case EventCode::ModeEosReset: return "MODE_EOS_RESET";
    case EventCode::ModeDcLeakReset: return "MODE_DC_LEAK_RESET";
    case EventCode::LimitClamp: return "LIMIT_CLAMP";
    case EventCode::SlewClamp: return "SLEW_CLAMP";
    case EventCode::ChargeClamp: return "CHARGE_CLAMP";
    case EventCode::TrustFail: return "TRUST_FAIL";
    case EventCode::TrustReenter: return "TRUST_REENTER";
    case EventCode::BudgetDeny: return "BUDGET_DENY";
    case EventCode::DayRollover: return "DAY_ROLLOVER";
    case EventCode::RunFault: return "RUN_FAULT";
    }
    return "?";
}

inline std::optional<EventCode> event_code_from_string(std::string_view s) {
    for (int i = 0; i <= static_cast<int>(EventCode::RunFault); ++i) {
        const auto c = static_cast<EventCode>(i);
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

using PayloadValue = std::variant<double, std::string>;
using Payload = std::map<std::string, PayloadValue>;

struct EventRecord {
    std::int64_t tick = 0;
    Severity severity = Severity::Info;
    EventCode code = EventCode::DayRollover;
    Payload payload;
};

} // namespace pclc
