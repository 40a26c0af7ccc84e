#pragma once

// Control policies. Each step is a pure function of (inputs, state, config)
// returning a raw dose command; limits are applied later by the safety layer.

#include "pclc/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>
#include <variant>

namespace pclc {

struct ManualFixed {
    Dose dose;
};

/// Responsive on/off stimulation. A therapy is `bursts_per_therapy` bursts
/// back to back, each an on-dose held for `burst_duration_ticks`.
struct BangBangResponsive {
    Dose burst_dose;
    int bursts_per_therapy = 1;
    std::int64_t burst_duration_ticks = 1;
    int max_therapies_per_event = 5;
};

struct SingleThreshold {
    double threshold = 0.0;
    double step_mA = 0.1;
    bool on_above = true;
};

struct DualThreshold {
    double lower = 0.0;
    double upper = 1.0;
    double step_up_mA = 0.1;
    double step_down_mA = 0.1;
};

struct Proportional {
    double reference = 0.0;
    double gain_mA_per_unit = 1.0;
    /// Supplies the non-amplitude dose fields.
    Dose base_dose;
};

struct EcapSetpoint {
    double target_uV = 1.0;
    double gain_mA_per_uV = 1.0;
    double deadband_uV = 0.0;
};

using PolicyConfig = std::variant<ManualFixed, BangBangResponsive, SingleThreshold, DualThreshold, Proportional, EcapSetpoint>;

inline std::string_view policy_name(const PolicyConfig& p) {
    constexpr std::string_view names[] = {"manual_fixed", "bang_bang_responsive", "single_threshold",
                                          "dual_threshold", "proportional", "ecap_setpoint"};
    return names[p.index()];
}

inline bool is_automated(const PolicyConfig& p) { return !std::holds_alternative<ManualFixed>(p); }

/// Config invariants; an empty string means valid.
inline std::string_view policy_config_problem(const PolicyConfig& p) {
    if (const auto* b = std::get_if<BangBangResponsive>(&p)) {
        if (b->bursts_per_therapy != 1 && b->bursts_per_therapy != 2) return "bursts_per_therapy must be 1 or 2";
        if (b->burst_duration_ticks < 1) return "burst_duration_ticks must be positive";
        if (b->max_therapies_per_event < 1) return "max_therapies_per_event must be positive";
    } else if (const auto* s = std::get_if<SingleThreshold>(&p)) {
        if (!(s->step_mA > 0.0)) return "step_mA must be positive";
    } else if (const auto* d = std::get_if<DualThreshold>(&p)) {
        if (!(d->lower < d->upper)) return "dual threshold needs lower < upper";
        if (!(d->step_up_mA > 0.0) || !(d->step_down_mA > 0.0)) return "dual threshold steps must be positive";
    } else if (const auto* pr = std::get_if<Proportional>(&p)) {
        if (!(pr->gain_mA_per_unit > 0.0)) return "proportional gain must be positive";
    } else if (const auto* e = std::get_if<EcapSetpoint>(&p)) {
        if (!(e->gain_mA_per_uV > 0.0)) return "ECAP gain must be positive";
        if (e->deadband_uV < 0.0) return "ECAP deadband must be nonnegative";
        if (!(e->target_uV > 0.0)) return "ECAP target must be positive";
    }
    return {};
}

struct PolicyState {
    Dose last_command;
    int therapies_delivered_this_event = 0;
    std::int64_t burst_ticks_remaining = 0;
};

namespace detail {
inline Dose nonneg(Dose d) {
    d.amplitude_mA = std::max(0.0, d.amplitude_mA);
    return d;
}
} // namespace detail

inline Dose manual_fixed_step(const ManualFixed& cfg) { return cfg.dose; }

struct ResponsiveStep {
    PolicyState state;
    Dose command;
    bool therapy_started = false;
};

/// A therapy that has started always runs to completion. The per-event counter
/// only resets on a tick where the detection flag is clear, so a flag that
/// stays up past the limit yields no further therapies.
inline ResponsiveStep bang_bang_responsive_step(bool detected, PolicyState st, const BangBangResponsive& cfg) {
    ResponsiveStep out;
    const Dose off = cfg.burst_dose.with_amplitude(0.0);
    if (st.burst_ticks_remaining > 0) {
        --st.burst_ticks_remaining;
        out.command = cfg.burst_dose;
    } else if (detected && st.therapies_delivered_this_event < cfg.max_therapies_per_event) {
        ++st.therapies_delivered_this_event;
        st.burst_ticks_remaining = cfg.bursts_per_therapy * cfg.burst_duration_ticks - 1;
        out.command = cfg.burst_dose;
        out.therapy_started = true;
    } else {
        out.command = off;
    }
    if (!detected) st.therapies_delivered_this_event = 0;
    st.last_command = out.command;
    out.state = st;
    return out;
}

/// Strictly beyond the threshold takes the "on" action; a tie decreases.
inline Dose single_threshold_step(double biomarker, const Dose& current, const SingleThreshold& cfg) {
    const bool increase = cfg.on_above ? (biomarker > cfg.threshold) : (biomarker < cfg.threshold);
    return detail::nonneg(current.with_amplitude(current.amplitude_mA + (increase ? cfg.step_mA : -cfg.step_mA)));
}

inline Dose dual_threshold_step(double biomarker, const Dose& current, const DualThreshold& cfg) {
    if (biomarker > cfg.upper) return current.with_amplitude(current.amplitude_mA + cfg.step_up_mA);
    if (biomarker < cfg.lower) return detail::nonneg(current.with_amplitude(current.amplitude_mA - cfg.step_down_mA));
    return current;
}

inline Dose proportional_step(double biomarker, const Proportional& cfg) {
    return cfg.base_dose.with_amplitude(cfg.gain_mA_per_unit * std::max(0.0, biomarker - cfg.reference));
}

/// Incremental update on the next pulse: a += gain * (target - estimate),
/// held when the error sits inside the deadband.
inline Dose ecap_setpoint_step(double ecap_est_uV, const Dose& current, const EcapSetpoint& cfg) {
    const double error = cfg.target_uV - ecap_est_uV;
    if (std::fabs(error) <= cfg.deadband_uV) return current;
    return detail::nonneg(current.with_amplitude(current.amplitude_mA + cfg.gain_mA_per_uV * error));
}

/// Setpoint-like reference a policy regulates toward, for reporting.
inline std::optional<double> policy_reference(const PolicyConfig& p) {
    if (const auto* s = std::get_if<SingleThreshold>(&p)) return s->threshold;
    if (const auto* d = std::get_if<DualThreshold>(&p)) return 0.5 * (d->lower + d->upper);
    if (const auto* pr = std::get_if<Proportional>(&p)) return pr->reference;
    if (const auto* e = std::get_if<EcapSetpoint>(&p)) return e->target_uV;
    return std::nullopt;
}

struct PolicyInput {
    double biomarker = 0.0;
    bool detected = false;
};

struct PolicyOutput {
    PolicyState state;
    Dose command;
    bool therapy_started = false;
};

/// Dispatch on the configured variant. Incremental policies build on
/// `st.last_command`, which the engine keeps equal to the last limited command.
inline PolicyOutput policy_step(const PolicyConfig& cfg, PolicyState st, const PolicyInput& in) {
    PolicyOutput out;
    if (const auto* b = std::get_if<BangBangResponsive>(&cfg)) {
        auto r = bang_bang_responsive_step(in.detected, std::move(st), *b);
        return {std::move(r.state), std::move(r.command), r.therapy_started};
    }
    if (const auto* m = std::get_if<ManualFixed>(&cfg)) {
        out.command = manual_fixed_step(*m);
    } else if (const auto* s = std::get_if<SingleThreshold>(&cfg)) {
        out.command = single_threshold_step(in.biomarker, st.last_command, *s);
    } else if (const auto* d = std::get_if<DualThreshold>(&cfg)) {
        out.command = dual_threshold_step(in.biomarker, st.last_command, *d);
    } else if (const auto* pr = std::get_if<Proportional>(&cfg)) {
        out.command = proportional_step(in.biomarker, *pr);
    } else if (const auto* e = std::get_if<EcapSetpoint>(&cfg)) {
        out.command = ecap_setpoint_step(in.biomarker, st.last_command, *e);
    }
    st.last_command = out.command;
    out.state = std::move(st);
    return out;
}

} // namespace pclc
