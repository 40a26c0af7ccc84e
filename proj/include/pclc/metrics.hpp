#pragma once

// Per-tick run records and the metrics computed from them: TEED, time in
// range, seizure statistics, fallback occupancy, clamp counts and the
// step-response characterization (response time, settling time, overshoot,
// steady-state deviation).

#include "pclc/core.hpp"
#include "pclc/safety.hpp"
#include "pclc/scenario.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace pclc {

/// One row of the timeseries output.
struct TickRow {
    std::int64_t tick = 0;
    double time_s = 0.0;
    std::optional<double> biomarker;
    QualityFlags quality;
    std::optional<double> setpoint;
    double commanded_mA = 0.0;
    double delivered_mA = 0.0;
    Mode mode = Mode::Automated;
    std::optional<double> distance_mm;
    std::optional<bool> seizing;
    double teed_cum = 0.0;
};

/// Plant-side counters that the timeseries cannot show.
struct PlantStats {
    std::int64_t seizure_events = 0;
    std::int64_t suppression_decisions = 0;
    std::int64_t early_terminations = 0;
};

struct StepResponse {
    std::optional<double> response_time_s;
    std::optional<double> settling_time_s;
    double overshoot_frac = 0.0;
    double steady_state_dev = 0.0;

    [[nodiscard]] bool attained() const { return response_time_s.has_value() && settling_time_s.has_value(); }
};

/// Characterize `series[step_index..]` against `setpoint`. Times are measured
/// from the step in seconds. Overshoot is the largest excursion past the
/// setpoint on the far side from where the series started, relative to
/// |setpoint|. NaN samples count as outside tolerance. A series that never
/// enters (or never stays in) tolerance leaves the corresponding time empty.
inline StepResponse step_response_metrics(std::span<const double> series, double setpoint, std::size_t step_index,
                                          double tol_frac, double dt_s) {
    if (setpoint == 0.0) throw DomainError("step_response_metrics: setpoint must be nonzero");
    if (step_index >= series.size()) throw InsufficientData("step_response_metrics: step outside series");
    const auto seg = series.subspan(step_index);
    const double tol = tol_frac * std::fabs(setpoint);
    auto inside = [&](double x) { return !std::isnan(x) && std::fabs(x - setpoint) <= tol; };

    StepResponse r;
    for (std::size_t i = 0; i < seg.size(); ++i) {
        if (inside(seg[i])) {
            r.response_time_s = static_cast<double>(i) * dt_s;
            break;
        }
    }
    if (inside(seg.back())) {
        std::size_t i = seg.size() - 1;
        while (i > 0 && inside(seg[i - 1])) --i;
        r.settling_time_s = static_cast<double>(i) * dt_s;
    }

    const double start = seg.front();
    const double side = std::isnan(start) || start <= setpoint ? 1.0 : -1.0;
    double worst = 0.0;
    for (double x : seg) {
        if (!std::isnan(x)) worst = std::max(worst, side * (x - setpoint));
    }
    r.overshoot_frac = worst / std::fabs(setpoint);

    const std::size_t tail = std::max<std::size_t>(1, (seg.size() + 9) / 10);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = seg.size() - tail; i < seg.size(); ++i) {
        if (std::isnan(seg[i])) continue;
        sum += std::fabs(seg[i] - setpoint);
        ++n;
    }
    r.steady_state_dev = n > 0 ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
    return r;
}

struct Metrics {
    std::int64_t n_ticks = 0;
    double teed_total = 0.0;
    std::optional<double> time_in_range_frac;
    std::int64_t seizure_count = 0;
    std::int64_t seizure_ticks_total = 0;
    std::int64_t early_termination_count = 0;
    std::int64_t suppression_decisions = 0;
    double fallback_frac = 0.0;
    std::int64_t limit_clamp_count = 0;
    std::optional<StepResponse> step_response;
    /// Mean squared deviation of the biomarker about the policy reference.
    std::optional<double> biomarker_msd;
    double mean_delivered_mA = 0.0;
    std::int64_t fault_count = 0;
};

/// The band used for time-in-range: explicit metrics.range, else the
/// dual-threshold band.
inline std::optional<std::pair<double, double>> range_band(const Scenario& s) {
    if (s.metrics.range) return s.metrics.range;
    if (const auto* d = std::get_if<DualThreshold>(&s.policy)) return std::make_pair(d->lower, d->upper);
    return std::nullopt;
}

/// `reference` overrides the policy's own setpoint (used when comparing an
/// open-loop arm against the closed-loop target).
inline Metrics summarize_metrics(const std::vector<TickRow>& rows, const EventLog& events, const Scenario& s,
                                 const PlantStats& plant, std::optional<double> reference = std::nullopt) {
    Metrics m;
    m.n_ticks = static_cast<std::int64_t>(rows.size());
    if (rows.empty()) return m;
    m.teed_total = rows.back().teed_cum;

    const auto band = range_band(s);
    std::int64_t in_range = 0;
    std::int64_t fallback = 0;
    double delivered_sum = 0.0;
    for (const auto& r : rows) {
        if (band && r.biomarker && *r.biomarker >= band->first && *r.biomarker <= band->second) ++in_range;
        if (r.mode == Mode::Fallback) ++fallback;
        delivered_sum += r.delivered_mA;
        if (r.seizing.value_or(false)) ++m.seizure_ticks_total;
    }
    const auto n = static_cast<double>(rows.size());
    if (band) m.time_in_range_frac = static_cast<double>(in_range) / n;
    m.fallback_frac = static_cast<double>(fallback) / n;
    m.mean_delivered_mA = delivered_sum / n;
    m.seizure_count = plant.seizure_events;
    m.early_termination_count = plant.early_terminations;
    m.suppression_decisions = plant.suppression_decisions;

    for (const auto& e : events.records()) {
        if (e.code == EventCode::LimitClamp || e.code == EventCode::SlewClamp || e.code == EventCode::ChargeClamp) {
            ++m.limit_clamp_count;
        }
        if (e.severity == Severity::Fault) ++m.fault_count;
    }

    const auto ref = reference ? reference : policy_reference(s.policy);
    if (ref) {
        double sq = 0.0;
        std::int64_t k = 0;
        for (const auto& r : rows) {
            if (!r.biomarker) continue;
            sq += (*r.biomarker - *ref) * (*r.biomarker - *ref);
            ++k;
        }
        if (k > 0) m.biomarker_msd = sq / static_cast<double>(k);
    }

    if (const auto& sr = s.metrics.step_response) {
        const double sp = sr->setpoint ? *sr->setpoint : ref.value_or(0.0);
        const auto end = static_cast<std::size_t>(std::min<std::int64_t>(sr->end_tick.value_or(m.n_ticks), m.n_ticks));
        const auto step = static_cast<std::size_t>(sr->step_tick);
        if (sp != 0.0 && step < end) {
            std::vector<double> series(end);
            for (std::size_t i = 0; i < end; ++i) {
                series[i] = rows[i].biomarker.value_or(std::numeric_limits<double>::quiet_NaN());
            }
            m.step_response = step_response_metrics(series, sp, step, sr->tol_frac, s.dt_s);
        }
    }
    return m;
}

} // namespace pclc
