#pragma once

// The deterministic tick loop:
//   plant -> features -> trust -> supervisor -> policy -> clamp_and_slew
//   -> actuator -> device_step
// Everything is a function of (scenario, seed).

#include "pclc/control.hpp"
#include "pclc/core.hpp"
#include "pclc/features.hpp"
#include "pclc/metrics.hpp"
#include "pclc/plant.hpp"
#include "pclc/rng.hpp"
#include "pclc/safety.hpp"
#include "pclc/scenario.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pclc {

class ScenarioInvalid : public Error {
public:
    explicit ScenarioInvalid(ValidationReport rep)
        : Error("scenario failed validation (" + std::to_string(rep.findings.size()) + " findings)"),
          report_(std::move(rep)) {}
    [[nodiscard]] const ValidationReport& report() const { return report_; }

private:
    ValidationReport report_;
};

struct RunResult {
    std::vector<TickRow> rows;
    EventLog events;
    PlantStats plant;
    Metrics metrics;
    bool faulted = false;
    std::string fault_message;
};

namespace detail {

inline constexpr double limit_eps = 1e-9;

struct DetectorState {
    DetectorConfig cfg;
    AdaptiveThresholdState th;
};

inline double detector_feature(const DetectorConfig& d, std::span<const double> frame) {
    switch (d.feature) {
    case DetectorFeature::LineLength: return line_length(frame);
    case DetectorFeature::Area: return area_under_curve(frame);
    case DetectorFeature::HalfWave: return static_cast<double>(half_wave_count(frame, d.half_wave));
    }
    return 0.0;
}

/// Output of the sensing stage for one tick.
struct Sensed {
    std::optional<double> biomarker;
    QualityFlags quality;
    std::optional<double> ecap_est;
    std::optional<double> threshold;
    bool detected = false;
};

/// Per-plant mutable state plus the sensing pipeline.
class PlantRuntime {
public:
    PlantRuntime(const Scenario& s, const Dose& initial)
        : s_(s),
          rng_seizure_(s.seed, stream::seizure),
          rng_sensing_(s.seed, stream::sensing),
          rng_ecap_(s.seed, stream::ecap_noise) {
        if (const auto* b = std::get_if<BetaPlantConfig>(&s.plant)) {
            lfp_ = b->lfp;
            lfp_.samples_per_tick = whole_samples(lfp_.fs_hz, s.dt_s);
            lfp_.modulation = s.track;
            beta_ = std::get<BetaFeatureConfig>(s.features);
            samples_ = Window(static_cast<std::size_t>(std::llround(beta_.window_s * lfp_.fs_hz)));
            smooth_ = Window(static_cast<std::size_t>(std::max<long long>(1, std::llround(beta_.smoothing_s / s.dt_s))));
            // Pre-roll so the first tick already has full windows.
            const auto fill = static_cast<std::int64_t>((samples_.capacity() + lfp_.samples_per_tick - 1) /
                                                        lfp_.samples_per_tick) +
                              static_cast<std::int64_t>(smooth_.capacity());
            for (std::int64_t t = -fill; t < 0; ++t) beta_sense(initial, t);
        } else if (const auto* i = std::get_if<IeegPlantConfig>(&s.plant)) {
            ieeg_ = i->ieeg;
            ieeg_.samples_per_tick = whole_samples(ieeg_.fs_hz, s.dt_s);
            seizures_.cfg = i->seizures;
            const auto& f = std::get<IeegFeatureConfig>(s.features);
            combinator_ = f.combinator;
            std::size_t longest = 0;
            for (const auto& d : f.detectors) {
                DetectorState st{d, {}};
                st.th.long_window = Window(d.long_window);
                st.th.short_window = Window(d.short_window);
                st.th.multiplier = d.multiplier;
                st.th.mode = d.mode;
                detectors_.push_back(std::move(st));
                longest = std::max(longest, d.long_window);
            }
            // Baseline calibration on seizure-free background.
            for (auto t = -static_cast<std::int64_t>(longest); t < 0; ++t) {
                const auto frame = ieeg_frame(false, t, ieeg_, rng_sensing_);
                for (auto& d : detectors_) {
                    const double v = detector_feature(d.cfg, frame);
                    d.th.short_window.push(v);
                    d.th.long_window.push(v);
                }
            }
        }
    }

    /// Advance the plant by one tick under `applied` and measure it. With
    /// `measure` false the plant still evolves but nothing is sensed.
    Sensed step(const Dose& applied, std::int64_t tick, bool measure, bool therapy_last_tick) {
        Sensed out;
        if (const auto* e = std::get_if<EcapPlantConfig>(&s_.plant)) {
            distance_ = distance_at(s_.track, e->base_distance_mm, tick);
            const double truth = ecap_true(applied.amplitude_mA, *distance_, e->params);
            const double noisy = rng_ecap_.normal(truth, e->noise_sd_uV);
            if (!measure) return out;
            const auto& f = std::get<EcapFeatureConfig>(s_.features);
            EcapEstimate est;
            if (f.estimator == EcapEstimator::Identity) {
                est = ecap_amplitude(noisy, s_.quality.saturation_uV);
            } else {
                auto trace = ecap_trace(noisy, f.trace_samples, f.blank_samples, f.artefact_uV);
                for (auto& v : trace) v = rng_ecap_.normal(v, f.trace_noise_uV);
                est = ecap_amplitude(trace, f.blank_samples, s_.quality.saturation_uV);
            }
            out.biomarker = est.value_uV;
            out.ecap_est = est.value_uV;
            out.quality = est.quality;
            return out;
        }
        if (std::holds_alternative<BetaPlantConfig>(s_.plant)) {
            const auto [power, q] = beta_sense(applied, tick);
            if (!measure) return out;
            out.biomarker = power;
            out.quality = q;
            return out;
        }
        // iEEG: seizures evolve whatever the mode.
        auto ss = seizure_step(std::move(seizures_), therapy_last_tick, tick, s_.dt_s, rng_seizure_);
        seizures_ = std::move(ss.state);
        seizing_ = ss.seizing;
        const auto frame = ieeg_frame(ss.seizing, tick, ieeg_, rng_sensing_);
        if (!measure) return out;
        out.quality = signal_quality(frame, s_.quality);
        std::vector<bool> flags;
        std::vector<double> values;
        for (auto& d : detectors_) {
            const double v = detector_feature(d.cfg, frame);
            d.th.short_window.push(v);
            const double thr = adaptive_threshold(d.th);
            flags.push_back(short_term_value(d.th) > thr);
            values.push_back(v);
            if (!out.threshold) out.threshold = thr;
        }
        out.detected = detect(flags, combinator_);
        if (!out.detected) {
            for (std::size_t k = 0; k < detectors_.size(); ++k) detectors_[k].th.long_window.push(values[k]);
        }
        out.biomarker = values.front();
        return out;
    }

    [[nodiscard]] std::optional<double> distance() const { return distance_; }
    [[nodiscard]] std::optional<bool> seizing() const { return seizing_; }
    [[nodiscard]] PlantStats stats() const {
        return {seizures_.events, seizures_.decisions, seizures_.early_terminations};
    }

private:
    std::pair<double, QualityFlags> beta_sense(const Dose& applied, std::int64_t tick) {
        const auto frame = beta_lfp_frame(applied, tick, lfp_, rng_sensing_);
        for (double v : frame) samples_.push(v);
        if (samples_.full()) {
            smooth_.push(band_power(samples_, beta_.band_lo_hz, beta_.band_hi_hz, lfp_.fs_hz));
        }
        double mean = 0.0;
        for (std::size_t i = 0; i < smooth_.size(); ++i) mean += smooth_[i];
        if (!smooth_.empty()) mean /= static_cast<double>(smooth_.size());
        return {mean, signal_quality(frame, s_.quality)};
    }

    const Scenario& s_;
    Rng rng_seizure_;
    Rng rng_sensing_;
    Rng rng_ecap_;

    BetaLfpConfig lfp_;
    BetaFeatureConfig beta_;
    Window samples_{1};
    Window smooth_{1};

    IeegConfig ieeg_;
    SeizureGenState seizures_;
    std::vector<DetectorState> detectors_;
    Combinator combinator_ = Combinator::Or;

    std::optional<double> distance_;
    std::optional<bool> seizing_;
};

/// Delivered-dose invariants; a breach aborts the run.
inline void check_delivery(const Dose& delivered, const Dose& prev, Mode mode, const DoseLimits& L) {
    const double a = delivered.amplitude_mA;
    if (!std::isfinite(a) || a < 0.0) throw InvariantBreach("delivered amplitude not a nonnegative number");
    if (delivers_nothing(mode)) {
        if (a != 0.0) throw InvariantBreach("stimulation delivered in " + std::string(to_string(mode)));
        return;
    }
    if (a > L.amp_max_mA + limit_eps || a < L.amp_min_mA - limit_eps) {
        throw InvariantBreach("delivered amplitude outside limits");
    }
    if (std::fabs(a - prev.amplitude_mA) > L.max_slew_mA_per_tick + limit_eps) {
        throw InvariantBreach("delivered amplitude exceeds slew limit");
    }
    if (charge_per_pulse(delivered) > L.max_charge_per_pulse_uC + limit_eps) {
        throw InvariantBreach("delivered charge per pulse exceeds limit");
    }
}

} // namespace detail

/// Runs a validated scenario. Throws ScenarioInvalid if validation fails;
/// runtime errors inside the loop end the run with a RUN_FAULT record.
inline RunResult run_scenario(const Scenario& s) {
    if (auto rep = validate_scenario(s); !rep.ok) throw ScenarioInvalid(std::move(rep));

    const TimeBase tb = s.timebase();
    const DoseLimits& limits = *s.limits;
    const TrustConfig& trust = *s.trust;
    const SupervisorConfig sup_cfg{*s.fallback, trust.exit_after_consecutive_fails, trust.reenter_after_consecutive_passes};
    const auto* responsive = std::get_if<BangBangResponsive>(&s.policy);
    const auto budget_cfg = s.budgets.value_or(BudgetConfig{});

    RunResult res;
    res.rows.reserve(static_cast<std::size_t>(tb.n_ticks));

    DeviceState dev = s.device;
    Dose prev_delivered = actuator_apply(s.initial_dose(), dev);
    Dose prev_limited = prev_delivered;
    SupervisorState sup;
    PolicyState pol;
    pol.last_command = prev_limited;
    Budgets budgets = make_budgets(budget_cfg.max_therapies_per_event, budget_cfg.max_episodes_per_day,
                                   tb.ticks_for(budget_cfg.day_length_s));
    bool therapy_last_tick = false;
    double teed = 0.0;

    std::optional<detail::PlantRuntime> plant;
    auto fault = [&](std::int64_t tick, const std::string& msg) {
        res.faulted = true;
        res.fault_message = msg;
        res.events.append({tick, Severity::Fault, EventCode::RunFault, Payload{{"message", msg}}});
    };

    std::int64_t tick = 0;
    try {
        plant.emplace(s, prev_delivered);
        for (; tick < tb.n_ticks; ++tick) {
            // Scheduled external events.
            if (s.interventions.dc_leak_at_tick && tick == *s.interventions.dc_leak_at_tick) dev.dc_leak_flag = true;
            const bool clinician = s.interventions.clinician_reset_at(tick);
            if (clinician) dev.dc_leak_flag = false;
            const bool magnet = s.interventions.magnet_at(tick);

            // Plant and features. Reset states do not sense.
            const Mode start_mode = sup.mode;
            const bool sensing = !is_reset(start_mode);
            const auto sensed = plant->step(prev_delivered, tick, sensing, therapy_last_tick);

            // Trust.
            Verdict verdict;
            if (sensing) {
                TrustInputs in;
                in.quality = sensed.quality;
                in.ecap_est_uV = sensed.ecap_est;
                in.battery_v = dev.battery_v;
                in.eos_threshold_v = dev.eos_threshold_v;
                in.impedance_ohm = dev.impedance_of(prev_delivered.contact_set);
                in.dc_leak = dev.dc_leak_flag;
                in.biomarker = sensed.biomarker.value_or(std::nan(""));
                auto ts = trust_check_step(in, trust, std::move(sup));
                sup = std::move(ts.state);
                verdict = ts.verdict;
            }

            // Supervisor.
            auto step = supervisor_step(std::move(sup), verdict, magnet,
                                        DeviceSignals{dev.battery_v, dev.eos_threshold_v, dev.dc_leak_flag}, clinician,
                                        sup_cfg, tick);
            sup = std::move(step.state);
            for (auto& e : step.events) res.events.append(std::move(e));
            const Mode mode = sup.mode;

            // Bumpless re-entry: policy restarts from the last limited command
            // and keeps its configured target.
            if (mode == Mode::Automated && (start_mode == Mode::Fallback || is_reset(start_mode))) {
                pol = PolicyState{};
                pol.last_command = prev_limited;
            }

            // Policy or mode command.
            Dose command = prev_limited.with_amplitude(0.0);
            bool therapy_started = false;
            if (mode == Mode::Automated) {
                if (responsive) {
                    PolicyInput in{sensed.biomarker.value_or(0.0), sensed.detected && verdict.pass()};
                    auto out = policy_step(s.policy, std::move(pol), in);
                    pol = std::move(out.state);
                    command = out.command;
                    therapy_started = out.therapy_started;
                } else if (verdict.pass()) {
                    auto out = policy_step(s.policy, std::move(pol), PolicyInput{sensed.biomarker.value_or(0.0), false});
                    pol = std::move(out.state);
                    command = out.command;
                } else {
                    command = prev_limited; // untrusted sample: hold
                }
            } else if (mode == Mode::Fallback) {
                command = fallback_dose(*s.fallback, sup, s.baseline_dose);
            }

            // Budgets for responsive therapy.
            if (responsive) {
                const bool event_active = mode == Mode::Automated && sensed.detected;
                auto b = therapy_and_episode_budget_step(budgets, event_active, therapy_started, tick);
                budgets = b.budgets;
                if (b.rolled_over) {
                    res.events.append({tick, Severity::Info, EventCode::DayRollover,
                                       Payload{{"day_start_tick", static_cast<double>(budgets.day_boundary_tick -
                                                                                      budgets.day_length_ticks)}}});
                }
                if (!b.allow) {
                    command = command.with_amplitude(0.0);
                    pol.burst_ticks_remaining = 0;
                    pol.last_command = command;
                    therapy_started = false;
                    res.events.append({tick, Severity::Alert, EventCode::BudgetDeny,
                                       Payload{{"episodes_today", static_cast<double>(budgets.episodes_today)},
                                               {"therapies_this_event", static_cast<double>(budgets.therapies_this_event)}}});
                }
            }

            // Limits, then the actuator's minor loop.
            Dose limited = command.with_amplitude(0.0);
            if (!delivers_nothing(mode)) {
                const auto clamp = clamp_and_slew(command, limits, prev_delivered);
                for (auto& e : clamp_events(clamp, command, tick)) res.events.append(std::move(e));
                limited = clamp.dose;
            }
            if (mode == Mode::Automated && !responsive) pol.last_command = limited;
            const Dose delivered = delivers_nothing(mode) ? limited : actuator_apply(limited, dev);
            detail::check_delivery(delivered, prev_delivered, mode, limits);

            // Device and bookkeeping.
            const double charge_uC = charge_per_pulse(delivered) * delivered.frequency_hz * s.dt_s;
            dev = device_step(std::move(dev), charge_uC);
            teed += teed_rate(delivered) * s.dt_s;
            if (sensing) sup = record_delivery(std::move(sup), delivered, verdict);

            TickRow row;
            row.tick = tick;
            row.time_s = tb.time_of(tick);
            row.biomarker = sensed.biomarker;
            row.quality = sensed.quality;
            if (responsive) {
                row.setpoint = sensed.threshold;
            } else {
                row.setpoint = policy_reference(s.policy);
            }
            row.commanded_mA = command.amplitude_mA;
            row.delivered_mA = delivered.amplitude_mA;
            row.mode = mode;
            row.distance_mm = plant->distance();
            row.seizing = plant->seizing();
            row.teed_cum = teed;
            res.rows.push_back(std::move(row));

            therapy_last_tick = responsive && delivered.amplitude_mA > 0.0;
            prev_delivered = delivered;
            prev_limited = limited;
        }
    } catch (const Error& e) {
        fault(std::min(tick, std::max<std::int64_t>(0, tb.n_ticks - 1)), e.what());
    }

    if (plant) res.plant = plant->stats();
    res.metrics = summarize_metrics(res.rows, res.events, s, res.plant);
    return res;
}

} // namespace pclc
